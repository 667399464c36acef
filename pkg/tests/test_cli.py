import json
import math
import os
import subprocess
import sys

import pytest

from bitpipe import cli, info
from bitpipe import models as mdl
from bitpipe import network as nw
from conftest import SAMPLES
from oracles import h, mac_gap


def sample(name):
    return os.path.join(SAMPLES, name)


def run(*argv):
    return cli.main([str(a) for a in argv])


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_capacity_bsc(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert run("capacity", sample("bsc01.json"), "--out", out) == 0
    assert "0.531004" in capsys.readouterr().out
    rep = json.loads(out.read_text())
    assert rep["capacity"] == pytest.approx(1 - h(0.1), abs=1e-9)
    assert rep["converged"]


def test_capacity_input_errors(tmp_path, capsys):
    bad = write_json(tmp_path / "bad.json", {"role": "p2p", "inputs": [[0, 1]], "outputs": [[0, 1]],
                                             "matrix": [[0.5, 0.5], [0.3, 0.3]]})
    assert run("capacity", bad) == 2
    assert "row 1" in capsys.readouterr().err
    assert run("capacity", sample("adder_mac01.json")) == 2
    assert "capacity subcommand requires p2p role" in capsys.readouterr().err
    assert run("capacity", tmp_path / "missing.json") == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert run("capacity", tmp_path / "junk.json") == 2
    nan = tmp_path / "nan.json"
    nan.write_text('{"role": "p2p", "inputs": [[0, 1]], "outputs": [[0, 1]], '
                   '"matrix": [[NaN, 1.0], [0.5, 0.5]]}')
    assert run("capacity", nan) == 2


def test_capacity_nonconvergence(capsys):
    # a tolerance below float resolution is never met
    assert run("capacity", sample("z_p2p.json"), "--tol", "1e-300") == 3


def test_flags_must_be_positive(capsys):
    assert run("capacity", sample("bsc01.json"), "--tol", "-1") == 2
    assert run("model", sample("bsc01.json"), "--grid", "0") == 2


def test_model_p2p(tmp_path):
    out = tmp_path / "m.json"
    assert run("model", sample("bsc01.json"), "--side", "lower", "--out", out) == 0
    lo = json.loads(out.read_text())["model"]
    assert lo["rates"][0]["rate"] == pytest.approx(1 - h(0.1), abs=1e-9)
    assert run("model", sample("bsc01.json"), "--side", "upper", "--slack", "1e-3", "--out", out) == 0
    up = json.loads(out.read_text())
    assert up["model"]["rates"][0]["rate"] == pytest.approx(1 - h(0.1) + 1e-3, abs=1e-9)
    assert up["margins"]["min_slack"] >= 0


def test_model_mac_upper_merged_rate(tmp_path):
    out = tmp_path / "m.json"
    assert run("model", sample("adder_mac01.json"), "--side", "upper", "--R1", "0", "--out", out) == 0
    rates = {tuple(r["A"]): r["rate"] for r in json.loads(out.read_text())["model"]["rates"]}
    assert rates[(1, 2)] == pytest.approx(1 - h(0.1) + mdl.DEFAULT_SLACK, abs=2e-2)


def test_model_negative_slack_exit():
    assert run("model", sample("z_bc.json"), "--side", "upper", "--grid", "3", "--verify") == 4


def test_model_gaussian_mac(tmp_path):
    out = tmp_path / "g.json"
    assert run("model", sample("gaussian_mac.json"), "--side", "upper", "--out", out) == 0
    assert json.loads(out.read_text())["note"] == "closed-form rates"


def test_bound_butterfly_bsc(tmp_path, capsys):
    out = tmp_path / "b.json"
    assert run("bound", sample("butterfly_bsc.json"), "--slack", "1e-12", "--out", out) == 0
    rep = json.loads(out.read_text())
    d = rep["demands"][0]
    assert d["lower"]["value"] == pytest.approx(2 * (1 - h(0.1)), abs=1e-9)
    assert d["upper"]["value"] == pytest.approx(2 * (1 - h(0.1)), abs=1e-9)
    assert not d["gap_flag"]
    assert d["lower"]["label"] == cli.LOWER_LABEL and d["upper"]["label"] == cli.UPPER_LABEL


def test_bound_example1_flags_gap(tmp_path):
    out = tmp_path / "b.json"
    assert run("bound", sample("example1.json"), "--out", out) == 0
    d = json.loads(out.read_text())["demands"][0]
    assert d["upper"]["value"] > d["lower"]["value"] + 0.1
    assert d["gap_flag"]


def test_bound_no_demands(tmp_path, capsys):
    net = write_json(tmp_path / "n.json", {"nodes": 3, "components": [
        {"bitpipe": {"from": 1, "to": 2, "cap": 1}}, {"bitpipe": {"from": 2, "to": 3, "cap": "inf"}}]})
    out = tmp_path / "b.json"
    assert run("bound", net, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["demands"] == []
    cuts = {tuple(c["S"]): c["value"] for c in rep["cuts"]["lower"]}
    assert cuts[(1,)] == 1 and cuts[(2,)] == "inf"


def test_bound_enumeration_cap(tmp_path):
    comps = [{"bitpipe": {"from": i, "to": i + 1, "cap": 1}} for i in range(1, 22)]
    net = write_json(tmp_path / "n.json", {"nodes": 22, "components": comps})
    assert run("bound", net) == 5
    # one unrated demand still has a max-flow fallback
    assert run("bound", net, "--demand", "1->22") == 0


def test_bound_bad_demand(tmp_path):
    assert run("bound", sample("butterfly.json"), "--demand", "1-4") == 2
    assert run("bound", sample("butterfly.json"), "--demand", "1->4:fast") == 2
    assert run("bound", sample("butterfly.json"), "--demand", "1->4:-1") == 2


def test_bound_feasibility(tmp_path):
    out = tmp_path / "b.json"
    assert run("bound", sample("butterfly.json"), "--demand", "1->6,7:2.5", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["feasibility"]["lower"]["violated"]


def test_gap_all_p2p(tmp_path):
    out = tmp_path / "g.json"
    assert run("gap", sample("butterfly_bsc.json"), "--slack", "1e-12", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["rho_network"] == pytest.approx(1.0, abs=1e-9)
    assert rep["additive_gap"] == pytest.approx(0.0, abs=1e-9)
    csv = (tmp_path / "g.cuts.csv").read_text().splitlines()
    assert csv[0] == "S,delta_sum" and len(csv) == 2 ** 7 + 1


def test_gap_gaussian_mac(tmp_path):
    net = write_json(tmp_path / "n.json", {"nodes": 3, "components": [
        {"id": "m", "ref": sample("gaussian_mac.json"), "V1": [1, 2], "V2": [3]}]})
    out = tmp_path / "g.json"
    assert run("gap", net, "--slack", "1e-12", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["additive_gap"] == pytest.approx(mac_gap(1, 1, 1), abs=1e-9)
    assert rep["gaussian_check"] == {"components": 1, "limit": 0.5, "holds": True}


def test_gap_missing_candidates(tmp_path):
    ic = info.binary_ic(0.1, 0.1)
    ch = write_json(tmp_path / "ic.json", info.channel_to_dict(ic))
    net = write_json(tmp_path / "n.json", {"nodes": 4, "components": [
        {"ref": ch, "V1": [1, 2], "V2": [3, 4]}]})
    assert run("gap", net) == 6
    assert run("model", ch, "--side", "lower") == 6


def _exp(tmp_path, **kw):
    cfg = {"channel": sample("bsc01.json"), "input_dist": [0.5, 0.5], "R_list": [0.6],
           "N_list": [6, 8], "trials": 100, "nu_list": [0.1]}
    cfg.update(kw)
    return write_json(tmp_path / "e.json", cfg)


def test_emulate_outputs(tmp_path):
    out = tmp_path / "e.csv"
    assert run("emulate", _exp(tmp_path), "--out", out) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("R,N,trials,failure_rate") and "exceed_rate@0.1" in rows[0]
    assert len(rows) == 3
    plot = json.loads((tmp_path / "e.plot.json").read_text())
    assert plot["curves"]["0.6"]["N"] == [6, 8]
    assert "0.6" in plot["fitted_log2_slope_per_symbol"]


def test_emulate_errors(tmp_path):
    assert run("emulate", _exp(tmp_path, trials=99)) == 2
    assert run("emulate", _exp(tmp_path, R_list=[1.0], N_list=[24]), "--mem-budget", "1e5") == 7
    assert run("emulate", _exp(tmp_path, channel=sample("adder_mac01.json"))) == 2


def test_emulate_default_seed_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = _exp(tmp_path)
    assert run("emulate", cfg, "--out", a) == 0
    assert run("emulate", cfg, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert run("emulate", cfg, "--seed", str(cli.DEFAULT_SEED), "--out", c) == 0
    assert c.read_bytes() == a.read_bytes()


@pytest.mark.parametrize("argv", [
    ["capacity", "bsc01.json"],
    ["model", "bsc_bc.json", "--side", "upper", "--grid", "9"],
    ["bound", "example1.json"],
    ["gap", "butterfly_bsc.json"],
])
def test_byte_identical_json(tmp_path, argv):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}.json"
        assert run(argv[0], sample(argv[1]), *argv[2:], "--out", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_model_round_trip_through_bound(tmp_path):
    out = tmp_path / "m.json"
    assert run("model", sample("bsc_bc.json"), "--side", "upper", "--grid", "9", "--out", out) == 0
    md = json.loads(out.read_text())["model"]
    net_d = {"nodes": 4, "components": [{"id": "bc", "model": md},
                                        {"bitpipe": {"from": 2, "to": 4, "cap": 0.25}},
                                        {"bitpipe": {"from": 3, "to": 4, "cap": 0.5}}]}
    bout = tmp_path / "b.json"
    assert run("bound", write_json(tmp_path / "n.json", net_d), "--side", "upper", "--out", bout) == 0
    via_file = {tuple(c["S"]): c["value"] for c in json.loads(bout.read_text())["cuts"]["upper"]}
    ch = info.load_channel(sample("bsc_bc.json"))
    _, model = mdl.upper_model_bc(ch, 9, mdl.DEFAULT_SLACK, channel_id=ch.name).member()
    net = nw.Network(4, (nw.model_component("bc", model), nw.pipe("p1", 2, 4, 0.25),
                         nw.pipe("p2", 3, 4, 0.5)))
    vals = nw.all_cut_values(net)
    for k in range(1, 15):
        S = nw._mask_to_set(k, 4)
        v = via_file[S]
        assert (v == "inf" and vals[k] == math.inf) or abs(v - vals[k]) <= 1e-12


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bitpipe", "capacity", sample("bec03.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "0.7" in r.stdout
