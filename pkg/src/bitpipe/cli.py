"""Command-line front end.

Exit codes: 0 ok, 2 bad input, 3 solver did not converge, 4 upper-model
check found negative slack, 5 cut enumeration cap, 6 missing candidate
models, 7 emulator memory budget.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import capacity as cap
from . import emulator as em
from . import models as mdl
from . import network as nw
from .info import ChannelFormatError, Dmc, GaussianBC, GaussianMAC, load_channel
from .simplex import DEFAULT_RES, refined

DEFAULT_SEED = 0

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_SLACK, EXIT_ENUM, EXIT_CANDIDATES, EXIT_BUDGET = 0, 2, 3, 4, 5, 6, 7

LOWER_LABEL = "achievable (cut-tight demands)"
UPPER_LABEL = "outer bound"


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "inf" if v == math.inf else f"{v:.6g}"
    return str(v)


def _clean(obj):
    """JSON-safe copy: inf as "inf", nan as null, numpy scalars as Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        return "inf" if v == math.inf else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False)


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def table(rows, headers) -> str:
    cells = [[fmt(c) for c in r] for r in rows]
    w = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    line = lambda r: "  ".join(c.ljust(n) for c, n in zip(r, w)).rstrip()
    return "\n".join([line(headers), line(["-" * n for n in w])] + [line(r) for r in cells])


def _emit(args, report: dict, text: str):
    print(text)
    if args.out:
        _write(args.out, dumps(report))


def _load_channel(path):
    if not os.path.exists(path):
        raise CliError(EXIT_INPUT, f"{path}: no such file")
    try:
        return load_channel(path)
    except (ChannelFormatError, ValueError, KeyError, TypeError) as e:
        raise CliError(EXIT_INPUT, f"{path}: {e}")


def _load_network(path):
    if not os.path.exists(path):
        raise CliError(EXIT_INPUT, f"{path}: no such file")
    try:
        return nw.load_network(path)
    except (ChannelFormatError, ValueError, KeyError, TypeError) as e:
        raise CliError(EXIT_INPUT, f"{path}: {e}")


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------

def cmd_capacity(args) -> int:
    ch = _load_channel(args.channel)
    if not isinstance(ch, Dmc) or ch.role != "p2p":
        raise CliError(EXIT_INPUT, "capacity subcommand requires p2p role")
    try:
        res = cap.blahut_arimoto(ch, args.tol or 1e-9, strict=True)
    except cap.ConvergenceError as e:
        raise CliError(EXIT_CONVERGENCE, str(e))
    rep = {"channel": ch.name, **res.as_dict()}
    rows = [["capacity", res.capacity], ["lower bracket", res.lower], ["upper bracket", res.upper],
            ["iterations", res.iterations]]
    rows += [[f"p(x={a})", float(p)] for a, p in zip(ch.input_alphabets[0], res.optimal_input.probs)]
    _emit(args, rep, table(rows, ["quantity", "value"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def _best_sum(points, keys):
    return max(points, key=lambda p: sum(p.rates[k] for k in keys))


def _model_rows(m: mdl.BitPipeModel):
    return [[e.label, e.cap] for e in m.edges]


def cmd_model(args) -> int:
    ch = _load_channel(args.channel)
    grid = args.grid or DEFAULT_RES
    delta = args.slack or mdl.DEFAULT_SLACK
    tol = args.tol or 1e-9
    role = ch.role
    rep = {}
    solver = None
    if isinstance(ch, (GaussianBC, GaussianMAC)):
        if role == "gaussian_bc":
            pair = mdl.gaussian_bc_models(ch, delta)
        else:
            pair = mdl.gaussian_mac_models(ch, delta, decoded_first=args.decoded_first)
        model = pair.lower if args.side == "lower" else pair.upper
        rep["model"] = model.to_dict()
        rep["note"] = "closed-form rates"
        _emit(args, rep, table(_model_rows(model), ["pipe", "rate"]))
        return EXIT_OK
    if args.side == "lower":
        if role == "p2p":
            pt = cap.p2p_point(ch, tol)
        elif role == "mac":
            pt = _best_sum(cap.mac_lower_points(ch, input_grids=grid), ("R1", "R2"))
        elif role == "bc":
            pt = _best_sum(cap.degraded_bc_lower_points(ch, grid), ("R0", "R1"))
        else:
            raise CliError(EXIT_CANDIDATES, f"no lower model is implemented for role {role}")
        _, model = mdl.lower_model(ch, pt, channel_id=ch.name)
        rep["model"] = model.to_dict()
        rep["witness"] = pt.witness
        _emit(args, rep, table(_model_rows(model), ["pipe", "rate"]))
        return EXIT_OK
    if role == "p2p":
        rates, model = mdl.upper_model_p2p(ch, delta, channel_id=ch.name, tol=tol)
    elif role == "bc":
        rates, model = mdl.upper_model_bc(ch, grid, delta, channel_id=ch.name).member(args.R0)
    elif role == "mac":
        solver = mdl.MACUpperSolver(ch, grid)
        rates, model = mdl.upper_model_mac(ch, args.R1, grid, delta=delta, channel_id=ch.name, solver=solver)
    elif role == "ic":
        rates, model = mdl.upper_model_ic(ch, args.variant, min(grid, 17), delta=delta, channel_id=ch.name)
    else:
        raise CliError(EXIT_CANDIDATES, f"no upper model is implemented for role {role}")
    check_grid = grid
    if args.verify:
        check_grid = refined(grid)
        if role in ("p2p", "bc"):
            while check_grid < 129:
                check_grid = refined(check_grid)
    margins = mdl.check_upper_conditions(ch, rates, check_grid, delta=delta, variant=args.variant,
                                         aux_res=min(grid, 17), solver=solver)
    rep["model"] = model.to_dict()
    rep["margins"] = {**margins.to_dict(), "check_grid": check_grid}
    rows = _model_rows(model) + [[f"slack {k}", v] for k, v in margins.slacks.items()]
    _emit(args, rep, table(rows, ["pipe / condition", "value"]))
    if margins.min_slack < 0:
        print(f"error: negative slack {margins.min_slack:.6g} at grid {check_grid}", file=sys.stderr)
        return EXIT_SLACK
    return EXIT_OK


# ---------------------------------------------------------------------------
# network commands
# ---------------------------------------------------------------------------

def _candidates(net: nw.Network, args) -> dict:
    cfg = nw.CandidateConfig(delta=args.slack or mdl.DEFAULT_SLACK, grid=args.grid or DEFAULT_RES,
                             tol=args.tol or 1e-9)
    out = {}
    for c in net.components:
        if c.kind == "noisy":
            out[c.cid] = nw.default_candidates(c.channel, c.V1, c.V2, c.cid, cfg)
    return out


def _parse_demand(s: str) -> nw.Demand:
    # "u->v[:rate]" or "u->v,w[:rate]"
    body, _, rate = s.partition(":")
    src, _, dst = body.partition("->")
    try:
        sinks = [int(x) for x in dst.split(",") if x]
        src = int(src)
        r = None if not rate else mdl._check_rate(rate if rate == "inf" else float(rate))
    except ValueError:
        sinks = []
    if not sinks:
        raise CliError(EXIT_INPUT, f"bad demand {s!r}; expected u->v[:rate]")
    return nw.unicast(src, sinks[0], r) if len(sinks) == 1 else nw.multicast(src, sinks, r)


def _side_bound(net, cands, side, d):
    pick = (lambda p: p.lower) if side == "lower" else (lambda p: p.upper)
    choices = {}
    for cid, pairs in cands.items():
        opts = []
        for p in pairs:
            m = pick(p)
            if m not in opts:
                opts.append(m)
        choices[cid] = opts
    if not choices:
        return nw.demand_bound(net, d), True
    obj = lambda a: nw.demand_bound(nw.replace_all(net, a), d)
    v, _, exhaustive = nw.best_over_choices(choices, obj, maximize=(side == "lower"))
    return v, exhaustive


def _slack_allowance(cands, args) -> float:
    delta = args.slack or mdl.DEFAULT_SLACK
    return delta * sum(len(pairs[0].upper.rates) for pairs in cands.values())


def _cut_table(net, cands, side):
    pick = (lambda p: p.lower) if side == "lower" else (lambda p: p.upper)
    rnet = nw.replace_all(net, {cid: pick(pairs[0]) for cid, pairs in cands.items()})
    vals = nw.all_cut_values(rnet)
    return [(nw._mask_to_set(k, net.m), float(vals[k])) for k in range(1, 2 ** net.m - 1)]


def cmd_bound(args) -> int:
    net = _load_network(args.network)
    demands = list(net.demands) + [_parse_demand(s) for s in args.demand or []]
    try:
        cands = _candidates(net, args)
    except nw.MissingCandidatesError as e:
        raise CliError(EXIT_CANDIDATES, str(e))
    sides = ["lower", "upper"] if args.side == "both" else [args.side]
    rated = [d for d in demands if d.rate is not None]
    if net.m > nw.MAX_ENUM_NODES and (not demands or len(rated) > 1):
        raise CliError(EXIT_ENUM, f"{net.m} nodes exceeds the enumeration cap of {nw.MAX_ENUM_NODES} "
                                  "and no single-demand max-flow fallback applies")
    rep = {"network": os.path.basename(args.network), "demands": []}
    rows = []
    for d in demands:
        ent = {"demand": d.to_dict()}
        for side in sides:
            v, ex = _side_bound(net, cands, side, d)
            ent[side] = {"value": v, "label": LOWER_LABEL if side == "lower" else UPPER_LABEL,
                         "exhaustive_over_candidates": ex}
        if len(sides) == 2:
            # differences within the summed upper-model slacks are not a gap
            ent["difference"] = ent["upper"]["value"] - ent["lower"]["value"]
            ent["gap_flag"] = ent["difference"] > _slack_allowance(cands, args) + 1e-9
        rep["demands"].append(ent)
        name = f"{d.source}->{','.join(map(str, d.sinks))}"
        rows.append([name] + [ent[s]["value"] for s in sides] + (["yes" if ent.get("gap_flag") else "no"]
                                                                 if len(sides) == 2 else []))
    text = []
    if rows:
        text.append(table(rows, ["demand"] + [f"{s} ({LOWER_LABEL if s == 'lower' else UPPER_LABEL})"
                                              for s in sides] + (["gap"] if len(sides) == 2 else [])))
    if net.m <= nw.MAX_ENUM_NODES:
        cuts = {s: _cut_table(net, cands, s) for s in sides}
        rep["cuts"] = {s: [{"S": list(S), "value": v} for S, v in cuts[s]] for s in sides}
        if rated:
            rep["feasibility"] = {}
            for s in sides:
                pick = (lambda p: p.lower) if s == "lower" else (lambda p: p.upper)
                rnet = nw.replace_all(net, {cid: pick(pairs[0]) for cid, pairs in cands.items()})
                rep["feasibility"][s] = nw.cutset_feasibility(rnet, rated).to_dict()
        if net.m <= 8:
            crow = [[",".join(map(str, S))] + [cuts[s][n][1] for s in sides] for n, (S, _) in enumerate(cuts[sides[0]])]
            text.append(table(crow, ["S"] + [f"val {s}" for s in sides]))
        else:
            text.append(f"{len(cuts[sides[0]])} cuts evaluated (table in JSON output)")
    _emit(args, rep, "\n\n".join(text))
    return EXIT_OK


def cmd_gap(args) -> int:
    net = _load_network(args.network)
    try:
        cands = _candidates(net, args)
        rep = nw.network_gaps(net, cands)
    except nw.MissingCandidatesError as e:
        raise CliError(EXIT_CANDIDATES, str(e))
    except nw.EnumerationCapError as e:
        raise CliError(EXIT_ENUM, str(e))
    d = rep.to_dict()
    gauss = [c.cid for c in net.components if isinstance(c.channel, (GaussianBC, GaussianMAC))]
    if gauss:
        d["gaussian_check"] = {"components": len(gauss), "limit": len(gauss) / 2,
                               "holds": rep.additive_gap <= len(gauss) / 2}
    rows = [[f"rho {cid}", v] for cid, v in rep.rho_per_channel.items()]
    rows += [["rho network", rep.rho_network], ["additive gap", rep.additive_gap],
             ["worst cut", ",".join(map(str, rep.worst_cut)) or "{}"]]
    _emit(args, d, table(rows, ["quantity", "value"]) + "\n" + "\n".join(f"note: {n}" for n in rep.notes))
    if args.out:
        base = os.path.splitext(args.out)[0]
        lines = ["S,delta_sum"] + [f"\"{','.join(map(str, S))}\",{v!r}" for S, v in rep.delta_per_cut.items()]
        _write(base + ".cuts.csv", "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# emulate
# ---------------------------------------------------------------------------

def cmd_emulate(args) -> int:
    path = args.experiment
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise CliError(EXIT_INPUT, f"{path}: invalid JSON ({e})")
    try:
        ref = cfg["channel"]
        if isinstance(ref, str):
            ref = os.path.join(os.path.dirname(os.path.abspath(path)), ref)
        ch = load_channel(ref)
        px = np.asarray(cfg.get("input_dist") or np.full(ch.input_sizes[0], 1.0 / ch.input_sizes[0]), float)
        R_list = [float(r) for r in cfg["R_list"]]
        N_list = [int(n) for n in cfg["N_list"]]
        trials = int(cfg.get("trials", 2000))
        nus = tuple(float(v) for v in cfg.get("nu_list", [0.1]))
        eps = float(cfg.get("eps", em.DEFAULT_EPS))
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_INPUT, f"{path}: {e}")
    if any(math.isnan(v) for v in list(px) + R_list):
        raise CliError(EXIT_INPUT, f"{path}: NaN in experiment config")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
    if trials < em.MIN_TRIALS:
        raise CliError(EXIT_INPUT, f"trials must be at least {em.MIN_TRIALS} (got {trials})")
    if not isinstance(ch, Dmc) or ch.role != "p2p":
        raise CliError(EXIT_INPUT, "emulate experiments require a p2p channel")
    budget = args.mem_budget or em.DEFAULT_MEM_BUDGET
    try:
        tab = em.threshold_experiment(ch, px, R_list, N_list, trials, seed, nus, eps, budget)
    except em.BudgetError as e:
        raise CliError(EXIT_BUDGET, str(e))
    csv_text = em.stats_csv(tab)
    rows = [[s.R, s.N, s.trials, s.encoder_failure_rate, s.stderr, s.joint_type_tv]
            + list(s.log_ratio_exceed_rate.values()) for s in tab]
    print(table(rows, ["R", "N", "trials", "failure", "stderr", "tv"] + [f"exceed@{nu:g}" for nu in nus]))
    plot = {"seed": seed, "curves": {repr(R): {"N": [s.N for s in tab if s.R == R],
                                              "failure_rate": [s.encoder_failure_rate for s in tab if s.R == R]}
                                     for R in R_list},
            "fitted_log2_slope_per_symbol": {repr(k): v for k, v in em.failure_slopes(tab).items()},
            "note": "finite-N trends only; slopes are fits, not asymptotic exponents"}
    if args.out:
        _write(args.out, csv_text)
        _write(os.path.splitext(args.out)[0] + ".plot.json", dumps(plot))
    else:
        print()
        print(csv_text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--out", help="write the machine-readable report here")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--slack", type=float, help="upper-model slack delta")
    common.add_argument("--grid", type=int, help="input-distribution grid resolution")
    common.add_argument("--mem-budget", type=float, help="emulator codebook budget in stored symbols")
    common.add_argument("--verify", action="store_true", help="check upper models on a refined grid")

    p = argparse.ArgumentParser(prog="bitpipe", description="Bit-pipe models of noisy channels and networks.")
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("capacity", parents=[common], help="capacity of a point-to-point channel")
    s.add_argument("channel")
    s.set_defaults(func=cmd_capacity)
    s = sub.add_parser("model", parents=[common], help="lower or upper bit-pipe model of a channel")
    s.add_argument("channel")
    s.add_argument("--side", choices=["lower", "upper"], default="lower")
    s.add_argument("--R1", type=float, default=0.0, help="user-1 description rate (mac upper)")
    s.add_argument("--R0", type=float, default=None, help="common rate (bc upper)")
    s.add_argument("--variant", type=int, choices=[1, 2], default=1, help="ic upper variant")
    s.add_argument("--decoded-first", type=int, choices=[1, 2], default=2, help="gaussian mac pair")
    s.set_defaults(func=cmd_model)
    s = sub.add_parser("bound", parents=[common], help="lower/upper network bounds")
    s.add_argument("network")
    s.add_argument("--side", choices=["lower", "upper", "both"], default="both")
    s.add_argument("--demand", action="append", help="extra demand u->v[:rate] or u->v,w[:rate]")
    s.set_defaults(func=cmd_bound)
    s = sub.add_parser("gap", parents=[common], help="multiplicative and additive gap estimates")
    s.add_argument("network")
    s.set_defaults(func=cmd_gap)
    s = sub.add_parser("emulate", parents=[common], help="emulator threshold experiment")
    s.add_argument("experiment")
    s.set_defaults(func=cmd_emulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("tol", "slack", "grid", "mem_budget"):
        v = getattr(args, name)
        if v is not None and (math.isnan(v) or v <= 0):
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (mdl.ModelError, nw.NetworkError) as e:
        code = EXIT_CANDIDATES if isinstance(e, nw.MissingCandidatesError) else EXIT_INPUT
        if isinstance(e, nw.EnumerationCapError):
            code = EXIT_ENUM
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
