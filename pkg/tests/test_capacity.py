import math

import numpy as np
import pytest

from bitpipe import capacity as cap
from bitpipe import info
from oracles import conv, g, h


@pytest.mark.parametrize("ch,expected", [
    (info.noiseless(2), 1.0),
    (info.bsc(0.1), 1 - h(0.1)),
    (info.bsc(0.25), 1 - h(0.25)),
    (info.bec(0.3), 0.7),
    (info.noiseless(5), math.log2(5)),
])
def test_blahut_arimoto_closed_forms(ch, expected):
    r = cap.blahut_arimoto(ch, 1e-10)
    assert r.converged
    assert r.capacity == pytest.approx(expected, abs=1e-9)
    assert r.lower <= r.capacity <= r.upper
    assert r.upper - r.lower <= 1e-10


def test_blahut_arimoto_asymmetric_channel():
    # Z channel: capacity log2(1 + (1-q) q^{q/(1-q)})
    q = 0.3
    z = info.Dmc("p2p", [(0, 1)], [(0, 1)], [[1, 0], [q, 1 - q]])
    expected = math.log2(1 + (1 - q) * q ** (q / (1 - q)))
    r = cap.blahut_arimoto(z, 1e-12)
    assert r.capacity == pytest.approx(expected, abs=1e-10)
    hist = np.array(r.history)
    assert np.all(np.diff(hist) >= -1e-12)


def test_blahut_arimoto_errors():
    with pytest.raises(ValueError):
        cap.blahut_arimoto(info.binary_adder_mac(0.1))
    z = info.Dmc("p2p", [(0, 1)], [(0, 1)], [[1, 0], [0.3, 0.7]])
    with pytest.raises(cap.ConvergenceError) as e:
        cap.blahut_arimoto(z, 1e-14, max_iter=3, strict=True)
    assert e.value.result is not None and not e.value.result.converged


def test_mac_noiseless_adder_corner():
    pts = cap.mac_lower_points(info.binary_adder_mac(0.0), input_grids=9)
    rates = {(round(p.rates["R1"], 12), round(p.rates["R2"], 12)) for p in pts}
    assert (1.0, 0.0) in rates and (0.0, 1.0) in rates
    assert all(p.rates["R1"] + p.rates["R2"] <= 1 + 1e-12 for p in pts)


def test_mac_useless_channel():
    pts = cap.mac_lower_points(info.binary_adder_mac(0.5), input_grids=9)
    assert all(p.rates["R1"] < 1e-12 and p.rates["R2"] < 1e-12 for p in pts)


def test_mac_symmetric_split():
    pts = cap.mac_lower_points(info.binary_adder_mac(0.1), input_grids=9)
    c = 1 - h(0.1)
    assert any(abs(p.rates["R1"] - c / 2) < 1e-12 and abs(p.rates["R2"] - c / 2) < 1e-12 for p in pts)
    assert c / 2 == pytest.approx(0.2655022032, abs=1e-9)
    for p in pts:
        assert cap.verify_point(info.binary_adder_mac(0.1), p)


def test_bc_alpha_family():
    ch = info.bsc_broadcast(0.1, 0.1)
    pts = cap.degraded_bc_lower_points(ch, alphas=[0.5, 0.0, 0.1])
    by = {p.witness["alpha"]: p.rates for p in pts}
    assert by[0.5]["R0"] == pytest.approx(0.0, abs=1e-12)
    assert by[0.5]["R1"] == pytest.approx(1 - h(0.1), abs=1e-12)
    assert by[0.0]["R0"] == pytest.approx(1 - h(0.18), abs=1e-12)
    assert by[0.0]["R1"] == pytest.approx(0.0, abs=1e-12)
    assert 1 - h(0.18) == pytest.approx(0.31992, abs=1e-5)
    assert by[0.1]["R0"] == pytest.approx(1 - h(conv(0.1, 0.18)), abs=1e-12)
    assert by[0.1]["R1"] == pytest.approx(h(0.18) - h(0.1), abs=1e-12)
    for p in pts:
        assert cap.verify_point(ch, p)


def test_bc_grid_points_are_pareto_and_verified():
    ch = info.bsc_broadcast(0.1, 0.2)
    pts = cap.degraded_bc_lower_points(ch, aux_grid=9)
    assert pts
    for p in pts:
        assert cap.verify_point(ch, p)
    r = np.array([[p.rates["R0"], p.rates["R1"]] for p in pts])
    for a in r:
        dominated = np.any(np.all(r >= a, axis=1) & np.any(r > a + 1e-12, axis=1))
        assert not dominated


def test_gaussian_bc_lower_point():
    gauss = info.GaussianBC(1.0, 1.0, 1.0, 1.0, 1.0)
    one = cap.gaussian_bc_lower_point(gauss, 1.0).rates
    assert one["R1"] == 0.0 and one["R0"] == pytest.approx(g(1.0))
    zero = cap.gaussian_bc_lower_point(gauss, 0.0).rates
    assert zero["R0"] == 0.0 and zero["R1"] == pytest.approx(g(1.0))
    half = cap.gaussian_bc_lower_point(gauss, 0.5).rates
    assert half["R1"] == pytest.approx(0.5 * math.log2(1.5), abs=1e-12)
    assert half["R0"] == pytest.approx(0.5 * math.log2(1 + 0.5 / 1.5), abs=1e-12)
    assert half["R1"] == pytest.approx(0.29248, abs=1e-5)
    assert half["R0"] == pytest.approx(0.20752, abs=1e-5)


def test_gaussian_mac_corner():
    gauss = info.GaussianMAC(1.0, 1.0, 1.0)
    r = cap.gaussian_mac_lower_corner(gauss).rates
    assert r["R1"] == pytest.approx(0.5) and r["R2"] == pytest.approx(0.5 * math.log2(1.5))
    sw = cap.gaussian_mac_lower_corner(gauss, first=1).rates
    assert sw["R2"] == pytest.approx(0.5) and sw["R1"] == pytest.approx(0.5 * math.log2(1.5))
    small = cap.gaussian_mac_lower_corner(info.GaussianMAC(1e-12, 1e-12, 1.0)).rates
    assert small["R1"] < 1e-11 and small["R2"] < 1e-11
    lop = cap.gaussian_mac_lower_corner(info.GaussianMAC(3.0, 1e-15, 1.0)).rates
    assert lop["R1"] == pytest.approx(g(3.0), abs=1e-12) and lop["R2"] < 1e-14


def test_verify_point_rejects_tampering():
    ch = info.binary_adder_mac(0.1)
    p = cap.mac_lower_points(ch, input_grids=5)[0]
    bad = cap.RegionPoint({k: v + 0.01 for k, v in p.rates.items()}, p.witness)
    assert cap.verify_point(ch, p)
    assert not cap.verify_point(ch, bad)
    with pytest.raises(ValueError):
        cap.RegionPoint({"R": -0.1}, {})


def test_p2p_point():
    p = cap.p2p_point(info.bsc(0.1))
    assert p.rates["R"] == pytest.approx(1 - h(0.1), abs=1e-9)
    assert cap.verify_point(info.bsc(0.1), p)
