"""Channel capacity and achievable rate points.

Rates are bits per channel use.  Every ``RegionPoint`` carries a witness that
``verify_point`` can re-evaluate from scratch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .info import Dmc, GaussianBC, GaussianMAC, Pmf, cmi_array, gaussian_capacity
from .simplex import DEFAULT_RES, simplex_grid

MAX_ITER = 100_000
VERIFY_TOL = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    optimal_input: Pmf
    lower: float
    upper: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {"capacity": self.capacity, "optimal_input": self.optimal_input.probs.tolist(),
                "lower_bracket": self.lower, "upper_bracket": self.upper,
                "iterations": self.iterations, "converged": self.converged}


@dataclass(frozen=True)
class RegionPoint:
    rates: dict
    witness: dict

    def __post_init__(self):
        for k, v in self.rates.items():
            if not v >= 0:
                raise ValueError(f"rate {k} is negative: {v!r}")


def _divergences(W: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(W(.|x) || q) for every row x, in bits."""
    pos = W > 0
    ratio = np.where(pos, W / np.where(q > 0, q, 1.0)[None, :], 1.0)
    return np.where(pos, W * np.log2(ratio), 0.0).sum(axis=1)


def blahut_arimoto(channel: Dmc, tol: float = 1e-9, max_iter: int = MAX_ITER,
                   strict: bool = False) -> CapacityResult:
    """Capacity of a point-to-point channel by alternating maximization.

    Stops once max_x D(W(.|x)||q) - I(p) <= tol; that gap brackets the
    capacity from above.  With ``strict`` a non-converged run raises.
    """
    if channel.role != "p2p":
        raise ValueError("capacity requires a p2p channel")
    if not tol > 0:
        raise ValueError("tol must be positive")
    W = channel.matrix()
    nx = W.shape[0]
    p = np.full(nx, 1.0 / nx)
    hist = []
    lo = hi = 0.0
    it = 0
    converged = False
    best_p, best_lo = p, -1.0
    while it < max_iter:
        q = p @ W
        d = _divergences(W, q)
        lo = float(p @ d)
        hi = float(d.max())
        hist.append(lo)
        if lo > best_lo:
            best_lo, best_p = lo, p
        if hi - lo <= tol:
            converged = True
            break
        w = p * np.exp2(d - hi)
        p = w / w.sum()
        it += 1
    hi = max(hi, best_lo)
    res = CapacityResult(best_lo, Pmf(best_p / best_p.sum(), channel.input_alphabets[0]),
                         best_lo, hi, it, converged, tuple(hist))
    if strict and not converged:
        raise ConvergenceError(f"no convergence after {it} iterations; bracket [{best_lo}, {hi}]", res)
    return res


def p2p_mutual_information(channel: Dmc, px) -> float:
    W = channel.matrix()
    px = np.asarray(px, dtype=float)
    return float(px @ _divergences(W, px @ W))


# ---------------------------------------------------------------------------
# multiple access
# ---------------------------------------------------------------------------

def _mac_terms(channel: Dmc, p1: np.ndarray, p2: np.ndarray):
    """Batched (I(X1;Y|X2), I(X2;Y|X1), I(X1,X2;Y)) for rows of p1 and p2."""
    T = channel.transition
    joint = p1[:, :, None, None] * p2[:, None, :, None] * T[None]
    i1 = cmi_array(joint, [0], [2], [1], nbatch=1)
    i2 = cmi_array(joint, [1], [2], [0], nbatch=1)
    i12 = cmi_array(joint, [0, 1], [2], nbatch=1)
    return i1, i2, i12


def _pareto_hull(pts: np.ndarray) -> list[int]:
    """Indices of the upper-right convex hull vertices of 2-D points, by x."""
    order = sorted(range(len(pts)), key=lambda i: (pts[i, 0], -pts[i, 1]))
    chain: list[int] = []
    for i in order:
        while len(chain) >= 2:
            o, a = pts[chain[-2]], pts[chain[-1]]
            cross = (a[0] - o[0]) * (pts[i, 1] - o[1]) - (a[1] - o[1]) * (pts[i, 0] - o[0])
            if cross >= -1e-15:
                chain.pop()
            else:
                break
        chain.append(i)
    # keep only the non-dominated stretch
    out = []
    for i in chain:
        if any(pts[j, 0] >= pts[i, 0] and pts[j, 1] >= pts[i, 1] and
               (pts[j, 0] > pts[i, 0] or pts[j, 1] > pts[i, 1]) for j in chain):
            continue
        out.append(i)
    return out


def mac_lower_points(channel: Dmc, q_grid: Sequence[float] | None = None,
                     input_grids: int | tuple = DEFAULT_RES) -> list[RegionPoint]:
    """Achievable (R1, R2) points of a two-user MAC.

    Corner points of product-input pentagons are collected over the input
    grids; the upper-right convex hull of the corners is returned, with extra
    time-shared points at each weight in ``q_grid`` between adjacent vertices.
    """
    if channel.role != "mac":
        raise ValueError("mac_lower_points requires a mac channel")
    if q_grid is None:
        q_grid = np.linspace(0.0, 1.0, 5)
    r1, r2 = (input_grids, input_grids) if np.isscalar(input_grids) else input_grids
    n1, n2 = channel.input_sizes
    g1, g2 = simplex_grid(n1, int(r1)), simplex_grid(n2, int(r2))
    p1 = np.repeat(g1, len(g2), axis=0)
    p2 = np.tile(g2, (len(g1), 1))
    i1, i2, i12 = _mac_terms(channel, p1, p2)
    # corner A: user 2 decoded first; corner B: user 1 first
    ca = np.stack([i1, i12 - i1], axis=1)
    cb = np.stack([i12 - i2, i2], axis=1)
    pts = np.maximum(np.concatenate([ca, cb]), 0.0)
    verts = _pareto_hull(pts)

    def comp(idx, w):
        k = idx % len(p1)
        return {"weight": float(w), "p_x1": p1[k].tolist(), "p_x2": p2[k].tolist(),
                "corner": "decode2first" if idx < len(p1) else "decode1first"}

    out: list[RegionPoint] = []
    seen = set()

    def emit(comps):
        rates = np.zeros(2)
        for c in comps:
            rates += c["weight"] * np.array(_corner_rates(channel, c))
        key = (round(rates[0], 12), round(rates[1], 12))
        if key in seen:
            return
        seen.add(key)
        out.append(RegionPoint({"R1": float(rates[0]), "R2": float(rates[1])},
                               {"kind": "mac", "components": comps}))

    for a, b in zip(verts, verts[1:] + [None]):
        emit([comp(a, 1.0)])
        if b is None:
            continue
        for w in q_grid:
            if 0.0 < w < 1.0:
                emit([comp(a, 1.0 - w), comp(b, w)])
    out.sort(key=lambda p: (p.rates["R1"], -p.rates["R2"]))
    return out


def _corner_rates(channel: Dmc, comp: dict) -> tuple[float, float]:
    p1 = np.asarray(comp["p_x1"], dtype=float)[None]
    p2 = np.asarray(comp["p_x2"], dtype=float)[None]
    i1, i2, i12 = (float(v[0]) for v in _mac_terms(channel, p1, p2))
    if comp["corner"] == "decode2first":
        return max(i1, 0.0), max(i12 - i1, 0.0)
    return max(i12 - i2, 0.0), max(i2, 0.0)


# ---------------------------------------------------------------------------
# degraded broadcast
# ---------------------------------------------------------------------------

def _bc_terms(channel: Dmc, pu: np.ndarray, pxu: np.ndarray):
    """Batched I(U;Y1), I(U;Y2), I(X;Y1|U) for p(u) rows and p(x|u) stacks."""
    T = channel.transition
    joint = pu[:, :, None, None, None] * pxu[:, :, :, None, None] * T[None, None]
    iu1 = cmi_array(joint, [0], [2], nbatch=1)
    iu2 = cmi_array(joint, [0], [3], nbatch=1)
    ix1 = cmi_array(joint, [1], [2], [0], nbatch=1)
    return iu1, iu2, ix1


def _pareto_mask(r0: np.ndarray, r1: np.ndarray) -> np.ndarray:
    order = np.lexsort((-r1, -r0))
    keep = np.zeros(len(r0), dtype=bool)
    best = -np.inf
    for i in order:
        if r1[i] > best + 1e-15:
            keep[i] = True
            best = r1[i]
    return keep


def degraded_bc_lower_points(channel: Dmc, aux_grid: int = DEFAULT_RES,
                             alphas: Sequence[float] | None = None,
                             samples: int = 20_000, seed: int = 0) -> list[RegionPoint]:
    """Superposition points (R0, R1) with R0 common to both receivers.

    R0 = min(I(U;Y1), I(U;Y2)) and R1 = I(X;Y1|U) with |U| = |X|.  For binary
    inputs p(u) and each p(x|u) are gridded at ``aux_grid`` points; larger
    alphabets use ``samples`` seeded Dirichlet draws.  If ``alphas`` is given
    only the symmetric family U ~ uniform, X = U xor Bern(alpha) is evaluated.
    """
    if channel.role != "bc":
        raise ValueError("degraded_bc_lower_points requires a bc channel")
    nx = channel.input_sizes[0]
    if alphas is not None:
        if nx != 2:
            raise ValueError("the symmetric alpha family needs a binary input")
        out = []
        for a in alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha must lie in [0, 1], got {a!r}")
            pu = np.array([0.5, 0.5])
            pxu = np.array([[1 - a, a], [a, 1 - a]])
            out.append(_bc_point(channel, pu, pxu, {"alpha": float(a)}))
        return out
    if nx == 2:
        g = simplex_grid(2, aux_grid)
        a, b, c = np.meshgrid(np.arange(len(g)), np.arange(len(g)), np.arange(len(g)), indexing="ij")
        pu = g[a.ravel()]
        pxu = np.stack([g[b.ravel()], g[c.ravel()]], axis=1)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xBC])))
        pu = rng.dirichlet(np.ones(nx), size=samples)
        pxu = rng.dirichlet(np.ones(nx), size=(samples, nx))
        # deterministic anchors: U = X and U constant
        eye = np.broadcast_to(np.eye(nx), (nx, nx, nx)).copy()
        pu = np.concatenate([pu, np.full((1, nx), 1.0 / nx)])
        pxu = np.concatenate([pxu, eye[:1]])
    iu1, iu2, ix1 = _bc_terms(channel, pu, pxu)
    r0 = np.minimum(iu1, iu2)
    keep = np.flatnonzero(_pareto_mask(r0, ix1))
    keep = keep[np.argsort(r0[keep], kind="stable")]
    return [_bc_point(channel, pu[k], pxu[k], {}) for k in keep]


def _bc_point(channel, pu, pxu, extra) -> RegionPoint:
    iu1, iu2, ix1 = (float(v[0]) for v in _bc_terms(channel, pu[None], pxu[None]))
    w = {"kind": "bc", "p_u": np.asarray(pu).tolist(), "p_x_given_u": np.asarray(pxu).tolist()}
    w.update(extra)
    return RegionPoint({"R0": max(min(iu1, iu2), 0.0), "R1": max(ix1, 0.0)}, w)


# ---------------------------------------------------------------------------
# Gaussian closed forms
# ---------------------------------------------------------------------------

def gaussian_bc_lower_point(gauss: GaussianBC, alpha: float) -> RegionPoint:
    """Superposition point: a fraction alpha of the power carries the common message.

    Returns R0 (decoded by both receivers) and R1 (strong receiver only).
    """
    if not isinstance(gauss, GaussianBC):
        raise TypeError("expected a GaussianBC channel")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    P = gauss.P
    r1 = gaussian_capacity((1 - alpha) * P / gauss.n1)
    r0 = gaussian_capacity(alpha * P / ((1 - alpha) * P + gauss.n2))
    return RegionPoint({"R0": r0, "R1": r1}, {"kind": "gaussian_bc", "alpha": float(alpha)})


def gaussian_mac_lower_corner(gauss: GaussianMAC, first: int = 2) -> RegionPoint:
    """Successive-decoding corner; ``first`` is the user decoded first."""
    P1, P2, N = gauss.P1, gauss.P2, gauss.N
    if first == 2:
        rates = {"R1": gaussian_capacity(P1 / N), "R2": gaussian_capacity(P2 / (P1 + N))}
    elif first == 1:
        rates = {"R1": gaussian_capacity(P1 / (P2 + N)), "R2": gaussian_capacity(P2 / N)}
    else:
        raise ValueError("first must be 1 or 2")
    return RegionPoint(rates, {"kind": "gaussian_mac", "decoded_first": first})


# ---------------------------------------------------------------------------
# witness re-evaluation
# ---------------------------------------------------------------------------

def verify_point(channel, point: RegionPoint, tol: float = VERIFY_TOL) -> bool:
    """Recompute the point's rates from its witness and check the constraints."""
    w = point.witness
    kind = w.get("kind")
    if kind == "mac":
        tot = np.zeros(2)
        bounds = np.zeros(3)
        wsum = 0.0
        for c in w["components"]:
            p1 = np.asarray(c["p_x1"], dtype=float)
            p2 = np.asarray(c["p_x2"], dtype=float)
            for p in (p1, p2):
                Pmf(p)
            i1, i2, i12 = (float(v[0]) for v in _mac_terms(channel, p1[None], p2[None]))
            r = np.array(_corner_rates(channel, c))
            if r[0] > i1 + tol or r[1] > i2 + tol or r.sum() > i12 + tol:
                return False
            tot += c["weight"] * r
            bounds += c["weight"] * np.array([i1, i2, i12])
            wsum += c["weight"]
        R = np.array([point.rates["R1"], point.rates["R2"]])
        return (abs(wsum - 1.0) <= tol and np.all(np.abs(tot - R) <= tol)
                and R[0] <= bounds[0] + tol and R[1] <= bounds[1] + tol and R.sum() <= bounds[2] + tol)
    if kind == "bc":
        pu = np.asarray(w["p_u"], dtype=float)
        pxu = np.asarray(w["p_x_given_u"], dtype=float)
        Pmf(pu)
        for row in pxu:
            Pmf(row)
        iu1, iu2, ix1 = (float(v[0]) for v in _bc_terms(channel, pu[None], pxu[None]))
        return (abs(point.rates["R0"] - max(min(iu1, iu2), 0.0)) <= tol
                and abs(point.rates["R1"] - max(ix1, 0.0)) <= tol)
    if kind == "gaussian_bc":
        ref = gaussian_bc_lower_point(channel, w["alpha"])
    elif kind == "gaussian_mac":
        ref = gaussian_mac_lower_corner(channel, w["decoded_first"])
    elif kind == "p2p":
        px = np.asarray(w["p_x"], dtype=float)
        return abs(point.rates["R"] - p2p_mutual_information(channel, px)) <= tol
    else:
        raise ValueError(f"unknown witness kind {kind!r}")
    return all(abs(point.rates[k] - ref.rates[k]) <= tol for k in ref.rates)


def p2p_point(channel: Dmc, tol: float = 1e-9) -> RegionPoint:
    res = blahut_arimoto(channel, tol)
    return RegionPoint({"R": res.capacity}, {"kind": "p2p", "p_x": res.optimal_input.probs.tolist(),
                                            "upper_bracket": res.upper})

