"""Bit-pipe models: rate vectors over (transmitter set, receiver set) pairs.

A model replaces a noisy channel with noiseless pipes.  The pipe for key
(A, B) starts at transmitter i when A = {i}, otherwise at an internal node
v^A that every member of A feeds.  Lower models come from achievable rate
points; upper models satisfy the rate conditions of an emulation argument
for every input distribution on a grid, plus a strictness slack.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import capacity as cap
from .bottleneck import DescriptionSearch, SearchConfig
from .info import Dmc, GaussianBC, GaussianMAC, cmi_array, gaussian_capacity
from .simplex import DEFAULT_RES, simplex_grid

INF = math.inf
DEFAULT_SLACK = 1e-4
PAIR_TOL = 1e-12

DEFAULT_GEOMETRY = {
    "p2p": ((1,), (2,)),
    "bc": ((1,), (2, 3)),
    "mac": ((1, 2), (3,)),
    "ic": ((1, 2), (3, 4)),
    "gaussian_bc": ((1,), (2, 3)),
    "gaussian_mac": ((1, 2), (3,)),
}

CERTIFIED_NOTE = "certified-feasible rate vector; not claimed minimal"


class ModelError(ValueError):
    pass


def _check_rate(r) -> float:
    if isinstance(r, str):
        if r != "inf":
            raise ModelError(f"unknown textual rate {r!r}; only 'inf' is accepted")
        return INF
    r = float(r)
    if math.isnan(r):
        raise ModelError("NaN rate")
    if r < 0:
        raise ModelError(f"negative rate {r!r}")
    return r


def rate_to_json(r: float):
    return "inf" if r == INF else r


@dataclass(frozen=True, order=True)
class EdgeKey:
    A: tuple
    B: tuple

    def __init__(self, A, B):
        A = tuple(sorted(set(A)))
        B = tuple(sorted(set(B)))
        if not A or not B:
            raise ModelError("edge key needs nonempty transmitter and receiver sets")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    def __str__(self) -> str:
        return f"{{{','.join(map(str, self.A))}}}->{{{','.join(map(str, self.B))}}}"

    @property
    def multi(self) -> bool:
        return len(self.A) > 1


class RateVector(Mapping):
    """Immutable map EdgeKey -> rate (bits per use, may be inf)."""

    def __init__(self, entries=()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        d = {}
        for k, v in items:
            if not isinstance(k, EdgeKey):
                k = EdgeKey(*k)
            d[k] = _check_rate(v)
        self._d = dict(sorted(d.items()))

    def __getitem__(self, k):
        if not isinstance(k, EdgeKey):
            k = EdgeKey(*k)
        return self._d[k]

    def get(self, k, default=0.0):
        try:
            return self[k]
        except KeyError:
            return default

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __repr__(self):
        return "RateVector({" + ", ".join(f"{k}: {v!r}" for k, v in self._d.items()) + "})"

    def __eq__(self, other):
        return isinstance(other, RateVector) and self._d == other._d

    def __hash__(self):
        return hash(tuple(self._d.items()))

    def scaled(self, c: float) -> "RateVector":
        return RateVector({k: (v * c if v != INF else (INF if c > 0 else 0.0)) for k, v in self._d.items()})


@dataclass(frozen=True)
class Geometry:
    """Terminal labels and feed capacities (log2 of each input alphabet)."""

    V1: tuple
    V2: tuple
    feed_caps: tuple  # one per member of V1

    def __post_init__(self):
        if set(self.V1) & set(self.V2):
            raise ModelError("transmitter and receiver sets must be disjoint")
        if len(self.feed_caps) != len(self.V1):
            raise ModelError("one feed capacity per transmitter is required")

    def feed(self, i) -> float:
        return self.feed_caps[self.V1.index(i)]


def geometry_for(channel, V1=None, V2=None) -> Geometry:
    d1, d2 = DEFAULT_GEOMETRY[channel.role]
    V1 = tuple(V1) if V1 is not None else d1
    V2 = tuple(V2) if V2 is not None else d2
    if isinstance(channel, (GaussianBC, GaussianMAC)):
        feeds = tuple(INF for _ in V1)
    else:
        feeds = tuple(math.log2(n) for n in channel.input_sizes)
    if len(V1) != len(d1) or len(V2) != len(d2):
        raise ModelError(f"{channel.role} channel needs {len(d1)} transmitters and {len(d2)} receivers")
    return Geometry(V1, V2, feeds)


def internal_name(A) -> str:
    return "v^" + ",".join(map(str, sorted(A)))


@dataclass(frozen=True)
class Edge:
    src: object
    dsts: tuple
    cap: float
    key: EdgeKey | None = None

    @property
    def label(self) -> str:
        if self.key is not None:
            return str(self.key)
        return f"feed {self.src}->{self.dsts[0]}"


@dataclass(frozen=True)
class BitPipeModel:
    channel_id: str
    side: str
    V1: tuple
    V2: tuple
    rates: RateVector
    edges: tuple
    internal_nodes: tuple
    notes: tuple = ()

    @property
    def terminals(self) -> tuple:
        return self.V1 + self.V2

    def edge_caps(self) -> dict:
        return {e.label: e.cap for e in self.edges}

    def feeds(self) -> dict:
        return {(e.src, e.dsts[0]): e.cap for e in self.edges if e.key is None}

    def to_dict(self) -> dict:
        d = {"channel": self.channel_id, "side": self.side,
             "V1": list(self.V1), "V2": list(self.V2),
             "rates": [{"A": list(k.A), "B": list(k.B), "rate": rate_to_json(v)}
                       for k, v in self.rates.items()],
             "feeds": [{"from": s, "to": t, "cap": rate_to_json(c)}
                       for (s, t), c in self.feeds().items()]}
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def build_model(geom: Geometry, rates: RateVector, channel_id: str = "C", side: str = "lower",
                feed_override: dict | None = None, notes=()) -> BitPipeModel:
    """Graph fragment for a rate vector; zero-rate keys carry no pipe.

    ``feed_override`` maps (i, internal node name) to a capacity that replaces
    the default log-alphabet feed.
    """
    if not isinstance(rates, RateVector):
        rates = RateVector(rates)
    edges = []
    internal = []
    for k, r in rates.items():
        if not set(k.A) <= set(geom.V1) or not set(k.B) <= set(geom.V2):
            raise ModelError(f"edge key {k} is outside this channel's terminals")
        if r == 0:
            continue
        if k.multi:
            v = internal_name(k.A)
            if v not in internal:
                internal.append(v)
            src = v
        else:
            src = k.A[0]
        edges.append(Edge(src, k.B, r, k))
    feed_override = feed_override or {}
    for v in internal:
        A = [int(x) if x.lstrip("-").isdigit() else x for x in v[2:].split(",")]
        for i in A:
            c = feed_override.get((i, v), geom.feed(i))
            edges.append(Edge(i, (v,), _check_rate(c)))
    return BitPipeModel(channel_id, side, geom.V1, geom.V2, rates, tuple(edges), tuple(internal), tuple(notes))


def model_from_dict(d: dict) -> BitPipeModel:
    V1, V2 = tuple(d["V1"]), tuple(d["V2"])
    rates = RateVector({EdgeKey(r["A"], r["B"]): r["rate"] for r in d["rates"]})
    feeds = {(f["from"], f["to"]): f["cap"] for f in d.get("feeds", [])}
    # default feed caps are only needed for feeds that were not written out
    caps = []
    for i in V1:
        cs = [c for (s, _), c in feeds.items() if s == i]
        caps.append(_check_rate(cs[0]) if cs else INF)
    geom = Geometry(V1, V2, tuple(caps))
    return build_model(geom, rates, d.get("channel", "C"), d.get("side", "lower"), feeds,
                       tuple(d.get("notes", ())))


def dump_model(m: BitPipeModel) -> str:
    return json.dumps(m.to_dict(), indent=2)


@dataclass(frozen=True)
class ModelPair:
    lower: BitPipeModel
    upper: BitPipeModel
    slack: float
    notes: tuple = ()

    def __post_init__(self):
        if not self.slack > 0:
            raise ModelError("upper models need a positive slack")
        if (self.lower.V1, self.lower.V2) != (self.upper.V1, self.upper.V2):
            raise ModelError("lower and upper models have different terminals")
        lo, up = self.lower.edge_caps(), self.upper.edge_caps()
        for lab in set(lo) & set(up):
            if up[lab] < lo[lab] - PAIR_TOL:
                raise ModelError(f"upper rate {up[lab]!r} below lower rate {lo[lab]!r} on {lab}")


# ---------------------------------------------------------------------------
# lower models
# ---------------------------------------------------------------------------

def point_rates(channel, geom: Geometry, point: cap.RegionPoint) -> RateVector:
    """Map a region point's labeled rates onto edge keys."""
    r = point.rates
    V1, V2 = geom.V1, geom.V2
    role = channel.role
    if role == "p2p":
        return RateVector({EdgeKey(V1, V2): r["R"]})
    if role in ("mac", "gaussian_mac"):
        return RateVector({EdgeKey([V1[0]], V2): r["R1"], EdgeKey([V1[1]], V2): r["R2"]})
    if role in ("bc", "gaussian_bc"):
        return RateVector({EdgeKey(V1, V2): r["R0"], EdgeKey(V1, [V2[0]]): r["R1"]})
    raise ModelError(f"no region points for role {role}")


def lower_model(channel, point, geom: Geometry | None = None, channel_id: str = "C",
                verify: bool = True) -> tuple[RateVector, BitPipeModel]:
    """Lower model from a certified region point (or a single-transmitter rate vector)."""
    geom = geom or geometry_for(channel)
    if isinstance(point, cap.RegionPoint):
        if verify and not cap.verify_point(channel, point):
            raise ModelError("region point does not re-verify against its witness")
        rates = point_rates(channel, geom, point)
    else:
        rates = point if isinstance(point, RateVector) else RateVector(point)
    for k, v in rates.items():
        if k.multi and v > 0:
            raise ModelError(f"lower models cannot carry multi-transmitter rate on {k}")
    return rates, build_model(geom, rates, channel_id, "lower")


def matched_lower_mac(geom: Geometry, R1: float, R2: float, direct: float = 0.0,
                      channel_id: str = "C") -> BitPipeModel:
    """MAC lower model routed through the merge node.

    User 1 sends ``direct`` bits on its own pipe and the rest through v^A;
    user 2 sends everything through v^A.  The merged pipe carries the sum, so
    any (R1, R2) in the capacity region gives a valid lower model whose
    topology matches the upper model's.
    """
    if direct > R1:
        raise ModelError("direct rate exceeds user-1 rate")
    i1, i2 = geom.V1
    v = internal_name(geom.V1)
    f1, f2 = R1 - direct, R2
    rates = RateVector({EdgeKey([i1], geom.V2): direct, EdgeKey(geom.V1, geom.V2): f1 + f2})
    return build_model(geom, rates, channel_id, "lower", {(i1, v): f1, (i2, v): f2},
                       notes=("merge-routed lower model",))


# ---------------------------------------------------------------------------
# upper models
# ---------------------------------------------------------------------------

def upper_model_p2p(channel: Dmc, delta: float = DEFAULT_SLACK, geom: Geometry | None = None,
                    channel_id: str = "C", tol: float = 1e-9):
    if not delta > 0:
        raise ModelError("delta must be positive")
    geom = geom or geometry_for(channel)
    c = cap.blahut_arimoto(channel, tol).upper
    rates = RateVector({EdgeKey(geom.V1, geom.V2): c + delta})
    return rates, build_model(geom, rates, channel_id, "upper", notes=(CERTIFIED_NOTE,))


def _input_grid(n: int, res: int) -> np.ndarray:
    return simplex_grid(n, res)


def _bc_maxima(channel: Dmc, res: int):
    g = _input_grid(channel.input_sizes[0], res)
    joint = g[:, :, None, None] * channel.transition[None]
    i2 = cmi_array(joint, [0], [2], nbatch=1)
    i12 = cmi_array(joint, [0], [1, 2], nbatch=1)
    return g, i2, i12


@dataclass(frozen=True)
class BCUpperFamily:
    """Upper models for a broadcast channel, one per common rate R0."""

    C2: float
    C12: float
    delta: float
    geom: Geometry
    channel_id: str = "C"

    def member(self, R0: float | None = None):
        R0 = self.C2 + self.delta if R0 is None else float(R0)
        if R0 < self.C2 + self.delta - 1e-15:
            raise ModelError(f"R0 must be at least C2 + delta = {self.C2 + self.delta!r}")
        R1 = max(0.0, self.C12 - R0) + self.delta
        V1, V2 = self.geom.V1, self.geom.V2
        rates = RateVector({EdgeKey(V1, V2): R0, EdgeKey(V1, [V2[0]]): R1})
        return rates, build_model(self.geom, rates, self.channel_id, "upper", notes=(CERTIFIED_NOTE,))


def upper_model_bc(channel: Dmc, input_grid: int = DEFAULT_RES, delta: float = DEFAULT_SLACK,
                   geom: Geometry | None = None, channel_id: str = "C") -> BCUpperFamily:
    """Grid maxima of I(X;Y2) and I(X;Y1,Y2) and the Pareto family built on them."""
    if channel.role != "bc":
        raise ModelError("upper_model_bc requires a bc channel")
    if not delta > 0:
        raise ModelError("delta must be positive")
    _, i2, i12 = _bc_maxima(channel, input_grid)
    return BCUpperFamily(float(i2.max()), float(i12.max()), delta, geom or geometry_for(channel), channel_id)


def _mac_problems(channel: Dmc, pj: np.ndarray):
    """Per joint input p(x1,x2): p(x1), p(y|x1) and I(X1,X2;Y)."""
    n1, n2 = channel.input_sizes
    T = channel.transition
    p = pj.reshape(-1, n1, n2)
    px1 = p.sum(axis=2)
    cond = np.where(px1[:, :, None] > 0, p / np.where(px1 > 0, px1, 1.0)[:, :, None], 1.0 / n2)
    pyx1 = np.einsum("bxz,xzy->bxy", cond, T)
    joint = p[..., None] * T[None]
    i12 = cmi_array(joint, [0, 1], [2], nbatch=1)
    return px1, pyx1, i12


@dataclass
class MACUpperSolver:
    """Evaluates the merged-pipe rate needed for each user-1 description rate."""

    channel: Dmc
    input_grid: int = DEFAULT_RES
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if self.channel.role != "mac":
            raise ModelError("MAC upper models require a mac channel")
        n1, n2 = self.channel.input_sizes
        self.grid = _input_grid(n1 * n2, self.input_grid)
        px1, pyx1, self.i12 = _mac_problems(self.channel, self.grid)
        self.inner = DescriptionSearch(px1, pyx1, n1, self.search)

    def merged_rate(self, R1: float):
        """max over the grid of min over U (I(X1;U) <= R1) of I(X1,X2;Y|U), and its argmax."""
        if R1 < 0:
            raise ModelError("R1 must be nonnegative")
        iuy, ixu, q = self.inner.best(R1)
        val = np.maximum(self.i12 - iuy, 0.0)
        k = int(val.argmax())
        return float(val[k]), {"p_x1x2": self.grid[k].tolist(), "q_u_given_x1": q[k].tolist(),
                               "I_x1_u": float(ixu[k])}


def upper_model_mac(channel: Dmc, R1: float, input_grid: int = DEFAULT_RES,
                    aux_search: SearchConfig | None = None, delta: float = DEFAULT_SLACK,
                    geom: Geometry | None = None, channel_id: str = "C",
                    solver: MACUpperSolver | None = None):
    """Upper model with user-1 pipe R1 + delta and merged pipe R2(R1) + delta."""
    if not delta > 0:
        raise ModelError("delta must be positive")
    solver = solver or MACUpperSolver(channel, input_grid, aux_search or SearchConfig())
    r2, witness = solver.merged_rate(R1)
    geom = geom or geometry_for(channel)
    rates = RateVector({EdgeKey([geom.V1[0]], geom.V2): R1 + delta, EdgeKey(geom.V1, geom.V2): r2 + delta})
    model = build_model(geom, rates, channel_id, "upper", notes=(CERTIFIED_NOTE,))
    return rates, model


# ---------------------------------------------------------------------------
# interference channel
# ---------------------------------------------------------------------------

def _ic_candidates(n1: int, res: int, samples: int, seed: int):
    """Test channels p(u1,u2|x1) with |U1 x U2| <= |X1|, as (shape, array) groups."""
    groups = []
    shapes = [(a, b) for a in range(1, n1 + 1) for b in range(1, n1 + 1) if a * b <= n1 and a * b > 1]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x1C])))
    for a, b in shapes:
        nu = a * b
        if n1 == 2:
            g = simplex_grid(nu, res)
            qs = np.array([np.stack(r) for r in product(g, repeat=n1)])
        else:
            eye = np.eye(nu)
            det = np.array([eye[list(f)] for f in product(range(nu), repeat=n1)])
            qs = np.concatenate([det, rng.dirichlet(np.ones(nu), size=(samples, n1))])
        groups.append(((a, b), qs.reshape(len(qs), n1, a, b)))
    groups.append(((1, 1), np.ones((1, n1, 1, 1))))
    return groups


def _ic_terms(pj: np.ndarray, T: np.ndarray, q: np.ndarray):
    """Information terms for joint inputs pj (B,n1,n2), test channels q (K,n1,a,b).

    Returns (B, K) arrays: I(X1;U1U2), I(X1;U2), merged sum, merged common.
    """
    # axes: b k x1 x2 u1 u2 y1 y2
    joint = (pj[:, None, :, :, None, None, None, None] * q[None, :, :, None, :, :, None, None]
             * T[None, None, :, :, None, None, :, :])
    B, K = joint.shape[:2]
    j = joint.reshape((B * K,) + joint.shape[2:])
    nb = 1
    i_u = cmi_array(j, [0], [2, 3], nbatch=nb)
    i_u2 = cmi_array(j, [0], [3], nbatch=nb)
    common = cmi_array(j, [0, 1], [5], [3], nbatch=nb)
    private = cmi_array(j, [0, 1], [4], [2, 3, 5], nbatch=nb)
    return (i_u.reshape(B, K), i_u2.reshape(B, K), (private + common).reshape(B, K), common.reshape(B, K))


def upper_model_ic(channel: Dmc, variant: int = 1, input_grid: int = 17, aux_res: int = 17,
                   delta: float = DEFAULT_SLACK, budgets: tuple = (0.0, 0.0),
                   geom: Geometry | None = None, channel_id: str = "C", samples: int = 64,
                   seed: int = 0):
    """Interference-channel upper model (two descriptions from user 1, two from the merge node).

    ``budgets`` = (total, common) caps on I(X1;U1,U2) and on the common
    description's information.  Per grid input the feasible test channel with
    the smallest merged-sum term (then merged-common term) is used.  Variant 2
    is variant 1 with the receivers' roles exchanged.
    """
    if channel.role != "ic":
        raise ModelError("upper_model_ic requires an ic channel")
    if variant not in (1, 2):
        raise ModelError("variant must be 1 or 2")
    if not delta > 0:
        raise ModelError("delta must be positive")
    geom = geom or geometry_for(channel)
    T = channel.transition
    if variant == 2:
        T = np.swapaxes(T, 2, 3)
    n1, n2 = channel.input_sizes
    grid = _input_grid(n1 * n2, input_grid).reshape(-1, n1, n2)
    r_tot, r_com = budgets
    best = None
    groups = _ic_candidates(n1, aux_res, samples, seed) if (r_tot > 0) else [((1, 1), np.ones((1, n1, 1, 1)))]
    for _, qs in groups:
        for s in range(0, len(grid), 64):
            t = _ic_terms(grid[s:s + 64], T, qs)
            feas = (t[0] <= r_tot + 1e-12) & (t[1] <= r_com + 1e-12)
            key = np.where(feas, t[2] + 1e-9 * t[3], np.inf)
            k = key.argmin(axis=1)
            rows = np.arange(len(k))
            pick = np.stack([t[i][rows, k] for i in range(4)] + [key[rows, k]], axis=1)
            if best is None:
                best = np.full((len(grid), 5), np.inf)
            cur = best[s:s + 64]
            better = pick[:, 4] < cur[:, 4]
            cur[better] = pick[better]
    q_tot, q_com, q_sum, q_mc = (best[:, i].max() for i in range(4))
    R_b = q_com + delta
    R_a = max(0.0, q_tot - R_b) + delta
    R_d = q_mc + delta
    R_c = max(0.0, q_sum - R_d) + delta
    i1, i2 = geom.V1
    j1, j2 = geom.V2
    near, far = (j1, j2) if variant == 1 else (j2, j1)
    rates = RateVector({EdgeKey([i1], [j1, j2]): R_b, EdgeKey([i1], [near]): R_a,
                        EdgeKey([i1, i2], [j1, j2]): R_d, EdgeKey([i1, i2], [near]): R_c})
    return rates, build_model(geom, rates, channel_id, "upper", notes=(CERTIFIED_NOTE, f"variant {variant}"))


# ---------------------------------------------------------------------------
# Gaussian closed forms
# ---------------------------------------------------------------------------

def gaussian_bc_power_split(gauss: GaussianBC) -> float:
    """Unclipped fraction 1 - alpha of power left for the private message."""
    n1, n2, r = gauss.n1, gauss.n2, gauss.rho
    num = (math.sqrt(n2) - r * math.sqrt(n1)) ** 2
    den = (1.0 - r * r) * (gauss.P + n2)
    if den == 0.0:
        if num == 0.0:
            raise ModelError("rho = 1 with equal effective noise makes the power split undefined")
        return INF
    return num / den


def gaussian_bc_models(gauss: GaussianBC, delta: float = DEFAULT_SLACK, geom: Geometry | None = None,
                       channel_id: str = "C") -> ModelPair:
    """Lower superposition point and the matching upper model sharing the private rate."""
    geom = geom or geometry_for(gauss)
    k = gaussian_bc_power_split(gauss)
    kc = min(k, 1.0)
    low = cap.gaussian_bc_lower_point(gauss, 1.0 - kc)
    R0u = gaussian_capacity(gauss.P / gauss.n2) + delta
    R1u = INF if k == INF else gaussian_capacity(k * gauss.P / gauss.n1)
    V1, V2 = geom.V1, geom.V2
    up_rates = RateVector({EdgeKey(V1, V2): R0u, EdgeKey(V1, [V2[0]]): R1u})
    _, lo_model = lower_model(gauss, low, geom, channel_id)
    up_model = build_model(geom, up_rates, channel_id, "upper", notes=(CERTIFIED_NOTE,))
    return ModelPair(lo_model, up_model, delta, ("gaussian bc", f"power split {k!r}"))


def gaussian_bc_gap(gauss: GaussianBC) -> float:
    """Cut gap between the Gaussian BC upper and lower models at zero slack."""
    k = gaussian_bc_power_split(gauss)
    if k == INF:
        return INF
    low = cap.gaussian_bc_lower_point(gauss, 1.0 - min(k, 1.0))
    up = gaussian_capacity(gauss.P / gauss.n2) + gaussian_capacity(k * gauss.P / gauss.n1)
    return up - low.rates["R0"] - low.rates["R1"]


def gaussian_mac_models(gauss: GaussianMAC, delta: float = DEFAULT_SLACK, geom: Geometry | None = None,
                        channel_id: str = "C", decoded_first: int = 2) -> ModelPair:
    """Corner-point lower model and dependent-description upper model.

    ``decoded_first`` = 2 gives the pair built around user 1's single-user
    rate; 1 gives the role-swapped pair.
    """
    geom = geom or geometry_for(gauss)
    low = cap.gaussian_mac_lower_corner(gauss, decoded_first)
    P1, P2, N = gauss.P1, gauss.P2, gauss.N
    s = (math.sqrt(P1) + math.sqrt(P2)) ** 2
    own = geom.V1[0] if decoded_first == 2 else geom.V1[1]
    Pown = P1 if decoded_first == 2 else P2
    Ra = gaussian_capacity(Pown / N) + delta
    Rm = 0.5 * math.log2((s + N) / (Pown + N)) + delta
    up_rates = RateVector({EdgeKey([own], geom.V2): Ra, EdgeKey(geom.V1, geom.V2): Rm})
    _, lo_model = lower_model(gauss, low, geom, channel_id)
    up_model = build_model(geom, up_rates, channel_id, "upper", notes=(CERTIFIED_NOTE,))
    return ModelPair(lo_model, up_model, delta, ("gaussian mac", f"decoded first {decoded_first}"))


def gaussian_mac_gap(gauss: GaussianMAC) -> float:
    s = (math.sqrt(gauss.P1) + math.sqrt(gauss.P2)) ** 2
    return 0.5 * math.log2((s + gauss.N) / (gauss.P1 + gauss.P2 + gauss.N))


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

@dataclass
class MarginReport:
    slacks: dict
    witnesses: dict

    @property
    def min_slack(self) -> float:
        return min(self.slacks.values()) if self.slacks else INF

    def to_dict(self) -> dict:
        return {"min_slack": self.min_slack, "slacks": self.slacks, "witnesses": self.witnesses}


def check_upper_conditions(channel, rates: RateVector, input_grid: int = DEFAULT_RES,
                           geom: Geometry | None = None, delta: float = DEFAULT_SLACK,
                           aux_search: SearchConfig | None = None, variant: int = 1,
                           aux_res: int = 17, solver: MACUpperSolver | None = None) -> MarginReport:
    """Smallest slack of every rate condition over the input grid.

    Negative slack means the rate vector is not certified at some grid point.
    For the MAC and IC conditions the auxiliary description is searched with
    its information budget reduced by ``delta``.
    """
    geom = geom or geometry_for(channel)
    V1, V2 = geom.V1, geom.V2
    if channel.role == "p2p":
        g = _input_grid(channel.input_sizes[0], input_grid)
        joint = g[:, :, None] * channel.transition[None]
        i = cmi_array(joint, [0], [1], nbatch=1)
        k = int(i.argmax())
        R = rates.get(EdgeKey(V1, V2))
        return MarginReport({"R > I(X;Y)": R - float(i[k])}, {"R > I(X;Y)": g[k].tolist()})
    if channel.role == "bc":
        g, i2, i12 = _bc_maxima(channel, input_grid)
        R0 = rates.get(EdgeKey(V1, V2))
        R1 = rates.get(EdgeKey(V1, [V2[0]]))
        k2, k12 = int(i2.argmax()), int(i12.argmax())
        return MarginReport({"R0 > I(X;Y2)": R0 - float(i2[k2]),
                             "R0 + R1 > I(X;Y1,Y2)": R0 + R1 - float(i12[k12])},
                            {"R0 > I(X;Y2)": g[k2].tolist(), "R0 + R1 > I(X;Y1,Y2)": g[k12].tolist()})
    if channel.role == "mac":
        Ra = rates.get(EdgeKey([V1[0]], V2))
        Rm = rates.get(EdgeKey(V1, V2))
        if solver is None or solver.input_grid != input_grid:
            solver = MACUpperSolver(channel, input_grid, aux_search or SearchConfig())
        budget = max(Ra - delta, 0.0)
        iuy, ixu, _ = solver.inner.best(budget)
        cond = np.maximum(solver.i12 - iuy, 0.0)
        k = int(cond.argmax())
        return MarginReport({"Ra > I(X1;U)": float(Ra - ixu.max()), "Rm > I(X1,X2;Y|U)": float(Rm - cond[k])},
                            {"Rm > I(X1,X2;Y|U)": solver.grid[k].tolist()})
    if channel.role == "ic":
        near = V2[0] if variant == 1 else V2[1]
        R_b = rates.get(EdgeKey([V1[0]], V2))
        R_a = rates.get(EdgeKey([V1[0]], [near]))
        R_d = rates.get(EdgeKey(V1, V2))
        R_c = rates.get(EdgeKey(V1, [near]))
        _, ref = upper_model_ic(channel, variant, input_grid, aux_res, delta,
                                (max(R_a + R_b - delta, 0.0), max(R_b - delta, 0.0)), geom)
        need = {k: v - delta for k, v in ref.rates.items()}
        slacks = {
            "Rb > I(X1;Uc)": R_b - need[EdgeKey([V1[0]], V2)],
            "Ra + Rb > I(X1;U1,U2)": R_a + R_b - (need[EdgeKey([V1[0]], V2)] + need[EdgeKey([V1[0]], [near])]),
            "Rd > merged common": R_d - need[EdgeKey(V1, V2)],
            "Rc + Rd > merged sum": R_c + R_d - (need[EdgeKey(V1, V2)] + need[EdgeKey(V1, [near])]),
        }
        return MarginReport(slacks, {})
    raise ModelError(f"no rate conditions for role {channel.role}")
