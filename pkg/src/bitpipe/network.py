"""Networks of channels and bit pipes: replacement, cuts, flows and gap metrics."""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass

import networkx as nx
import numpy as np

from . import capacity as cap
from . import models as mdl
from .info import channel_to_dict, load_channel
from .models import INF, BitPipeModel, ModelPair

MAX_ENUM_NODES = 20
ADDITIVE_GAP_LABEL = "conditional on cut-set bounds being tight for the demands"


class NetworkError(ValueError):
    pass


class NoisyComponentError(NetworkError):
    pass


class EnumerationCapError(NetworkError):
    pass


class MissingCandidatesError(NetworkError):
    pass


@dataclass(frozen=True)
class Component:
    cid: str
    kind: str                  # "noisy" | "model" | "pipe"
    V1: tuple = ()
    V2: tuple = ()
    channel: object = None
    model: BitPipeModel | None = None
    cap: float = 0.0

    @property
    def terminals(self) -> tuple:
        return tuple(dict.fromkeys(self.V1 + self.V2))


@dataclass(frozen=True)
class Demand:
    kind: str                  # "unicast" | "multicast"
    source: int
    sinks: tuple
    rate: float | None = None

    def to_dict(self) -> dict:
        if self.kind == "unicast":
            return {"type": "unicast", "from": self.source, "to": self.sinks[0], "rate": self.rate}
        d = {"type": "multicast", "source": self.source, "sinks": list(self.sinks)}
        if self.rate is not None:
            d["rate"] = self.rate
        return d


def unicast(u: int, v: int, rate: float | None = None) -> Demand:
    return Demand("unicast", u, (v,), rate)


def multicast(u: int, sinks, rate: float | None = None) -> Demand:
    return Demand("multicast", u, tuple(sinks), rate)


@dataclass(frozen=True)
class Network:
    m: int
    components: tuple
    demands: tuple = ()

    def __post_init__(self):
        ids = [c.cid for c in self.components]
        if len(set(ids)) != len(ids):
            raise NetworkError("component ids must be unique")
        for c in self.components:
            if set(c.V1) & set(c.V2):
                raise NetworkError(f"component {c.cid}: transmitters and receivers overlap")
            for t in c.V1 + c.V2:
                if not (isinstance(t, (int, np.integer)) and 1 <= t <= self.m):
                    raise NetworkError(f"component {c.cid}: endpoint {t!r} outside 1..{self.m}")
        for d in self.demands:
            ends = (d.source,) + d.sinks
            if any(not 1 <= e <= self.m for e in ends):
                raise NetworkError("demand endpoint outside the node range")
            if d.source in d.sinks:
                raise NetworkError("demand source and sink must differ")

    @property
    def nodes(self) -> tuple:
        return tuple(range(1, self.m + 1))

    def component(self, cid: str) -> Component:
        for c in self.components:
            if c.cid == cid:
                return c
        raise KeyError(cid)

    def noisy(self) -> list:
        return [c for c in self.components if c.kind == "noisy"]

    @property
    def deterministic(self) -> bool:
        return not self.noisy()


def pipe(cid: str, i: int, j: int, capacity: float) -> Component:
    return Component(cid, "pipe", (i,), (j,), cap=mdl._check_rate(capacity))


def noisy(cid: str, channel, V1, V2) -> Component:
    mdl.geometry_for(channel, V1, V2)  # arity check
    return Component(cid, "noisy", tuple(V1), tuple(V2), channel=channel)


def model_component(cid: str, model: BitPipeModel) -> Component:
    return Component(cid, "model", model.V1, model.V2, model=model)


def replace(network: Network, channel_id: str, model: BitPipeModel) -> Network:
    """Swap one component for a bit-pipe model with the same terminals."""
    comps = []
    found = False
    for c in network.components:
        if c.cid == channel_id:
            if (tuple(model.V1), tuple(model.V2)) != (c.V1, c.V2):
                raise NetworkError(f"model terminals {model.V1}/{model.V2} do not match "
                                   f"component {channel_id} terminals {c.V1}/{c.V2}")
            comps.append(Component(c.cid, "model", c.V1, c.V2, channel=c.channel, model=model))
            found = True
        else:
            comps.append(c)
    if not found:
        raise KeyError(channel_id)
    return Network(network.m, tuple(comps), network.demands)


def replace_all(network: Network, models: dict) -> Network:
    for cid, m in models.items():
        network = replace(network, cid, m)
    return network


# ---------------------------------------------------------------------------
# hyperedges and cuts
# ---------------------------------------------------------------------------

def _hyperedges(c: Component):
    """(src, dsts, cap) with internal nodes named per component; plus internal node list."""
    if c.kind == "pipe":
        return [(c.V1[0], c.V2, c.cap)], []
    if c.kind == "model":
        name = lambda n: n if isinstance(n, (int, np.integer)) else f"{c.cid}/{n}"
        edges = [(name(e.src), tuple(name(d) for d in e.dsts), e.cap) for e in c.model.edges]
        return edges, [name(v) for v in c.model.internal_nodes]
    raise NoisyComponentError(f"component {c.cid} is still a noisy channel; replace it with a bit-pipe model first")


def _component_cut(c: Component, S: frozenset):
    edges, internal = _hyperedges(c)
    if not (S & set(c.V1)) or not (set(c.V2) - S):
        return 0.0, ()
    best, bestT = INF, ()
    for r in range(len(internal) + 1):
        for T in itertools.combinations(internal, r):
            side = S | set(T)
            val = sum(cp for s, ds, cp in edges if s in side and any(d not in side for d in ds))
            if val < best:
                best, bestT = val, T
    return best, bestT


@dataclass(frozen=True)
class CutReport:
    S: tuple
    value: float
    per_component: tuple

    def to_dict(self) -> dict:
        return {"S": list(self.S), "value": mdl.rate_to_json(self.value),
                "per_component": [{"component": c, "value": mdl.rate_to_json(v), "internal_in_S": list(T)}
                                  for c, v, T in self.per_component]}


def cut_value(network: Network, S) -> CutReport:
    """Total capacity leaving S, each model's internal nodes placed to minimize it."""
    S = frozenset(S)
    if any(not 1 <= s <= network.m for s in S):
        raise NetworkError("cut set contains unknown nodes")
    per = []
    for c in network.components:
        v, T = _component_cut(c, S)
        per.append((c.cid, v, T))
    total = sum(v for _, v, _ in per)
    return CutReport(tuple(sorted(S)), total, tuple(per))


def component_table(c: Component) -> tuple[tuple, np.ndarray]:
    """Cut contribution for every subset pattern of the component's terminals."""
    terms = c.terminals
    tab = np.zeros(2 ** len(terms))
    for mask in range(len(tab)):
        S = frozenset(t for b, t in enumerate(terms) if mask >> b & 1)
        tab[mask] = _component_cut(c, S)[0]
    return terms, tab


def _pattern_index(masks: np.ndarray, terms) -> np.ndarray:
    idx = np.zeros(masks.shape, dtype=np.int64)
    for b, t in enumerate(terms):
        idx |= ((masks >> (t - 1)) & 1) << b
    return idx


def all_cut_values(network: Network) -> np.ndarray:
    """val(N, S) for every S encoded as a bitmask over nodes 1..m."""
    if network.m > MAX_ENUM_NODES:
        raise EnumerationCapError(f"exhaustive cut enumeration is capped at {MAX_ENUM_NODES} nodes; "
                                  "use min_cut per demand instead")
    masks = np.arange(2 ** network.m, dtype=np.int64)
    vals = np.zeros(len(masks))
    for c in network.components:
        terms, tab = component_table(c)
        vals += tab[_pattern_index(masks, terms)]
    return vals


def _mask_to_set(mask: int, m: int) -> tuple:
    return tuple(i + 1 for i in range(m) if mask >> i & 1)


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------

def flow_graph(network: Network) -> nx.DiGraph:
    """Expanded digraph: each hyperedge becomes src -> aux (rate) and aux -> dst (unbounded)."""
    hedges = []
    for c in network.components:
        es, _ = _hyperedges(c)
        hedges += es
    finite = sum(cp for _, _, cp in hedges if cp != INF)
    big = finite + 1.0
    G = nx.DiGraph()
    G.add_nodes_from(network.nodes)
    G.graph["sentinel"] = big

    def add(a, b, cp):
        cp = big if cp == INF else cp
        if G.has_edge(a, b):
            G[a][b]["capacity"] = min(G[a][b]["capacity"] + cp, big)
        else:
            G.add_edge(a, b, capacity=cp)

    for n, (s, ds, cp) in enumerate(hedges):
        if cp == 0:
            continue
        if len(ds) == 1:
            add(s, ds[0], cp)
        else:
            aux = ("aux", n)
            add(s, aux, cp)
            for d in ds:
                add(aux, d, INF)
    return G


def min_cut(network: Network, u: int, v: int, graph: nx.DiGraph | None = None) -> float:
    if u == v:
        raise NetworkError("min_cut needs distinct endpoints")
    if not network.deterministic:
        raise NoisyComponentError("replace every noisy channel with a bit-pipe model first")
    G = graph if graph is not None else flow_graph(network)
    val = nx.maximum_flow_value(G, u, v, capacity="capacity")
    return INF if val >= G.graph["sentinel"] else float(val)


def multicast_capacity(network: Network, source: int, sinks) -> float:
    sinks = tuple(sinks)
    if not sinks:
        raise NetworkError("multicast needs at least one sink")
    if source in sinks:
        raise NetworkError("source cannot be a sink")
    G = flow_graph(network)
    return min(min_cut(network, source, t, G) for t in sinks)


def demand_bound(network: Network, d: Demand) -> float:
    if d.kind == "unicast":
        return min_cut(network, d.source, d.sinks[0])
    return multicast_capacity(network, d.source, d.sinks)


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    violated: tuple      # (S, demand crossing, cut value)
    binding: tuple       # cuts where demand crossing equals value

    def to_dict(self) -> dict:
        f = lambda rows: [{"S": list(S), "demand": dv, "value": mdl.rate_to_json(cv)} for S, dv, cv in rows]
        return {"feasible": self.feasible, "violated": f(self.violated), "binding": f(self.binding),
                "note": "cut-set outer bound only"}


def cutset_feasibility(network: Network, demands=None, tol: float = 1e-12) -> Feasibility:
    """Check every cut: demand rate leaving S must not exceed val(N, S)."""
    demands = network.demands if demands is None else tuple(demands)
    vals = all_cut_values(network)
    m = network.m
    masks = np.arange(2 ** m, dtype=np.int64)
    need = np.zeros(len(masks))
    for d in demands:
        if d.rate is None:
            continue
        src_in = (masks >> (d.source - 1)) & 1
        out = np.zeros(len(masks), dtype=bool)
        for t in d.sinks:
            out |= ((masks >> (t - 1)) & 1) == 0
        need += np.where((src_in == 1) & out, d.rate, 0.0)
    viol = np.flatnonzero(need > vals + tol)
    bind = np.flatnonzero((need > 0) & (np.abs(need - vals) <= tol))
    row = lambda k: (_mask_to_set(int(k), m), float(need[k]), float(vals[k]))
    return Feasibility(len(viol) == 0, tuple(row(k) for k in viol), tuple(row(k) for k in bind))


# ---------------------------------------------------------------------------
# gap metrics
# ---------------------------------------------------------------------------

def _ratio(lo: float, up: float) -> float:
    if up == INF:
        return 1.0 if lo == INF else 0.0
    return lo / up


def pair_ratio(lower: BitPipeModel, upper: BitPipeModel) -> float | None:
    """min over edges with U >= L and U > 0 of L/U (None if no edge qualifies).

    Edges are compared by label, feed pipes included.
    """
    lo, up = lower.edge_caps(), upper.edge_caps()
    rs = [_ratio(lo.get(k, 0.0), u) for k, u in up.items() if u > 0 and u >= lo.get(k, 0.0)]
    return min(rs) if rs else None


def rho(lower_candidates, upper_candidates) -> float:
    """Best per-edge ratio over all (lower, upper) candidate combinations."""
    if not lower_candidates or not upper_candidates:
        raise NetworkError("rho needs nonempty candidate lists")
    best = 0.0
    for L in lower_candidates:
        for U in upper_candidates:
            r = pair_ratio(L, U)
            if r is not None:
                best = max(best, r)
    return min(best, 1.0)


def model_cut(model: BitPipeModel, S) -> float:
    comp = model_component("C", model)
    return _component_cut(comp, frozenset(S))[0]


def delta(S_pattern, lower_candidates, upper_candidates, tol: float = 1e-9) -> float:
    """min over candidate combinations of val(upper, S) - val(lower, S).

    ``S_pattern`` lists the channel terminals that lie in S.
    """
    if not lower_candidates or not upper_candidates:
        raise NetworkError("delta needs nonempty candidate lists")
    S = frozenset(S_pattern)
    lows = [model_cut(L, S) for L in lower_candidates]
    ups = [model_cut(U, S) for U in upper_candidates]
    if max(lows) > min(ups) + tol:
        raise mdl.ModelError(f"an upper model cut {min(ups)!r} is below a lower model cut {max(lows)!r}")
    d = min(ups) - max(lows)
    if d == INF or math.isnan(d):
        return INF
    return max(d, 0.0)


def _cut_profile(model, terms):
    return np.array([model_cut(model, [t for b, t in enumerate(terms) if k >> b & 1])
                     for k in range(2 ** len(terms))])


def consistent_pairs(pairs, terms, tol: float = 1e-9):
    """Greedily keep pairs whose upper cuts dominate every kept lower cut.

    A candidate upper model that falls below some achievable lower model on a
    cut cannot be an outer bound, so it is dropped along with its lower.
    Returns (kept, dropped).
    """
    kept, dropped, lo_prof, up_prof = [], [], [], []
    for p in pairs:
        lp, upr = _cut_profile(p.lower, terms), _cut_profile(p.upper, terms)
        ok = np.all(lp <= upr + tol)
        ok = ok and all(np.all(l <= upr + tol) for l in lo_prof)
        ok = ok and all(np.all(lp <= u + tol) for u in up_prof)
        if ok:
            kept.append(p)
            lo_prof.append(lp)
            up_prof.append(upr)
        else:
            dropped.append(p)
    return kept, dropped


def _candidate_lists(pairs):
    lows, ups = [], []
    for p in pairs:
        if p.lower not in lows:
            lows.append(p.lower)
        if p.upper not in ups:
            ups.append(p.upper)
    return lows, ups


@dataclass(frozen=True)
class GapReport:
    rho_per_channel: dict
    rho_network: float
    delta_per_cut: dict
    additive_gap: float
    worst_cut: tuple
    notes: tuple = (ADDITIVE_GAP_LABEL, "rho is a lower estimate and delta an upper estimate "
                                        "over the exhibited candidate models")

    def to_dict(self) -> dict:
        return {"rho_per_channel": self.rho_per_channel, "rho_network": self.rho_network,
                "delta_per_cut": {",".join(map(str, S)): mdl.rate_to_json(v)
                                  for S, v in self.delta_per_cut.items()},
                "additive_gap": mdl.rate_to_json(self.additive_gap), "worst_cut": list(self.worst_cut),
                "notes": list(self.notes)}


def network_gaps(network: Network, candidates: dict) -> GapReport:
    """rho over channels and max over S of summed per-channel Delta."""
    chans = [c for c in network.components if c.kind == "noisy" or (c.kind == "model" and c.channel is not None)]
    for c in chans:
        if not candidates.get(c.cid):
            raise MissingCandidatesError(f"no candidate models for component {c.cid}")
    if network.m > MAX_ENUM_NODES:
        raise EnumerationCapError(f"gap enumeration is capped at {MAX_ENUM_NODES} nodes")
    rhos = {}
    masks = np.arange(2 ** network.m, dtype=np.int64)
    total = np.zeros(len(masks))
    notes = GapReport.notes
    for c in chans:
        terms = c.terminals
        kept, dropped = consistent_pairs(candidates[c.cid], terms)
        if not kept:
            raise mdl.ModelError(f"no cut-consistent candidate pair for component {c.cid}")
        if dropped:
            notes = notes + (f"{c.cid}: dropped {len(dropped)} candidate pair(s) whose upper model "
                             "falls below an achievable lower model on some cut",)
        lows, ups = _candidate_lists(kept)
        rhos[c.cid] = rho(lows, ups)
        tab = np.array([delta([t for b, t in enumerate(terms) if k >> b & 1], lows, ups)
                        for k in range(2 ** len(terms))])
        total += tab[_pattern_index(masks, terms)]
    k = int(np.argmax(total))
    per_cut = {_mask_to_set(int(i), network.m): float(total[i]) for i in masks}
    rho_net = min(rhos.values()) if rhos else 1.0
    return GapReport(rhos, rho_net, per_cut, float(total[k]), _mask_to_set(k, network.m), notes)


# ---------------------------------------------------------------------------
# candidate construction per channel role
# ---------------------------------------------------------------------------

@dataclass
class CandidateConfig:
    delta: float = mdl.DEFAULT_SLACK
    grid: int = mdl.DEFAULT_RES
    tol: float = 1e-9
    max_lower: int = 16
    mac_R1: tuple | None = None
    search: object = None


def _thin(items: list, k: int) -> list:
    if len(items) <= k:
        return items
    idx = np.unique(np.linspace(0, len(items) - 1, k).round().astype(int))
    return [items[i] for i in idx]


def default_candidates(channel, V1, V2, cid: str = "C", cfg: CandidateConfig | None = None) -> list:
    """Candidate (lower, upper) model pairs for one channel."""
    cfg = cfg or CandidateConfig()
    geom = mdl.geometry_for(channel, V1, V2)
    role = channel.role
    if role == "p2p":
        pt = cap.p2p_point(channel, cfg.tol)
        _, lo = mdl.lower_model(channel, pt, geom, cid)
        _, up = mdl.upper_model_p2p(channel, cfg.delta, geom, cid, cfg.tol)
        return [ModelPair(lo, up, cfg.delta)]
    if role == "gaussian_bc":
        return [mdl.gaussian_bc_models(channel, cfg.delta, geom, cid)]
    if role == "gaussian_mac":
        return [mdl.gaussian_mac_models(channel, cfg.delta, geom, cid, 2),
                mdl.gaussian_mac_models(channel, cfg.delta, geom, cid, 1)]
    if role == "bc":
        fam = mdl.upper_model_bc(channel, cfg.grid, cfg.delta, geom, cid)
        ups = [fam.member()[1], fam.member(max(fam.C12, fam.C2 + cfg.delta))[1]]
        pts = _thin(cap.degraded_bc_lower_points(channel, cfg.grid), cfg.max_lower)
        lows = [mdl.lower_model(channel, p, geom, cid)[1] for p in pts]
        return [ModelPair(L, U, cfg.delta) for L in lows for U in ups if _valid_pair(L, U)]
    if role == "mac":
        solver = mdl.MACUpperSolver(channel, cfg.grid, cfg.search or mdl.SearchConfig())
        r1s = cfg.mac_R1 if cfg.mac_R1 is not None else (0.0, math.log2(channel.input_sizes[0]))
        ups = [mdl.upper_model_mac(channel, r, delta=cfg.delta, geom=geom, channel_id=cid, solver=solver)[1]
               for r in r1s]
        pts = _thin(cap.mac_lower_points(channel, input_grids=cfg.grid), cfg.max_lower)
        lows = [mdl.lower_model(channel, p, geom, cid)[1] for p in pts]
        pairs = [ModelPair(L, U, cfg.delta) for L in lows for U in ups if _valid_pair(L, U)]
        # merge-routed lower models matching each upper model's topology
        for U in ups:
            d = U.rates.get(mdl.EdgeKey([geom.V1[0]], geom.V2))
            for p in pts:
                R1, R2 = p.rates["R1"], p.rates["R2"]
                L = mdl.matched_lower_mac(geom, R1, R2, min(d, R1), cid)
                if _valid_pair(L, U):
                    pairs.append(ModelPair(L, U, cfg.delta))
        return pairs
    raise MissingCandidatesError(f"no candidate models are implemented for role {role}")


def _valid_pair(L, U) -> bool:
    try:
        ModelPair(L, U, 1.0)
    except mdl.ModelError:
        return False
    return True


MAX_CHOICE_ENUM = 4096


def best_over_choices(choices: dict, objective, maximize: bool = True, cap: int = MAX_CHOICE_ENUM):
    """Optimize ``objective`` over one option per key.

    Exhaustive when the product of option counts is at most ``cap``,
    otherwise coordinate ascent from the first option of every key.
    Returns (value, assignment, exhaustive).
    """
    keys = list(choices)
    sizes = [len(choices[k]) for k in keys]
    if any(s == 0 for s in sizes):
        raise MissingCandidatesError("every component needs at least one option")
    sign = 1.0 if maximize else -1.0
    pick = lambda idx: {k: choices[k][i] for k, i in zip(keys, idx)}
    if math.prod(sizes) <= cap:
        best = None
        for idx in itertools.product(*map(range, sizes)):
            a = pick(idx)
            v = objective(a)
            if best is None or sign * v > sign * best[0]:
                best = (v, a)
        return best[0], best[1], True
    idx = [0] * len(keys)
    cur = objective(pick(idx))
    improved = True
    while improved:
        improved = False
        for n in range(len(keys)):
            for i in range(sizes[n]):
                if i == idx[n]:
                    continue
                trial = idx[:n] + [i] + idx[n + 1:]
                v = objective(pick(trial))
                if sign * v > sign * cur:
                    cur, idx, improved = v, trial, True
    return cur, pick(idx), False


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def _num(x):
    return mdl._check_rate(x)


def network_from_dict(d: dict, base_dir: str = ".") -> Network:
    try:
        m = int(d["nodes"])
    except (KeyError, TypeError, ValueError):
        raise NetworkError("network file needs an integer 'nodes' field")
    comps = []
    for n, c in enumerate(d.get("components", [])):
        cid = str(c.get("id", f"c{n + 1}"))
        if "bitpipe" in c:
            b = c["bitpipe"]
            comps.append(pipe(cid, int(b["from"]), int(b["to"]), _num(b["cap"])))
        elif "ref" in c:
            ref = c["ref"]
            if isinstance(ref, str):
                ref = os.path.join(base_dir, ref)
            ch = load_channel(ref)
            comps.append(noisy(cid, ch, [int(x) for x in c["V1"]], [int(x) for x in c["V2"]]))
        elif "model" in c:
            md = dict(c["model"])
            md.setdefault("V1", c.get("V1"))
            md.setdefault("V2", c.get("V2"))
            comps.append(model_component(cid, mdl.model_from_dict(md)))
        else:
            raise NetworkError(f"component {n} has no 'ref', 'bitpipe' or 'model' entry")
    dems = []
    for x in d.get("demands", []):
        kind = x.get("type")
        rate = x.get("rate")
        rate = None if rate is None else _num(rate)
        if kind == "unicast":
            dems.append(unicast(int(x["from"]), int(x["to"]), rate))
        elif kind == "multicast":
            dems.append(multicast(int(x["source"]), [int(s) for s in x["sinks"]], rate))
        else:
            raise NetworkError(f"unknown demand type {kind!r}")
    return Network(m, tuple(comps), tuple(dems))


def load_network(path: str) -> Network:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise NetworkError(f"{path}: invalid JSON ({e})")
    return network_from_dict(d, os.path.dirname(os.path.abspath(path)))


def network_to_dict(net: Network) -> dict:
    comps = []
    for c in net.components:
        if c.kind == "pipe":
            comps.append({"id": c.cid, "bitpipe": {"from": c.V1[0], "to": c.V2[0], "cap": mdl.rate_to_json(c.cap)}})
        elif c.kind == "noisy":
            comps.append({"id": c.cid, "ref": channel_to_dict(c.channel), "V1": list(c.V1), "V2": list(c.V2)})
        else:
            comps.append({"id": c.cid, "model": c.model.to_dict(), "V1": list(c.V1), "V2": list(c.V2)})
    return {"nodes": net.m, "components": comps, "demands": [d.to_dict() for d in net.demands]}
