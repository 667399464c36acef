"""Monte-Carlo channel emulators built from random typical-set codes.

An emulator sees the channel input block x, picks a codeword jointly typical
with it from a random codebook, and outputs that codeword.  The rate of the
codebook decides whether such a codeword usually exists: above the mutual
information it does, below it the encoder mostly fails.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .info import Dmc, Pmf

DEFAULT_EPS = 0.01
THRESHOLD_SAMPLES = 10_000
DEFAULT_MEM_BUDGET = 10_000_000
STAT_TOL = 1e-12
MIN_TRIALS = 100

# stage tags for derived seeds
STAGE_CODEBOOK, STAGE_INPUT, STAGE_ENCODER, STAGE_THRESHOLD, STAGE_PRIVATE = range(5)


class BudgetError(ValueError):
    def __init__(self, required: float, budget: float):
        super().__init__(f"codebook needs {required:.6g} stored symbols, budget is {budget:.6g}; "
                         f"raise --mem-budget to at least {math.ceil(required)}")
        self.required = required
        self.budget = budget


def rng_for(*key: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a tuple of nonnegative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def codeword_count(N: int, R: float) -> int:
    if R <= 0:
        raise ValueError("codebook rate must be positive")
    # guard against 2**(N*R) landing a hair below an integer
    return max(1, int(math.floor(2.0 ** (N * R) * (1 + 1e-12))))


def _check_budget(count: float, N: int, budget: float):
    if count * N > budget:
        raise BudgetError(count * N, budget)


# ---------------------------------------------------------------------------
# typicality
# ---------------------------------------------------------------------------

def _log_table(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), -np.inf)


def _entropy(p: np.ndarray) -> float:
    q = p[p > 0]
    return float(-(q * np.log2(q)).sum())


def typicality_stat(block, dist) -> float:
    """|-(1/N) log p(block) - H| for an i.i.d. law ``dist``.

    ``block`` is (N,) for a one-axis law or (N, d) for a d-axis joint law.
    Symbols outside the support give +inf.
    """
    p = np.asarray(dist.probs if isinstance(dist, Pmf) else getattr(dist, "probs", dist), dtype=float)
    b = np.asarray(block, dtype=int)
    if b.ndim == 1:
        b = b[:, None]
    if b.shape[1] != p.ndim:
        raise ValueError("block width does not match the number of axes of the law")
    logp = _log_table(p)[tuple(b.T)]
    s = logp.sum()
    if s == -np.inf:
        return math.inf
    return abs(-s / len(b) - _entropy(p))


class _Groups:
    """Marginal log tables and entropies for axis subsets of a joint law."""

    def __init__(self, joint: np.ndarray, groups):
        self.groups = tuple(tuple(g) for g in groups)
        nd = joint.ndim
        self.tables, self.H = [], []
        for g in self.groups:
            drop = tuple(a for a in range(nd) if a not in g)
            m = joint.sum(axis=drop) if drop else joint
            self.tables.append(_log_table(m))
            self.H.append(_entropy(m))

    def stats(self, cols: dict, N: int) -> list:
        """Per-group statistics; ``cols`` maps axis -> index array (..., N)."""
        out = []
        for g, tab, h in zip(self.groups, self.tables, self.H):
            arrs = np.broadcast_arrays(*[cols[a] for a in g])
            s = tab[tuple(arrs)].sum(axis=-1)
            with np.errstate(invalid="ignore"):
                out.append(np.where(np.isfinite(s), np.abs(-s / N - h), np.inf))
        return out


@dataclass(frozen=True)
class TypicalityParams:
    N: int
    eps: float = DEFAULT_EPS
    eps2: float | None = None          # second-stage slack of the broadcast code
    a_estimates: dict = field(default_factory=dict)
    restriction_threshold: float = 3.0  # recorded only; inputs are not pre-filtered

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("block length must be at least 1")
        if not self.eps > 0 or (self.eps2 is not None and not self.eps2 > 0):
            raise ValueError("typicality slack must be positive")

    def threshold(self, group) -> float:
        return self.a_estimates[tuple(group)]


def quantile_level(N: int, eps: float) -> float:
    return 1.0 - 2.0 ** (-6 * N * eps)


@lru_cache(maxsize=256)
def _estimate(joint_bytes: bytes, shape: tuple, groups: tuple, N: int, eps: float,
              samples: int, seed: int) -> tuple:
    joint = np.frombuffer(joint_bytes).reshape(shape)
    rng = rng_for(seed, N, STAGE_THRESHOLD)
    flat = rng.choice(joint.size, size=(samples, N), p=joint.ravel() / joint.sum())
    idx = np.unravel_index(flat, shape)
    g = _Groups(joint, groups)
    stats = g.stats(dict(enumerate(idx)), N)
    level = quantile_level(N, eps)
    return tuple((1 + eps) * float(np.quantile(s, level, method="inverted_cdf")) for s in stats)


def estimate_thresholds(joint: np.ndarray, groups, N: int, eps: float,
                        samples: int = THRESHOLD_SAMPLES, seed: int = 0) -> dict:
    """(1+eps) times the 1 - 2^{-6 N eps} empirical quantile of each group statistic."""
    joint = np.ascontiguousarray(joint, dtype=float)
    groups = tuple(tuple(g) for g in groups)
    vals = _estimate(joint.tobytes(), joint.shape, groups, N, eps, samples, seed)
    return dict(zip(groups, vals))


def _p2p_groups():
    return ((0,), (1,), (0, 1))


def p2p_params(channel: Dmc, input_dist, N: int, eps: float = DEFAULT_EPS,
               samples: int = THRESHOLD_SAMPLES, seed: int = 0) -> TypicalityParams:
    joint = channel.joint(input_dist).probs
    a = estimate_thresholds(joint, ((1,), (0, 1)), N, eps, samples, seed)
    a[(0,)] = eps
    return TypicalityParams(N, eps, None, a)


# ---------------------------------------------------------------------------
# point-to-point emulator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmulatorCodebook:
    rate: float
    codeword_count: int
    codewords: np.ndarray   # (K, N), or (K0, K1, N) for private codebooks
    stage: str              # "single" | "bc_common" | "bc_private"
    seed: tuple
    joint: np.ndarray       # law the codewords are scored against

    @property
    def N(self) -> int:
        return self.codewords.shape[-1]


def _freeze(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _check_p2p(channel):
    if not isinstance(channel, Dmc) or channel.role != "p2p":
        raise ValueError("this emulator needs a point-to-point channel")


def build_p2p_emulator(channel: Dmc, input_dist, R: float, params: TypicalityParams, seed=0,
                       mem_budget: float = DEFAULT_MEM_BUDGET) -> EmulatorCodebook:
    """Codebook of floor(2^{NR}) blocks drawn i.i.d. from the output marginal."""
    _check_p2p(channel)
    N = params.N
    if R <= 0:
        raise ValueError("codebook rate must be positive")
    _check_budget(2.0 ** (N * R), N, mem_budget)
    K = codeword_count(N, R)
    joint = channel.joint(input_dist).probs
    py = joint.sum(axis=0)
    key = seed if isinstance(seed, tuple) else (seed, STAGE_CODEBOOK)
    cw = rng_for(*key).choice(len(py), size=(K, N), p=py / py.sum())
    return EmulatorCodebook(R, K, _freeze(cw), "single", key, _freeze(joint))


def emulate(codebook: EmulatorCodebook, x_block, params: TypicalityParams, seed=0):
    """Output block for input ``x_block`` plus diagnostics.

    A codeword is a match when f(x) <= eps, f(y) <= a and f(x, y) <= a.
    One match is picked uniformly; with none, codeword 0 is emitted.
    ``p_hat`` is the probability this encoder (for this codebook) assigns
    to the emitted block.
    """
    x = np.asarray(x_block, dtype=int)
    N = params.N
    if x.shape != (N,):
        raise ValueError(f"input block must have length {N}")
    g = _Groups(codebook.joint, _p2p_groups())
    fx, fy, fxy = g.stats({0: x[None, :], 1: codebook.codewords}, N)
    ok = ((fx <= params.threshold((0,)) + STAT_TOL)
          & (fy <= params.threshold((1,)) + STAT_TOL)
          & (fxy <= params.threshold((0, 1)) + STAT_TOL))
    matches = np.flatnonzero(ok)
    if len(matches) == 0:
        idx, success = 0, False
        p_hat = 1.0
    else:
        rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, STAGE_ENCODER)
        idx, success = int(matches[rng.integers(len(matches))]), True
        y = codebook.codewords[idx]
        same = (codebook.codewords[matches] == y).all(axis=1).sum()
        p_hat = same / len(matches)
    y = codebook.codewords[idx].copy()
    return y, {"success": success, "index": idx, "matches": int(len(matches)), "p_hat": float(p_hat),
               "f_x": float(fx[0] if np.ndim(fx) else fx), "f_y": float(fy[idx]), "f_xy": float(fxy[idx])}


# ---------------------------------------------------------------------------
# two-receiver broadcast emulator
# ---------------------------------------------------------------------------

BC_STAGE1 = ((0,), (2,), (0, 2))
BC_STAGE2 = ((1,), (0, 1), (1, 2), (0, 1, 2))


def bc_params(channel: Dmc, input_dist, N: int, eps1: float = DEFAULT_EPS, eps2: float = DEFAULT_EPS,
              samples: int = THRESHOLD_SAMPLES, seed: int = 0) -> TypicalityParams:
    joint = channel.joint(input_dist).probs
    a = estimate_thresholds(joint, BC_STAGE1[1:], N, eps1, samples, seed)
    a.update(estimate_thresholds(joint, BC_STAGE2, N, eps2, samples, seed))
    a[(0,)] = eps1
    return TypicalityParams(N, eps1, eps2, a)


def build_bc_emulator(channel: Dmc, input_dist, R0: float, R1: float, params: TypicalityParams,
                      seed=0, mem_budget: float = DEFAULT_MEM_BUDGET):
    """Common codebook i.i.d. p(y2); per common word a private codebook i.i.d. p(y1 | y2)."""
    if not isinstance(channel, Dmc) or channel.role != "bc":
        raise ValueError("this emulator needs a two-receiver broadcast channel")
    N = params.N
    if R0 <= 0 or R1 <= 0:
        raise ValueError("codebook rates must be positive")
    _check_budget(2.0 ** (N * R0) * 2.0 ** (N * R1), N, mem_budget)
    K0, K1 = codeword_count(N, R0), codeword_count(N, R1)
    joint = channel.joint(input_dist).probs
    p2 = joint.sum(axis=(0, 1))
    p12 = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p1_given_2 = np.where(p2 > 0, p12 / np.where(p2 > 0, p2, 1.0), 0.0)   # (ny1, ny2)
    base = seed if isinstance(seed, tuple) else (seed,)
    common = rng_for(*base, STAGE_CODEBOOK).choice(len(p2), size=(K0, N), p=p2 / p2.sum())
    # inverse-cdf draws so every private word follows p(y1 | its common symbol)
    u = rng_for(*base, STAGE_PRIVATE).random((K0, K1, N))
    cdf = np.cumsum(p1_given_2, axis=0)                 # (ny1, ny2)
    col = cdf[:, common]                                # (ny1, K0, N)
    private = (u[None] >= col[:, :, None, :]).sum(axis=0)
    private = np.minimum(private, p1_given_2.shape[0] - 1)
    cb0 = EmulatorCodebook(R0, K0, _freeze(common), "bc_common", base + (STAGE_CODEBOOK,), _freeze(joint))
    cb1 = EmulatorCodebook(R1, K1, _freeze(private), "bc_private", base + (STAGE_PRIVATE,), _freeze(joint))
    return cb0, cb1


def _matches(g: _Groups, cols, N, params, groups) -> np.ndarray:
    ok = True
    for grp, s in zip(groups, g.stats(cols, N)):
        ok = ok & (s <= params.threshold(grp) + STAT_TOL)
    return np.atleast_1d(ok)


def emulate_bc(common: EmulatorCodebook, private: EmulatorCodebook, x_block, params: TypicalityParams,
               seed=0):
    """Two-stage selection: common word against (X, Y2), then private word against (X, Y1, Y2)."""
    x = np.asarray(x_block, dtype=int)
    N = params.N
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, STAGE_ENCODER)
    g1 = _Groups(common.joint, BC_STAGE1)
    g2 = _Groups(common.joint, BC_STAGE2)
    ok0 = _matches(g1, {0: x[None, :], 2: common.codewords}, N, params, BC_STAGE1)
    ok0 = np.broadcast_to(ok0, (common.codeword_count,))
    S0 = np.flatnonzero(ok0)
    stage1 = len(S0) > 0
    cand0 = S0 if stage1 else np.array([0])
    w0 = int(cand0[rng.integers(len(cand0))])

    def stage2(w):
        ok = _matches(g2, {0: x[None, :], 1: private.codewords[w], 2: common.codewords[w][None, :]},
                      N, params, BC_STAGE2)
        ok = np.broadcast_to(ok, (private.codeword_count,))
        return np.flatnonzero(ok)

    S1 = stage2(w0)
    stage2_ok = len(S1) > 0
    cand1 = S1 if stage2_ok else np.array([0])
    w1 = int(cand1[rng.integers(len(cand1))])
    y2 = common.codewords[w0].copy()
    y1 = private.codewords[w0, w1].copy()
    # probability of emitting (y1, y2) under the randomized two-stage rule
    p_hat = 0.0
    for w in cand0:
        if not (common.codewords[w] == y2).all():
            continue
        s1 = stage2(w) if w != w0 else S1
        c1 = s1 if len(s1) else np.array([0])
        p_hat += (private.codewords[w, c1] == y1).all(axis=1).sum() / len(c1) / len(cand0)
    return (y1, y2), {"success": bool(stage1 and stage2_ok), "stage1": bool(stage1),
                      "stage2": bool(stage2_ok), "w0": w0, "w1": w1, "p_hat": float(p_hat)}


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def type_tv(pairs: np.ndarray, joint: np.ndarray) -> float:
    """Half the L1 distance between the empirical joint type and ``joint``."""
    counts = np.zeros(joint.shape)
    np.add.at(counts, tuple(pairs.T), 1.0)
    return 0.5 * float(np.abs(counts / len(pairs) - joint).sum())


def conditional_type_tv(pairs: np.ndarray, joint: np.ndarray) -> float:
    """Average over the empirical x-type of the TV between empirical and true p(y|x)."""
    counts = np.zeros(joint.shape)
    np.add.at(counts, tuple(pairs.T), 1.0)
    nx_ = counts.sum(axis=1)
    px = joint.sum(axis=1)
    tv = 0.0
    for x in np.flatnonzero(nx_):
        tv += nx_[x] / len(pairs) * 0.5 * np.abs(counts[x] / nx_[x] - joint[x] / px[x]).sum()
    return float(tv)


@dataclass(frozen=True)
class EmulationStats:
    R: float
    N: int
    trials: int
    failures: int
    encoder_failure_rate: float
    joint_type_tv: float           # mean over successful trials
    conditional_tv: float          # mean over successful trials
    log_ratio_exceed_rate: dict    # nu -> fraction of trials

    @property
    def stderr(self) -> float:
        f = self.encoder_failure_rate
        return math.sqrt(f * (1 - f) / self.trials)

    def row(self) -> dict:
        d = {"R": self.R, "N": self.N, "trials": self.trials, "failure_rate": self.encoder_failure_rate,
             "stderr": self.stderr, "tv": self.joint_type_tv, "conditional_tv": self.conditional_tv}
        for nu, v in self.log_ratio_exceed_rate.items():
            d[f"exceed_rate@{nu:g}"] = v
        return d


def _input_probs(channel: Dmc, input_dist) -> np.ndarray:
    p = np.asarray(getattr(input_dist, "probs", input_dist), dtype=float).ravel()
    if p.shape != (channel.input_sizes[0],):
        raise ValueError("input distribution has the wrong size")
    return p / p.sum()


def run_p2p(channel: Dmc, input_dist, R: float, N: int, trials: int, seed: int = 0,
            nus=(0.1,), eps: float = DEFAULT_EPS, mem_budget: float = DEFAULT_MEM_BUDGET,
            samples: int = THRESHOLD_SAMPLES) -> EmulationStats:
    """Independent trials, each with a fresh codebook, input block and tie-break stream."""
    _check_p2p(channel)
    px = _input_probs(channel, input_dist)
    params = p2p_params(channel, px, N, eps, samples, seed)
    _check_budget(2.0 ** (N * R), N, mem_budget)
    W = channel.matrix()
    joint = px[:, None] * W
    fails, tvs, ctvs = 0, [], []
    exceed = {nu: 0 for nu in nus}
    for t in range(trials):
        cb = build_p2p_emulator(channel, px, R, params, (seed, t, STAGE_CODEBOOK), mem_budget)
        x = rng_for(seed, t, STAGE_INPUT).choice(len(px), size=N, p=px)
        y, d = emulate(cb, x, params, rng_for(seed, t, STAGE_ENCODER))
        with np.errstate(divide="ignore"):
            lp = np.log2(W[x, y]).sum()
        ratio = (math.log2(d["p_hat"]) - lp) / N
        for nu in nus:
            exceed[nu] += int(ratio > nu)
        if d["success"]:
            pairs = np.stack([x, y], axis=1)
            tvs.append(type_tv(pairs, joint))
            ctvs.append(conditional_type_tv(pairs, joint))
        else:
            fails += 1
    mean = lambda v: float(np.mean(v)) if v else math.nan
    return EmulationStats(R, N, trials, fails, fails / trials, mean(tvs), mean(ctvs),
                          {nu: c / trials for nu, c in exceed.items()})


def threshold_experiment(channel: Dmc, input_dist, R_list, N_list, trials: int, seed: int = 0,
                         nus=(0.1,), eps: float = DEFAULT_EPS,
                         mem_budget: float = DEFAULT_MEM_BUDGET) -> list:
    """EmulationStats for every (R, N); trial seeds are shared across the sweep."""
    if trials < MIN_TRIALS:
        raise ValueError(f"at least {MIN_TRIALS} trials are required")
    for R in R_list:
        for N in N_list:
            _check_budget(2.0 ** (N * R), N, mem_budget)
    return [run_p2p(channel, input_dist, R, N, trials, seed, nus, eps, mem_budget)
            for R in R_list for N in N_list]


@dataclass(frozen=True)
class BCStats:
    R0: float
    R1: float
    N: int
    trials: int
    stage1_failure_rate: float
    failure_rate: float


def run_bc(channel: Dmc, input_dist, R0: float, R1: float, N: int, trials: int, seed: int = 0,
           eps1: float = DEFAULT_EPS, eps2: float = DEFAULT_EPS,
           mem_budget: float = DEFAULT_MEM_BUDGET) -> BCStats:
    px = _input_probs(channel, input_dist)
    params = bc_params(channel, px, N, eps1, eps2, seed=seed)
    f1 = f = 0
    for t in range(trials):
        cb0, cb1 = build_bc_emulator(channel, px, R0, R1, params, (seed, t), mem_budget)
        x = rng_for(seed, t, STAGE_INPUT).choice(len(px), size=N, p=px)
        _, d = emulate_bc(cb0, cb1, x, params, rng_for(seed, t, STAGE_ENCODER))
        f1 += not d["stage1"]
        f += not d["success"]
    return BCStats(R0, R1, N, trials, f1 / trials, f / trials)


def failure_slopes(table) -> dict:
    """Least-squares slope of log2(failure rate) against N, per R (zero rates skipped)."""
    out = {}
    for R in sorted({s.R for s in table}):
        pts = [(s.N, math.log2(s.encoder_failure_rate)) for s in table
               if s.R == R and s.encoder_failure_rate > 0]
        if len(pts) >= 2:
            n, v = np.array(pts).T
            out[R] = float(np.polyfit(n, v, 1)[0])
        else:
            out[R] = math.nan
    return out


def stats_csv(table) -> str:
    rows = [s.row() for s in table]
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()
