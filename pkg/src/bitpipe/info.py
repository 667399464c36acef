"""Finite distributions, channel containers and information measures.

All quantities are in bits.  Terms with probability below ``ZERO_PROB`` are
dropped from entropy sums, so ``0 log 0 = 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

ZERO_PROB = 1e-15
SUM_TOL = 1e-12
PARSE_TOL = 1e-9

ROLES = ("p2p", "bc", "mac", "ic")
_ARITY = {"p2p": (1, 1), "bc": (1, 2), "mac": (2, 1), "ic": (2, 2)}


class ChannelFormatError(ValueError):
    """Raised when a channel description cannot be parsed or is invalid."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# raw-array helpers (used in hot loops by the other modules)
# ---------------------------------------------------------------------------

def entropy_array(p: np.ndarray, axis=None) -> np.ndarray | float:
    """Entropy of probability arrays; sums over ``axis`` (all axes if None)."""
    p = np.asarray(p, dtype=float)
    safe = np.where(p > ZERO_PROB, p, 1.0)
    terms = np.where(p > ZERO_PROB, -p * np.log2(safe), 0.0)
    return terms.sum(axis=axis)


def marginal_entropy(p: np.ndarray, keep: Sequence[int], nbatch: int = 0):
    """H of the marginal on event axes ``keep`` of a batched joint array.

    The first ``nbatch`` axes index independent distributions; ``keep`` counts
    event axes from zero (after the batch axes).
    """
    p = np.asarray(p, dtype=float)
    nev = p.ndim - nbatch
    keep = sorted(set(keep))
    drop = tuple(nbatch + a for a in range(nev) if a not in keep)
    m = p.sum(axis=drop) if drop else p
    ev_axes = tuple(range(nbatch, m.ndim))
    if not ev_axes:
        return np.zeros(m.shape) if nbatch else 0.0
    return entropy_array(m, axis=ev_axes)


def cmi_array(p: np.ndarray, a: Sequence[int], b: Sequence[int],
              c: Sequence[int] = (), nbatch: int = 0):
    """I(A;B|C) for a batched joint array, axes given as event-axis indices."""
    a, b, c = list(a), list(b), list(c)
    h_ac = marginal_entropy(p, a + c, nbatch)
    h_bc = marginal_entropy(p, b + c, nbatch)
    h_abc = marginal_entropy(p, a + b + c, nbatch)
    h_c = marginal_entropy(p, c, nbatch) if c else 0.0
    out = h_ac + h_bc - h_abc - h_c
    return np.maximum(out, 0.0)


def binary_entropy(p: float) -> float:
    """h(p) in bits."""
    return float(entropy_array(np.array([p, 1.0 - p])))


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pmf:
    labels: tuple
    probs: np.ndarray

    def __init__(self, probs, labels: Iterable | None = None):
        arr = np.array(probs, dtype=float).ravel()
        labs = tuple(range(len(arr))) if labels is None else tuple(labels)
        if len(labs) != len(arr):
            raise ValueError("label count does not match probability count")
        if len(set(labs)) != len(labs):
            raise ValueError("labels must be unique")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(arr.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "probs", _frozen(arr))

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class JointPmf:
    """Dense joint distribution over named axes (row-major in axis order)."""

    axes: tuple
    alphabets: tuple
    probs: np.ndarray

    def __init__(self, probs, axes: Sequence[str], alphabets: Sequence[Sequence] | None = None):
        arr = np.array(probs, dtype=float)
        axes = tuple(axes)
        if arr.ndim != len(axes):
            raise ValueError(f"tensor has {arr.ndim} dims but {len(axes)} axes named")
        if len(set(axes)) != len(axes):
            raise ValueError("axis names must be unique")
        if alphabets is None:
            alphabets = [tuple(range(n)) for n in arr.shape]
        alphabets = tuple(tuple(a) for a in alphabets)
        if tuple(len(a) for a in alphabets) != arr.shape:
            raise ValueError("alphabet sizes do not match tensor shape")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(arr.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "alphabets", alphabets)
        object.__setattr__(self, "probs", _frozen(arr))

    def axis_index(self, names) -> list[int]:
        if isinstance(names, str):
            names = [names]
        out = []
        for n in names:
            if n not in self.axes:
                raise KeyError(f"unknown axis {n!r}")
            out.append(self.axes.index(n))
        return out

    def marginal(self, names) -> "JointPmf":
        idx = self.axis_index(names)
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        m = self.probs.sum(axis=drop) if drop else self.probs
        kept = sorted(idx)
        m = np.moveaxis(m, list(range(len(kept))), [kept.index(i) for i in idx])
        return JointPmf(m, [self.axes[i] for i in idx], [self.alphabets[i] for i in idx])


def _axes_of(p, names) -> list[int]:
    if names is None:
        return []
    if isinstance(names, (str, int)):
        names = [names]
    if isinstance(p, Pmf):
        return [0 for _ in names]
    out = []
    for n in names:
        if isinstance(n, int) and n not in p.axes:
            out.append(n)
        else:
            out.append(p.axes.index(n))
    return out


def entropy(p: Pmf | JointPmf | np.ndarray) -> float:
    """Shannon entropy in bits of a Pmf, JointPmf or probability array."""
    arr = p.probs if isinstance(p, (Pmf, JointPmf)) else np.asarray(p, dtype=float)
    return float(entropy_array(arr))


def star(p: float, q: float) -> float:
    """Binary convolution p(1-q) + q(1-p)."""
    for v in (p, q):
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise ValueError(f"star operands must lie in [0, 1], got {v!r}")
    return p * (1.0 - q) + q * (1.0 - p)


def star_chain(*ps: float) -> float:
    out = 0.0
    for p in ps:
        out = star(out, p)
    return out


def _check_groups(*groups):
    seen: set = set()
    for g in groups:
        s = set(g)
        if seen & s:
            raise ValueError("axis groups must be disjoint")
        seen |= s


def mutual_information(joint: JointPmf, group_a, group_b) -> float:
    """I(A;B) in bits; axes outside both groups are marginalized out."""
    a, b = _axes_of(joint, group_a), _axes_of(joint, group_b)
    _check_groups(a, b)
    return float(cmi_array(joint.probs, a, b))


def conditional_mi(joint: JointPmf, group_a, group_b, given) -> float:
    """I(A;B|C) in bits."""
    a, b, c = _axes_of(joint, group_a), _axes_of(joint, group_b), _axes_of(joint, given)
    _check_groups(a, b, c)
    return float(cmi_array(joint.probs, a, b, c))


def conditional_entropy(joint: JointPmf, group_a, given) -> float:
    a, c = _axes_of(joint, group_a), _axes_of(joint, given)
    _check_groups(a, c)
    return float(marginal_entropy(joint.probs, a + c) - marginal_entropy(joint.probs, c))


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dmc:
    """Finite-alphabet memoryless channel p(y-tuple | x-tuple).

    ``transition`` has shape ``(*input sizes, *output sizes)``.
    """

    role: str
    input_alphabets: tuple
    output_alphabets: tuple
    transition: np.ndarray
    name: str = "channel"

    def __init__(self, role, input_alphabets, output_alphabets, transition, name="channel"):
        if role not in ROLES:
            raise ChannelFormatError(f"unknown role {role!r}")
        ins = tuple(tuple(a) for a in input_alphabets)
        outs = tuple(tuple(a) for a in output_alphabets)
        if (len(ins), len(outs)) != _ARITY[role]:
            raise ChannelFormatError(
                f"role {role} needs {_ARITY[role][0]} input and {_ARITY[role][1]} output alphabets")
        shape = tuple(len(a) for a in ins + outs)
        arr = np.array(transition, dtype=float)
        if arr.shape != shape:
            try:
                arr = arr.reshape(shape)
            except ValueError:
                raise ChannelFormatError(f"matrix shape {arr.shape} does not match alphabets {shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ChannelFormatError("transition probabilities must be finite and nonnegative")
        rows = arr.reshape(int(np.prod(shape[:len(ins)])), -1).sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > SUM_TOL)
        if bad.size:
            raise ChannelFormatError(f"row {int(bad[0])} sums to {rows[bad[0]]!r}, not 1")
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "input_alphabets", ins)
        object.__setattr__(self, "output_alphabets", outs)
        object.__setattr__(self, "transition", _frozen(arr))
        object.__setattr__(self, "name", name)

    @property
    def n_in(self) -> int:
        return len(self.input_alphabets)

    @property
    def input_sizes(self) -> tuple:
        return tuple(len(a) for a in self.input_alphabets)

    @property
    def output_sizes(self) -> tuple:
        return tuple(len(a) for a in self.output_alphabets)

    def matrix(self) -> np.ndarray:
        """Transition as a 2-D (input tuple) x (output tuple) matrix."""
        rows = int(np.prod(self.input_sizes))
        return self.transition.reshape(rows, -1)

    def joint(self, input_dist) -> JointPmf:
        """Joint over (inputs..., outputs...) for a distribution on input tuples."""
        px = np.asarray(input_dist.probs if isinstance(input_dist, (Pmf, JointPmf)) else input_dist,
                        dtype=float).reshape(self.input_sizes)
        k = self.n_in
        full = px.reshape(px.shape + (1,) * (self.transition.ndim - k)) * self.transition
        axes = [f"X{i + 1}" for i in range(k)] + [f"Y{j + 1}" for j in range(len(self.output_alphabets))]
        if k == 1:
            axes[0] = "X"
        if len(self.output_alphabets) == 1:
            axes[-1] = "Y"
        return JointPmf(full, axes, self.input_alphabets + self.output_alphabets)


@dataclass(frozen=True)
class GaussianBC:
    """Y1 = a1 X + Z1, Y2 = a2 X + Z2 with E X^2 <= P and corr(Z1, Z2) = rho."""

    P: float
    a1: float
    a2: float
    N1: float
    N2: float
    rho: float = 0.0
    name: str = "gaussian_bc"
    role = "gaussian_bc"

    def __post_init__(self):
        for k in ("P", "N1", "N2"):
            v = getattr(self, k)
            if not (v > 0) or not math.isfinite(v):
                raise ChannelFormatError(f"{k} must be positive, got {v!r}")
        if not (abs(self.rho) <= 1):
            raise ChannelFormatError(f"rho must lie in [-1, 1], got {self.rho!r}")
        if self.a1 == 0 or self.a2 == 0:
            raise ChannelFormatError("receiver gains must be nonzero")
        if self.n1 > self.n2:
            raise ChannelFormatError("receiver order requires N1/a1^2 <= N2/a2^2")

    @property
    def n1(self) -> float:
        return self.N1 / self.a1 ** 2

    @property
    def n2(self) -> float:
        return self.N2 / self.a2 ** 2


@dataclass(frozen=True)
class GaussianMAC:
    """Y = X1 + X2 + Z with powers P1 >= P2 and noise variance N."""

    P1: float
    P2: float
    N: float
    name: str = "gaussian_mac"
    role = "gaussian_mac"

    def __post_init__(self):
        if not (self.P1 > 0 and self.P2 > 0 and self.N > 0):
            raise ChannelFormatError("P1, P2 and N must be positive")
        if self.P1 < self.P2:
            raise ChannelFormatError("GaussianMAC requires P1 >= P2")


def gaussian_capacity(snr: float) -> float:
    return 0.5 * math.log2(1.0 + snr)


# ---------------------------------------------------------------------------
# stock channels
# ---------------------------------------------------------------------------

def bsc(p: float, name: str | None = None) -> Dmc:
    return Dmc("p2p", [(0, 1)], [(0, 1)], [[1 - p, p], [p, 1 - p]], name or f"bsc({p:g})")


def bec(eps: float, name: str | None = None) -> Dmc:
    return Dmc("p2p", [(0, 1)], [(0, "e", 1)],
               [[1 - eps, eps, 0.0], [0.0, eps, 1 - eps]], name or f"bec({eps:g})")


def noiseless(n: int = 2, name: str = "noiseless") -> Dmc:
    return Dmc("p2p", [tuple(range(n))], [tuple(range(n))], np.eye(n), name)


def bsc_broadcast(p1: float, p2: float, degraded: bool = False, name: str | None = None) -> Dmc:
    """Binary symmetric BC: Y1 = X + Z1 with E Z1 = p1 and E Z2 = p1 * p2.

    With ``degraded`` the second noise is Z1 + Z' (physically degraded);
    otherwise Z2 is independent of Z1.
    """
    q = star(p1, p2)
    t = np.zeros((2, 2, 2))
    for x, z1, z in product((0, 1), repeat=3):
        pz1 = p1 if z1 else 1 - p1
        if degraded:
            # z is the extra noise Z' with E Z' = p2, Z2 = Z1 + Z'
            pz = p2 if z else 1 - p2
            y2 = x ^ z1 ^ z
        else:
            pz = q if z else 1 - q
            y2 = x ^ z
        t[x, x ^ z1, y2] += pz1 * pz
    return Dmc("bc", [(0, 1)], [(0, 1), (0, 1)], t,
               name or f"bsbc({p1:g},{p2:g}{',deg' if degraded else ''})")


def binary_adder_mac(p: float, name: str | None = None) -> Dmc:
    """Y = X1 + X2 + Z (mod 2) with E Z = p."""
    t = np.zeros((2, 2, 2))
    for x1, x2 in product((0, 1), repeat=2):
        s = x1 ^ x2
        t[x1, x2, s] = 1 - p
        t[x1, x2, 1 - s] += p
    return Dmc("mac", [(0, 1), (0, 1)], [(0, 1)], t, name or f"adder({p:g})")


def binary_ic(p1: float, p2: float, cross: bool = False, name: str | None = None) -> Dmc:
    """2x2 binary IC with independent noise: Y1 = X1 + Z1, Y2 = X2 + Z2.

    With ``cross`` the second receiver sees X1 + X2 + Z2 instead.
    """
    t = np.zeros((2, 2, 2, 2))
    for x1, x2, z1, z2 in product((0, 1), repeat=4):
        w = (p1 if z1 else 1 - p1) * (p2 if z2 else 1 - p2)
        y2 = (x1 ^ x2 ^ z2) if cross else (x2 ^ z2)
        t[x1, x2, x1 ^ z1, y2] += w
    return Dmc("ic", [(0, 1), (0, 1)], [(0, 1), (0, 1)], t, name or f"bic({p1:g},{p2:g})")


# ---------------------------------------------------------------------------
# channel file format
# ---------------------------------------------------------------------------

def _reject_nan(obj, where="channel"):
    if isinstance(obj, float) and math.isnan(obj):
        raise ChannelFormatError(f"NaN is not allowed in {where}")
    if isinstance(obj, (list, tuple)):
        for o in obj:
            _reject_nan(o, where)
    if isinstance(obj, dict):
        for o in obj.values():
            _reject_nan(o, where)


def channel_from_dict(d: dict):
    _reject_nan(d)
    role = d.get("role")
    name = d.get("name", role or "channel")
    try:
        if role == "gaussian_bc":
            return GaussianBC(float(d["P"]), float(d.get("a1", 1.0)), float(d.get("a2", 1.0)),
                              float(d["N1"]), float(d["N2"]), float(d.get("rho", 0.0)), name)
        if role == "gaussian_mac":
            return GaussianMAC(float(d["P1"]), float(d["P2"]), float(d["N"]), name)
    except KeyError as e:
        raise ChannelFormatError(f"missing field {e.args[0]!r}")
    if role not in ROLES:
        raise ChannelFormatError(f"unknown role {role!r}")
    for k in ("inputs", "outputs", "matrix"):
        if k not in d:
            raise ChannelFormatError(f"missing field {k!r}")
    ins, outs = d["inputs"], d["outputs"]
    try:
        mat = np.array(d["matrix"], dtype=float)
    except (TypeError, ValueError):
        raise ChannelFormatError("matrix is ragged or non-numeric")
    n_rows = int(np.prod([len(a) for a in ins]))
    n_cols = int(np.prod([len(a) for a in outs]))
    if mat.size != n_rows * n_cols:
        raise ChannelFormatError(f"matrix has {mat.size} entries, expected {n_rows * n_cols}")
    rows = mat.reshape(n_rows, n_cols)
    sums = rows.sum(axis=1)
    for r, s in enumerate(sums):
        if abs(s - 1.0) > PARSE_TOL:
            raise ChannelFormatError(f"matrix row {r} sums to {s!r}, not 1")
    if np.any(rows < 0):
        r = int(np.flatnonzero((rows < 0).any(axis=1))[0])
        raise ChannelFormatError(f"matrix row {r} has a negative entry")
    # renormalize within the parse tolerance so the stricter container check holds
    off = np.abs(sums - 1.0) > SUM_TOL
    if off.any():
        rows = rows.copy()
        rows[off] /= sums[off, None]
    return Dmc(role, ins, outs, rows.reshape([len(a) for a in ins] + [len(a) for a in outs]), name)


def channel_to_dict(ch) -> dict:
    if isinstance(ch, GaussianBC):
        return {"name": ch.name, "role": "gaussian_bc", "P": ch.P, "a1": ch.a1, "a2": ch.a2,
                "N1": ch.N1, "N2": ch.N2, "rho": ch.rho}
    if isinstance(ch, GaussianMAC):
        return {"name": ch.name, "role": "gaussian_mac", "P1": ch.P1, "P2": ch.P2, "N": ch.N}
    return {"name": ch.name, "role": ch.role,
            "inputs": [list(a) for a in ch.input_alphabets],
            "outputs": [list(a) for a in ch.output_alphabets],
            "matrix": ch.transition.tolist()}


def load_channel(path_or_dict):
    if isinstance(path_or_dict, dict):
        return channel_from_dict(path_or_dict)
    try:
        with open(path_or_dict) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ChannelFormatError(f"{path_or_dict}: invalid JSON ({e})")
    return channel_from_dict(d)


def dump_channel(ch) -> str:
    return json.dumps(channel_to_dict(ch), indent=2)
