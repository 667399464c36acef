"""Lattice grids over probability simplices."""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

DEFAULT_RES = 33
MAX_GRID_POINTS = 60_000


def lattice_size(k: int, res: int) -> int:
    """Number of points of the k-outcome simplex lattice with ``res`` points per edge."""
    return comb(res - 1 + k - 1, k - 1)


@lru_cache(maxsize=64)
def _lattice(k: int, res: int) -> np.ndarray:
    n = res - 1
    if k == 1:
        return np.ones((1, 1))
    rows = []

    def rec(prefix, left, depth):
        if depth == k - 1:
            rows.append(prefix + [left])
            return
        for c in range(left + 1):
            rec(prefix + [c], left - c, depth + 1)

    rec([], n, 0)
    out = np.array(rows, dtype=float) / n
    out.setflags(write=False)
    return out


def simplex_grid(k: int, res: int = DEFAULT_RES, max_points: int = MAX_GRID_POINTS) -> np.ndarray:
    """All pmfs on k outcomes whose entries are multiples of 1/(res-1).

    If the lattice exceeds ``max_points`` the resolution is lowered until it
    fits; the vertices are always included.
    """
    if k < 1:
        raise ValueError("simplex needs at least one outcome")
    if res < 2:
        raise ValueError("grid resolution must be at least 2")
    while res > 2 and lattice_size(k, res) > max_points:
        res -= 1
    return _lattice(k, res)


def refined(res: int) -> int:
    """Resolution with every grid step halved."""
    return 2 * res - 1


def product_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Outer products of every row of ``a`` with every row of ``b``, flattened."""
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(len(a) * len(b), a.shape[1] * b.shape[1])
