"""Elementary symmetric polynomials and the rank test function.

For a Weingarten spectrum and a candidate rank ``l`` the test function is
``phi = sigma_{l+1} + sigma_{l+2} / sigma_{l+1}`` (second term dropped when
``sigma_{l+1} <= 0``).  It vanishes exactly when at most ``l`` eigenvalues of
a positive semidefinite spectrum are nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ArgError

DEFAULT_RANK_TOL = 1e-6


def _values(values) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def sigma_all(values) -> np.ndarray:
    """``[sigma_0, ..., sigma_m]`` by the one-pass product recurrence."""
    v = _values(values)
    e = np.zeros(v.size + 1)
    e[0] = 1.0
    for k, x in enumerate(v, start=1):
        e[1 : k + 1] = e[1 : k + 1] + x * e[:k]
    return e


def sigma(k: int, values) -> float:
    v = _values(values)
    if not 0 <= k <= v.size:
        raise ArgError(f"sigma order {k} outside [0, {v.size}]")
    return float(sigma_all(v)[k])


def sigma_deleted(k: int, values, j: int) -> float:
    """sigma_k of ``values`` with entry ``j`` (0-based) removed."""
    v = _values(values)
    if not 0 <= j < v.size:
        raise ArgError(f"index {j} out of range for {v.size} values")
    if not 0 <= k <= v.size - 1:
        raise ArgError(f"sigma order {k} outside [0, {v.size - 1}]")
    return float(sigma_all(np.delete(v, j))[k])


class PhiValue(NamedTuple):
    p: float
    q: float
    phi: float


def phi(spectrum, l: int) -> PhiValue:
    v = _values(spectrum)
    if not 0 <= l <= v.size - 1:
        raise ArgError(f"candidate rank {l} outside [0, {v.size - 1}]")
    e = sigma_all(v)
    p = float(e[l + 1])
    nxt = float(e[l + 2]) if l + 2 <= v.size else 0.0
    q = nxt / p if p > 0 else 0.0
    return PhiValue(p, q, p + q)


def phi_eps(spectrum, l: int, eps: float) -> PhiValue:
    """phi of the shifted spectrum ``spectrum + eps``."""
    if eps < 0:
        raise ArgError("eps must be nonnegative")
    return phi(_values(spectrum) + eps, l)


def default_eps(spectrum) -> float:
    v = _values(spectrum)
    return 1e-10 * (1.0 + (float(v.max()) if v.size else 0.0))


@dataclass(frozen=True)
class RankSplit:
    """Good / bad eigenvalue split of a descending spectrum (0-based indices)."""

    l: int
    good: tuple[int, ...]
    bad: tuple[int, ...]
    threshold: float
    tolerance: float
    epsilon: float = 0.0


def rank_split(spectrum, tol: float = DEFAULT_RANK_TOL, eps: float = 0.0) -> RankSplit:
    if not tol > 0:
        raise ArgError("rank tolerance must be positive")
    v = np.sort(_values(spectrum))[::-1]
    lam = float(v[0]) if v.size else 0.0
    thr = tol * max(1.0, lam)
    l = int(np.count_nonzero(v > thr))
    return RankSplit(l, tuple(range(l)), tuple(range(l, v.size)), thr, tol, eps)


def rank_counts(curvatures: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Vectorized rank of many spectra, shape (N, m) -> (N,)."""
    c = np.asarray(curvatures, dtype=float)
    thr = tol * np.maximum(1.0, c.max(axis=1))
    return np.count_nonzero(c > thr[:, None], axis=1)
