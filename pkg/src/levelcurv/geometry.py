"""Differential geometry of spatial level sets.

The Weingarten tensor is computed in the adapted frame: a Householder
reflection ``Q`` sends the gradient to ``|grad u| e_n``, and on the leading
``(n-1)`` block of ``Q^T H Q`` the tensor is ``-H'_{ij} / u_n``.  A second,
frame-free route (spectrum of the projected Hessian ``-P H P / |grad u|``)
cross-checks every evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgError, CriticalPointError, GeometryError
from .jets import Jet2

DEFAULT_GRADIENT_FLOOR = 1e-8
CROSS_CHECK_TOL = 1e-8


def inner_normal(jet: Jet2, floor: float = DEFAULT_GRADIENT_FLOOR) -> np.ndarray:
    """Unit gradient; points into the superlevel set ``{u >= c}``."""
    g = np.asarray(jet.gradient, dtype=float)
    norm = float(np.linalg.norm(g))
    if not norm > floor:
        raise CriticalPointError(f"|grad u| = {norm:.3g} below floor {floor:.3g}")
    return g / norm


def householder_frames(grads: np.ndarray) -> np.ndarray:
    """Reflections Q (N, n, n) with ``Q^T g = |g| e_n``; Q = I when g is along +e_n."""
    g = np.atleast_2d(np.asarray(grads, dtype=float))
    n = g.shape[1]
    norm = np.linalg.norm(g, axis=1)
    v = g.copy()
    tang = np.sum(g[:, :-1] ** 2, axis=1)
    pos = g[:, -1] > 0
    # cancellation-free v_n = g_n - |g| for g_n > 0
    v[:, -1] = np.where(pos, -tang / np.where(pos, g[:, -1] + norm, 1.0), g[:, -1] - norm)
    vv = np.sum(v * v, axis=1)
    eye = np.broadcast_to(np.eye(n), (len(g), n, n))
    small = vv <= (1e-300 + 1e-32 * norm**2)
    scale = np.where(small, 0.0, 2.0 / np.where(small, 1.0, vv))
    return eye - scale[:, None, None] * v[:, :, None] * v[:, None, :]


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 64) -> np.ndarray:
    """Cyclic Jacobi eigenvalues of a small symmetric matrix, ascending."""
    m = np.array(a, dtype=float)
    n = m.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off <= tol * max(np.abs(np.diag(m)).max(), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if m[p, q] == 0.0:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * m[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
    return np.sort(np.diag(m))


def principal_curvatures(a, sym_tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of a symmetric Weingarten matrix, ascending."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    scale = max(1.0, float(np.abs(a).max()))
    if a.shape[0] != a.shape[1] or np.abs(a - a.T).max() > sym_tol * scale:
        raise ArgError("Weingarten matrix is not symmetric")
    m = a.shape[0]
    if m == 1:
        return a[0].copy()
    if m == 2:
        mean = 0.5 * (a[0, 0] + a[1, 1])
        rad = np.hypot(0.5 * (a[0, 0] - a[1, 1]), 0.5 * (a[0, 1] + a[1, 0]))
        return np.array([mean - rad, mean + rad])
    return jacobi_eigenvalues(0.5 * (a + a.T))


def batch_curvatures(a: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of stacked (N, m, m) symmetric matrices."""
    m = a.shape[-1]
    if m == 1:
        return a[:, 0, :].copy()
    if m == 2:
        mean = 0.5 * (a[:, 0, 0] + a[:, 1, 1])
        rad = np.hypot(0.5 * (a[:, 0, 0] - a[:, 1, 1]), a[:, 0, 1])
        return np.stack([mean - rad, mean + rad], axis=1)
    return np.linalg.eigvalsh(a)


@dataclass(frozen=True)
class WeingartenTensor:
    a: np.ndarray
    curvatures: np.ndarray

    @property
    def kappa_min(self) -> float:
        return float(self.curvatures[0])

    @classmethod
    def from_matrix(cls, a) -> "WeingartenTensor":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(a, principal_curvatures(a))


@dataclass(frozen=True)
class FrameJet:
    rotation: np.ndarray
    u_n: float
    rotated_gradient: np.ndarray
    rotated_hessian: np.ndarray
    jet: Jet2


def projected_curvatures(grads: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Frame-free route: tangential spectrum of ``-P H P / |g|`` (N, n-1), ascending."""
    norm = np.linalg.norm(grads, axis=1)
    nu = grads / norm[:, None]
    n = grads.shape[1]
    proj = np.eye(n) - nu[:, :, None] * nu[:, None, :]
    shape = -proj @ hess @ proj / norm[:, None, None]
    w, vecs = np.linalg.eigh(0.5 * (shape + np.swapaxes(shape, 1, 2)))
    align = np.abs(np.einsum("nk,nkj->nj", nu, vecs))
    drop = align.argmax(axis=1)
    keep = np.ones(w.shape, dtype=bool)
    keep[np.arange(len(w)), drop] = False
    return w[keep].reshape(len(w), n - 1)


def weingarten_batch(grads, hess, floor: float = DEFAULT_GRADIENT_FLOOR, check: bool = True):
    """Vectorized adapted-frame Weingarten tensors.

    Returns ``(valid, normals, a, curvatures)``; rows with ``|grad u| <= floor``
    are invalid and hold NaN.
    """
    g = np.atleast_2d(np.asarray(grads, dtype=float))
    hs = np.asarray(hess, dtype=float).reshape(len(g), g.shape[1], g.shape[1])
    n = g.shape[1]
    norm = np.linalg.norm(g, axis=1)
    valid = norm > floor
    normals = np.full_like(g, np.nan)
    a = np.full((len(g), n - 1, n - 1), np.nan)
    curv = np.full((len(g), n - 1), np.nan)
    if not valid.any():
        return valid, normals, a, curv
    gv, hv, nv = g[valid], hs[valid], norm[valid]
    q = householder_frames(gv)
    rot = np.swapaxes(q, 1, 2) @ hv @ q
    av = -rot[:, :-1, :-1] / nv[:, None, None]
    av = 0.5 * (av + np.swapaxes(av, 1, 2))
    cv = batch_curvatures(av)
    if check:
        other = projected_curvatures(gv, hv)
        scale = 1.0 + np.abs(cv).max(axis=1)
        err = np.abs(np.sort(other, axis=1) - cv).max(axis=1) / scale
        if np.any(err > CROSS_CHECK_TOL):
            raise GeometryError(f"frame and projected curvature disagree by {err.max():.3g}")
    normals[valid] = gv / nv[:, None]
    a[valid] = av
    curv[valid] = cv
    return valid, normals, a, curv


def frame_weingarten(jet: Jet2, floor: float = DEFAULT_GRADIENT_FLOOR) -> tuple[FrameJet, WeingartenTensor]:
    g = np.asarray(jet.gradient, dtype=float)
    norm = float(np.linalg.norm(g))
    if not norm > floor:
        raise CriticalPointError(f"|grad u| = {norm:.3g} below floor {floor:.3g}")
    _, _, a, curv = weingarten_batch(g[None], np.asarray(jet.hessian)[None], floor)
    q = householder_frames(g[None])[0]
    frame = FrameJet(q, norm, q.T @ g, q.T @ jet.hessian @ q, jet)
    return frame, WeingartenTensor(a[0], curv[0])


def fundamental_forms(frame: FrameJet) -> tuple[np.ndarray, np.ndarray]:
    """``(h, b)`` of the level surface in the adapted frame.

    ``h_ij = u_n^2 u_ij + u_nn u_i u_j - u_n u_j u_in - u_n u_i u_jn`` and
    ``b = -|u_n| h / (|grad u| u_n^3)``.
    """
    gr = frame.rotated_gradient
    hs = frame.rotated_hessian
    m = gr.size - 1
    u_n = gr[-1]
    ui = gr[:m]
    uin = hs[:m, -1]
    h = (
        u_n**2 * hs[:m, :m]
        + hs[-1, -1] * np.outer(ui, ui)
        - u_n * np.outer(uin, ui)
        - u_n * np.outer(ui, uin)
    )
    b = -abs(u_n) * h / (np.linalg.norm(gr) * u_n**3)
    return h, b


def tilde_weingarten(w: WeingartenTensor, eta0: float, A: float, u: float) -> WeingartenTensor:
    """Deformed tensor ``a - eta0 * exp(A u) * I``."""
    if eta0 < 0:
        raise ArgError("eta0 must be nonnegative")
    shift = eta0 * np.exp(A * u)
    m = w.a.shape[0]
    return WeingartenTensor(w.a - shift * np.eye(m), w.curvatures - shift)


def rotate_jet(jet: Jet2, rot: np.ndarray) -> Jet2:
    return Jet2(jet.value, rot @ jet.gradient, rot @ jet.hessian @ rot.T, rot @ jet.location, jet.time)
