"""Pointwise certification of the concavity structure condition.

A jet is lifted to ``(A, s, theta)`` with ``s^2 A = Hess u`` and
``s theta = grad u``; ``Ft(A, s) = F(s^2 A, s theta, u, t)``.  The Hessian of
``Ft`` in the coordinates (diagonal of A, upper off-diagonals of A, s) is
assembled by central differences and its top eigenvalue is the margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ArgError, CriticalPointError, NumericsError
from .geometry import DEFAULT_GRADIENT_FLOOR
from .jets import Jet2, fd_jets
from .operators import OperatorSpec, ellipticity_lambda, eval_operator_at
from .stencil import stencil_for

DEFAULT_SAMPLING = 32
N_DIRECTIONS = 64
MAX_VIOLATIONS = 20


@dataclass(frozen=True)
class StructState:
    A: np.ndarray
    s: float
    theta: np.ndarray
    u: float
    t: float

    @property
    def dim(self) -> int:
        return self.theta.size

    def reconstruct(self) -> tuple[np.ndarray, np.ndarray]:
        return self.s**2 * self.A, self.s * self.theta


def lift_state(jet: Jet2, u: float | None = None, t: float | None = None,
               floor: float = DEFAULT_GRADIENT_FLOOR) -> StructState:
    g = np.asarray(jet.gradient, dtype=float)
    s = float(np.linalg.norm(g))
    if not s > floor:
        raise CriticalPointError(f"|grad u| = {s:.3g} below floor {floor:.3g}")
    uu = jet.value if u is None else u
    tt = jet.time if t is None else t
    return StructState(np.asarray(jet.hessian, dtype=float) / s**2, s, g / s, float(uu), float(tt))


def coord_pairs(n: int) -> list[tuple[int, int]]:
    """Matrix entries behind the A coordinates: diagonals first, then upper off-diagonals."""
    return [(a, a) for a in range(n)] + [(a, b) for a in range(n) for b in range(a + 1, n)]


def to_coords(x: np.ndarray, y: float) -> np.ndarray:
    n = x.shape[0]
    return np.array([x[a, b] for a, b in coord_pairs(n)] + [y])


def from_coords(v: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    x = np.zeros((n, n))
    for k, (a, b) in enumerate(coord_pairs(n)):
        x[a, b] = x[b, a] = v[k]
    return x, float(v[-1])


def ftilde(spec: OperatorSpec, state: StructState, A: np.ndarray | None = None, s: float | None = None) -> float:
    A = state.A if A is None else A
    s = state.s if s is None else s
    return spec.value(s**2 * A, s * state.theta, state.u, state.t)


def default_step(state: StructState) -> float:
    return 1e-4 * (1.0 + float(np.linalg.norm(state.A)) + state.s)


def ftilde_hessian(spec: OperatorSpec, state: StructState, step: float | None = None) -> np.ndarray:
    """Central-difference Hessian of Ft in (A coordinates, s)."""
    n = state.dim
    d = step if step is not None else default_step(state)
    base = to_coords(state.A, state.s)
    k = base.size

    def f(v):
        a, s = from_coords(v, n)
        val = ftilde(spec, state, a, s)
        if not np.isfinite(val):
            raise NumericsError("non-finite F evaluation in concavity check")
        return val

    f0 = f(base)
    eye = np.eye(k) * d
    hess = np.empty((k, k))
    for i in range(k):
        hess[i, i] = (f(base + eye[i]) - 2.0 * f0 + f(base - eye[i])) / d**2
        for j in range(i + 1, k):
            val = (f(base + eye[i] + eye[j]) - f(base + eye[i] - eye[j])
                   - f(base - eye[i] + eye[j]) + f(base - eye[i] - eye[j])) / (4.0 * d**2)
            hess[i, j] = hess[j, i] = val
    return hess


def closed_form_hessian(spec: OperatorSpec, state: StructState) -> np.ndarray:
    """Exact Ft Hessian for the catalog (F linear in r, quadratic in p)."""
    n = state.dim
    m = spec.coefficients(n)
    pairs = coord_pairs(n)
    k = len(pairs) + 1
    hess = np.zeros((k, k))
    for i, (a, b) in enumerate(pairs):
        val = 2.0 * state.s * m[a, a] if a == b else 4.0 * state.s * m[a, b]
        hess[i, -1] = hess[-1, i] = val
    hess[-1, -1] = 2.0 * float(np.sum(m * state.A)) + 2.0 * spec.beta * float(state.theta @ state.theta)
    return hess


def concavity_tolerance(hess: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.abs(hess).max()))


def ftilde_concavity(spec: OperatorSpec, state: StructState, step: float | None = None) -> float:
    """Top eigenvalue of the Ft Hessian; at most the tolerance means locally concave."""
    return float(np.linalg.eigvalsh(ftilde_hessian(spec, state, step))[-1])


def q_form(spec: OperatorSpec, state: StructState, Xtilde, Ytilde: float) -> float:
    xt = np.asarray(Xtilde, dtype=float)
    n = state.dim
    if xt.shape != (n, n):
        raise ArgError(f"Xtilde must be {n}x{n}")
    if np.abs(xt - xt.T).max() > 1e-12 * max(1.0, np.abs(xt).max()):
        raise ArgError("Xtilde must be symmetric")
    s, A, th = state.s, state.A, state.theta
    X = s**2 * xt + 2.0 * s * A * Ytilde
    Y = float(Ytilde)
    ev = eval_operator_at(spec, s**2 * A, s * th, state.u, state.t)
    return float(
        np.einsum("abcd,ab,cd->", ev.d2F_drdr, X, X)
        + 2.0 * np.einsum("abl,l,ab->", ev.d2F_drdp, th, X) * Y
        + th @ ev.d2F_dpdp @ th * Y**2
        + 4.0 / s * np.sum(ev.dF_dr * X) * Y
        - 6.0 * np.sum(ev.dF_dr * A) * Y**2
    )


def path_second_difference(spec: OperatorSpec, state: StructState, Xtilde, Ytilde: float,
                           step: float = 1e-3) -> float:
    """Three-point second difference of ``tau -> Ft(A + tau Xt, s + tau Yt)`` at 0."""
    xt = np.asarray(Xtilde, dtype=float)
    f = [ftilde(spec, state, state.A + k * step * xt, state.s + k * step * Ytilde) for k in (-1, 0, 1)]
    return (f[0] - 2.0 * f[1] + f[2]) / step**2


def unit_directions(k: int, count: int = N_DIRECTIONS) -> np.ndarray:
    """Deterministic quasi-random unit vectors in R^k (Halton mapped through a Gaussian)."""
    from scipy.stats import norm

    pts = qmc.Halton(d=k, scramble=False).random(count + 1)[1:]
    z = norm.ppf(pts)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def q_matrix(spec: OperatorSpec, state: StructState) -> np.ndarray:
    """Q assembled by polarization over the coordinate basis."""
    n = state.dim
    k = len(coord_pairs(n)) + 1
    eye = np.eye(k)

    def q(v):
        x, y = from_coords(v, n)
        return q_form(spec, state, x, y)

    out = np.empty((k, k))
    for i in range(k):
        out[i, i] = q(eye[i])
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = 0.25 * (q(eye[i] + eye[j]) - q(eye[i] - eye[j]))
    return out


def q_sampled_max(spec: OperatorSpec, state: StructState, dirs: np.ndarray | None = None) -> float:
    n = state.dim
    if dirs is None:
        dirs = unit_directions(len(coord_pairs(n)) + 1)
    best = -np.inf
    for v in dirs:
        x, y = from_coords(v, n)
        best = max(best, q_form(spec, state, x, y))
    return float(best)


@dataclass
class StateResult:
    location: np.ndarray
    time: float
    margin: float
    tolerance: float
    q_max: float
    q_top: float
    lam: float


@dataclass
class ConcavityReport:
    states: list[StateResult] = field(default_factory=list)
    worst_hessian_margin: float = -np.inf
    worst_q: float = -np.inf
    lambda_min: float = np.inf
    violation_count: int = 0
    violations: list[dict] = field(default_factory=list)
    rayleigh_ok: bool = True

    @property
    def concave_everywhere(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        return {
            "n_states": len(self.states),
            "worst_hessian_margin": self.worst_hessian_margin,
            "worst_q": self.worst_q,
            "lambda_min": self.lambda_min,
            "violation_count": self.violation_count,
            "violations": self.violations,
            "rayleigh_consistent": self.rayleigh_ok,
        }


def analyze_state(spec: OperatorSpec, state: StructState, location, dirs: np.ndarray) -> StateResult:
    hess = ftilde_hessian(spec, state)
    margin = float(np.linalg.eigvalsh(hess)[-1])
    qmax = q_sampled_max(spec, state, dirs)
    qtop = float(np.linalg.eigvalsh(q_matrix(spec, state))[-1])
    r, p = state.reconstruct()
    lam = float(np.linalg.eigvalsh(eval_operator_at(spec, r, p, state.u, state.t).dF_dr)[0])
    return StateResult(np.asarray(location, dtype=float), state.t, margin, concavity_tolerance(hess), qmax, qtop, lam)


def sample_nodes(eligible: np.ndarray, sampling: int) -> np.ndarray:
    """Deterministic quasi-random subset of eligible indices (van der Corput order)."""
    if eligible.size <= sampling:
        return eligible
    u = qmc.Halton(d=1, scramble=False).random(4 * sampling + 1)[1:, 0]
    picks = np.unique(np.floor(u * eligible.size).astype(int))[:sampling]
    return eligible[np.sort(picks)]


def concavity_scan(spec: OperatorSpec, snapshots, sampling: int = DEFAULT_SAMPLING,
                   gradient_floor: float = DEFAULT_GRADIENT_FLOOR, corner_exclusion: float = 3.0,
                   fraction_floor: float = 0.5) -> ConcavityReport:
    """Concavity margins and Q maxima at sampled solution states."""
    from .levelsets import gradient_floor_for

    snaps = list(snapshots)
    if not snaps:
        raise ArgError("concavity scan needs at least one snapshot")
    report = ConcavityReport()
    dirs = None
    jets = []
    for snap in snaps:
        fld = getattr(snap, "field", snap)
        st = stencil_for(fld.mask)
        nodes, values, grads, hess = fd_jets(fld)
        pts = fld.grid.node_points()[nodes]
        ok = st.min_fraction() >= fraction_floor
        ok &= np.linalg.norm(grads, axis=1) > gradient_floor_for(fld, gradient_floor)
        corners = fld.mask.ring.corners
        if len(corners):
            d = np.linalg.norm(pts[:, None, :] - corners[None], axis=2).min(axis=1)
            ok &= d >= corner_exclusion * fld.grid.h
        for k in sample_nodes(np.flatnonzero(ok), sampling):
            jet = Jet2(float(values[k]), grads[k], hess[k], pts[k], fld.time)
            jets.append(jet)
            state = lift_state(jet, floor=0.0)
            if dirs is None:
                dirs = unit_directions(len(coord_pairs(state.dim)) + 1)
            res = analyze_state(spec, state, pts[k], dirs)
            report.states.append(res)
    if not report.states:
        raise ArgError("no eligible states in the snapshots")
    report.worst_hessian_margin = max(r.margin for r in report.states)
    report.worst_q = max(r.q_max for r in report.states)
    report.lambda_min = ellipticity_lambda(spec, jets)
    bad = [r for r in report.states if r.margin > r.tolerance]
    report.violation_count = len(bad)
    bad.sort(key=lambda r: -r.margin)
    report.violations = [
        {"location": [float(x) for x in r.location], "time": r.time, "margin": r.margin}
        for r in bad[:MAX_VIOLATIONS]
    ]
    report.rayleigh_ok = all(
        r.q_max <= r.q_top + 1e-6 * (1.0 + abs(r.q_top))
        and (r.margin > 0 or r.q_max <= r.margin + 1e-6)
        for r in report.states
    )
    return report


__all__ = [
    "StructState", "ConcavityReport", "lift_state", "q_form", "ftilde_concavity", "ftilde_hessian",
    "closed_form_hessian", "concavity_scan", "path_second_difference", "q_matrix", "ellipticity_lambda",
]
