"""Catalog of parabolic operators F(r, p, u, t) with closed-form derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgError

KINDS = ("HEAT", "LINEAR", "GRAD_AUGMENTED")


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """``LINEAR``: F = tr(M r).  ``GRAD_AUGMENTED``: F = tr(M r) + beta |p|^2.

    ``HEAT`` is LINEAR with M = I; its matrix is left unset and sized on use.
    """

    kind: str
    matrix: np.ndarray | None = None
    beta: float = 0.0
    description: str = field(default="")

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise ArgError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "beta", float(self.beta))
        if kind == "HEAT":
            if self.matrix is not None:
                raise ArgError("HEAT takes no matrix")
            if self.beta != 0.0:
                raise ArgError("HEAT takes no beta")
        else:
            if self.matrix is None:
                raise ArgError(f"{kind} needs a coefficient matrix")
            m = np.array(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
                raise ArgError("coefficient matrix must be 2x2 or 3x3")
            if not np.allclose(m, m.T, rtol=0, atol=1e-14 * max(1.0, np.abs(m).max())):
                raise ArgError("coefficient matrix must be symmetric")
            m = 0.5 * (m + m.T)
            if np.linalg.eigvalsh(m)[0] <= 0:
                raise ArgError("coefficient matrix must be positive definite")
            m.flags.writeable = False
            object.__setattr__(self, "matrix", m)
            if kind == "LINEAR" and self.beta != 0.0:
                raise ArgError("LINEAR takes no beta")
        if not self.description:
            object.__setattr__(self, "description", self._describe())

    @classmethod
    def heat(cls) -> "OperatorSpec":
        return cls("HEAT")

    @classmethod
    def linear(cls, matrix) -> "OperatorSpec":
        return cls("LINEAR", matrix)

    @classmethod
    def grad_augmented(cls, matrix, beta: float) -> "OperatorSpec":
        return cls("GRAD_AUGMENTED", matrix, beta)

    def _describe(self) -> str:
        if self.kind == "HEAT":
            return "F = tr(r)"
        if self.kind == "LINEAR":
            return "F = tr(M r)"
        return f"F = tr(M r) + {self.beta:g} |p|^2"

    def coefficients(self, dim: int) -> np.ndarray:
        if self.matrix is None:
            return np.eye(dim)
        if self.matrix.shape[0] != dim:
            raise ArgError(f"operator matrix is {self.matrix.shape[0]}D, field is {dim}D")
        return self.matrix

    @property
    def is_linear(self) -> bool:
        return self.kind != "GRAD_AUGMENTED"

    def value(self, r, p, u: float = 0.0, t: float = 0.0) -> float:
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        m = self.coefficients(r.shape[0])
        return float(np.sum(m * r) + self.beta * np.dot(p, p))

    def rate(self, grads: np.ndarray, hess: np.ndarray) -> np.ndarray:
        """F at many nodes: grads (N, n), hess (N, n, n)."""
        m = self.coefficients(grads.shape[1])
        out = np.einsum("ab,nab->n", m, hess)
        if self.beta:
            out = out + self.beta * np.sum(grads * grads, axis=1)
        return out

    def max_eigenvalue(self, dim: int) -> float:
        return float(np.linalg.eigvalsh(self.coefficients(dim))[-1])

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.matrix is not None:
            out["matrix"] = self.matrix.tolist()
        if self.kind == "GRAD_AUGMENTED":
            out["beta"] = self.beta
        return out


@dataclass(frozen=True)
class OperatorEval:
    F: float
    dF_dr: np.ndarray
    dF_dp: np.ndarray
    dF_du: float
    dF_dt: float
    d2F_drdr: np.ndarray  # (n, n, n, n)
    d2F_drdp: np.ndarray  # (n, n, n)
    d2F_dpdp: np.ndarray  # (n, n)


def eval_operator_at(spec: OperatorSpec, r, p, u: float = 0.0, t: float = 0.0) -> OperatorEval:
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    n = p.size
    m = spec.coefficients(n)
    return OperatorEval(
        F=spec.value(r, p, u, t),
        dF_dr=m.copy(),
        dF_dp=2.0 * spec.beta * p,
        dF_du=0.0,
        dF_dt=0.0,
        d2F_drdr=np.zeros((n, n, n, n)),
        d2F_drdp=np.zeros((n, n, n)),
        d2F_dpdp=2.0 * spec.beta * np.eye(n),
    )


def eval_operator(spec: OperatorSpec, jet, t: float | None = None) -> OperatorEval:
    """All catalog derivatives at the jet's (Hessian, gradient, value)."""
    if not isinstance(spec, OperatorSpec):
        raise ArgError("unknown operator")
    tt = jet.time if t is None else t
    return eval_operator_at(spec, jet.hessian, jet.gradient, jet.value, tt)


def ellipticity_lambda(spec: OperatorSpec, states) -> float:
    """Smallest eigenvalue of dF/dr over the sampled states."""
    states = list(states)
    if not states:
        raise ArgError("ellipticity needs at least one state")
    return min(float(np.linalg.eigvalsh(eval_operator(spec, s).dF_dr)[0]) for s in states)
