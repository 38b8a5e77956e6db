"""Bending energy, the Monge-Ampere constraint and the closed-form constant-curvature solutions.

Sign convention for the multiplier: a stationary ``v`` satisfies

    quad_inner(hess v, hess h) == quad_inner(lam * cof(hess v), hess h)   for all h,

whose strong form is ``bilaplacian(v) = cof(hess v) : hess(lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FeasibilityViolated, NonConstantK, SignMismatch
from .grid import (
    GridDomain,
    ScalarField,
    cofactor,
    det2,
    divdiv_adjoint,
    frobenius,
    hessian,
    integrate,
    tracefree,
)

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ConstraintData:
    """Nodal samples of the curvature datum ``k``."""

    k: ScalarField
    k_min: float = float("nan")
    constant: float | None = None

    def __post_init__(self):
        interior = self.k.interior
        object.__setattr__(self, "k_min", float(interior.min()))
        if self.constant is None and np.all(self.k.values == self.k.values.flat[0]):
            object.__setattr__(self, "constant", float(self.k.values.flat[0]))

    @property
    def domain(self) -> GridDomain:
        return self.k.domain

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    @property
    def mean(self) -> float:
        return float(np.mean(self.k.interior))

    @classmethod
    def constant_k(cls, domain: GridDomain, value: float) -> "ConstraintData":
        value = float(value)
        return cls(ScalarField(domain, np.full(domain.shape, value)), constant=value)

    @classmethod
    def polynomial(cls, domain: GridDomain, terms: Iterable[Sequence[float]]) -> "ConstraintData":
        """``k = sum(c * x1**p * x2**q for p, q, c in terms)`` sampled at the nodes."""
        X, Y = domain.coordinates()
        values = np.zeros(domain.shape)
        for p, q, c in terms:
            values += float(c) * X ** int(p) * Y ** int(q)
        return cls(ScalarField(domain, values))


def energy(v: ScalarField) -> float:
    H = hessian(v)
    return integrate(frobenius(H, H))


def energy_gradient(v: ScalarField) -> ScalarField:
    """Nodal gradient of :func:`energy`: ``2 * divdiv_adjoint(hessian(v))``."""
    return divdiv_adjoint(hessian(v)) * 2.0


def constraint(v: ScalarField, data: ConstraintData) -> ScalarField:
    """``det(hess v) - k`` on interior nodes."""
    g = det2(hessian(v)).values - data.k.values
    g[v.domain.boundary_mask()] = 0.0
    return ScalarField(v.domain, g)


def constraint_jacobian_apply(v: ScalarField, h: ScalarField) -> ScalarField:
    return frobenius(cofactor(hessian(v)), hessian(h))


def constraint_jacobian_transpose_apply(v: ScalarField, mu: ScalarField) -> ScalarField:
    """Adjoint of :func:`constraint_jacobian_apply` w.r.t. quadrature on ``mu`` and nodal sums on ``h``."""
    return divdiv_adjoint(cofactor(hessian(v)) * mu)


def _require_feasible(v: ScalarField, data: ConstraintData, tol: float) -> None:
    violation = constraint(v, data).max_abs(interior_only=True)
    if violation > tol:
        raise FeasibilityViolated(violation, tol)


def energy_identity_laplacian(v: ScalarField, data: ConstraintData, tol: float = FEASIBILITY_TOL) -> float:
    """Energy evaluated as ``integrate((lap v)**2 - 2k)``; valid on the constraint set."""
    _require_feasible(v, data, tol)
    H = hessian(v)
    trace = H.a11 + H.a22
    return integrate(ScalarField.from_interior(v.domain, trace**2 - 2.0 * data.k.interior))


def energy_identity_tracefree(v: ScalarField, data: ConstraintData, tol: float = FEASIBILITY_TOL) -> float:
    """Energy evaluated as ``2 * integrate(|hess v - (lap v / 2) I|**2 + k)``."""
    _require_feasible(v, data, tol)
    A0 = tracefree(hessian(v))
    return 2.0 * integrate(frobenius(A0, A0) + data.k)


def analytic_minimizer(data: ConstraintData | float, branch: str | None = None, domain: GridDomain | None = None) -> ScalarField:
    """Closed-form minimiser for constant ``k``.

    ``sqrt(k)/2 |x|^2`` on the elliptic branch (``k >= 0``) and
    ``sqrt(|k|)/2 (x1^2 - x2^2)`` on the hyperbolic branch (``k < 0``).
    ``branch`` defaults to the one matching the sign of ``k``.
    """
    if isinstance(data, ConstraintData):
        if not data.is_constant:
            raise NonConstantK("analytic minimiser needs constant k")
        k = data.constant
        domain = data.domain
    else:
        if domain is None:
            raise TypeError("domain is required when k is given as a number")
        k = float(data)
    if branch is None:
        branch = "elliptic" if k >= 0 else "hyperbolic"
    if branch not in ("elliptic", "hyperbolic"):
        raise ValueError(f"unknown branch {branch!r}")
    if (branch == "elliptic" and k < 0) or (branch == "hyperbolic" and k > 0):
        raise SignMismatch(f"branch {branch!r} is inconsistent with k = {k}")
    scale = 0.5 * math.sqrt(abs(k))
    if branch == "elliptic":
        return domain.sample(lambda x, y: scale * (x**2 + y**2))
    return domain.sample(lambda x, y: scale * (x**2 - y**2))


def affine_part(v: ScalarField) -> tuple[float, float, float]:
    """Coefficients ``(a, bx, by)`` of the affine map removed by :func:`normalize`.

    ``bx``, ``by`` are the means of the centred-difference gradients, ``a``
    makes the nodal mean vanish afterwards.  Affine fields are reproduced exactly.
    """
    dom = v.domain
    u = v.values
    bx = float(np.mean((u[2:, :] - u[:-2, :]) / (2.0 * dom.hx)))
    by = float(np.mean((u[:, 2:] - u[:, :-2]) / (2.0 * dom.hy)))
    X, Y = dom.coordinates()
    a = float(np.mean(u - bx * X - by * Y))
    return a, bx, by


def normalize(v: ScalarField) -> ScalarField:
    a, bx, by = affine_part(v)
    X, Y = v.domain.coordinates()
    return ScalarField(v.domain, v.values - a - bx * X - by * Y)
