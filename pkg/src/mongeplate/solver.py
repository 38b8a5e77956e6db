"""Constrained minimisation of the bending energy on ``{det hess v = k}``, convex branch.

The iteration keeps every accepted iterate feasible:

1. linearise the constraint at ``v`` and build a basis of its kernel,
   parametrised by the boundary values (the interior block of the
   linearised operator is an elliptic Dirichlet problem, hence invertible);
2. recover the multiplier by least squares and measure stationarity;
3. take a tangent step (reduced Newton on the Lagrangian, or projected
   steepest descent);
4. backtrack on the step length, restoring feasibility with Newton's
   method for the Monge-Ampere equation at every trial point.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    LineSearchStalled,
    LostConvexity,
    MaxNewtonIterations,
    MaxOuterIterations,
    NotElliptic,
    SingularNormalEquations,
    SingularSystem,
    Diverged,
)
from .functional import ConstraintData, constraint, energy, normalize
from .grid import (
    GridDomain,
    ScalarField,
    cofactor,
    divdiv_adjoint,
    hessian,
    hessian_matrices,
    interior_columns,
    stencil_matrix,
)
from .linsolve import assemble, solve_dirichlet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    tol_constraint: float = 1e-9
    tol_stationarity: float = 1e-6
    max_outer: int = 500
    max_newton: int = 30
    initial_step: float = 1.0
    backtracking: float = 0.5
    min_step: float = 1e-10
    convexity_margin: float = 1e-8
    #: tangent direction: "newton" (reduced Lagrangian Hessian) or "gradient"
    step: str = "newton"
    #: Dirichlet solves: "direct" (sparse LU) or "bicgstab"
    linear_solver: str = "direct"

    def __post_init__(self):
        for name in ("tol_constraint", "tol_stationarity", "initial_step", "min_step", "convexity_margin"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")
        for name in ("max_outer", "max_newton"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 < self.backtracking < 1.0:
            raise ValueError(f"backtracking must lie in (0, 1), got {self.backtracking!r}")
        if self.step not in ("newton", "gradient"):
            raise ValueError(f"step must be 'newton' or 'gradient', got {self.step!r}")
        if self.linear_solver not in ("direct", "bicgstab"):
            raise ValueError(f"linear_solver must be 'direct' or 'bicgstab', got {self.linear_solver!r}")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


class HistoryEntry(NamedTuple):
    energy: float
    constraint_inf: float
    stationarity_norm: float


@dataclass
class SolveReport:
    v: ScalarField
    lam: ScalarField
    energy: float
    constraint_inf: float
    stationarity_norm: float
    outer_iterations: int
    newton_iterations_total: int
    converged: bool
    history: list[HistoryEntry] = field(default_factory=list)
    message: str = ""

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "constraint_inf": self.constraint_inf,
            "stationarity_norm": self.stationarity_norm,
            "outer_iterations": self.outer_iterations,
            "newton_iterations_total": self.newton_iterations_total,
            "converged": self.converged,
            "message": self.message,
            "history": [list(h) for h in self.history],
        }


def _fail(exc_type, message: str, report: SolveReport | None):
    exc = exc_type(message)
    exc.report = report
    return exc


# -- feasibility restoration --------------------------------------------------


class Restoration(NamedTuple):
    v: ScalarField
    residuals: list[float]
    iterations: int


def _min_eig(v: ScalarField) -> float:
    return float(hessian(v).min_eigenvalue().min())


def restore(v: ScalarField, data: ConstraintData, cfg: SolverConfig | None = None) -> Restoration:
    """Newton's method for ``det hess v = k`` with the boundary values of ``v`` held fixed.

    Each step solves the linearised equation ``cof(hess v) : hess rho = k - det hess v``
    with ``rho = 0`` on the boundary.  A step that would destroy convexity is
    halved up to four times before :class:`LostConvexity` is raised.
    """
    cfg = cfg or SolverConfig()
    if _min_eig(v) < cfg.convexity_margin:
        raise LostConvexity(f"start is not convex (min Hessian eigenvalue {_min_eig(v):.3e})")
    residuals = []
    for it in range(cfg.max_newton + 1):
        H = hessian(v)
        r = data.k.interior - (H.a11 * H.a22 - H.a12**2)
        res = float(np.max(np.abs(r)))
        residuals.append(res)
        if res <= cfg.tol_constraint:
            return Restoration(v, residuals, it)
        if it == cfg.max_newton or not math.isfinite(res):
            break
        try:
            op = assemble(cofactor(H), method=cfg.linear_solver)
        except NotElliptic as exc:
            raise LostConvexity(str(exc)) from exc
        rho = solve_dirichlet(op, ScalarField.from_interior(v.domain, r)).u
        step = 1.0
        for _ in range(5):
            trial = v + rho * step
            if _min_eig(trial) >= cfg.convexity_margin:
                break
            step *= 0.5
        else:
            raise LostConvexity(f"Newton iterate {it + 1} lost convexity even after damping")
        v = trial
    raise MaxNewtonIterations(f"residual {residuals[-1]:.3e} after {cfg.max_newton} Newton steps")


def restore_feasibility(v: ScalarField, data: ConstraintData, cfg: SolverConfig | None = None) -> ScalarField:
    return restore(v, data, cfg).v


# -- linearisation, multiplier, tangent directions --------------------------


class _Linearization:
    """Kernel basis of the linearised constraint at ``v`` plus the least-squares multiplier."""

    def __init__(self, v: ScalarField):
        dom = v.domain
        self.v = v
        self.domain = dom
        H = hessian(v)
        self.hessian = H
        C = cofactor(H)
        self.inner, self.bnd = interior_columns(dom)
        full = stencil_matrix(dom, C.a11, C.a12, C.a22)
        A_I = full[:, self.inner].tocsc()
        A_B = full[:, self.bnd].tocsc()
        try:
            self.lu = spla.splu(A_I)
        except RuntimeError as exc:
            raise SingularNormalEquations(f"linearised constraint is singular: {exc}") from exc
        # Z = [-A_I^{-1} A_B ; I] in (interior, boundary) ordering
        Z_I = -self.lu.solve(A_B.toarray())
        Z = np.zeros((dom.n_nodes, self.bnd.size))
        Z[self.inner] = Z_I
        Z[self.bnd, np.arange(self.bnd.size)] = 1.0
        if not np.all(np.isfinite(Z)):
            raise SingularNormalEquations("kernel basis is not finite")
        self.Z = Z

        self.g = divdiv_adjoint(H).ravel()
        ZtZ = Z.T @ Z
        try:
            self.ZtZ_chol = sla.cho_factor(ZtZ)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalEquations(str(exc)) from exc
        y = sla.cho_solve(self.ZtZ_chol, Z.T @ self.g)
        r = Z @ y
        self.residual = r
        # g - r lies in the range of J^T; the interior block determines lambda uniquely
        lam_I = self.lu.solve(self.g[self.inner] - r[self.inner], trans="T") / dom.cell_area
        self.lam = ScalarField.from_interior(dom, lam_I)
        self.residual_norm = float(np.linalg.norm(r))
        self.stationarity_norm = self.residual_norm / dom.area

    def newton_direction(self) -> np.ndarray | None:
        """Minimiser of the Lagrangian's quadratic model over the kernel, affine part removed."""
        dom = self.domain
        s = dom.cell_area
        D11, D12, D22 = hessian_matrices(dom)
        lam = sp.diags(self.lam.interior.ravel())
        B = D11.T @ D11 + 2.0 * (D12.T @ D12) + D22.T @ D22
        Q = 0.5 * (D11.T @ lam @ D22 + D22.T @ lam @ D11) - D12.T @ lam @ D12
        W = s * (B - 2.0 * Q)
        Z = self.Z
        Hr = Z.T @ (W @ Z)
        Hr = 0.5 * (Hr + Hr.T)
        X, Y = dom.coordinates()
        gauge = np.vstack([np.ones(dom.n_nodes), X.ravel(), Y.ravel()]) @ Z
        m = Hr.shape[0]
        K = np.zeros((m + 3, m + 3))
        K[:m, :m] = Hr
        K[:m, m:] = gauge.T
        K[m:, :m] = gauge
        rhs = np.concatenate([-(Z.T @ self.g), np.zeros(3)])
        try:
            sol = sla.solve(K, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            return None
        d = Z @ sol[:m]
        if not np.all(np.isfinite(d)) or float(self.g @ d) >= 0.0:
            return None
        return d

    def gradient_direction(self) -> np.ndarray:
        return -self.residual


class MultiplierResult(NamedTuple):
    lam: ScalarField
    residual_norm: float


def recover_multiplier(v: ScalarField) -> MultiplierResult:
    """Least-squares multiplier for ``divdiv_adjoint(hess v) ~ J^T lam``.

    The residual is the orthogonal projection of the (half) energy gradient
    onto the kernel of the linearised constraint; it vanishes exactly at
    formally stationary points.
    """
    lin = _Linearization(v)
    return MultiplierResult(lin.lam, lin.residual_norm)


class TangentStep(NamedTuple):
    h: ScalarField
    stationarity_norm: float


def _direction(lin: _Linearization, method: str) -> np.ndarray:
    if method == "newton":
        d = lin.newton_direction()
        if d is not None:
            return d
        log.debug("reduced Newton direction unusable, falling back to projected gradient")
    return lin.gradient_direction()


def tangent_step(v: ScalarField, data: ConstraintData | None = None, cfg: SolverConfig | None = None) -> TangentStep:
    """Descent direction in the kernel of the linearised constraint.

    With ``cfg.step == "gradient"`` this is ``-(g - J^T lam)``, the projected
    steepest-descent direction; the default ``"newton"`` uses the reduced
    Hessian of the Lagrangian and falls back to the gradient direction if the
    model is not a descent direction.
    """
    cfg = cfg or SolverConfig()
    lin = _Linearization(v)
    d = _direction(lin, cfg.step)
    return TangentStep(ScalarField(v.domain, d.reshape(v.domain.shape)), lin.stationarity_norm)


# -- driver -----------------------------------------------------------------


def default_start(data: ConstraintData) -> ScalarField:
    """``sqrt(mean k)/2 |x|^2``; exact for constant ``k``."""
    scale = 0.5 * math.sqrt(max(data.mean, 0.0))
    return data.domain.sample(lambda x, y: scale * (x**2 + y**2))


def _is_zero(data: ConstraintData) -> bool:
    return bool(np.all(data.k.interior == 0.0))


def minimize(
    v0: ScalarField | None,
    data: ConstraintData,
    cfg: SolverConfig | None = None,
    callback: Callable[[int, ScalarField], None] | None = None,
) -> SolveReport:
    """Minimise the bending energy over convex fields with ``det hess v = k``.

    Parameters
    ----------
    v0 : ScalarField or None
        Starting field; restored onto the constraint set before the first
        step.  Defaults to :func:`default_start`.
    data : ConstraintData
        Curvature datum, ``k > 0`` at every interior node (``k == 0``
        everywhere is accepted and returns the zero field).
    cfg : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(iteration, v)`` with the start and every
        accepted iterate.

    Returns
    -------
    SolveReport
        Normalised minimiser, multiplier and iteration history.

    Raises
    ------
    NotElliptic
        If ``k`` is not positive (and not identically zero).
    MaxOuterIterations, LineSearchStalled
        On failure; the exception's ``report`` attribute holds the last
        accepted iterate with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    dom = data.domain
    if _is_zero(data):
        # affine fields are feasible with zero energy, the global minimum
        zero = ScalarField.zeros(dom)
        return SolveReport(zero, ScalarField.zeros(dom), 0.0, 0.0, 0.0, 0, 0, True, [HistoryEntry(0.0, 0.0, 0.0)], "k == 0: affine minimiser")
    if not data.k_min > 0.0:
        raise NotElliptic(f"elliptic solve needs k > 0, got min k = {data.k_min:.6g}")

    v = default_start(data) if v0 is None else v0
    start = restore(v, data, cfg)
    v = normalize(start.v)
    newton_total = start.iterations
    history: list[HistoryEntry] = []

    def report(lin, converged, message=""):
        return SolveReport(
            v=v,
            lam=lin.lam,
            energy=history[-1].energy,
            constraint_inf=history[-1].constraint_inf,
            stationarity_norm=lin.stationarity_norm,
            outer_iterations=outer,
            newton_iterations_total=newton_total,
            converged=converged,
            history=list(history),
            message=message,
        )

    outer = 0
    while True:
        if callback is not None:
            callback(outer, v)
        lin = _Linearization(v)
        E = energy(v)
        history.append(HistoryEntry(E, constraint(v, data).max_abs(interior_only=True), lin.stationarity_norm))
        log.info("outer %d: energy=%.15g stationarity=%.3e", outer, E, lin.stationarity_norm)
        if lin.stationarity_norm <= cfg.tol_stationarity:
            return report(lin, True, "converged")
        if outer >= cfg.max_outer:
            raise _fail(MaxOuterIterations, f"no convergence after {outer} outer iterations", report(lin, False, "max outer iterations"))

        d = ScalarField(dom, _direction(lin, cfg.step).reshape(dom.shape))
        t = cfg.initial_step
        while True:
            if t < cfg.min_step:
                raise _fail(LineSearchStalled, f"step fell below {cfg.min_step:g}", report(lin, False, "line search stalled"))
            try:
                trial = restore(v + d * t, data, cfg)
                E_trial = energy(trial.v)
            except (LostConvexity, MaxNewtonIterations, SingularSystem, Diverged):
                trial, E_trial = None, math.inf
            if E_trial < E:
                break
            t *= cfg.backtracking
        newton_total += trial.iterations
        v = normalize(trial.v)
        outer += 1
