"""Independent checks: strong Euler-Lagrange residual, closed-form comparison, mesh studies, matrix identities."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConstantK
from .functional import ConstraintData, analytic_minimizer, constraint, energy, normalize
from .grid import (
    GridDomain,
    ScalarField,
    biharmonic,
    cofactor,
    frobenius,
    hessian,
    tracefree,
)
from .solver import SolverConfig, minimize


def el_residual(v: ScalarField, lam: ScalarField) -> ScalarField:
    """``bilaplacian(v) - cof(hess v) : hess(lam)`` on nodes at distance >= 2 from the boundary.

    ``lam`` is read on interior nodes only.
    """
    dom = v.domain
    lam_full = ScalarField.from_interior(dom, lam.interior)
    coupling = frobenius(cofactor(hessian(v)), hessian(lam_full)).values
    out = biharmonic(v).values - coupling
    keep = np.zeros(dom.shape, dtype=bool)
    keep[2:-2, 2:-2] = True
    out[~keep] = 0.0
    return ScalarField(dom, out)


def _constant_k(data: ConstraintData | float) -> float:
    if isinstance(data, ConstraintData):
        if not data.is_constant:
            raise NonConstantK("comparison needs constant k")
        return float(data.constant)
    return float(data)


def compare_to_analytic(v: ScalarField, data: ConstraintData | float) -> tuple[float, float]:
    """``(field_error_inf, energy_error)`` against ``sqrt(k)/2 |x|^2``, modulo affine maps."""
    k = _constant_k(data)
    if k <= 0:
        raise ValueError(f"comparison needs k > 0, got {k}")
    exact = analytic_minimizer(k, "elliptic", domain=v.domain)
    field_error = (normalize(v) - normalize(exact)).max_abs()
    energy_error = abs(energy(v) - 2.0 * k * v.domain.interior_area)
    return field_error, energy_error


@dataclass
class ConvergenceRow:
    n: int
    h: float
    field_error_inf: float
    energy_error: float
    multiplier_error_inf: float
    observed_order: float | None = None
    field_error_l2: float = 0.0
    multiplier_error_l2: float = 0.0
    outer_iterations: int = 0
    converged: bool = True


def perturbed_start(data: ConstraintData, amplitude: float = 0.05) -> ScalarField:
    """Closed-form minimiser plus ``amplitude * sin(pi x1/L1) cos(pi x2/L2)``.

    The perturbation does not vanish on the boundary, so the minimiser has to
    move boundary values to reach the optimum.
    """
    dom = data.domain
    base = analytic_minimizer(data) if data.is_constant else None
    bump = dom.sample(lambda x, y: amplitude * np.sin(np.pi * x / dom.extent_x) * np.cos(np.pi * y / dom.extent_y))
    if base is None:
        scale = 0.5 * math.sqrt(data.mean)
        base = dom.sample(lambda x, y: scale * (x**2 + y**2))
    return base + bump


def _order(prev: float, cur: float, h_prev: float, h_cur: float) -> float:
    if prev == 0.0 and cur == 0.0:
        return math.nan
    if cur == 0.0:
        return math.inf
    if prev == 0.0:
        return -math.inf
    return math.log(prev / cur) / math.log(h_prev / h_cur)


def _study_one(k: float, n: int, extent: Sequence[float], cfg: SolverConfig, amplitude: float) -> ConvergenceRow:
    dom = GridDomain(float(extent[0]), float(extent[1]), int(n), int(n))
    data = ConstraintData.constant_k(dom, k)
    rep = minimize(perturbed_start(data, amplitude), data, cfg)
    field_err, energy_err = compare_to_analytic(rep.v, k)
    diff = normalize(rep.v) - normalize(analytic_minimizer(data))
    lam_err = rep.lam.interior - 1.0
    return ConvergenceRow(
        n=n,
        h=dom.hx,
        field_error_inf=field_err,
        energy_error=energy_err,
        multiplier_error_inf=float(np.max(np.abs(lam_err))),
        field_error_l2=math.sqrt(dom.cell_area) * diff.norm(),
        multiplier_error_l2=math.sqrt(dom.cell_area) * float(np.linalg.norm(lam_err)),
        outer_iterations=rep.outer_iterations,
        converged=rep.converged,
    )


def convergence_study(
    k: ConstraintData | float,
    grids: Iterable[int],
    cfg: SolverConfig | None = None,
    extent: Sequence[float] = (1.0, 1.0),
    amplitude: float = 0.05,
    workers: int = 1,
) -> list[ConvergenceRow]:
    """Solve for constant ``k`` on each square grid and tabulate errors against the closed form.

    ``observed_order`` compares the infinity-norm field error with the
    previous row.  Rows do not depend on ``workers``.
    """
    k = _constant_k(k)
    cfg = cfg or SolverConfig()
    grids = [int(n) for n in grids]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda n: _study_one(k, n, extent, cfg, amplitude), grids))
    else:
        rows = [_study_one(k, n, extent, cfg, amplitude) for n in grids]
    for prev, row in zip(rows, rows[1:]):
        row.observed_order = _order(prev.field_error_inf, row.field_error_inf, prev.h, row.h)
    return rows


def rows_to_csv(rows: Sequence[ConvergenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "h", "field_err", "energy_err", "lambda_err", "order"])
    for r in rows:
        order = "" if r.observed_order is None else repr(r.observed_order)
        writer.writerow([r.n, repr(r.h), repr(r.field_error_inf), repr(r.energy_error), repr(r.multiplier_error_inf), order])
    return buf.getvalue()


def rows_to_json(rows: Sequence[ConvergenceRow]) -> str:
    return json.dumps({"rows": [asdict(r) for r in rows]}, indent=2, sort_keys=True)


# -- matrix identities ------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)


@dataclass
class IdentitySummary:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "value": c.value, "tol": c.tol, "passed": c.passed} for c in self.checks],
        }


def identity_errors(a11, a12, a22) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise defects of ``|A|^2 = tr(A)^2 - 2 det A`` and ``|A|^2 = 2|A°|^2 + 2 det A``."""
    norm2 = a11**2 + 2.0 * a12**2 + a22**2
    det = a11 * a22 - a12**2
    tr = a11 + a22
    d11, d22 = a11 - 0.5 * tr, a22 - 0.5 * tr
    free2 = d11**2 + 2.0 * a12**2 + d22**2
    return norm2 - tr**2 + 2.0 * det, norm2 - 2.0 * free2 - 2.0 * det


def _relative_defect(defect: np.ndarray, a11, a12, a22) -> float:
    scale = np.maximum(a11**2 + 2.0 * a12**2 + a22**2, 1.0)
    return float(np.max(np.abs(defect) / scale)) if defect.size else 0.0


def identity_suite(seed: int = 0, n_matrices: int = 1000, grid: int = 17, tol: float = 1e-13) -> IdentitySummary:
    """Check the two 2x2 identities on random matrices and random Hessian fields, plus the hyperbolic closed form.

    Defects are measured relative to ``max(|A|^2, 1)``.
    """
    rng = np.random.default_rng(seed)
    checks = []
    a11, a12, a22 = rng.standard_normal((3, n_matrices))
    e1, e2 = identity_errors(a11, a12, a22)
    checks.append(Check("trace identity, random matrices", _relative_defect(e1, a11, a12, a22), tol))
    checks.append(Check("trace-free identity, random matrices", _relative_defect(e2, a11, a12, a22), tol))

    dom = GridDomain.square(grid)
    H = hessian(ScalarField(dom, rng.standard_normal(dom.shape)))
    e1, e2 = identity_errors(H.a11, H.a12, H.a22)
    checks.append(Check("trace identity, random Hessian field", _relative_defect(e1, H.a11, H.a12, H.a22), tol))
    checks.append(Check("trace-free identity, random Hessian field", _relative_defect(e2, H.a11, H.a12, H.a22), tol))

    zero = np.zeros(1)
    e1, e2 = identity_errors(zero, zero, zero)
    checks.append(Check("identities at the zero matrix", float(max(abs(e1[0]), abs(e2[0]))), tol))

    data = ConstraintData.constant_k(dom, -1.0)
    saddle = analytic_minimizer(data, "hyperbolic")
    checks.append(Check("hyperbolic closed form is feasible", constraint(saddle, data).max_abs(), tol))
    A0 = tracefree(hessian(saddle))
    defect = max(np.max(np.abs(A0.a11 - 1.0)), np.max(np.abs(A0.a12)), np.max(np.abs(A0.a22 + 1.0)))
    checks.append(Check("hyperbolic trace-free part is diag(1,-1)", float(defect), tol))
    target = 2.0 * dom.interior_area
    checks.append(Check("hyperbolic energy equals 2*area", abs(energy(saddle) - target) / target, tol))
    return IdentitySummary(checks)
