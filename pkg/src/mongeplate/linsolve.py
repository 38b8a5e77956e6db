"""Strictly elliptic non-divergence Dirichlet problems ``A(x) : hess u = f``, ``u = 0`` on the boundary."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import Diverged, NotElliptic, SingularSystem
from .grid import GridDomain, ScalarField, SymMatrixField, interior_columns, stencil_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Assembled operator ``u -> coeff : hess u`` restricted to zero boundary values.

    ``full`` maps all nodal values to interior rows; ``matrix`` is its square
    interior block (the Dirichlet system).  The LU factorisation is computed
    on first use and then shared by every solve.
    """

    domain: GridDomain
    coeff: SymMatrixField
    ellipticity_constant: float
    full: sp.csr_matrix
    matrix: sp.csc_matrix
    method: str = "direct"

    @functools.cached_property
    def lu(self):
        try:
            return spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc

    @functools.cached_property
    def boundary_block(self) -> sp.csc_matrix:
        _, bnd = interior_columns(self.domain)
        return self.full[:, bnd].tocsc()

    def apply(self, u: ScalarField) -> ScalarField:
        """``coeff : hess u`` on interior nodes (boundary values of ``u`` included)."""
        return ScalarField.from_interior(self.domain, self.full @ u.ravel())


def assemble(coeff: SymMatrixField, method: str = "direct") -> EllipticOperator:
    if method not in ("direct", "bicgstab"):
        raise ValueError(f"unknown linear solver {method!r}")
    lam_min = coeff.min_eigenvalue()
    c = float(lam_min.min())
    if not c > 0.0:
        i, j = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
        raise NotElliptic(f"coefficient has eigenvalue {c:.3e} <= 0", node=(int(i) + 1, int(j) + 1))
    dom = coeff.domain
    full = stencil_matrix(dom, coeff.a11, coeff.a12, coeff.a22)
    inner, _ = interior_columns(dom)
    matrix = full[:, inner].tocsc()
    return EllipticOperator(dom, coeff, c, full, matrix, method)


class DirichletSolution(NamedTuple):
    u: ScalarField
    residual_inf: float


def solve_dirichlet(op: EllipticOperator, f: ScalarField, rtol: float = 1e-12, maxiter: int | None = None) -> DirichletSolution:
    """Solve ``op u = f`` on interior nodes with ``u = 0`` on the boundary.

    Only the interior values of ``f`` are used.  ``rtol`` and ``maxiter``
    apply to the iterative fallback.
    """
    rhs = np.ascontiguousarray(f.interior).ravel()
    if not np.all(np.isfinite(rhs)):
        raise SingularSystem("right-hand side is not finite")
    if op.method == "direct":
        x = op.lu.solve(rhs)
    else:
        # ILU-preconditioned BiCGSTAB; the matrix is nonsymmetric when coeff has off-diagonals
        ilu = spla.spilu(op.matrix, drop_tol=1e-5, fill_factor=20)
        prec = spla.LinearOperator(op.matrix.shape, ilu.solve)
        x, info = spla.bicgstab(op.matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=prec)
        if info != 0:
            raise Diverged(f"bicgstab did not converge (info={info})")
    if not np.all(np.isfinite(x)):
        raise SingularSystem("solution is not finite")
    residual = float(np.max(np.abs(op.matrix @ x - rhs))) if rhs.size else 0.0
    log.debug("dirichlet solve: n=%d residual_inf=%.3e", rhs.size, residual)
    return DirichletSolution(ScalarField.from_interior(op.domain, x), residual)
