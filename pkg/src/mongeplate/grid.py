"""Uniform rectangular grids, nodal fields and the discrete differential operators.

Node ``(i, j)`` sits at ``(i*hx, j*hy)``.  Scalar fields carry every node,
including the boundary ring; quantities that need a Hessian live on the
interior nodes ``1..nx-2 x 1..ny-2`` only.

Stencils
--------
Second derivatives use the 3-point difference along each axis and the
4-point cross stencil for the mixed derivative::

    a11 = (v[i+1,j] - 2 v[i,j] + v[i-1,j]) / hx**2
    a22 = (v[i,j+1] - 2 v[i,j] + v[i,j-1]) / hy**2
    a12 = (v[i+1,j+1] - v[i+1,j-1] - v[i-1,j+1] + v[i-1,j-1]) / (4 hx hy)

All three are exact on quadratics.  The quadrature is the interior-node
midpoint sum ``hx*hy*sum(f[1:-1, 1:-1])``, which makes
:func:`divdiv_adjoint` a plain transpose of the Hessian stencil.
"""

from __future__ import annotations

import csv
import functools
import io
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import GridError

MIN_NODES = 5


@dataclass(frozen=True)
class GridDomain:
    """Rectangle ``[0, extent_x] x [0, extent_y]`` with ``n_x x n_y`` nodes."""

    extent_x: float
    extent_y: float
    n_x: int
    n_y: int

    def __post_init__(self):
        if int(self.n_x) != self.n_x or int(self.n_y) != self.n_y:
            raise GridError("node counts must be integers")
        if self.n_x < MIN_NODES or self.n_y < MIN_NODES:
            raise GridError(f"need at least {MIN_NODES} nodes per axis, got {self.n_x}x{self.n_y}")
        if not (np.isfinite(self.extent_x) and np.isfinite(self.extent_y)):
            raise GridError("extents must be finite")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise GridError("extents must be positive")

    @classmethod
    def square(cls, n: int, extent: float = 1.0) -> "GridDomain":
        return cls(float(extent), float(extent), int(n), int(n))

    @property
    def hx(self) -> float:
        return self.extent_x / (self.n_x - 1)

    @property
    def hy(self) -> float:
        return self.extent_y / (self.n_y - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    @property
    def interior_shape(self) -> tuple[int, int]:
        return (self.n_x - 2, self.n_y - 2)

    @property
    def n_nodes(self) -> int:
        return self.n_x * self.n_y

    @property
    def n_interior(self) -> int:
        return (self.n_x - 2) * (self.n_y - 2)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.extent_x * self.extent_y

    @property
    def interior_area(self) -> float:
        """Quadrature measure of the domain, ``integrate(1)``."""
        return self.n_interior * self.cell_area

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodal coordinate arrays ``(X, Y)`` of shape ``(n_x, n_y)``."""
        x = np.arange(self.n_x) * self.hx
        y = np.arange(self.n_y) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def sample(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = self.coordinates()
        values = np.broadcast_to(np.asarray(func(X, Y), dtype=float), self.shape)
        return ScalarField(self, values)

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = False
        return mask


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on every node of ``domain``; ``values[i, j]`` is node ``(i, j)``.

    Fields returned by interior-only operations are zero on the boundary ring.
    """

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, order="C")
        if values.size != self.domain.n_nodes:
            raise GridError(f"expected {self.domain.n_nodes} values, got {values.size}")
        values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, domain: GridDomain) -> "ScalarField":
        return cls(domain, np.zeros(domain.shape))

    @classmethod
    def from_interior(cls, domain: GridDomain, interior: np.ndarray) -> "ScalarField":
        values = np.zeros(domain.shape)
        values[1:-1, 1:-1] = np.reshape(interior, domain.interior_shape)
        return cls(domain, values)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]

    def ravel(self) -> np.ndarray:
        return self.values.ravel()

    def _check(self, other: "ScalarField") -> None:
        if other.domain != self.domain:
            raise GridError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.domain, self.values + other.values)
        return ScalarField(self.domain, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.domain, self.values - other.values)
        return ScalarField(self.domain, self.values - other)

    def __neg__(self):
        return ScalarField(self.domain, -self.values)

    def __mul__(self, scalar: float):
        return ScalarField(self.domain, self.values * float(scalar))

    __rmul__ = __mul__

    def dot(self, other: "ScalarField") -> float:
        """Plain nodal inner product (no quadrature weights)."""
        self._check(other)
        return float(np.vdot(self.values, other.values))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def max_abs(self, interior_only: bool = False) -> float:
        vals = self.interior if interior_only else self.values
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path: str | os.PathLike | None = None, interior_only: bool = False) -> str:
        """Write ``i,j,x,y,value`` rows in row-major node order.

        Floats are written with ``repr`` so the round trip is lossless.
        Returns the CSV text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j", "x", "y", "value"])
        dom = self.domain
        lo, hi_x, hi_y = (1, dom.n_x - 1, dom.n_y - 1) if interior_only else (0, dom.n_x, dom.n_y)
        for i in range(lo, hi_x):
            for j in range(lo, hi_y):
                writer.writerow([i, j, repr(i * dom.hx), repr(j * dom.hy), repr(float(self.values[i, j]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source: str | os.PathLike, domain: GridDomain) -> "ScalarField":
        """Read a field written by :meth:`to_csv`; missing nodes are zero."""
        values = np.zeros(domain.shape)
        with open(source, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["i", "j", "x", "y", "value"]:
                raise GridError(f"unexpected CSV header {reader.fieldnames}")
            for row in reader:
                values[int(row["i"]), int(row["j"])] = float(row["value"])
        return cls(domain, values)


@dataclass(frozen=True, eq=False)
class SymMatrixField:
    """Symmetric 2x2 matrix per interior node; arrays have ``domain.interior_shape``."""

    domain: GridDomain
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray

    def __post_init__(self):
        shape = self.domain.interior_shape
        for name in ("a11", "a12", "a22"):
            arr = np.array(np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, domain: GridDomain, matrix) -> "SymMatrixField":
        m = np.asarray(matrix, dtype=float)
        if m.shape != (2, 2) or m[0, 1] != m[1, 0]:
            raise GridError("need a symmetric 2x2 matrix")
        return cls(domain, m[0, 0], m[0, 1], m[1, 1])

    def min_eigenvalue(self) -> np.ndarray:
        mean = 0.5 * (self.a11 + self.a22)
        rad = np.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return mean - rad

    def __mul__(self, weight):
        """Nodewise scaling by a number, an interior array or a :class:`ScalarField`."""
        if isinstance(weight, ScalarField):
            weight = weight.interior
        return SymMatrixField(self.domain, self.a11 * weight, self.a12 * weight, self.a22 * weight)

    __rmul__ = __mul__

    def __add__(self, other: "SymMatrixField") -> "SymMatrixField":
        return SymMatrixField(self.domain, self.a11 + other.a11, self.a12 + other.a12, self.a22 + other.a22)

    def __sub__(self, other: "SymMatrixField") -> "SymMatrixField":
        return SymMatrixField(self.domain, self.a11 - other.a11, self.a12 - other.a12, self.a22 - other.a22)


def _embed(domain: GridDomain, interior: np.ndarray) -> ScalarField:
    return ScalarField.from_interior(domain, interior)


# -- pointwise operations ---------------------------------------------------


def hessian(v: ScalarField) -> SymMatrixField:
    u = v.values
    dom = v.domain
    hx, hy = dom.hx, dom.hy
    a11 = (u[2:, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / hx**2
    a22 = (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy**2
    # grouped so that swapping the axes of a symmetric field is bitwise exact
    a12 = ((u[2:, 2:] + u[:-2, :-2]) - (u[2:, :-2] + u[:-2, 2:])) / (4.0 * hx * hy)
    return SymMatrixField(dom, a11, a12, a22)


def laplacian(v: ScalarField) -> ScalarField:
    """Five-point Laplacian on interior nodes, zero on the boundary ring."""
    H = hessian(v)
    return _embed(v.domain, H.a11 + H.a22)


def biharmonic(v: ScalarField) -> ScalarField:
    """``laplacian(laplacian(v))`` on nodes at distance >= 2 from the boundary; zero elsewhere."""
    lap2 = laplacian(laplacian(v)).values.copy()
    lap2[1, :] = lap2[-2, :] = 0.0
    lap2[:, 1] = lap2[:, -2] = 0.0
    return ScalarField(v.domain, lap2)


def cofactor(M: SymMatrixField) -> SymMatrixField:
    return SymMatrixField(M.domain, M.a22, -M.a12, M.a11)


def det2(M: SymMatrixField) -> ScalarField:
    return _embed(M.domain, M.a11 * M.a22 - M.a12**2)


def frobenius(M: SymMatrixField, N: SymMatrixField) -> ScalarField:
    """Nodewise contraction ``M : N``."""
    return _embed(M.domain, M.a11 * N.a11 + 2.0 * M.a12 * N.a12 + M.a22 * N.a22)


def tracefree(M: SymMatrixField) -> SymMatrixField:
    half_trace = 0.5 * (M.a11 + M.a22)
    return SymMatrixField(M.domain, M.a11 - half_trace, M.a12, M.a22 - half_trace)


def integrate(f: ScalarField) -> float:
    """Interior-node midpoint rule; boundary values are ignored."""
    return float(f.domain.cell_area * np.sum(f.interior))


def quad_inner(M: SymMatrixField, N: SymMatrixField) -> float:
    """Quadrature inner product ``integrate(frobenius(M, N))``."""
    return integrate(frobenius(M, N))


def divdiv_adjoint(M: SymMatrixField) -> ScalarField:
    """Nodal field ``d`` with ``quad_inner(M, hessian(h)) == d.dot(h)`` for every ``h``.

    Each interior stencil of :func:`hessian` is scattered back onto the nodes it
    reads, weighted by the cell area.
    """
    dom = M.domain
    hx, hy = dom.hx, dom.hy
    w = dom.cell_area
    out = np.zeros(dom.shape)
    c = w * M.a11 / hx**2
    out[2:, 1:-1] += c
    out[1:-1, 1:-1] -= 2.0 * c
    out[:-2, 1:-1] += c
    c = w * M.a22 / hy**2
    out[1:-1, 2:] += c
    out[1:-1, 1:-1] -= 2.0 * c
    out[1:-1, :-2] += c
    # the off-diagonal entry enters the contraction twice
    c = 2.0 * w * M.a12 / (4.0 * hx * hy)
    out[2:, 2:] += c
    out[2:, :-2] -= c
    out[:-2, 2:] -= c
    out[:-2, :-2] += c
    return ScalarField(dom, out)


# -- assembled stencils -------------------------------------------------------


def stencil_matrix(domain: GridDomain, c11, c12, c22) -> sp.csr_matrix:
    """Sparse ``(n_interior, n_nodes)`` matrix of ``u -> c11 u_xx + 2 c12 u_xy + c22 u_yy``.

    Rows follow the row-major order of interior nodes, columns the row-major
    order of all nodes.  Coefficients may be scalars or interior arrays.
    """
    nx, ny = domain.shape
    hx, hy = domain.hx, domain.hy
    shape = domain.interior_shape
    c11 = np.broadcast_to(np.asarray(c11, dtype=float), shape).ravel()
    c12 = np.broadcast_to(np.asarray(c12, dtype=float), shape).ravel()
    c22 = np.broadcast_to(np.asarray(c22, dtype=float), shape).ravel()
    I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    row = np.arange(I.size)
    q = 2.0 * c12 / (4.0 * hx * hy)
    offsets = [
        ((0, 0), -2.0 * c11 / hx**2 - 2.0 * c22 / hy**2),
        ((1, 0), c11 / hx**2),
        ((-1, 0), c11 / hx**2),
        ((0, 1), c22 / hy**2),
        ((0, -1), c22 / hy**2),
        ((1, 1), q),
        ((-1, -1), q),
        ((1, -1), -q),
        ((-1, 1), -q),
    ]
    rows = np.concatenate([row] * len(offsets))
    cols = np.concatenate([(I + di) * ny + (J + dj) for (di, dj), _ in offsets])
    vals = np.concatenate([w for _, w in offsets])
    return sp.csr_matrix((vals, (rows, cols)), shape=(domain.n_interior, domain.n_nodes))


@functools.lru_cache(maxsize=32)
def hessian_matrices(domain: GridDomain) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Assembled ``(D11, D12, D22)`` with ``hessian(v).a11 == D11 @ v.ravel()`` etc."""
    return (
        stencil_matrix(domain, 1.0, 0.0, 0.0),
        stencil_matrix(domain, 0.0, 0.5, 0.0),
        stencil_matrix(domain, 0.0, 0.0, 1.0),
    )


def interior_columns(domain: GridDomain) -> tuple[np.ndarray, np.ndarray]:
    """Flat node indices of ``(interior, boundary)`` nodes, both in row-major order."""
    mask = domain.boundary_mask().ravel()
    return np.flatnonzero(~mask), np.flatnonzero(mask)
