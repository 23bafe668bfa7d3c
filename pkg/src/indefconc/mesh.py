"""Uniform finite-difference grids on boxes in R^1 and R^2.

Fields live on interior nodes only; the boundary carries homogeneous
Dirichlet values. Node ``i`` along an axis sits at ``lo + (i + 1) * h`` with
``h = (hi - lo) / (n + 1)``.

The discrete operator is ``A = -Lap_h + c`` with the 3-point (1D) or
5-point (2D) stencil, and the quadrature is the node rectangle rule
``sum_i f_i * prod(h)``. The two are matched so that the quadratic form of
``A`` equals the forward-difference Dirichlet energy exactly (summation by
parts), i.e. ``norm_n(v, c)**2 == <A v, v> * prod(h)`` up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class GridMismatchError(ValueError):
    """Raised when fields defined on different grids are combined."""


def _as_tuple(x, dim: int, name: str, cast=float) -> tuple:
    if np.isscalar(x):
        x = (x,) * dim
    t = tuple(cast(a) for a in x)
    if len(t) != dim:
        raise ValueError(f"{name} must have {dim} entries, got {len(t)}")
    return t


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on the box ``prod [lo_k, hi_k]``."""

    dim: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n_nodes: tuple[int, ...]
    unbounded_truncation: bool = False

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (n + 1) for a, b, n in zip(self.lo, self.hi, self.n_nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.n_nodes))

    @property
    def axes(self) -> list[np.ndarray]:
        return [a + (np.arange(n) + 1) * hk for a, n, hk in zip(self.lo, self.n_nodes, self.h)]

    @property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``, row-major order."""
        return _points(self)

    def distance(self, center) -> np.ndarray:
        c = np.asarray(_as_tuple(center, self.dim, "center"))
        return np.sqrt(((self.points - c) ** 2).sum(axis=1))

    def contains(self, x) -> bool:
        x = _as_tuple(x, self.dim, "point")
        return all(a < xi < b for a, xi, b in zip(self.lo, x, self.hi))

    def boundary_distance(self, x) -> float:
        x = _as_tuple(x, self.dim, "point")
        return min(min(xi - a, b - xi) for a, xi, b in zip(self.lo, x, self.hi))

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.size, float(value)))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Evaluate ``func`` on the node coordinates.

        ``func`` receives the ``(size, dim)`` coordinate array; for 1D grids it
        receives the flat coordinate vector instead.
        """
        pts = self.points
        arg = pts[:, 0] if self.dim == 1 else pts
        return ScalarField(self, np.broadcast_to(np.asarray(func(arg), dtype=float), (self.size,)))

    def laplacian(self) -> sp.csr_matrix:
        """Sparse matrix of ``-Lap_h`` with homogeneous Dirichlet ghosts."""
        return _neg_laplacian(self)

    def full_region(self) -> "RegionMask":
        return RegionMask(self, np.ones(self.size, dtype=bool))

    def empty_region(self) -> "RegionMask":
        return RegionMask(self, np.zeros(self.size, dtype=bool))


@lru_cache(maxsize=64)
def _points(grid: Grid) -> np.ndarray:
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=64)
def _neg_laplacian(grid: Grid) -> sp.csr_matrix:
    mats = []
    for n, hk in zip(grid.n_nodes, grid.h):
        mats.append(sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / hk**2)
    if grid.dim == 1:
        return sp.csr_matrix(mats[0])
    i0 = sp.identity(grid.n_nodes[0])
    i1 = sp.identity(grid.n_nodes[1])
    return sp.csr_matrix(sp.kron(mats[0], i1) + sp.kron(i0, mats[1]))


def build_grid(dim: int, lo, hi, n_nodes, unbounded_truncation: bool = False) -> Grid:
    """Build a uniform grid; ``lo``, ``hi``, ``n_nodes`` may be scalars in 1D."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    lo_t = _as_tuple(lo, dim, "lo")
    hi_t = _as_tuple(hi, dim, "hi")
    n_t = _as_tuple(n_nodes, dim, "n_nodes", cast=int)
    for a, b, n in zip(lo_t, hi_t, n_t):
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError("grid bounds must be finite")
        if not a < b:
            raise ValueError(f"need lo < hi, got lo={a}, hi={b}")
        if n < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {n}")
    return Grid(dim, lo_t, hi_t, n_t, bool(unbounded_truncation))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the interior nodes of a grid (flat, row-major, read-only)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise ValueError(f"field has {vals.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def map(self, func) -> "ScalarField":
        return ScalarField(self.grid, func(self.values))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _values_on(self.grid, other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _values_on(self.grid, other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _values_on(self.grid, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / _values_on(self.grid, other))

    def __abs__(self):
        return ScalarField(self.grid, np.abs(self.values))


def _values_on(grid: Grid, other) -> np.ndarray:
    if isinstance(other, ScalarField):
        _check_same(grid, other.grid)
        return other.values
    return np.asarray(other, dtype=float)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Boolean membership per interior node."""

    grid: Grid
    member: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.member, dtype=bool).reshape(-1)
        if m.size != self.grid.size:
            raise ValueError(f"mask has {m.size} entries, grid has {self.grid.size} nodes")
        m.setflags(write=False)
        object.__setattr__(self, "member", m)

    @property
    def count(self) -> int:
        return int(self.member.sum())

    @property
    def is_empty(self) -> bool:
        return not self.member.any()

    def complement(self) -> "RegionMask":
        return RegionMask(self.grid, ~self.member)

    def __or__(self, other: "RegionMask") -> "RegionMask":
        _check_same(self.grid, other.grid)
        return RegionMask(self.grid, self.member | other.member)

    def __and__(self, other: "RegionMask") -> "RegionMask":
        _check_same(self.grid, other.grid)
        return RegionMask(self.grid, self.member & other.member)

    def issubset(self, other: "RegionMask") -> bool:
        _check_same(self.grid, other.grid)
        return bool(np.all(~self.member | other.member))


def _check_same(*grids: Grid) -> None:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError("fields live on different grids")


def ball_mask(grid: Grid, center, radius: float, complement: bool = False) -> RegionMask:
    """Nodes with ``|x - center| < radius`` (or ``>=`` when ``complement``)."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    inside = grid.distance(center) < radius
    return RegionMask(grid, ~inside if complement else inside)


def balls_mask(grid: Grid, centers: Sequence, radius: float, complement: bool = False) -> RegionMask:
    """Union of open balls of a common radius (or its complement)."""
    inside = np.zeros(grid.size, dtype=bool)
    for c in centers:
        inside |= ball_mask(grid, c, radius).member
    return RegionMask(grid, ~inside if complement else inside)


def apply_operator(coeff: ScalarField, v: ScalarField) -> ScalarField:
    """Return ``-Lap_h v + coeff * v``."""
    _check_same(coeff.grid, v.grid)
    grid = v.grid
    return ScalarField(grid, grid.laplacian() @ v.values + coeff.values * v.values)


def _edge_differences(grid: Grid, values: np.ndarray) -> list[np.ndarray]:
    """Forward differences along each axis, Dirichlet ghost edges included."""
    arr = values.reshape(grid.shape)
    out = []
    for axis in range(grid.dim):
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        out.append(np.diff(np.pad(arr, pad), axis=axis))
    return out


def dirichlet_energy(grid: Grid, values: np.ndarray, coeff: np.ndarray | None = None) -> float:
    """``int |grad v|^2 + coeff v^2`` on raw arrays (forward differences)."""
    total = 0.0
    for d, hk in zip(_edge_differences(grid, values), grid.h):
        total += float(np.sum(d * d)) / hk**2
    if coeff is not None:
        total += float(np.dot(coeff, values * values))
    return total * grid.cell_volume


def energy_density(v: ScalarField, coeff: ScalarField) -> ScalarField:
    """Node density of ``|grad v|^2 + coeff v^2``.

    Each interior edge gives half its squared difference quotient to either
    endpoint; a Dirichlet boundary edge gives all of it to its interior node.
    Hence ``integrate(energy_density(v, c)) == norm_n(v, c)**2``.
    """
    _check_same(coeff.grid, v.grid)
    grid = v.grid
    dens = np.zeros(grid.shape)
    for axis, (d, hk) in enumerate(zip(_edge_differences(grid, v.values), grid.h)):
        sq = d * d / hk**2
        n = grid.shape[axis]
        lower = np.take(sq, np.arange(n), axis=axis)
        upper = np.take(sq, np.arange(1, n + 1), axis=axis)
        wl = np.full(n, 0.5)
        wu = np.full(n, 0.5)
        wl[0] = 1.0
        wu[-1] = 1.0
        shape = [1] * grid.dim
        shape[axis] = n
        dens += lower * wl.reshape(shape) + upper * wu.reshape(shape)
    dens = dens.reshape(-1) + coeff.values * v.values**2
    return ScalarField(grid, dens)


def integrate(f: ScalarField, region: RegionMask | None = None) -> float:
    """Rectangle-rule integral of ``f`` over ``region`` (default: whole grid)."""
    if region is None:
        return float(np.sum(f.values)) * f.grid.cell_volume
    _check_same(f.grid, region.grid)
    return float(np.sum(f.values[region.member])) * f.grid.cell_volume


def norm_n(v: ScalarField, V_n: ScalarField) -> float:
    """Discrete ``(int |grad v|^2 + V_n v^2)^(1/2)``.

    ``V_n`` may be sign-indefinite; the square is then clipped at zero.
    """
    _check_same(v.grid, V_n.grid)
    return math.sqrt(max(dirichlet_energy(v.grid, v.values, V_n.values), 0.0))


def lq_norm(v: ScalarField, q: float, region: RegionMask | None = None) -> float:
    """``|v|_{q, region}``; ``q = inf`` gives the max of ``|v|`` over the region."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    vals = np.abs(v.values)
    if region is not None:
        _check_same(v.grid, region.grid)
        vals = vals[region.member]
    if math.isinf(q):
        return float(vals.max()) if vals.size else 0.0
    if vals.size == 0:
        return 0.0
    # scale out the max so that large q does not overflow
    top = float(vals.max())
    if top == 0.0:
        return 0.0
    return top * (float(np.sum((vals / top) ** q)) * v.grid.cell_volume) ** (1.0 / q)


def truncation_half_width(M: float, alpha: float, R: float, tol: float = 1e-8) -> float:
    """Box half-width at which the envelope ``M exp(-alpha (r - R))`` drops below ``tol``."""
    if alpha <= 0 or M <= 0:
        raise ValueError("need M > 0 and alpha > 0")
    return R + max(math.log(M / tol), 0.0) / alpha
