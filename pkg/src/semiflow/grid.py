"""Grid functions: discrete states on uniform 1D/2D grids with a norm tag."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import GeometryError


class Norm(str, Enum):
    SUP = "SUP"
    L2 = "L2"


class Boundary(str, Enum):
    DIRICHLET_ZERO = "dirichlet-zero"
    NONLOCAL_BIRTH = "nonlocal-birth"
    NONE = "none"


@dataclass(frozen=True)
class Geometry:
    """Uniform tensor grid on ``[0, L0] x [0, L1]`` (nodes include the boundary).

    ``mesh=False`` marks a bare coefficient vector (e.g. a scalar ODE written
    as a one-node system): unit quadrature weights and no node-count minimum.
    """

    dim: int
    lengths: tuple[float, ...]
    nodes: tuple[int, ...]
    mesh: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if self.dim not in (1, 2):
            raise GeometryError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.nodes) != self.dim:
            raise GeometryError("lengths and nodes need one entry per axis")
        if self.mesh:
            if any(n < 3 for n in self.nodes):
                raise GeometryError(f"need at least 3 nodes per axis, got {self.nodes}")
            if any(not (length > 0) for length in self.lengths):
                raise GeometryError("axis lengths must be positive")
        elif self.dim != 1 or self.nodes[0] < 1:
            raise GeometryError("a coefficient vector is one-dimensional and nonempty")

    @classmethod
    def interval(cls, length: float, nodes: int) -> "Geometry":
        return cls(1, (length,), (nodes,))

    @classmethod
    def rectangle(cls, lengths, nodes) -> "Geometry":
        return cls(2, tuple(lengths), tuple(nodes))

    @classmethod
    def vector(cls, n: int) -> "Geometry":
        return cls(1, (float(n),), (n,), mesh=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def spacing(self) -> tuple[float, ...]:
        if not self.mesh:
            return (1.0,)
        return tuple(length / (n - 1) for length, n in zip(self.lengths, self.nodes))

    def axis(self, k: int) -> np.ndarray:
        if not self.mesh:
            return np.arange(self.nodes[0], dtype=float)
        return np.linspace(0.0, self.lengths[k], self.nodes[k])

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, flattened row-major."""
        if not self.mesh:
            return np.ones(self.nodes[0])
        w = None
        for k in range(self.dim):
            wk = np.full(self.nodes[k], self.spacing[k])
            wk[0] = wk[-1] = 0.5 * self.spacing[k]
            w = wk if w is None else np.multiply.outer(w, wk)
        return np.ascontiguousarray(w).ravel()

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        if self.mesh:
            if self.dim == 1:
                mask[[0, -1]] = True
            else:
                mask[[0, -1], :] = True
                mask[:, [0, -1]] = True
        return mask.ravel()

    def coords(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis."""
        if self.dim == 1:
            return (self.axis(0),)
        gx, gy = np.meshgrid(self.axis(0), self.axis(1), indexing="ij")
        return gx.ravel(), gy.ravel()


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Immutable state sampled on a :class:`Geometry`.

    Arithmetic (``+``, ``-``, scalar ``*``) keeps geometry, boundary and norm
    tag; mixing states on different grids raises :class:`GeometryError`.
    """

    values: np.ndarray
    geometry: Geometry
    boundary: Boundary = Boundary.NONE
    norm_tag: Norm = Norm.SUP
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "norm_tag", Norm(self.norm_tag))
        if vals.size != self.geometry.size:
            raise GeometryError(
                f"{vals.size} values for a grid of {self.geometry.size} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise GeometryError("grid function has non-finite values")
        if self.boundary is Boundary.DIRICHLET_ZERO:
            if np.any(vals[self.geometry.boundary_mask] != 0.0):
                raise GeometryError("dirichlet-zero state has nonzero boundary values")

    @classmethod
    def vector(cls, values, norm_tag: Norm = Norm.SUP) -> "GridFunction":
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(vals, Geometry.vector(vals.size), Boundary.NONE, norm_tag)

    @classmethod
    def sample(cls, fn, geometry: Geometry, boundary=Boundary.NONE, norm_tag=Norm.SUP):
        """Evaluate ``fn(*coords)`` on the nodes; Dirichlet boundaries are zeroed."""
        vals = np.broadcast_to(np.asarray(fn(*geometry.coords()), dtype=float),
                               (geometry.size,)).copy()
        if Boundary(boundary) is Boundary.DIRICHLET_ZERO:
            vals[geometry.boundary_mask] = 0.0
        return cls(vals, geometry, boundary, norm_tag)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.geometry, self.boundary, self.norm_tag)

    def retag(self, norm_tag=None, boundary=None) -> "GridFunction":
        return GridFunction(
            self.values,
            self.geometry,
            self.boundary if boundary is None else boundary,
            self.norm_tag if norm_tag is None else norm_tag,
        )

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.geometry.shape)

    def check_compatible(self, other: "GridFunction") -> None:
        if not isinstance(other, GridFunction):
            raise GeometryError(f"expected a GridFunction, got {type(other).__name__}")
        if other.geometry != self.geometry:
            raise GeometryError("grid functions live on different geometries")
        if other.norm_tag is not self.norm_tag:
            raise GeometryError(
                f"norm tags differ: {self.norm_tag.value} vs {other.norm_tag.value}"
            )

    def norm(self) -> float:
        return vector_norm(self.values, self.geometry, self.norm_tag)

    def inner(self, other: "GridFunction") -> float:
        """Discrete L2 pairing (trapezoid weights), regardless of the norm tag."""
        if other.geometry != self.geometry:
            raise GeometryError("grid functions live on different geometries")
        return float(np.dot(self.geometry.weights * self.values, other.values))

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            self.check_compatible(other)
            return self.with_values(op(self.values, other.values))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return self.with_values(float(scalar) * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.boundary is other.boundary
            and self.norm_tag is other.norm_tag
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def vector_norm(values: np.ndarray, geometry: Geometry, norm_tag: Norm) -> float:
    if Norm(norm_tag) is Norm.SUP:
        return float(np.max(np.abs(values))) if values.size else 0.0
    return float(np.sqrt(np.dot(geometry.weights, values * values)))


def sup_distance(a: GridFunction, b: GridFunction) -> float:
    a.check_compatible(b)
    return float(np.max(np.abs(a.values - b.values)))
