"""Rectangular tensor meshes and grid functions.

The discrete solution space is the set of real mesh functions on the closed
node set that vanish on the boundary nodes, with the scaled inner product

    (u, w)_h = h_1 * ... * h_n * sum over interior nodes of u*w.

Grid functions store boundary values explicitly so that non-homogeneous
Dirichlet data and stencils that read boundary nodes work uniformly;
membership in the zero-boundary space is a checkable predicate, not a type.

Node ordering is C order, last axis fastest.  The sine-transform and
tridiagonal kernels in the rest of the package rely on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MeshMismatchError


@dataclass(frozen=True)
class Mesh:
    """Uniform rectangular space-time mesh descriptor.

    ``extents[k]`` is the box edge length X_k, ``counts[k]`` the number of
    cells N_k per axis (N_k + 1 closed nodes, N_k - 1 interior nodes),
    ``final_time`` the horizon T and ``time_steps`` the number M of time
    layers, so the steps are h_k = X_k / N_k and h_t = T / M.
    """

    extents: tuple[float, ...]
    counts: tuple[int, ...]
    final_time: float
    time_steps: int

    @property
    def ndim(self) -> int:
        return len(self.extents)

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple(X / N for X, N in zip(self.extents, self.counts))

    @property
    def time_step(self) -> float:
        return self.final_time / self.time_steps

    @property
    def cell_volume(self) -> float:
        """Product h_1 * ... * h_n weighting the inner product."""
        return float(np.prod(self.steps))

    @property
    def closed_shape(self) -> tuple[int, ...]:
        return tuple(N + 1 for N in self.counts)

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(N - 1 for N in self.counts)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Closed node coordinates along one axis."""
        return np.linspace(0.0, self.extents[axis], self.counts[axis] + 1)

    def coord_grids(self) -> tuple[np.ndarray, ...]:
        """Broadcastable closed-node coordinate arrays (indexing='ij')."""
        axes = [self.axis_coords(k) for k in range(self.ndim)]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    def time_at(self, m: int) -> float:
        return m * self.time_step


def make_uniform_mesh(extents, counts, final_time: float, time_steps: int) -> Mesh:
    """Build a mesh, validating extents > 0, counts >= 2 and M >= 2."""
    extents = tuple(float(X) for X in np.atleast_1d(extents))
    counts = tuple(int(N) for N in np.atleast_1d(counts))
    if len(extents) != len(counts):
        raise ValueError("extents and counts must have the same length")
    if not 1 <= len(extents) <= 3:
        raise ValueError(f"dimension must be 1..3, got {len(extents)}")
    if any(X <= 0 for X in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(N < 2 for N in counts):
        raise ValueError(f"counts must be >= 2, got {counts}")
    if final_time <= 0:
        raise ValueError(f"final_time must be positive, got {final_time}")
    if time_steps < 2:
        raise ValueError(f"time_steps must be >= 2, got {time_steps}")
    return Mesh(extents, counts, float(final_time), int(time_steps))


def interior(values: np.ndarray) -> np.ndarray:
    """View of the interior block of a closed-mesh array."""
    return values[tuple(slice(1, -1) for _ in range(values.ndim))]


def zero_boundary(values: np.ndarray) -> np.ndarray:
    """Zero the boundary shell of a closed-mesh array in place; returns it."""
    for ax in range(values.ndim):
        sl0 = tuple(0 if a == ax else slice(None) for a in range(values.ndim))
        sl1 = tuple(-1 if a == ax else slice(None) for a in range(values.ndim))
        values[sl0] = 0.0
        values[sl1] = 0.0
    return values


def pad_interior(mesh: Mesh, interior_values: np.ndarray) -> np.ndarray:
    """Embed an interior-shaped array into a closed array with zero boundary."""
    out = np.zeros(mesh.closed_shape)
    interior(out)[...] = interior_values
    return out


@dataclass
class GridFn:
    """Real-valued function on the closed mesh (boundary nodes included)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.closed_shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match closed mesh "
                f"shape {self.mesh.closed_shape}"
            )

    @classmethod
    def zeros(cls, mesh: Mesh) -> "GridFn":
        return cls(mesh, np.zeros(mesh.closed_shape))

    @classmethod
    def from_interior(cls, mesh: Mesh, interior_values: np.ndarray) -> "GridFn":
        return cls(mesh, pad_interior(mesh, interior_values))

    @property
    def interior(self) -> np.ndarray:
        return interior(self.values)

    def copy(self) -> "GridFn":
        return GridFn(self.mesh, self.values.copy())

    def in_zero_boundary_space(self, tol: float = 0.0) -> bool:
        """True if all boundary values vanish (up to tol)."""
        work = self.values.copy()
        interior(work)[...] = 0.0
        return bool(np.max(np.abs(work)) <= tol)


def sample(fn: Callable[..., np.ndarray] | float, mesh: Mesh) -> GridFn:
    """Evaluate a scalar field pointwise at every closed-mesh node.

    ``fn`` is called with the broadcastable coordinate arrays of the mesh
    (one positional argument per axis) and may return a scalar or an array.
    """
    if np.isscalar(fn):
        return GridFn(mesh, np.full(mesh.closed_shape, float(fn)))
    vals = np.asarray(fn(*mesh.coord_grids()), dtype=float)
    return GridFn(mesh, np.broadcast_to(vals, mesh.closed_shape).copy())


def _check_same_mesh(u: GridFn, w: GridFn) -> None:
    if u.mesh != w.mesh:
        raise MeshMismatchError("grid functions live on different meshes")


def inner_product_h(u: GridFn, w: GridFn) -> float:
    """Scaled Euclidean inner product over interior nodes; boundary ignored."""
    _check_same_mesh(u, w)
    return u.mesh.cell_volume * float(np.sum(u.interior * w.interior))


def norm_h(u: GridFn) -> float:
    """Norm induced by ``inner_product_h``."""
    return u.mesh.cell_volume ** 0.5 * float(np.linalg.norm(u.interior))


def max_norm(u: GridFn) -> float:
    """Max-norm companion over interior nodes."""
    return float(np.max(np.abs(u.interior)))


def norm_h_arr(mesh: Mesh, interior_values: np.ndarray) -> float:
    """``norm_h`` for a bare interior-shaped array."""
    return mesh.cell_volume ** 0.5 * float(np.linalg.norm(interior_values))
