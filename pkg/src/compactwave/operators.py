"""Spatial difference and Numerov-averaging operators as stencil applications.

All operators act on closed-mesh storage and return a grid function with zero
boundary.  The input's boundary values ARE read wherever the composed stencil
reaches the boundary shell, so applying an operator to a function with
non-homogeneous Dirichlet data is exact; on zero-boundary input the operators
are endomorphisms of the zero-boundary space.

Multi-axis compositions are evaluated axis by axis.  A one-axis kernel leaves
garbage on that axis' boundary slabs, but every operator here applies each
axis at most once per product term, so later factors never read those slabs;
the final boundary shell is zeroed explicitly.

Naming: the "additive" Numerov average is I + (1/12) sum_k h_k^2 D_k with D_k
the 3-point second difference, the "product" average is the per-axis factored
version prod_k (I + (1/12) h_k^2 D_k); the elliptic operators are the
negative sums of second differences pre-multiplied by the averages over the
complementary axes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded

from .errors import SingularOperatorError
from .grid import GridFn, Mesh, zero_boundary


class OpTag(Enum):
    SECOND_DIFF = "second_diff"              # per-axis 3-point second difference
    LAPLACE = "laplace"                      # sum of second differences
    NUMEROV_1D = "numerov_1d"                # per-axis Numerov average
    NUMEROV_SUM = "numerov_sum"              # additive Numerov average
    NUMEROV_SUM_EXCL = "numerov_sum_excl"    # additive average excluding one axis
    NUMEROV_PROD = "numerov_prod"            # product (split) Numerov average
    NUMEROV_PROD_EXCL = "numerov_prod_excl"  # product average excluding one axis
    NUMEROV_SUM_BETA = "numerov_sum_beta"    # one-parameter 2D family
    NUMEROV_SUM_BETA_GAMMA = "numerov_sum_beta_gamma"  # three-parameter 3D family
    ELLIPTIC_SUM = "elliptic_sum"            # cross-averaged second differences
    ELLIPTIC_PROD = "elliptic_prod"          # product-averaged second differences
    ELLIPTIC_THETA = "elliptic_theta"        # theta-family elliptic part (3D)
    COMPACT_LAPLACE = "compact_laplace"      # sum of inverse-averaged second differences
    ELLIPTIC_FACTORED = "elliptic_factored"  # triple-product elliptic operator


@dataclass(frozen=True)
class OperatorId:
    """Operator tag plus the axis index for the per-axis tags."""

    tag: OpTag
    axis: int | None = None

    def __post_init__(self):
        per_axis = {
            OpTag.SECOND_DIFF,
            OpTag.NUMEROV_1D,
            OpTag.NUMEROV_SUM_EXCL,
            OpTag.NUMEROV_PROD_EXCL,
        }
        if self.tag in per_axis and self.axis is None:
            raise ValueError(f"{self.tag.value} requires an axis index")
        if self.tag not in per_axis and self.axis is not None:
            raise ValueError(f"{self.tag.value} takes no axis index")


def second_diff(axis: int) -> OperatorId:
    return OperatorId(OpTag.SECOND_DIFF, axis)


def numerov_1d(axis: int) -> OperatorId:
    return OperatorId(OpTag.NUMEROV_1D, axis)


def numerov_sum_excl(axis: int) -> OperatorId:
    return OperatorId(OpTag.NUMEROV_SUM_EXCL, axis)


def numerov_prod_excl(axis: int) -> OperatorId:
    return OperatorId(OpTag.NUMEROV_PROD_EXCL, axis)


LAPLACE = OperatorId(OpTag.LAPLACE)
NUMEROV_SUM = OperatorId(OpTag.NUMEROV_SUM)
NUMEROV_PROD = OperatorId(OpTag.NUMEROV_PROD)
NUMEROV_SUM_BETA = OperatorId(OpTag.NUMEROV_SUM_BETA)
NUMEROV_SUM_BETA_GAMMA = OperatorId(OpTag.NUMEROV_SUM_BETA_GAMMA)
ELLIPTIC_SUM = OperatorId(OpTag.ELLIPTIC_SUM)
ELLIPTIC_PROD = OperatorId(OpTag.ELLIPTIC_PROD)
ELLIPTIC_THETA = OperatorId(OpTag.ELLIPTIC_THETA)
COMPACT_LAPLACE = OperatorId(OpTag.COMPACT_LAPLACE)
ELLIPTIC_FACTORED = OperatorId(OpTag.ELLIPTIC_FACTORED)


@dataclass
class OperatorParams:
    """Parameters consumed by the operator family.

    ``a`` are the constant wave-speed weights per axis (default all 1);
    ``beta``/``gamma``/``theta`` parametrize the 2D and 3D families;
    ``eps1`` is the positive lower bound required for ``beta`` in 3D;
    ``csq`` (squared sound speed, closed-mesh values) and ``h_t`` are only
    needed by the factored elliptic operator.
    """

    a: tuple[float, ...] = ()
    beta: float = 0.0
    gamma: float = 0.0
    theta: float = 0.0
    eps1: float = 1.0
    csq: GridFn | None = None
    h_t: float | None = None

    def speeds(self, ndim: int) -> tuple[float, ...]:
        if not self.a:
            return (1.0,) * ndim
        if len(self.a) != ndim:
            raise ValueError(f"need {ndim} speed constants, got {len(self.a)}")
        if any(ak <= 0 for ak in self.a):
            raise ValueError("speed constants must be positive")
        return self.a

    def scalar_key(self) -> tuple:
        csq_key = None
        if self.csq is not None:
            flat = self.csq.values
            csq_key = float(flat.flat[0]) if np.ptp(flat) == 0.0 else id(self.csq)
        return (self.a, self.beta, self.gamma, self.theta, self.h_t, csq_key)


def _axsl(ndim: int, axis: int, sl: slice) -> tuple:
    return tuple(sl if k == axis else slice(None) for k in range(ndim))


def _second_diff_ax(vals: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second difference along one axis; valid on that axis' interior."""
    out = np.zeros_like(vals)
    nd = vals.ndim
    mid = _axsl(nd, axis, slice(1, -1))
    up = _axsl(nd, axis, slice(2, None))
    lo = _axsl(nd, axis, slice(None, -2))
    out[mid] = (vals[up] - 2.0 * vals[mid] + vals[lo]) / (h * h)
    return out


def _numerov_ax(vals: np.ndarray, axis: int) -> np.ndarray:
    """Per-axis Numerov average (1, 10, 1)/12; valid on that axis' interior."""
    out = np.zeros_like(vals)
    nd = vals.ndim
    mid = _axsl(nd, axis, slice(1, -1))
    up = _axsl(nd, axis, slice(2, None))
    lo = _axsl(nd, axis, slice(None, -2))
    out[mid] = (vals[lo] + 10.0 * vals[mid] + vals[up]) / 12.0
    return out


def _second_diff_chain(vals: np.ndarray, mesh: Mesh, axes) -> np.ndarray:
    out = vals
    for ax in axes:
        out = _second_diff_ax(out, mesh.steps[ax], ax)
    return out


def _numerov_prod_core(vals: np.ndarray, mesh: Mesh, axes) -> np.ndarray:
    out = vals
    for ax in axes:
        out = _numerov_ax(out, ax)
    return out


def _numerov_sum_core(vals: np.ndarray, mesh: Mesh, axes) -> np.ndarray:
    out = vals.copy()
    for ax in axes:
        h = mesh.steps[ax]
        out += (h * h / 12.0) * _second_diff_ax(vals, h, ax)
    return out


def _elliptic_sum_core(vals: np.ndarray, mesh: Mesh, a) -> np.ndarray:
    nd = mesh.ndim
    out = np.zeros_like(vals)
    for k in range(nd):
        t = _second_diff_ax(vals, mesh.steps[k], k)
        out -= a[k] * a[k] * _numerov_sum_core(t, mesh, [i for i in range(nd) if i != k])
    return out


def _elliptic_prod_core(vals: np.ndarray, mesh: Mesh, a) -> np.ndarray:
    nd = mesh.ndim
    out = np.zeros_like(vals)
    for k in range(nd):
        t = _second_diff_ax(vals, mesh.steps[k], k)
        out -= a[k] * a[k] * _numerov_prod_core(t, mesh, [i for i in range(nd) if i != k])
    return out


def _prod_cross_term(vals: np.ndarray, mesh: Mesh, order: int) -> np.ndarray:
    """sum over axis subsets of size ``order`` of prod (h^2/12) D_chain."""
    nd = mesh.ndim
    out = np.zeros_like(vals)
    for axes in itertools.combinations(range(nd), order):
        coef = 1.0
        for ax in axes:
            coef *= mesh.steps[ax] ** 2 / 12.0
        out += coef * _second_diff_chain(vals, mesh, axes)
    return out


def _elliptic_third_order_term(vals: np.ndarray, mesh: Mesh, a) -> np.ndarray:
    """Triple cross term of the product elliptic operator (3D only)."""
    h1, h2, h3 = (s * s for s in mesh.steps)
    coef = (a[0] ** 2 * h2 * h3 + a[1] ** 2 * h1 * h3 + a[2] ** 2 * h1 * h2) / 144.0
    return -coef * _second_diff_chain(vals, mesh, (0, 1, 2))


def solve_numerov_lines(axis: int, w: GridFn) -> GridFn:
    """Invert the per-axis Numerov average along every interior line.

    Solves the constant tridiagonal systems (1, 10, 1)/12 with zero boundary
    values (zero-boundary-space convention); the input's boundary is ignored.
    """
    out = np.zeros(w.mesh.closed_shape)
    out_int = out[tuple(slice(1, -1) for _ in range(w.mesh.ndim))]
    out_int[...] = _solve_numerov_interior(w.interior, axis)
    return GridFn(w.mesh, out)


def _solve_numerov_interior(rhs_int: np.ndarray, axis: int) -> np.ndarray:
    """Batched tridiagonal solve of the per-axis Numerov systems."""
    moved = np.moveaxis(rhs_int, axis, 0)
    n = moved.shape[0]
    flat = moved.reshape(n, -1)
    ab = np.empty((3, n))
    ab[0, :] = 1.0 / 12.0
    ab[1, :] = 10.0 / 12.0
    ab[2, :] = 1.0 / 12.0
    sol = solve_banded((1, 1), ab, flat, overwrite_ab=True, check_finite=False)
    if not np.all(np.isfinite(sol)):
        raise SingularOperatorError("per-axis Numerov tridiagonal solve produced non-finite values")
    return np.moveaxis(sol.reshape(moved.shape), 0, axis)


def _compact_laplace_core(vals: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Zero-boundary-space compact Laplacian: per-axis inverse-average of D_k."""
    nd = mesh.ndim
    out_int = np.zeros(mesh.interior_shape)
    isl = tuple(slice(1, -1) for _ in range(nd))
    for k in range(nd):
        t = _second_diff_ax(vals, mesh.steps[k], k)
        out_int += _solve_numerov_interior(t[isl], k)
    out = np.zeros_like(vals)
    out[isl] = out_int
    return out


def _elliptic_factored_core(vals: np.ndarray, mesh: Mesh, params: OperatorParams) -> np.ndarray:
    if params.csq is None or params.h_t is None:
        raise ValueError("factored elliptic operator needs csq and h_t")
    c2 = params.csq.values
    coef = params.h_t ** 2 / 12.0
    z = vals - coef * c2 * _compact_laplace_core(vals, mesh)
    t = -_compact_laplace_core(z, mesh)
    return t - coef * _compact_laplace_core(c2 * t, mesh)


def apply_operator(op: OperatorId, params: OperatorParams, w: GridFn) -> GridFn:
    """Apply an operator to a closed-mesh grid function.

    The result carries the composed stencil's values on interior nodes and
    zeros on the boundary shell.
    """
    vals = apply_core(op, params, w.mesh, w.values)
    return GridFn(w.mesh, vals)


def apply_core(op: OperatorId, params: OperatorParams, mesh: Mesh, vals: np.ndarray) -> np.ndarray:
    """Array-level ``apply_operator``; returns a closed array, boundary zeroed."""
    nd = mesh.ndim
    a = params.speeds(nd)
    tag = op.tag
    if tag is OpTag.SECOND_DIFF:
        out = _second_diff_ax(vals, mesh.steps[op.axis], op.axis)
    elif tag is OpTag.LAPLACE:
        out = np.zeros_like(vals)
        for k in range(nd):
            out += _second_diff_ax(vals, mesh.steps[k], k)
    elif tag is OpTag.NUMEROV_1D:
        out = _numerov_ax(vals, op.axis)
    elif tag is OpTag.NUMEROV_SUM:
        out = _numerov_sum_core(vals, mesh, range(nd))
    elif tag is OpTag.NUMEROV_SUM_EXCL:
        out = _numerov_sum_core(vals, mesh, [i for i in range(nd) if i != op.axis])
    elif tag is OpTag.NUMEROV_PROD:
        out = _numerov_prod_core(vals, mesh, range(nd))
    elif tag is OpTag.NUMEROV_PROD_EXCL:
        out = _numerov_prod_core(vals, mesh, [i for i in range(nd) if i != op.axis])
    elif tag is OpTag.NUMEROV_SUM_BETA:
        if nd != 2:
            raise ValueError("one-parameter averaged family is 2D only")
        out = _numerov_sum_core(vals, mesh, range(nd))
        out += params.beta * _prod_cross_term(vals, mesh, 2)
    elif tag is OpTag.NUMEROV_SUM_BETA_GAMMA:
        if nd != 3:
            raise ValueError("three-parameter averaged family is 3D only")
        out = _numerov_sum_core(vals, mesh, range(nd))
        out += params.beta * _prod_cross_term(vals, mesh, 2)
        out += params.gamma * _prod_cross_term(vals, mesh, 3)
    elif tag is OpTag.ELLIPTIC_SUM:
        out = _elliptic_sum_core(vals, mesh, a)
    elif tag is OpTag.ELLIPTIC_PROD:
        out = _elliptic_prod_core(vals, mesh, a)
    elif tag is OpTag.ELLIPTIC_THETA:
        if nd != 3:
            raise ValueError("theta-family elliptic operator is 3D only")
        out = _elliptic_sum_core(vals, mesh, a)
        out += params.theta * _elliptic_third_order_term(vals, mesh, a)
    elif tag is OpTag.COMPACT_LAPLACE:
        out = _compact_laplace_core(vals, mesh)
    elif tag is OpTag.ELLIPTIC_FACTORED:
        out = _elliptic_factored_core(vals, mesh, params)
    else:  # pragma: no cover
        raise ValueError(f"unknown operator tag {tag}")
    return zero_boundary(out)


# --- sine-mode symbols -----------------------------------------------------

_DIAGONALIZABLE = {
    OpTag.SECOND_DIFF,
    OpTag.LAPLACE,
    OpTag.NUMEROV_1D,
    OpTag.NUMEROV_SUM,
    OpTag.NUMEROV_SUM_EXCL,
    OpTag.NUMEROV_PROD,
    OpTag.NUMEROV_PROD_EXCL,
    OpTag.NUMEROV_SUM_BETA,
    OpTag.NUMEROV_SUM_BETA_GAMMA,
    OpTag.ELLIPTIC_SUM,
    OpTag.ELLIPTIC_PROD,
    OpTag.ELLIPTIC_THETA,
    OpTag.COMPACT_LAPLACE,
    OpTag.ELLIPTIC_FACTORED,  # only with spatially constant csq
}


def is_diagonalizable(op: OperatorId, params: OperatorParams) -> bool:
    """True if the operator is diagonal in the tensor sine basis."""
    if op.tag not in _DIAGONALIZABLE:
        return False
    if op.tag is OpTag.ELLIPTIC_FACTORED:
        return params.csq is not None and np.ptp(params.csq.values) == 0.0
    return True


def _mu_axes(mesh: Mesh) -> list[np.ndarray]:
    """Per-axis second-difference eigenvalues on modes j = 1..N_k-1.

    mu_k(j) = -(4/h_k^2) sin^2(j pi / (2 N_k)), reshaped for broadcasting.
    """
    out = []
    nd = mesh.ndim
    for k in range(nd):
        N = mesh.counts[k]
        h = mesh.steps[k]
        j = np.arange(1, N)
        mu = -(4.0 / (h * h)) * np.sin(j * np.pi / (2 * N)) ** 2
        shape = [1] * nd
        shape[k] = N - 1
        out.append(mu.reshape(shape))
    return out


def symbol_grid(op: OperatorId, params: OperatorParams, mesh: Mesh) -> np.ndarray:
    """Eigenvalues of a sine-diagonal operator on all interior modes.

    Returns an array of the interior shape; entry ``j - 1`` (multi-index) is
    the eigenvalue on the mode prod_k sin(j_k pi x_k / X_k).
    """
    if not is_diagonalizable(op, params):
        raise ValueError(f"operator {op.tag.value} is not sine-diagonalizable here")
    nd = mesh.ndim
    a = params.speeds(nd)
    mu = _mu_axes(mesh)
    h2 = [s * s for s in mesh.steps]
    tag = op.tag

    def skn(k):
        return 1.0 + h2[k] * mu[k] / 12.0

    if tag is OpTag.SECOND_DIFF:
        out = mu[op.axis] + np.zeros(())
    elif tag is OpTag.LAPLACE:
        out = sum(mu)
    elif tag is OpTag.NUMEROV_1D:
        out = skn(op.axis)
    elif tag is OpTag.NUMEROV_SUM:
        out = 1.0 + sum(h2[k] * mu[k] for k in range(nd)) / 12.0
    elif tag is OpTag.NUMEROV_SUM_EXCL:
        out = 1.0 + sum(h2[k] * mu[k] for k in range(nd) if k != op.axis) / 12.0
    elif tag is OpTag.NUMEROV_PROD:
        out = np.prod([np.broadcast_to(skn(k), mesh.interior_shape) for k in range(nd)], axis=0)
    elif tag is OpTag.NUMEROV_PROD_EXCL:
        out = np.ones(())
        for k in range(nd):
            if k != op.axis:
                out = out * skn(k)
    elif tag is OpTag.NUMEROV_SUM_BETA:
        out = 1.0 + sum(h2[k] * mu[k] for k in range(2)) / 12.0
        out = out + params.beta * (h2[0] * mu[0] / 12.0) * (h2[1] * mu[1] / 12.0)
    elif tag is OpTag.NUMEROV_SUM_BETA_GAMMA:
        t = [h2[k] * mu[k] / 12.0 for k in range(3)]
        out = 1.0 + t[0] + t[1] + t[2]
        out = out + params.beta * (t[0] * t[1] + t[0] * t[2] + t[1] * t[2])
        out = out + params.gamma * t[0] * t[1] * t[2]
    elif tag is OpTag.ELLIPTIC_SUM:
        out = np.zeros(())
        for k in range(nd):
            skhat = 1.0 + sum(h2[i] * mu[i] for i in range(nd) if i != k) / 12.0
            out = out - a[k] ** 2 * skhat * mu[k]
    elif tag is OpTag.ELLIPTIC_PROD:
        out = np.zeros(())
        for k in range(nd):
            prod = np.ones(())
            for i in range(nd):
                if i != k:
                    prod = prod * skn(i)
            out = out - a[k] ** 2 * prod * mu[k]
    elif tag is OpTag.ELLIPTIC_THETA:
        out = symbol_grid(ELLIPTIC_SUM, params, mesh)
        coef = (a[0] ** 2 * h2[1] * h2[2] + a[1] ** 2 * h2[0] * h2[2]
                + a[2] ** 2 * h2[0] * h2[1]) / 144.0
        out = out + params.theta * (-coef) * mu[0] * mu[1] * mu[2]
    elif tag is OpTag.COMPACT_LAPLACE:
        out = sum(mu[k] / skn(k) for k in range(nd))
    elif tag is OpTag.ELLIPTIC_FACTORED:
        c2 = float(params.csq.values.flat[0])
        ell = -sum(mu[k] / skn(k) for k in range(nd))
        coef = params.h_t ** 2 / 12.0
        out = (1.0 + coef * c2 * ell) ** 2 * ell
    else:  # pragma: no cover
        raise ValueError(tag)
    return np.broadcast_to(out, mesh.interior_shape).copy()


def operator_symbol(op: OperatorId, params: OperatorParams, mesh: Mesh, j) -> float:
    """Eigenvalue of a sine-diagonal operator on the mode with multi-index j."""
    j = np.atleast_1d(np.asarray(j, dtype=int))
    if len(j) != mesh.ndim:
        raise ValueError(f"mode index must have {mesh.ndim} components")
    for k, (jk, N) in enumerate(zip(j, mesh.counts)):
        if not 1 <= jk <= N - 1:
            raise ValueError(f"mode index {jk} out of range 1..{N - 1} on axis {k}")
    return float(symbol_grid(op, params, mesh)[tuple(j - 1)])


def sine_mode(mesh: Mesh, j) -> GridFn:
    """Tensor sine mode prod_k sin(j_k pi x_k / X_k) on the closed mesh."""
    j = np.atleast_1d(np.asarray(j, dtype=int))
    vals = np.ones(mesh.closed_shape)
    for k in range(mesh.ndim):
        x = mesh.axis_coords(k)
        s = np.sin(j[k] * np.pi * x / mesh.extents[k])
        shape = [1] * mesh.ndim
        shape[k] = len(x)
        vals = vals * s.reshape(shape)
    return GridFn(mesh, vals)
