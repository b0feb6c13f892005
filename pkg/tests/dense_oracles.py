"""Dense shadow matrices of the stencil operators (test oracles only).

All matrices act on interior-node vectors in C order (last axis fastest),
matching ``GridFn.interior.ravel()``; boundary values are implicitly zero,
the zero-boundary-space convention.
"""

from __future__ import annotations

import numpy as np

from compactwave import operators as ops
from compactwave.grid import Mesh
from compactwave.operators import OperatorId, OperatorParams, OpTag


def second_diff_1d(N: int, h: float) -> np.ndarray:
    """(N-1)x(N-1) three-point second difference with zero boundary."""
    n = N - 1
    out = np.zeros((n, n))
    for i in range(n):
        out[i, i] = -2.0 / h**2
        if i > 0:
            out[i, i - 1] = 1.0 / h**2
        if i < n - 1:
            out[i, i + 1] = 1.0 / h**2
    return out


def numerov_1d(N: int) -> np.ndarray:
    n = N - 1
    out = np.zeros((n, n))
    for i in range(n):
        out[i, i] = 10.0 / 12.0
        if i > 0:
            out[i, i - 1] = 1.0 / 12.0
        if i < n - 1:
            out[i, i + 1] = 1.0 / 12.0
    return out


def _axis_matrix(mesh: Mesh, axis: int, mat1d: np.ndarray) -> np.ndarray:
    out = np.eye(1)
    for k in range(mesh.ndim):
        blk = mat1d if k == axis else np.eye(mesh.counts[k] - 1)
        out = np.kron(out, blk)
    return out


def lam(mesh: Mesh, axis: int) -> np.ndarray:
    return _axis_matrix(mesh, axis, second_diff_1d(mesh.counts[axis], mesh.steps[axis]))


def skn(mesh: Mesh, axis: int) -> np.ndarray:
    return _axis_matrix(mesh, axis, numerov_1d(mesh.counts[axis]))


def dense_operator(op: OperatorId, params: OperatorParams, mesh: Mesh) -> np.ndarray:
    """Dense matrix of any operator tag, including the factored elliptic one."""
    nd = mesh.ndim
    a = params.speeds(nd)
    h2 = [s * s for s in mesh.steps]
    P = int(np.prod(mesh.interior_shape))
    eye = np.eye(P)
    tag = op.tag

    def lam_k(k):
        return lam(mesh, k)

    def sn():
        return eye + sum(h2[k] * lam_k(k) for k in range(nd)) / 12.0

    def sbarn(excl=None):
        out = eye
        for k in range(nd):
            if k != excl:
                out = out @ skn(mesh, k)
        return out

    def cross(order, coef_fn):
        import itertools

        out = np.zeros((P, P))
        for axes in itertools.combinations(range(nd), order):
            m = eye
            for ax in axes:
                m = m @ lam_k(ax)
            out += coef_fn(axes) * m
        return out

    if tag is OpTag.SECOND_DIFF:
        return lam_k(op.axis)
    if tag is OpTag.LAPLACE:
        return sum(lam_k(k) for k in range(nd))
    if tag is OpTag.NUMEROV_1D:
        return skn(mesh, op.axis)
    if tag is OpTag.NUMEROV_SUM:
        return sn()
    if tag is OpTag.NUMEROV_SUM_EXCL:
        return eye + sum(h2[k] * lam_k(k) for k in range(nd) if k != op.axis) / 12.0
    if tag is OpTag.NUMEROV_PROD:
        return sbarn()
    if tag is OpTag.NUMEROV_PROD_EXCL:
        return sbarn(excl=op.axis)
    if tag is OpTag.NUMEROV_SUM_BETA:
        coef = lambda axes: params.beta * h2[axes[0]] * h2[axes[1]] / 144.0
        return sn() + cross(2, coef)
    if tag is OpTag.NUMEROV_SUM_BETA_GAMMA:
        c2 = lambda axes: params.beta * h2[axes[0]] * h2[axes[1]] / 144.0
        c3 = lambda axes: params.gamma * h2[0] * h2[1] * h2[2] / 12.0**3
        return sn() + cross(2, c2) + cross(3, c3)
    if tag is OpTag.ELLIPTIC_SUM:
        out = np.zeros((P, P))
        for k in range(nd):
            snhat = eye + sum(h2[i] * lam_k(i) for i in range(nd) if i != k) / 12.0
            out -= a[k] ** 2 * snhat @ lam_k(k)
        return out
    if tag is OpTag.ELLIPTIC_PROD:
        out = np.zeros((P, P))
        for k in range(nd):
            out -= a[k] ** 2 * sbarn(excl=k) @ lam_k(k)
        return out
    if tag is OpTag.ELLIPTIC_THETA:
        an = dense_operator(ops.ELLIPTIC_SUM, params, mesh)
        coef = (a[0] ** 2 * h2[1] * h2[2] + a[1] ** 2 * h2[0] * h2[2]
                + a[2] ** 2 * h2[0] * h2[1]) / 144.0
        return an - params.theta * coef * lam_k(0) @ lam_k(1) @ lam_k(2)
    if tag is OpTag.COMPACT_LAPLACE:
        out = np.zeros((P, P))
        for k in range(nd):
            out += np.linalg.solve(skn(mesh, k), lam_k(k))
        return out
    if tag is OpTag.ELLIPTIC_FACTORED:
        L = dense_operator(ops.COMPACT_LAPLACE, params, mesh)
        from compactwave.grid import interior

        c2 = np.diag(interior(params.csq.values).ravel())
        coef = params.h_t ** 2 / 12.0
        return (eye - coef * L @ c2) @ (-L) @ (eye - coef * c2 @ L)
    raise ValueError(tag)


def dense_full_operator(mesh: Mesh, rho_int: np.ndarray, sigma_ht2: float,
                        op_b: OperatorId, op_a: OperatorId,
                        params: OperatorParams) -> np.ndarray:
    """Dense B D_rho + sigma h_t^2 A."""
    B = dense_operator(op_b, params, mesh)
    A = dense_operator(op_a, params, mesh)
    return B @ np.diag(rho_int.ravel()) + sigma_ht2 * A
