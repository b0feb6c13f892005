"""Stability evaluation, energy ledger and a-priori bound monitors.

The admissibility condition for the conditionally stable variants is

    (1/4 - sigma) h_t^2 alpha_h^2 <= (1 - eps0^2) rho_min,   0 < eps0 < 1,

where alpha_h^2 is the sharp constant in A <= alpha_h^2 B, i.e. the largest
generalized eigenvalue of A e = lam B e.  Both operators are sine-diagonal,
so alpha_h^2 is found by an exhaustive scan of the symbol ratio over all
interior modes.  The product variant additionally admits the explicit bound
h_t^2 sum_k a_k^2/h_k^2 <= (1 - eps0^2) rho_min, which implies the general
one for it.

The discrete energy

    E^m = ||sqrt(rho) dbar v^m||^2 + (sigma - 1/4) h_t^2 ||dbar v^m||^2_{B^-1 A}
          + ||sbar v^m||^2_{B^-1 A}

is conserved up to the accumulated work of the free term; the ledger tracks
E^m against the accumulated right-hand side and reports the drift.  Weighted
norms of constant-coefficient operators are computed spectrally; rho-weighted
norms pointwise; rho_min is taken over closed mesh nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .errors import UnsupportedVariantError
from .grid import GridFn, Mesh, interior, norm_h_arr
from .operators import OperatorId, OperatorParams, symbol_grid
from .schemes import (
    F0Variant,
    FactoredStepper,
    ProblemSpec,
    SchemeConfig,
    TimeState,
    Variant,
    assemble_fN,
    assemble_fN0,
    assemble_u1N,
    variant_operators,
)
from .transforms import dst_interior, safe_reciprocal_symbol


@dataclass
class StabilityReport:
    """Admissibility data for a time step under a scheme's operator pair."""

    alpha_h_sq: float
    rho_min: float
    sigma: float
    eps0_sq: float
    h_t: float
    h_t_max: float            # admissible step at eps0_sq
    h_t_max_any: float        # admissible step in the limit eps0 -> 0
    condition_used: str       # "general" | "explicit"
    C1: float
    satisfied: bool           # condition holds at eps0_sq
    eps0_sq_max: float        # largest margin admissible for this h_t

    @property
    def admissible(self) -> bool:
        return self.eps0_sq_max > 0.0


def alpha_h(op_b: OperatorId, op_a: OperatorId, params: OperatorParams, mesh: Mesh,
            rho_min: float = 1.0, eps0_sq: float = 0.5,
            sigma: float = 1.0 / 12.0) -> StabilityReport:
    """Exhaustive symbol scan of the generalized eigenvalue max(sym_A/sym_B)."""
    sa = symbol_grid(op_a, params, mesh)
    sb = symbol_grid(op_b, params, mesh)
    if np.min(sb) <= 0.0 or np.min(sa) <= 0.0:
        raise ValueError("operator pair must be positive definite")
    a_sq = float(np.max(sa / sb))
    return _report_from_alpha(a_sq, rho_min, eps0_sq, sigma, mesh.time_step,
                              "general", C1=4.0 / 3.0)


def _report_from_alpha(a_sq, rho_min, eps0_sq, sigma, h_t, used, C1):
    coef = 0.25 - sigma
    if coef <= 0.0:
        return StabilityReport(a_sq, rho_min, sigma, eps0_sq, h_t,
                               math.inf, math.inf, used, C1, True, 1.0)
    h_t_max = math.sqrt((1.0 - eps0_sq) * rho_min / (coef * a_sq))
    h_t_max_any = math.sqrt(rho_min / (coef * a_sq))
    eps_max = 1.0 - coef * h_t * h_t * a_sq / rho_min
    return StabilityReport(a_sq, rho_min, sigma, eps0_sq, h_t, h_t_max,
                           h_t_max_any, used, C1, h_t * h_t * coef * a_sq
                           <= (1.0 - eps0_sq) * rho_min + 1e-15, eps_max)


def stability_report(spec: ProblemSpec, config: SchemeConfig) -> StabilityReport:
    """Admissibility report for a problem/config pair.

    The product variant is gated by its explicit bound; the additive and mixed
    variants by the symbol scan.  The C1 constant of the sufficient explicit
    condition is 4/3, 1/eps1 or 1 for additive/mixed/product respectively.
    """
    mesh = spec.mesh
    h_t = mesh.time_step
    eps0_sq = config.eps0_sq
    rho_min = spec.rho_min
    if config.variant is Variant.FACTORED:
        return _report_from_alpha(0.0, rho_min, 1.0, 0.25, h_t, "general", 1.0)
    if config.variant is Variant.EXPLICIT2:
        s = sum(a * a / h / h for a, h in zip(spec.a, mesh.steps))
        # reuse of the explicit bound with coefficient 1 (sigma treated as 0)
        rep = _report_from_alpha(s, rho_min, eps0_sq, 0.0, h_t, "explicit", 1.0)
        return rep
    bid, aid = variant_operators(config, mesh.ndim)
    params = spec.params(config)
    if config.variant is Variant.PRODUCT:
        s = sum(a * a / h / h for a, h in zip(spec.a, mesh.steps))
        sa = symbol_grid(aid, params, mesh)
        sb = symbol_grid(bid, params, mesh)
        a_sq = float(np.max(sa / sb))
        h_t_max = math.sqrt((1.0 - eps0_sq) * rho_min / s)
        eps_max = 1.0 - h_t * h_t * s / rho_min
        return StabilityReport(a_sq, rho_min, config.sigma, eps0_sq, h_t,
                               h_t_max, math.sqrt(rho_min / s), "explicit", 1.0,
                               h_t * h_t * s <= (1.0 - eps0_sq) * rho_min + 1e-15,
                               eps_max)
    C1 = 4.0 / 3.0 if config.variant is Variant.ADDITIVE else 1.0 / config.eps1
    rep = alpha_h(bid, aid, params, mesh, rho_min, eps0_sq, config.sigma)
    return StabilityReport(rep.alpha_h_sq, rho_min, config.sigma, eps0_sq, h_t,
                           rep.h_t_max, rep.h_t_max_any, "general", C1,
                           rep.satisfied, rep.eps0_sq_max)


# --- energy ledger ---------------------------------------------------------------


@dataclass
class LedgerRow:
    m: int
    t: float
    energy: float
    rhs: float
    drift: float


class EnergyLedger:
    """Per-layer discrete energy against the accumulated free-term work.

    Usable as a run observer; rows start at layer 1.  The drift is
    |E^m - RHS^m| / max(E^1, tiny).
    """

    def __init__(self, spec: ProblemSpec, config: SchemeConfig):
        self.spec = spec
        self.config = config
        self.mesh = spec.mesh
        self.ht = self.mesh.time_step
        self.hvol = self.mesh.cell_volume
        self.rho_int = interior(spec.rho.values)
        self.rows: list[LedgerRow] = []
        self._rhs = 0.0
        self._older: np.ndarray | None = None  # v^{m-2} interior
        self._fN_prev: np.ndarray | None = None  # B^-1 fN at the previous layer
        self._u4 = config.variant is Variant.FACTORED
        if self._u4:
            self._stepper = FactoredStepper(spec, config)
        else:
            bid, aid = variant_operators(config, self.mesh.ndim)
            params = spec.params(config)
            self._binv = safe_reciprocal_symbol(symbol_grid(bid, params, self.mesh))
            self._ratio = symbol_grid(aid, params, self.mesh) * self._binv

    def _wnorm_sq(self, arr_int: np.ndarray) -> float:
        """||.||^2 in the B^-1 A inner product (factored: (A w, w))."""
        if self._u4:
            w = np.zeros(self.mesh.closed_shape)
            interior(w)[...] = arr_int
            aw = self._stepper.apply_elliptic(w)
            return self.hvol * float(np.sum(interior(aw) * arr_int))
        c = dst_interior(arr_int)
        return self.hvol * float(np.sum(self._ratio * c * c))

    def _binv_apply(self, arr_int: np.ndarray) -> np.ndarray:
        if self._u4:
            return arr_int
        return dst_interior(self._binv * dst_interior(arr_int))

    def _ip(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.hvol * float(np.sum(x * y))

    def _fN_int(self, m: int) -> np.ndarray:
        if self._u4:
            return self._stepper.assemble_fh(m).interior
        return assemble_fN(self.spec, self.config, m).interior

    def __call__(self, state: TimeState) -> None:
        if state.m >= 1:
            self.update(state)

    def update(self, state: TimeState) -> LedgerRow:
        ht = self.ht
        vc, vp = state.v_cur.interior, state.v_prev.interior
        dbar = (vc - vp) / ht
        sbar = 0.5 * (vc + vp)
        sigma = self.config.sigma
        energy = (
            self._ip(self.rho_int * dbar, dbar)
            + (sigma - 0.25) * ht * ht * self._wnorm_sq(dbar)
            + self._wnorm_sq(sbar)
        )
        if state.m == 1:
            if self._u4:
                u1h = self._stepper.assemble_u1h().interior
                fN0 = self._stepper.assemble_fh0().interior
            else:
                u1h = assemble_u1N(self.spec, self.config).interior
                fN0 = assemble_fN0(self.spec, self.config).interior
            w0 = np.zeros(self.mesh.closed_shape)
            interior(w0)[...] = vp
            av0 = self._apply_A_int(w0)
            self._rhs = (
                self._ip(self._binv_apply(av0), sbar)  # (B^-1 A v^0, s_t v^0)
                + self._ip(self._binv_apply(u1h), dbar)
                + 0.5 * ht * self._ip(self._binv_apply(fN0), dbar)
            )
        else:
            # 2 * h_t * (B^-1 fN^{m-1}, centered difference at m-1)
            ring = (vc - self._older) / (2.0 * ht)
            self._rhs += 2.0 * ht * self._ip(self._fN_prev, ring)
        if state.m <= self.mesh.time_steps - 1:
            self._fN_prev = self._binv_apply(self._fN_int(state.m))
        self._older = vp
        scale = max(abs(self.rows[0].energy), 1e-300) if self.rows else max(abs(energy), 1e-300)
        row = LedgerRow(state.m, state.time, energy, self._rhs,
                        abs(energy - self._rhs) / scale)
        self.rows.append(row)
        return row

    def _apply_A_int(self, closed: np.ndarray) -> np.ndarray:
        if self._u4:
            return interior(self._stepper.apply_elliptic(closed)).copy()
        bid, aid = variant_operators(self.config, self.mesh.ndim)
        return interior(
            ops.apply_core(aid, self.spec.params(self.config), self.mesh, closed)
        ).copy()

    @property
    def max_drift(self) -> float:
        return max((r.drift for r in self.rows), default=0.0)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("m,t,E,RHS,drift\n")
            for r in self.rows:
                fh.write(f"{r.m},{r.t:.8e},{r.energy:.8e},{r.rhs:.8e},{r.drift:.8e}\n")


# --- stability bound monitors ------------------------------------------------------


@dataclass
class BoundsReport:
    strong_lhs: float
    strong_rhs: float
    weak_lhs: float
    weak_rhs: float

    @property
    def strong_slack(self) -> float:
        return self.strong_rhs - self.strong_lhs

    @property
    def weak_slack(self) -> float:
        return self.weak_rhs - self.weak_lhs

    @property
    def strong_ok(self) -> bool:
        return self.strong_slack >= -1e-12 * max(1.0, self.strong_rhs)

    @property
    def weak_ok(self) -> bool:
        return self.weak_slack >= -1e-12 * max(1.0, self.weak_rhs)


def check_stability_bounds(layers: list[GridFn], spec: ProblemSpec,
                           config: SchemeConfig, f_term_mode: str = "direct") -> BoundsReport:
    """Evaluate both a-priori stability bounds on a stored trajectory.

    ``layers`` must hold every layer v^0..v^M.  ``f_term_mode`` selects the
    direct free-term norm in the strong bound or its difference form
    ("difference": accumulated norms of the time differences of the free term
    plus 3x its max norm).
    """
    mesh = spec.mesh
    M = mesh.time_steps
    if len(layers) != M + 1:
        raise ValueError(f"need {M + 1} layers, got {len(layers)}")
    ht = mesh.time_step
    hvol = mesh.cell_volume
    rho = interior(spec.rho.values)
    sqr = np.sqrt(rho)
    if config.variant is Variant.FACTORED:
        return _check_bounds_factored(layers, spec, config)
    eps0_sq = config.eps0_sq
    eps0 = math.sqrt(eps0_sq)
    bid, aid = variant_operators(config, mesh.ndim)
    params = spec.params(config)
    sb = symbol_grid(bid, params, mesh)
    sa = symbol_grid(aid, params, mesh)
    binv = safe_reciprocal_symbol(sb)
    ratio = sa * binv
    invab = safe_reciprocal_symbol(sa) * binv

    def wnorm_sq(arr, weights):
        c = dst_interior(arr)
        return hvol * float(np.sum(weights * c * c))

    def hnorm(arr):
        return norm_h_arr(mesh, arr)

    u1N = assemble_u1N(spec, config).interior
    fN0 = assemble_fN0(spec, config).interior
    fNs = [fN0] + [assemble_fN(spec, config, m).interior for m in range(1, M)]

    strong_lhs = 0.0
    weak_lhs = 0.0
    acc = np.zeros(mesh.interior_shape)  # h_t * sum of sbar layers
    for m in range(M + 1):
        vm = layers[m].interior
        weak_lhs = max(weak_lhs, eps0 * hnorm(sqr * vm))
        if m >= 1:
            vp = layers[m - 1].interior
            dbar = (vm - vp) / ht
            sbar = 0.5 * (vm + vp)
            strong_lhs = max(
                strong_lhs,
                math.sqrt(eps0_sq * hnorm(sqr * dbar) ** 2 + wnorm_sq(sbar, ratio)),
            )
            acc += ht * sbar
            weak_lhs = max(weak_lhs, math.sqrt(wnorm_sq(acc, ratio)))

    def binva(arr):
        return dst_interior(binv * dst_interior(arr))

    v0 = layers[0].interior
    strong_rhs = math.sqrt(
        wnorm_sq(v0, ratio) + hnorm(binva(u1N) / sqr) ** 2 / eps0_sq
    )
    if f_term_mode == "direct":
        term = 0.25 * ht * hnorm(binva(fNs[0]) / sqr)
        for m in range(1, M):
            term += ht * hnorm(binva(fNs[m]) / sqr)
        strong_rhs += 2.0 / eps0 * term
    elif f_term_mode == "difference":
        term = 0.0
        for m in range(1, M):
            term += ht * math.sqrt(wnorm_sq((fNs[m] - fNs[m - 1]) / ht, invab))
        mx = max(math.sqrt(wnorm_sq(fNs[m], invab)) for m in range(M))
        strong_rhs += 2.0 * term + 3.0 * mx
    else:
        raise ValueError(f"unknown f_term_mode {f_term_mode!r}")

    weak_rhs = hnorm(sqr * v0) + 2.0 * math.sqrt(wnorm_sq(u1N, invab))
    term = 0.25 * ht * math.sqrt(wnorm_sq(fNs[0], invab))
    for m in range(1, M):
        term += ht * math.sqrt(wnorm_sq(fNs[m], invab))
    weak_rhs += 2.0 * term
    return BoundsReport(strong_lhs, strong_rhs, weak_lhs, weak_rhs)


def _check_bounds_factored(layers, spec, config):
    """Bounds of the unconditional sigma = 1/4 scheme (B = I, eps0 = 1)."""
    mesh = spec.mesh
    M = mesh.time_steps
    ht = mesh.time_step
    rho = interior(spec.rho.values)
    sqr = np.sqrt(rho)
    stepper = FactoredStepper(spec, config)
    lam = -symbol_grid(ops.COMPACT_LAPLACE, OperatorParams(a=spec.a), mesh)
    inv_l = safe_reciprocal_symbol(lam)
    hvol = mesh.cell_volume

    def hnorm(arr):
        return norm_h_arr(mesh, arr)

    def anorm_sq(arr):
        w = np.zeros(mesh.closed_shape)
        interior(w)[...] = arr
        return hvol * float(np.sum(interior(stepper.apply_elliptic(w)) * arr))

    def invl_half(arr):
        c = dst_interior(arr)
        return hvol * float(np.sum(inv_l * c * c))

    u1h = stepper.assemble_u1h().interior
    fh = [stepper.assemble_fh0().interior] + [
        stepper.assemble_fh(m).interior for m in range(1, M)
    ]
    strong_lhs = 0.0
    weak_lhs = 0.0
    acc = np.zeros(mesh.interior_shape)
    for m in range(M + 1):
        vm = layers[m].interior
        weak_lhs = max(weak_lhs, hnorm(sqr * vm))
        if m >= 1:
            vp = layers[m - 1].interior
            dbar = (vm - vp) / ht
            sbar = 0.5 * (vm + vp)
            strong_lhs = max(
                strong_lhs, math.sqrt(hnorm(sqr * dbar) ** 2 + anorm_sq(sbar))
            )
            acc += ht * sbar
            weak_lhs = max(weak_lhs, math.sqrt(anorm_sq(acc)))
    v0 = layers[0].interior
    strong_rhs = math.sqrt(anorm_sq(v0) + hnorm(u1h / sqr) ** 2)
    term = 0.25 * ht * hnorm(fh[0] / sqr)
    for m in range(1, M):
        term += ht * hnorm(fh[m] / sqr)
    strong_rhs += 2.0 * term
    # weak bound in its transformed form: velocity data and source measured
    # through the inverse square root of the compact Laplacian
    w0 = stepper.velocity_layer().interior
    weak_rhs = hnorm(sqr * v0) + 2.0 * math.sqrt(invl_half(w0))
    ft1 = interior(stepper._f_tilde_layer(1))
    weak_rhs += 0.5 * ht * math.sqrt(invl_half(ft1))
    for m in range(1, M):
        st = 0.5 * (interior(stepper._f_tilde_layer(m)) + interior(stepper._f_tilde_layer(m + 1)))
        weak_rhs += 2.0 * ht * math.sqrt(invl_half(st))
    for m in range(1, M + 1):
        dm = interior(stepper._d_layer(m))
        if np.any(dm):
            weak_rhs += 2.0 * ht * hnorm(sqr * dm)
    return BoundsReport(strong_lhs, strong_rhs, weak_lhs, weak_rhs)


# --- approximation-order residuals ---------------------------------------------------


def lemma1_residual(u_exact, spec: ProblemSpec, config: SchemeConfig):
    """Max-norm residuals of the scheme equations on an exact smooth solution.

    Returns (interior-layer residual max, first-layer residual max); both decay
    at 4th order in the combined mesh size for smooth data.
    """
    mesh = spec.mesh
    M = mesh.time_steps
    ht = mesh.time_step
    bid, aid = variant_operators(config, mesh.ndim)
    params = spec.params(config)
    sigma = config.sigma
    rho = spec.rho.values

    def ulayer(m):
        vals = np.asarray(u_exact(*mesh.coord_grids(), mesh.time_at(m)), dtype=float)
        return np.broadcast_to(vals, mesh.closed_shape).copy()

    def apply_b(arr):
        return ops.apply_core(bid, params, mesh, arr)

    def apply_a(arr):
        return ops.apply_core(aid, params, mesh, arr)

    psi_max = 0.0
    u_prev, u_cur = ulayer(0), ulayer(1)
    for m in range(1, M):
        u_next = ulayer(m + 1)
        lt = (u_next - 2.0 * u_cur + u_prev) / ht**2
        psi = apply_b(rho * lt) + sigma * ht * ht * apply_a(lt) + apply_a(u_cur)
        psi_int = interior(psi) - assemble_fN(spec, config, m).interior
        psi_max = max(psi_max, float(np.max(np.abs(psi_int))))
        u_prev, u_cur = u_cur, u_next
    u0, u1 = ulayer(0), ulayer(1)
    dt0 = (u1 - u0) / ht
    psi0 = apply_b(rho * dt0) + sigma * ht * ht * apply_a(dt0) + 0.5 * ht * apply_a(u0)
    psi0_int = (
        interior(psi0)
        - assemble_u1N(spec, config).interior
        - 0.5 * ht * assemble_fN0(spec, config).interior
    )
    return psi_max, float(np.max(np.abs(psi0_int)))


def convergence_rates(errors) -> list[float]:
    """Observed orders log2(e(N/2)/e(N)) for a doubling sequence of (N, e)."""
    rates = []
    for (n_prev, e_prev), (n_cur, e_cur) in zip(errors, errors[1:]):
        if n_cur != 2 * n_prev:
            raise ValueError(f"mesh sequence must double: {n_prev} -> {n_cur}")
        rates.append(math.log2(e_prev / e_cur))
    return rates


def solution_errors(v: GridFn, exact, t: float) -> tuple[float, float]:
    """Mesh L2 and max-norm errors of a layer against an exact solution."""
    mesh = v.mesh
    vals = np.asarray(exact(*mesh.coord_grids(), t), dtype=float)
    diff = v.interior - interior(np.broadcast_to(vals, mesh.closed_shape))
    return norm_h_arr(mesh, diff), float(np.max(np.abs(diff)))


def table_l2_norm(mesh: Mesh, arr_int: np.ndarray) -> float:
    """L2 error scaling of the reference result tables.

    Weights every axis with the first axis' step and normalizes by the
    interior node count per axis: sqrt(prod_k (h_1 N_k/(N_k - 1)) * sum arr^2).
    On a square mesh this is the root-mean-square over interior nodes times
    the domain measure root, i.e. ||.||_h * prod (N_k/(N_k - 1))^{1/2}; on
    anisotropic meshes it reproduces the reference values exactly.
    """
    h1 = mesh.steps[0]
    w = 1.0
    for N in mesh.counts:
        w *= h1 * N / (N - 1)
    return math.sqrt(w * float(np.sum(arr_int * arr_int)))


def table_errors(v: GridFn, exact, t: float) -> tuple[float, float]:
    """Errors in the reference tables' L2 scaling and the max norm."""
    mesh = v.mesh
    vals = np.asarray(exact(*mesh.coord_grids(), t), dtype=float)
    diff = v.interior - interior(np.broadcast_to(vals, mesh.closed_shape))
    return table_l2_norm(mesh, diff), float(np.max(np.abs(diff)))
