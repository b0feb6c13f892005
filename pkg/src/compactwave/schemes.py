"""Time-stepping schemes for the variable-coefficient wave equation.

The wave equation  rho(x) u_tt - sum_k a_k^2 u_xkxk = f  with Dirichlet data
is discretized by symmetric three-level schemes

    B(rho * Lt v) + sigma * h_t^2 * A Lt v + A v = f_N          (interior layers)
    B(rho * dt v)^0 + sigma * h_t^2 * A (dt v)^0
        + (h_t/2) A v^0 = u1_N + (h_t/2) f_N^0                  (first layer)

where Lt/dt are the second/forward time differences and the operator pair
(B, A) together with the weight sigma select the variant:

  ADDITIVE    B = additive Numerov average (+ optional 2D cross term beta),
              A = cross-averaged second differences.  n <= 2, sigma = 1/12.
  MIXED       B = product Numerov average (or the 3D beta/gamma family),
              A = cross-averaged second differences (theta family in 3D).
              n = 2 or 3, sigma = 1/12.
  PRODUCT     B = product average, A = product-averaged second differences.
              Any n, sigma = 1/12; admits the explicit time-step bound.
  FACTORED    B = I, A = triple-product elliptic operator built from the
              compact Laplacian; sigma = 1/4, unconditionally stable.
  EXPLICIT2   standard explicit second-order scheme (reference method).

Each implicit layer reduces to one linear solve for the time-difference
unknown; non-homogeneous boundary data enters by moving the known boundary
values of the unknown layer into the right-hand side (boundary lift), so the
solve is always posed in the zero-boundary space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from . import operators as ops
from . import solvers
from .errors import (
    RejectedConfigurationError,
    UnsupportedVariantError,
)
from .grid import GridFn, Mesh, interior, pad_interior, sample, zero_boundary
from .operators import OperatorId, OperatorParams, apply_core
from .solvers import LinearSystem, SolveReport, SolverConfig
from .transforms import dst_interior, safe_reciprocal_symbol


# --- space-time fields -------------------------------------------------------


class SpaceTimeField:
    """Scalar field on the closed mesh for a range of times."""

    time_domain: tuple[float, float] = (-math.inf, math.inf)

    def layer(self, mesh: Mesh, t: float) -> np.ndarray:
        raise NotImplementedError

    def check_time(self, t: float) -> None:
        lo, hi = self.time_domain
        if not lo <= t <= hi:
            raise UnsupportedVariantError(
                f"field cannot be evaluated at t={t} (domain [{lo}, {hi}])"
            )


class CallableField(SpaceTimeField):
    """Field given by a callable fn(x_1, ..., x_n, t)."""

    def __init__(self, fn: Callable, time_domain=None):
        self.fn = fn
        if time_domain is not None:
            self.time_domain = time_domain

    def layer(self, mesh, t):
        self.check_time(t)
        vals = np.asarray(self.fn(*mesh.coord_grids(), t), dtype=float)
        return np.broadcast_to(vals, mesh.closed_shape).copy()


class SeparableField(SpaceTimeField):
    """Field S(x) * tau(t); the spatial part is cached per mesh."""

    def __init__(self, spatial, time_law: Callable[[float], float], time_domain=None):
        self.spatial = spatial
        self.time_law = time_law
        self._cache: tuple[Mesh, np.ndarray] | None = None
        if time_domain is not None:
            self.time_domain = time_domain

    def spatial_values(self, mesh: Mesh) -> np.ndarray:
        if self._cache is None or self._cache[0] != mesh:
            if isinstance(self.spatial, np.ndarray):
                vals = self.spatial
            elif isinstance(self.spatial, GridFn):
                vals = self.spatial.values
            else:
                vals = np.broadcast_to(
                    np.asarray(self.spatial(*mesh.coord_grids()), dtype=float),
                    mesh.closed_shape,
                ).copy()
            self._cache = (mesh, np.asarray(vals, dtype=float))
        return self._cache[1]

    def layer(self, mesh, t):
        self.check_time(t)
        return self.spatial_values(mesh) * float(self.time_law(t))


def mesh_delta(mesh: Mesh, center: Sequence[float]) -> np.ndarray:
    """Mesh delta function: 1/(h_1...h_n) at the node ``center``, 0 elsewhere.

    The center must be a mesh node; otherwise the configuration is rejected.
    """
    idx = []
    for k, c in enumerate(center):
        h = mesh.steps[k]
        j = c / h
        ji = int(round(j))
        if abs(j - ji) > 1e-9 or not 0 <= ji <= mesh.counts[k]:
            raise RejectedConfigurationError(
                f"point source coordinate {c} is not a mesh node on axis {k} (h={h})"
            )
        idx.append(ji)
    vals = np.zeros(mesh.closed_shape)
    vals[tuple(idx)] = 1.0 / mesh.cell_volume
    return vals


def point_source(mesh: Mesh, center, time_law, scale: float = 1.0) -> SeparableField:
    """Separable field delta_h(x - center) * scale * time_law(t)."""
    return SeparableField(mesh_delta(mesh, center) * scale, time_law)


# --- configuration -----------------------------------------------------------


class Variant(Enum):
    ADDITIVE = "additive"
    MIXED = "mixed"
    PRODUCT = "product"
    FACTORED = "factored"
    EXPLICIT2 = "explicit2"


class F0Variant(Enum):
    THREE_LEVEL = "three_level"    # (7/12) f^0 + (1/2) f^1 - (1/12) f^2
    HALF_STEP = "half_step"        # (1/3) f^0 + (2/3) f^{1/2}
    SYMMETRIC_M1 = "symmetric_m1"  # -(1/12) f^{-1} + (5/6) f^0 + (1/4) f^1


@dataclass
class SchemeConfig:
    """Scheme variant, family parameters and solver settings."""

    variant: Variant = Variant.ADDITIVE
    beta: float = 0.0    # 2D one-parameter family (ADDITIVE); 3D family (MIXED)
    gamma: float = 1.0   # 3D family (MIXED)
    theta: float = 0.0   # 3D family (MIXED)
    eps1: float = 1.0    # positive lower bound required for beta in 3D
    eps0_sq: float = 0.5  # time-step admissibility margin
    f0_variant: F0Variant = F0Variant.HALF_STEP
    solver: SolverConfig | None = None
    override_stability: bool = False

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant(self.variant)
        if isinstance(self.f0_variant, str):
            self.f0_variant = F0Variant(self.f0_variant)
        if not 0.0 < self.eps0_sq < 1.0:
            raise ValueError("eps0_sq must lie in (0, 1)")
        if self.solver is None:
            if self.variant is Variant.FACTORED:
                self.solver = SolverConfig(method="steepest_descent", max_iter=50000)
            else:
                self.solver = SolverConfig()

    @property
    def sigma(self) -> float:
        if self.variant is Variant.FACTORED:
            return 0.25
        if self.variant is Variant.EXPLICIT2:
            return 0.0
        return 1.0 / 12.0

    @classmethod
    def mixed_family_kappa(cls, kappa: float, **kw) -> "SchemeConfig":
        """3D family member with (beta, gamma, theta) = (2, 12(1-k), 4(k-1))."""
        if not -0.5 < kappa < 3.0:
            raise ValueError("kappa must lie in (-1/2, 3)")
        return cls(variant=Variant.MIXED, beta=2.0, gamma=12.0 * (1.0 - kappa),
                   theta=4.0 * (kappa - 1.0), **kw)


def variant_operators(config: SchemeConfig, ndim: int) -> tuple[OperatorId, OperatorId]:
    """Operator pair (B, A) selected by the scheme variant."""
    v = config.variant
    if v is Variant.ADDITIVE:
        if ndim > 2:
            raise ValueError("the additive variant requires n <= 2")
        if ndim == 2:
            if config.beta < 0:
                raise ValueError("beta must be >= 0 for the 2D family")
            bid = ops.NUMEROV_SUM_BETA if config.beta != 0.0 else ops.NUMEROV_SUM
        else:
            bid = ops.NUMEROV_SUM
        return bid, ops.ELLIPTIC_SUM
    if v is Variant.MIXED:
        if ndim == 2:
            return ops.NUMEROV_PROD, ops.ELLIPTIC_SUM
        if ndim == 3:
            if not 0.0 < config.eps1 <= 1.0:
                raise ValueError("eps1 must lie in (0, 1]")
            if config.beta < config.eps1 or config.gamma > config.eps1:
                # family admissibility: beta >= eps1 > 0 and gamma <= eps1
                if not (config.beta == 1.0 and config.gamma == 1.0):
                    raise ValueError(
                        "3D family requires beta >= eps1 and gamma <= eps1"
                    )
            if not 0.0 <= config.theta <= 1.0:
                raise ValueError("theta must lie in [0, 1]")
            is_plain = config.beta == 1.0 and config.gamma == 1.0
            bid = ops.NUMEROV_PROD if is_plain else ops.NUMEROV_SUM_BETA_GAMMA
            aid = ops.ELLIPTIC_SUM if config.theta == 0.0 else ops.ELLIPTIC_THETA
            return bid, aid
        raise ValueError("the mixed variant requires n = 2 or 3")
    if v is Variant.PRODUCT:
        return ops.NUMEROV_PROD, ops.ELLIPTIC_PROD
    raise ValueError(f"variant {v} has no (B, A) operator pair")


# --- problem description -------------------------------------------------------


@dataclass
class ProblemSpec:
    """Continuous problem data sampled on a mesh.

    ``rho`` is the coefficient of u_tt (bounded below by a positive constant),
    ``a`` the constant wave-speed weights, ``f`` the source field, ``u0``/``u1``
    the initial data (callables, grid functions or None for zero) and ``g`` the
    Dirichlet boundary field (None freezes the boundary at the initial values,
    which covers the homogeneous case).
    """

    mesh: Mesh
    rho: GridFn
    a: tuple[float, ...] = ()
    f: SpaceTimeField | None = None
    u0: object = None
    u1: object = None
    g: SpaceTimeField | None = None

    def __post_init__(self):
        if not self.a:
            self.a = (1.0,) * self.mesh.ndim
        self.rho_min = float(np.min(self.rho.values))
        if self.rho_min <= 0.0:
            raise ValueError("rho must be bounded below by a positive constant")

    def initial_layer(self, which: str) -> GridFn:
        data = self.u0 if which == "u0" else self.u1
        if data is None:
            return GridFn.zeros(self.mesh)
        if isinstance(data, GridFn):
            return data.copy()
        return sample(data, self.mesh)

    def params(self, config: SchemeConfig) -> OperatorParams:
        return OperatorParams(a=self.a, beta=config.beta, gamma=config.gamma,
                              theta=config.theta, eps1=config.eps1)


@dataclass
class TimeState:
    """Two consecutive layers (v at m-1 and m) plus accumulated solve reports."""

    v_prev: GridFn
    v_cur: GridFn
    m: int
    reports: list[SolveReport] = field(default_factory=list)

    @property
    def time(self) -> float:
        return self.v_cur.mesh.time_at(self.m)


# --- right-hand-side assembly --------------------------------------------------


def _avg_op(config: SchemeConfig) -> OperatorId:
    """Averaging operator applied to the source: product version for PRODUCT."""
    return ops.NUMEROV_PROD if config.variant is Variant.PRODUCT else ops.NUMEROV_SUM


def assemble_fN(spec: ProblemSpec, config: SchemeConfig, m: int) -> GridFn:
    """Source term of the interior-layer equation at layer m.

    avg(f^m) + (h_t^2/12) Lt f^m, with the additive Numerov average (product
    average for the PRODUCT variant).
    """
    mesh = spec.mesh
    if not 1 <= m <= mesh.time_steps - 1:
        raise ValueError(f"layer index {m} out of range 1..{mesh.time_steps - 1}")
    if spec.f is None:
        return GridFn.zeros(mesh)
    ht = mesh.time_step
    p = spec.params(config)
    sid = _avg_op(config)
    if isinstance(spec.f, SeparableField):
        S = spec.f.spatial_values(mesh)
        tl = spec.f.time_law
        tm, tp, tq = (float(tl(mesh.time_at(i))) for i in (m, m + 1, m - 1))
        out = apply_core(sid, p, mesh, S) * tm
        interior(out)[...] += interior(S) * ((tp - 2.0 * tm + tq) / 12.0)
        return GridFn(mesh, zero_boundary(out))
    fm = spec.f.layer(mesh, mesh.time_at(m))
    fp = spec.f.layer(mesh, mesh.time_at(m + 1))
    fq = spec.f.layer(mesh, mesh.time_at(m - 1))
    out = apply_core(sid, p, mesh, fm)
    interior(out)[...] += (interior(fp) - 2.0 * interior(fm) + interior(fq)) / 12.0
    return GridFn(mesh, zero_boundary(out))


def assemble_u1N(spec: ProblemSpec, config: SchemeConfig) -> GridFn:
    """Velocity-data term B(rho*u1) + (h_t^2/12) sum_k a_k^2 D_k u1.

    The averaging operator is the variant's own B (B-consistent assembly),
    which the reference results require for the product-averaged variants.
    """
    mesh = spec.mesh
    p = spec.params(config)
    u1 = spec.initial_layer("u1")
    if not np.any(u1.values):
        return GridFn.zeros(mesh)
    bid, _ = variant_operators(config, mesh.ndim)
    out = apply_core(bid, p, mesh, spec.rho.values * u1.values)
    coef = mesh.time_step ** 2 / 12.0
    for k in range(mesh.ndim):
        out += (coef * spec.a[k] ** 2) * ops.apply_core(
            ops.second_diff(k), p, mesh, u1.values
        )
    return GridFn(mesh, zero_boundary(out))


_F0_WEIGHTS = {
    F0Variant.THREE_LEVEL: ((0.0, 7.0 / 12.0), (1.0, 0.5), (2.0, -1.0 / 12.0)),
    F0Variant.HALF_STEP: ((0.0, 1.0 / 3.0), (0.5, 2.0 / 3.0)),
    F0Variant.SYMMETRIC_M1: ((-1.0, -1.0 / 12.0), (0.0, 5.0 / 6.0), (1.0, 0.25)),
}


def assemble_fN0(spec: ProblemSpec, config: SchemeConfig,
                 f0_variant: F0Variant | None = None) -> GridFn:
    """Source term of the first-layer equation.

    A third-order-accurate combination of source layers near t=0 plus the
    (1/12) sum_k h_k^2 D_k correction of the t=0 layer.
    """
    mesh = spec.mesh
    if spec.f is None:
        return GridFn.zeros(mesh)
    variant = f0_variant or config.f0_variant
    ht = mesh.time_step
    acc = np.zeros(mesh.closed_shape)
    for mult, wgt in _F0_WEIGHTS[variant]:
        acc += wgt * spec.f.layer(mesh, mult * ht)
    f0 = spec.f.layer(mesh, 0.0)
    p = spec.params(config)
    out = acc.copy()
    for k in range(mesh.ndim):
        h = mesh.steps[k]
        out += (h * h / 12.0) * ops.apply_core(ops.second_diff(k), p, mesh, f0)
    # keep the pointwise part on interior only; boundary never enters the solve
    res = np.zeros_like(out)
    interior(res)[...] = interior(out)
    return GridFn(mesh, res)


def boundary_lift(spec: ProblemSpec, config: SchemeConfig,
                  bc: np.ndarray) -> np.ndarray:
    """RHS correction moving known boundary values of the unknown out of the solve.

    ``bc`` is a closed array whose boundary shell holds the unknown layer's
    Dirichlet values (its interior is ignored).  Returns the interior array
    -(B(rho * ext) + sigma h_t^2 A ext) with ext the zero-interior extension.
    """
    mesh = spec.mesh
    ext = bc.copy()
    interior(ext)[...] = 0.0
    if not np.any(ext):
        return np.zeros(mesh.interior_shape)
    bid, aid = variant_operators(config, mesh.ndim)
    p = spec.params(config)
    out = apply_core(bid, p, mesh, spec.rho.values * ext)
    out += (config.sigma * mesh.time_step ** 2) * apply_core(aid, p, mesh, ext)
    return -interior(out)


# --- the generic three-level stepper --------------------------------------------


class ThreeLevelStepper:
    """Precomputed machinery for one (spec, config) pair; steps are pure."""

    def __init__(self, spec: ProblemSpec, config: SchemeConfig):
        if config.variant in (Variant.FACTORED, Variant.EXPLICIT2):
            raise ValueError("use the factored/explicit drivers for this variant")
        self.spec = spec
        self.config = config
        mesh = spec.mesh
        self.mesh = mesh
        self.ht = mesh.time_step
        self.sigma_ht2 = config.sigma * self.ht ** 2
        self.bid, self.aid = variant_operators(config, mesh.ndim)
        self.params = spec.params(config)
        self.rho_closed = spec.rho.values
        self.rho_int = interior(self.rho_closed).copy()
        self._binv_symbol = safe_reciprocal_symbol(
            ops.symbol_grid(self.bid, self.params, mesh)
        )
        # fused sigma*h_t^2*B^-1*A multiplier: both operators are sine-diagonal
        self._scaled_ba_symbol = (
            self.sigma_ht2 * ops.symbol_grid(self.aid, self.params, mesh)
            * self._binv_symbol
        )
        self.system = LinearSystem(
            mesh=mesh,
            rho=self.rho_int,
            sigma_ht2=self.sigma_ht2,
            apply_elliptic=lambda w: self._apply_A_elliptic(pad_interior(mesh, w)),
            apply_B_inv=self._apply_B_inv,
            apply_scaledBA=self._apply_scaled_ba,
            apply_full=self._apply_full,
        )
        self._w_prev = np.zeros(mesh.interior_shape)
        self._f_cache: tuple | None = None
        self.flagged = False  # set by run() after the stability check

    def _apply_full(self, w_int: np.ndarray) -> np.ndarray:
        w = pad_interior(self.mesh, w_int)
        out = apply_core(self.bid, self.params, self.mesh, self.rho_closed * w)
        out += self.sigma_ht2 * apply_core(self.aid, self.params, self.mesh, w)
        return interior(out).copy()

    def _apply_B_inv(self, r_int: np.ndarray) -> np.ndarray:
        return dst_interior(self._binv_symbol * dst_interior(r_int))

    def _apply_scaled_ba(self, w_int: np.ndarray) -> np.ndarray:
        return dst_interior(self._scaled_ba_symbol * dst_interior(w_int))

    def _apply_A_elliptic(self, closed: np.ndarray) -> np.ndarray:
        return interior(apply_core(self.aid, self.params, self.mesh, closed)).copy()

    def _fN_interior(self, m: int) -> np.ndarray:
        """Interior source-term values, caching the averaged spatial factor."""
        f = self.spec.f
        if f is None:
            return np.zeros(self.mesh.interior_shape)
        if isinstance(f, SeparableField):
            if self._f_cache is None:
                S = f.spatial_values(self.mesh)
                sid = _avg_op(self.config)
                sS = interior(apply_core(sid, self.params, self.mesh, S)).copy()
                self._f_cache = (interior(S).copy(), sS)
            S_int, sS = self._f_cache
            tl = f.time_law
            tm = float(tl(self.mesh.time_at(m)))
            tp = float(tl(self.mesh.time_at(m + 1)))
            tq = float(tl(self.mesh.time_at(m - 1)))
            return sS * tm + S_int * ((tp - 2.0 * tm + tq) / 12.0)
        return assemble_fN(self.spec, self.config, m).interior

    def _g_layer(self, m: int, like: GridFn) -> np.ndarray:
        """Closed array of boundary values at layer m (interior meaningless)."""
        if self.spec.g is None:
            return like.values
        return self.spec.g.layer(self.mesh, self.mesh.time_at(m))

    def _solve(self, b: np.ndarray) -> tuple[np.ndarray, SolveReport]:
        guess = self.config.solver.guess
        if guess == "sigma0_predictor":
            x0 = solvers.sigma0_predictor(self.system, b)
        elif guess == "previous_layer":
            x0 = self._w_prev
        else:
            x0 = np.zeros(self.mesh.interior_shape)
        w, report = solvers.solve(self.system, self.config.solver, x0, b, self.flagged)
        self._w_prev = w
        return w, report

    def first_step(self) -> TimeState:
        """Solve for the forward difference at t=0 and form the first layer."""
        spec, mesh, ht = self.spec, self.mesh, self.ht
        v0 = spec.initial_layer("u0")
        if spec.g is not None:
            g0 = spec.g.layer(mesh, 0.0)
            bvals = g0.copy()
            interior(bvals)[...] = interior(v0.values)
            v0 = GridFn(mesh, bvals)
        u1N = assemble_u1N(spec, self.config)
        fN0 = assemble_fN0(spec, self.config)
        b = u1N.interior + 0.5 * ht * fN0.interior
        b -= 0.5 * ht * self._apply_A_elliptic(v0.values)
        bc = None
        if spec.g is not None:
            g1 = spec.g.layer(mesh, ht)
            bc = (g1 - v0.values) / ht  # forward difference of the boundary data
            b = b + boundary_lift(spec, self.config, bc)
        w, report = self._solve(b)
        v1_vals = v0.values.copy()
        if bc is not None:
            v1_vals += ht * bc
            interior(v1_vals)[...] = interior(v0.values)
        interior(v1_vals)[...] += ht * w
        return TimeState(v_prev=v0, v_cur=GridFn(mesh, v1_vals), m=1, reports=[report])

    def step(self, state: TimeState) -> TimeState:
        """Advance one layer: solve for the second time difference at layer m."""
        spec, mesh, ht = self.spec, self.mesh, self.ht
        m = state.m
        if not 1 <= m <= mesh.time_steps - 1:
            raise ValueError(f"cannot step from layer {m}")
        b = self._fN_interior(m) - self._apply_A_elliptic(state.v_cur.values)
        bc = None
        if spec.g is not None:
            gm = self._g_layer(m, state.v_cur)
            gp = spec.g.layer(mesh, mesh.time_at(m + 1))
            gq = self._g_layer(m - 1, state.v_prev)
            bc = (gp - 2.0 * gm + gq) / ht**2
            b = b + boundary_lift(spec, self.config, bc)
        w, report = self._solve(b)
        v_new = 2.0 * state.v_cur.values - state.v_prev.values
        if bc is not None:
            v_new += ht * ht * bc
            # boundary now equals the next layer's data exactly
        interior(v_new)[...] = (
            2.0 * state.v_cur.interior - state.v_prev.interior + ht * ht * w
        )
        return TimeState(state.v_cur, GridFn(mesh, v_new), m + 1,
                         state.reports + [report])


def first_step(spec: ProblemSpec, config: SchemeConfig) -> TimeState:
    return ThreeLevelStepper(spec, config).first_step()


def step(state: TimeState, spec: ProblemSpec, config: SchemeConfig) -> TimeState:
    return ThreeLevelStepper(spec, config).step(state)


# --- factored (sigma = 1/4) variant ---------------------------------------------


@dataclass
class U4Inputs:
    """Auxiliary data of the factored two-level reduction.

    ``w0`` defaults to rho*u1; ``d`` and ``f_tilde`` are the free terms of the
    underlying first-order system (``f_tilde`` defaults to the problem source).
    """

    w0: GridFn | None = None
    d: SpaceTimeField | None = None
    f_tilde: SpaceTimeField | None = None


class FactoredStepper:
    """Unconditionally stable sigma = 1/4 stepper (B = I)."""

    def __init__(self, spec: ProblemSpec, config: SchemeConfig,
                 inputs: U4Inputs | None = None):
        if config.variant is not Variant.FACTORED:
            raise ValueError("FactoredStepper requires the factored variant")
        self.spec = spec
        self.config = config
        self.inputs = inputs or U4Inputs()
        mesh = spec.mesh
        self.mesh = mesh
        self.ht = mesh.time_step
        self.csq = GridFn(mesh, 1.0 / spec.rho.values)
        self.params = OperatorParams(a=spec.a, csq=self.csq, h_t=self.ht)
        self.rho_int = interior(spec.rho.values).copy()
        self.system = LinearSystem(
            mesh=mesh,
            rho=self.rho_int,
            sigma_ht2=0.25 * self.ht**2,
            apply_elliptic=lambda w: interior(
                self.apply_elliptic(pad_interior(mesh, w))
            ).copy(),
            apply_B_inv=lambda r: r,
            apply_full=self._apply_full,
        )
        self._w_prev = np.zeros(mesh.interior_shape)

    def apply_elliptic(self, closed: np.ndarray) -> np.ndarray:
        return apply_core(ops.ELLIPTIC_FACTORED, self.params, self.mesh, closed)

    def _apply_full(self, w_int: np.ndarray) -> np.ndarray:
        w = pad_interior(self.mesh, w_int)
        out = self.rho_int * w_int + 0.25 * self.ht**2 * interior(self.apply_elliptic(w))
        return out

    def _outer_factor(self, closed: np.ndarray) -> np.ndarray:
        """[I - (h_t^2/12) L(c^2 .)] acting on a closed array."""
        coef = self.ht**2 / 12.0
        lc = ops._compact_laplace_core(self.csq.values * closed, self.mesh)
        return closed - coef * lc

    def velocity_layer(self) -> GridFn:
        w0 = self.inputs.w0
        if w0 is None:
            u1 = self.spec.initial_layer("u1")
            w0 = GridFn(self.mesh, self.spec.rho.values * u1.values)
        return w0

    def assemble_u1h(self) -> GridFn:
        out = self._outer_factor(self.velocity_layer().values)
        return GridFn(self.mesh, zero_boundary(out))

    def _f_tilde_layer(self, m: int) -> np.ndarray:
        ft = self.inputs.f_tilde if self.inputs.f_tilde is not None else self.spec.f
        if ft is None:
            return np.zeros(self.mesh.closed_shape)
        return ft.layer(self.mesh, self.mesh.time_at(m))

    def _d_layer(self, m: int) -> np.ndarray:
        if self.inputs.d is None:
            return np.zeros(self.mesh.closed_shape)
        return self.inputs.d.layer(self.mesh, self.mesh.time_at(m))

    def assemble_fh(self, m: int) -> GridFn:
        """Free term of the interior-layer equation at layer m."""
        st = 0.5 * (self._f_tilde_layer(m) + self._f_tilde_layer(m + 1))
        out = self._outer_factor(st)
        if self.inputs.d is not None:
            out = out + self.spec.rho.values * (
                (self._d_layer(m + 1) - self._d_layer(m)) / self.ht
            )
        return GridFn(self.mesh, zero_boundary(out))

    def assemble_fh0(self) -> GridFn:
        """Free term of the first-layer equation (uses the t=h_t source layer)."""
        out = self._outer_factor(self._f_tilde_layer(1))
        if self.inputs.d is not None:
            # d^0 := -d^1 so that (h_t/2) rho dt d^0 = rho d^1
            out = out + self.spec.rho.values * (2.0 * self._d_layer(1) / self.ht)
        return GridFn(self.mesh, zero_boundary(out))

    def _solve(self, b: np.ndarray):
        guess = self.config.solver.guess
        if guess == "sigma0_predictor":
            x0 = solvers.sigma0_predictor(self.system, b)
        elif guess == "previous_layer":
            x0 = self._w_prev
        else:
            x0 = np.zeros(self.mesh.interior_shape)
        w, report = solvers.solve(self.system, self.config.solver, x0, b, False)
        self._w_prev = w
        return w, report

    def first_step(self) -> TimeState:
        spec, mesh, ht = self.spec, self.mesh, self.ht
        v0 = spec.initial_layer("u0")
        b = self.assemble_u1h().interior + 0.5 * ht * self.assemble_fh0().interior
        if self.inputs.d is not None:
            b = b + self.rho_int * interior(self._d_layer(1))
        b -= 0.5 * ht * interior(self.apply_elliptic(v0.values))
        w, report = self._solve(b)
        v1 = v0.values.copy()
        interior(v1)[...] += ht * w
        return TimeState(v0, GridFn(mesh, v1), 1, [report])

    def step(self, state: TimeState) -> TimeState:
        mesh, ht = self.mesh, self.ht
        m = state.m
        if not 1 <= m <= mesh.time_steps - 1:
            raise ValueError(f"cannot step from layer {m}")
        b = self.assemble_fh(m).interior - interior(
            self.apply_elliptic(state.v_cur.values)
        )
        w, report = self._solve(b)
        v_new = state.v_cur.values.copy()
        interior(v_new)[...] = (
            2.0 * state.v_cur.interior - state.v_prev.interior + ht * ht * w
        )
        zero_boundary(v_new)
        return TimeState(state.v_cur, GridFn(mesh, v_new), m + 1,
                         state.reports + [report])


def first_step_unconditional(spec: ProblemSpec, inputs: U4Inputs | None,
                             config: SchemeConfig) -> TimeState:
    return FactoredStepper(spec, config, inputs).first_step()


def step_unconditional(state: TimeState, spec: ProblemSpec,
                       inputs: U4Inputs | None, config: SchemeConfig) -> TimeState:
    return FactoredStepper(spec, config, inputs).step(state)


# --- explicit second-order reference scheme -------------------------------------


def explicit_cfl_margin(spec: ProblemSpec) -> float:
    """Largest admissible eps0^2 for the explicit bound; <= 0 means unstable."""
    mesh = spec.mesh
    s = sum(a * a / h / h for a, h in zip(spec.a, mesh.steps))
    return 1.0 - mesh.time_step ** 2 * s / spec.rho_min


def run_explicit2(spec: ProblemSpec, config: SchemeConfig | None = None,
                  observers: Iterable[Callable] = (), keep_layers: bool = False):
    """March the standard explicit second-order scheme to t = T."""
    config = config or SchemeConfig(variant=Variant.EXPLICIT2)
    mesh = spec.mesh
    ht = mesh.time_step
    if explicit_cfl_margin(spec) <= 0.0 and not config.override_stability:
        raise RejectedConfigurationError(
            "explicit scheme violates its time-step bound; pass "
            "override_stability=True to force the run"
        )
    rho = spec.rho.values
    p = OperatorParams(a=spec.a)

    def rhs(closed: np.ndarray, m: int) -> np.ndarray:
        out = np.zeros(mesh.closed_shape)
        for k in range(mesh.ndim):
            out += spec.a[k] ** 2 * ops.apply_core(ops.second_diff(k), p, mesh, closed)
        if spec.f is not None:
            fm = spec.f.layer(mesh, mesh.time_at(m))
            interior(out)[...] += interior(fm)
        return interior(out) / interior(rho)

    v0 = spec.initial_layer("u0")
    if spec.g is not None:
        b0 = spec.g.layer(mesh, 0.0).copy()
        interior(b0)[...] = interior(v0.values)
        v0 = GridFn(mesh, b0)
    u1 = spec.initial_layer("u1")
    v1_vals = spec.g.layer(mesh, ht).copy() if spec.g is not None else v0.values.copy()
    interior(v1_vals)[...] = (
        interior(v0.values) + ht * interior(u1.values) + 0.5 * ht * ht * rhs(v0.values, 0)
    )
    state = TimeState(v0, GridFn(mesh, v1_vals), 1)
    result = RunResult(state=state, layers=[v0.copy(), state.v_cur.copy()] if keep_layers else None)
    for obs in observers:
        obs(TimeState(v0, v0, 0))
        obs(state)
    for m in range(1, mesh.time_steps):
        nxt = spec.g.layer(mesh, mesh.time_at(m + 1)).copy() if spec.g is not None \
            else state.v_cur.values.copy()
        interior(nxt)[...] = (
            2.0 * state.v_cur.interior - state.v_prev.interior
            + ht * ht * rhs(state.v_cur.values, m)
        )
        state = TimeState(state.v_cur, GridFn(mesh, nxt), m + 1)
        if keep_layers:
            result.layers.append(state.v_cur.copy())
        for obs in observers:
            obs(state)
    result.state = state
    return result


# --- driver ---------------------------------------------------------------------


@dataclass
class RunResult:
    state: TimeState
    layers: list[GridFn] | None = None
    stability = None

    @property
    def reports(self) -> list[SolveReport]:
        return self.state.reports

    @property
    def max_iterations(self) -> int:
        return max((r.iterations for r in self.state.reports), default=0)


def run(spec: ProblemSpec, config: SchemeConfig,
        observers: Iterable[Callable] = (), keep_layers: bool = False) -> RunResult:
    """March the configured scheme from t = 0 to t = T.

    Conditional variants are admitted only if some margin eps0 in (0, 1)
    satisfies the time-step bound (override with ``config.override_stability``);
    the solver report is flagged when the bound fails at the configured
    ``solver.eps0_sq``.  Observers are invoked once with the initial state and
    then after every completed layer.
    """
    if config.variant is Variant.EXPLICIT2:
        return run_explicit2(spec, config, observers, keep_layers)
    if config.variant is Variant.FACTORED:
        stepper = FactoredStepper(spec, config)
        stability = None
    else:
        stepper = ThreeLevelStepper(spec, config)
        from .analysis import stability_report  # local import to avoid a cycle

        stability = stability_report(spec, config)
        if not stability.admissible and not config.override_stability:
            raise RejectedConfigurationError(
                f"time step {spec.mesh.time_step} exceeds the admissibility bound "
                f"{stability.h_t_max_any:.6g}; pass override_stability=True to force"
            )
        stepper.flagged = not stability.satisfied
    v0 = spec.initial_layer("u0")
    for obs in observers:
        obs(TimeState(v0, v0, 0))
    state = stepper.first_step()
    result = RunResult(state=state,
                       layers=[state.v_prev.copy(), state.v_cur.copy()] if keep_layers else None)
    result.stability = stability
    for obs in observers:
        obs(state)
    for _ in range(1, spec.mesh.time_steps):
        state = stepper.step(state)
        if keep_layers:
            result.layers.append(state.v_cur.copy())
        for obs in observers:
            obs(state)
    result.state = state
    return result


class SnapshotWriter:
    """Observer writing CSV node dumps at the layers nearest requested times.

    Columns are the node coordinates (one per axis) followed by the value.
    ``profile`` optionally restricts the dump to a 1D line: a mapping of
    axis -> fixed coordinate for every axis except the profile axis.
    """

    def __init__(self, out_dir, times, profile_axis: int | None = None,
                 profile_coords: dict[int, float] | None = None, prefix="snapshot"):
        import pathlib

        self.out_dir = pathlib.Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.times = list(times)
        self.profile_axis = profile_axis
        self.profile_coords = profile_coords or {}
        self.prefix = prefix
        self._layers: dict[int, float] = {}
        self.written: list[str] = []

    def _target_layers(self, mesh: Mesh) -> dict[int, float]:
        if not self._layers:
            for t in self.times:
                m = int(round(t / mesh.time_step))
                if 0 <= m <= mesh.time_steps:
                    self._layers[m] = t
        return self._layers

    def __call__(self, state: TimeState) -> None:
        mesh = state.v_cur.mesh
        targets = self._target_layers(mesh)
        if state.m not in targets:
            return
        t = targets[state.m]
        path = self.out_dir / f"{self.prefix}_t{t:g}.csv"
        vals = state.v_cur.values
        coords = [mesh.axis_coords(k) for k in range(mesh.ndim)]
        index = [slice(None)] * mesh.ndim
        if self.profile_axis is not None:
            for ax, c in self.profile_coords.items():
                index[ax] = int(round(c / mesh.steps[ax]))
        sel = vals[tuple(index)]
        with open(path, "w") as fh:
            fh.write(",".join(f"x{k + 1}" for k in range(mesh.ndim)) + ",v\n")
            if self.profile_axis is not None:
                ax = self.profile_axis
                fixed = {k: coords[k][index[k]] for k in range(mesh.ndim) if k != ax}
                for i, x in enumerate(coords[ax]):
                    cols = [fixed.get(k, x) if k != ax else x for k in range(mesh.ndim)]
                    fh.write(",".join(f"{c:.8e}" for c in cols) + f",{sel[i]:.8e}\n")
            else:
                grids = np.meshgrid(*coords, indexing="ij")
                flat = [g.ravel() for g in grids] + [vals.ravel()]
                for row in zip(*flat):
                    fh.write(",".join(f"{c:.8e}" for c in row) + "\n")
        self.written.append(str(path))
