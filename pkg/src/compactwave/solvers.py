"""Iterative solvers for the implicit upper-time-level systems.

The system to solve at each time layer is

    B(rho * w) + sigma * h_t^2 * A w = b        (w in the zero-boundary space)

with commuting symmetric positive definite B and A.  Left-multiplying by
(1/rho) B^-1 puts it in the canonical form  M w = b~  with the diagonal
preconditioner rho and  M = rho*I + sigma*h_t^2*B^-1 A,  which under the
time-step admissibility condition is spectrally equivalent to the diagonal
with ratio  lam(eps0^2) = 1 + (1 - eps0^2)/2.  The one-step method with
theta_opt then contracts with factor q0, the Chebyshev cycle with roughly
q1^N, both independent of the mesh and of the coefficient spread.

The preconditioned residual of an iterate,

    y = w + (1/rho) B^-1 (sigma h_t^2 A w - b),

is what the update subtracts (scaled by theta), so each iteration costs one
elliptic application plus one B^-1 application; when B^-1 A is sine-diagonal
the combined action is two transforms and a pointwise multiply.

All iteration vectors are interior-shaped arrays.  A solve owns its scratch
buffers and the operator callbacks must be reentrant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SolverFailureError
from .grid import Mesh


def lambda_bar(eps0_sq: float) -> float:
    """Spectral-equivalence ratio of the preconditioned system."""
    _check_eps(eps0_sq)
    return 1.0 + 0.5 * (1.0 - eps0_sq)


def theta_opt(eps0_sq: float) -> float:
    """Optimal one-step relaxation parameter 2/(1 + lambda_bar)."""
    return 2.0 / (1.0 + lambda_bar(eps0_sq))


def q0(eps0_sq: float) -> float:
    """One-step contraction ratio (1 - eps0^2)/(5 - eps0^2) <= 0.2."""
    _check_eps(eps0_sq)
    return (1.0 - eps0_sq) / (5.0 - eps0_sq)


def q1(eps0_sq: float) -> float:
    """Chebyshev contraction ratio (sqrt(lam) - 1)/(sqrt(lam) + 1)."""
    s = np.sqrt(lambda_bar(eps0_sq))
    return float((s - 1.0) / (s + 1.0))


def _check_eps(eps0_sq: float) -> None:
    if not 0.0 <= eps0_sq < 1.0:
        raise ValueError(f"eps0^2 must lie in [0, 1), got {eps0_sq}")


@dataclass
class LinearSystem:
    """Operator actions of the upper-level system on interior arrays.

    ``apply_elliptic`` is the A action, ``apply_B_inv`` the B^-1 action
    (identity when B = I); ``apply_scaledBA`` may provide the fused
    sigma*h_t^2*B^-1*A action (e.g. one transform pair) and ``apply_full``
    the full operator w -> B(rho w) + sigma h_t^2 A w when a direct residual
    is wanted (tests, reporting).
    """

    mesh: Mesh
    rho: np.ndarray
    sigma_ht2: float
    apply_elliptic: Callable[[np.ndarray], np.ndarray]
    apply_B_inv: Callable[[np.ndarray], np.ndarray]
    apply_scaledBA: Callable[[np.ndarray], np.ndarray] | None = None
    apply_full: Callable[[np.ndarray], np.ndarray] | None = None

    def scaled_ba(self, w: np.ndarray) -> np.ndarray:
        """sigma*h_t^2*B^-1*A applied to w."""
        if self.apply_scaledBA is not None:
            return self.apply_scaledBA(w)
        return self.sigma_ht2 * self.apply_B_inv(self.apply_elliptic(w))

    def apply_P_inv(self, r: np.ndarray) -> np.ndarray:
        """Preconditioner action (1/rho) B^-1."""
        return self.apply_B_inv(r) / self.rho

    def residual_fn(self, b: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Preconditioned residual w -> w + (1/rho) B^-1 (sigma h_t^2 A w - b)."""
        pb = self.apply_P_inv(b)

        def y_of(w: np.ndarray) -> np.ndarray:
            return w + self.scaled_ba(w) / self.rho - pb

        return y_of

    def precond_residual(self, w: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.residual_fn(b)(w)

    def norm_h(self, v: np.ndarray) -> float:
        return self.mesh.cell_volume ** 0.5 * float(np.linalg.norm(v))


@dataclass
class SolverConfig:
    """Iteration method, margin parameter and stopping control.

    ``eps0_sq`` feeds theta_opt/q0/q1; ``cheb_stages`` is the Chebyshev cycle
    length; ``tol`` is relative on the preconditioned residual norm
    ||(1/rho) B^-1 r||_h / ||(1/rho) B^-1 b||_h; ``guess`` picks the first
    iterate supplied by the time stepper.
    """

    method: str = "richardson"  # richardson | chebyshev | steepest_descent
    eps0_sq: float = 0.5
    cheb_stages: int = 8
    tol: float = 1e-10
    max_iter: int = 1000
    guess: str = "sigma0_predictor"  # | previous_layer | linear_extrapolation

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.cheb_stages < 1:
            raise ValueError("cheb_stages must be >= 1")
        _check_eps(self.eps0_sq)
        if self.method not in ("richardson", "chebyshev", "steepest_descent", "direct"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.guess not in ("sigma0_predictor", "previous_layer", "linear_extrapolation"):
            raise ValueError(f"unknown guess {self.guess!r}")


@dataclass
class SolveReport:
    """Outcome of one linear solve."""

    method: str
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    achieved: float = np.inf
    converged: bool = False
    flagged: bool = False  # contraction rate not guaranteed for this eps0^2
    wall_time: float = 0.0


def sigma0_predictor(system: LinearSystem, b: np.ndarray) -> np.ndarray:
    """Initial guess from the sigma = 0 form of the same equation.

    Dropping the sigma*h_t^2 A term leaves B(rho*w) = b, so the guess is
    (1/rho) B^-1 b, one fast transform.  For the interior update this equals
    -(1/rho) B^-1 (A v - f): it solves the sigma = 0 system exactly.
    """
    return system.apply_P_inv(b)


def _iterate(system: LinearSystem, cfg: SolverConfig, b, x0, thetas, flagged):
    """Shared driver: stop on the relative preconditioned residual."""
    t_start = time.perf_counter()
    report = SolveReport(method=cfg.method, flagged=flagged)
    b_ref = system.norm_h(system.apply_P_inv(b))
    floor = b_ref if b_ref > 0.0 else 1.0
    y_of = system.residual_fn(b)
    w = np.array(x0, dtype=float, copy=True)
    for it in range(cfg.max_iter + 1):
        y = y_of(w)
        res = system.norm_h(y)
        report.residuals.append(res)
        report.achieved = res / floor
        if report.achieved <= cfg.tol:
            report.converged = True
            report.iterations = it
            report.wall_time = time.perf_counter() - t_start
            return w, report
        if it == cfg.max_iter:
            break
        w -= thetas(it, y) * y
    report.iterations = cfg.max_iter
    report.wall_time = time.perf_counter() - t_start
    raise SolverFailureError(
        f"{cfg.method} did not reach tol={cfg.tol} in {cfg.max_iter} iterations "
        f"(achieved {report.achieved:.3e})",
        report,
    )


def richardson_solve(system: LinearSystem, cfg: SolverConfig, x0: np.ndarray,
                     b: np.ndarray, flagged: bool = False):
    """One-step method with the constant optimal parameter theta_opt."""
    theta = theta_opt(cfg.eps0_sq)
    return _iterate(system, cfg, b, x0, lambda it, y: theta, flagged)


def chebyshev_solve(system: LinearSystem, cfg: SolverConfig, x0: np.ndarray,
                    b: np.ndarray, flagged: bool = False):
    """Cyclic Chebyshev acceleration of the one-step method.

    Stage parameters theta^(l) = theta_opt / (1 + q0 cos(pi (l + 1/2) / N));
    cycles of length N restart until the tolerance is met.
    """
    th0 = theta_opt(cfg.eps0_sq)
    qq = q0(cfg.eps0_sq)
    N = cfg.cheb_stages
    stage = [th0 / (1.0 + qq * np.cos(np.pi * (l + 0.5) / N)) for l in range(N)]
    return _iterate(system, cfg, b, x0, lambda it, y: stage[it % N], flagged)


def steepest_descent_solve(system: LinearSystem, cfg: SolverConfig, x0: np.ndarray,
                           b: np.ndarray, flagged: bool = False):
    """Variational one-step method; needs no spectral-equivalence constant.

    The step length minimizes the error in the canonical-operator norm:
    theta_l = (rho y, y)_h / ((rho y, y)_h + sigma h_t^2 (B^-1 A y, y)_h)
    with y the preconditioned residual.
    """

    def theta_of(it, y):
        num = float(np.sum(system.rho * y * y))
        den = num + float(np.sum(system.scaled_ba(y) * y))
        if den <= 0.0:
            return 1.0
        return num / den

    return _iterate(system, cfg, b, x0, theta_of, flagged)


def direct_solve(system: LinearSystem, cfg: SolverConfig, x0: np.ndarray,
                 b: np.ndarray, flagged: bool = False):
    """Dense LU solve for small systems (factored once per system).

    Intended for the sigma = 1/4 variant at extreme time steps, where the
    canonical conditioning grows like h_t^6 and one-step iterations stall.
    """
    import scipy.linalg as sla

    if system.apply_full is None:
        raise ValueError("direct solve needs the full operator action")
    if b.size > 20000:
        raise ValueError("direct solve is restricted to small systems")
    lu = getattr(system, "_dense_lu", None)
    if lu is None:
        t0 = time.perf_counter()
        P = b.size
        mat = np.empty((P, P))
        e = np.zeros(b.shape)
        flat = e.reshape(-1)
        for i in range(P):
            flat[i] = 1.0
            mat[:, i] = system.apply_full(e).reshape(-1)
            flat[i] = 0.0
        lu = sla.lu_factor(mat)
        system._dense_lu = lu
    t0 = time.perf_counter()
    w = sla.lu_solve(lu, b.reshape(-1)).reshape(b.shape)
    res = system.norm_h(system.residual_fn(b)(w))
    b_ref = system.norm_h(system.apply_P_inv(b))
    report = SolveReport(method="direct", iterations=1, residuals=[res],
                         achieved=res / (b_ref if b_ref > 0 else 1.0),
                         converged=True, flagged=flagged,
                         wall_time=time.perf_counter() - t0)
    return w, report


_METHODS = {
    "richardson": richardson_solve,
    "chebyshev": chebyshev_solve,
    "steepest_descent": steepest_descent_solve,
    "direct": direct_solve,
}


def solve(system: LinearSystem, cfg: SolverConfig, x0: np.ndarray, b: np.ndarray,
          flagged: bool = False):
    """Dispatch on ``cfg.method``; returns (solution, SolveReport)."""
    return _METHODS[cfg.method](system, cfg, x0, b, flagged)
