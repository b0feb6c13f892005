"""Compact scheme on non-uniform 1D meshes in space and time.

The per-axis Numerov average generalizes on a non-uniform mesh to the
three-point row (alpha_l, 10 gamma_l, beta_l)/12 with

    alpha_l = 2 - h_{l+}^2/(h_l h_{*l}),   beta_l = 2 - h_l^2/(h_{l+} h_{*l}),
    gamma_l = 1 + (h_{l+} - h_l)^2 / (5 h_l h_{l+}),
    h_{*l} = (h_l + h_{l+})/2,             alpha + 10 gamma + beta = 12,

and the same formulas give the time-average weights per layer.  The stepper
solves the product-variant three-level scheme directly by one tridiagonal
solve per layer (the spatial operator is three-point), so no iteration is
needed.  Only n = 1 is supported: in several dimensions the generalized
averages are no longer self-adjoint and do not commute with the second
differences, so the uniform-mesh solver and stability theory do not carry
over.

The approximation order on general meshes is 3 in the largest step and stays
4 for slowly varying steps; a convergence study is the practical check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverFailureError


@dataclass(frozen=True)
class NonUniMesh1D:
    """Strictly increasing space nodes 0..X and time nodes 0..T."""

    x: tuple[float, ...]
    t: tuple[float, ...]

    def __post_init__(self):
        x = np.asarray(self.x)
        t = np.asarray(self.t)
        if len(x) < 3 or len(t) < 3:
            raise ValueError("need at least 3 space nodes and 3 time nodes")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        if x[0] != 0.0 or t[0] != 0.0:
            raise ValueError("meshes must start at 0")

    @property
    def x_arr(self) -> np.ndarray:
        return np.asarray(self.x)

    @property
    def t_arr(self) -> np.ndarray:
        return np.asarray(self.t)

    @property
    def n_cells(self) -> int:
        return len(self.x) - 1

    @property
    def n_layers(self) -> int:
        return len(self.t) - 1

    @classmethod
    def uniform(cls, X: float, N: int, T: float, M: int) -> "NonUniMesh1D":
        return cls(tuple(np.linspace(0.0, X, N + 1)), tuple(np.linspace(0.0, T, M + 1)))

    @classmethod
    def graded(cls, X: float, N: int, T: float, M: int,
               grade: Callable[[np.ndarray], np.ndarray]) -> "NonUniMesh1D":
        """Space nodes X*grade(l/N) for a smooth monotone grade with g(0)=0, g(1)=1."""
        s = np.asarray(grade(np.linspace(0.0, 1.0, N + 1)), dtype=float)
        return cls(tuple(X * s), tuple(np.linspace(0.0, T, M + 1)))


@dataclass
class NonUniCoeffs:
    """Per-node space weights and per-layer time weights of the averages."""

    alpha_x: np.ndarray  # at interior space nodes 1..N-1
    gamma_x: np.ndarray
    beta_x: np.ndarray
    alpha_t: np.ndarray  # at interior time layers 1..M-1
    gamma_t: np.ndarray
    beta_t: np.ndarray


def _weights(nodes: np.ndarray):
    h = np.diff(nodes)
    hm, hp = h[:-1], h[1:]
    hstar = 0.5 * (hm + hp)
    alpha = 2.0 - hp * hp / (hm * hstar)
    beta = 2.0 - hm * hm / (hp * hstar)
    gamma = 1.0 + (hp - hm) ** 2 / (5.0 * hm * hp)
    return alpha, gamma, beta


def nonuni_coeffs(mesh: NonUniMesh1D) -> NonUniCoeffs:
    """Generalized Numerov weights; all (1, 1, 1) on a uniform mesh."""
    ax, gx, bx = _weights(mesh.x_arr)
    at, gt, bt = _weights(mesh.t_arr)
    return NonUniCoeffs(ax, gx, bx, at, gt, bt)


def _fd0_weights(t1: float, t2: float) -> tuple[float, float, float]:
    """Weights of f(0), f(t1), f(t2) in p(0) + (t1/3) p'(0) + (t1^2/12) p''(0)
    for the quadratic interpolant p; (7/12, 1/2, -1/12) when t2 = 2 t1."""
    d0 = -(t1 + t2) / (t1 * t2)
    d1 = -t2 / (t1 * (t1 - t2))
    d2 = -t1 / (t2 * (t2 - t1))
    c0 = 1.0 / (t1 * t2)
    c1 = 1.0 / (t1 * (t1 - t2))
    c2 = 1.0 / (t2 * (t2 - t1))
    w = t1 / 3.0
    s = t1 * t1 / 6.0
    return 1.0 + w * d0 + s * c0, w * d1 + s * c1, w * d2 + s * c2


@dataclass
class NonUniProblem1D:
    """1D problem data: rho(x) u_tt - a^2 u_xx = f, Dirichlet boundary."""

    rho: Callable[[np.ndarray], np.ndarray]
    a: float = 1.0
    f: Callable[[np.ndarray, float], np.ndarray] | None = None
    u0: Callable[[np.ndarray], np.ndarray] | None = None
    u1: Callable[[np.ndarray], np.ndarray] | None = None
    g0: Callable[[float], float] | None = None  # left boundary value of u
    gX: Callable[[float], float] | None = None  # right boundary value of u


class NonUniStepper:
    """Direct tridiagonal stepper for the product-variant scheme, n = 1."""

    def __init__(self, prob: NonUniProblem1D, mesh: NonUniMesh1D,
                 slow_varying_f0: bool = False):
        self.prob = prob
        self.mesh = mesh
        self.slow_varying_f0 = slow_varying_f0
        self.x = mesh.x_arr
        self.t = mesh.t_arr
        self.coeffs = nonuni_coeffs(mesh)
        self.rho = np.asarray(prob.rho(self.x), dtype=float)
        if np.min(self.rho) <= 0.0:
            raise ValueError("rho must be positive")
        h = np.diff(self.x)
        self.hm, self.hp = h[:-1], h[1:]
        self.hstar = 0.5 * (self.hm + self.hp)

    # -- closed-array operator actions (values at interior nodes) --

    def lam(self, w: np.ndarray) -> np.ndarray:
        return ((w[2:] - w[1:-1]) / self.hp - (w[1:-1] - w[:-2]) / self.hm) / self.hstar

    def avg(self, w: np.ndarray) -> np.ndarray:
        c = self.coeffs
        return (c.alpha_x * w[:-2] + 10.0 * c.gamma_x * w[1:-1] + c.beta_x * w[2:]) / 12.0

    def elliptic(self, w: np.ndarray) -> np.ndarray:
        return -self.prob.a ** 2 * self.lam(w)

    def _f(self, t: float) -> np.ndarray:
        if self.prob.f is None:
            return np.zeros_like(self.x)
        return np.asarray(self.prob.f(self.x, t), dtype=float)

    def _sample(self, fn) -> np.ndarray:
        if fn is None:
            return np.zeros_like(self.x)
        return np.asarray(fn(self.x), dtype=float)

    def _bc(self, t: float) -> tuple[float, float]:
        left = self.prob.g0(t) if self.prob.g0 is not None else 0.0
        right = self.prob.gX(t) if self.prob.gX is not None else 0.0
        return float(left), float(right)

    def _solve_tridiag(self, ht_coef: float, rhs_int: np.ndarray,
                       z_left: float, z_right: float) -> np.ndarray:
        """Solve [avg(rho .) + ht_coef * elliptic] z = rhs with given boundary z."""
        c = self.coeffs
        a2 = self.prob.a ** 2
        sub = c.alpha_x * self.rho[:-2] / 12.0 - ht_coef * a2 / (self.hstar * self.hm)
        dia = (10.0 * c.gamma_x * self.rho[1:-1] / 12.0
               + ht_coef * a2 * (1.0 / self.hp + 1.0 / self.hm) / self.hstar)
        sup = c.beta_x * self.rho[2:] / 12.0 - ht_coef * a2 / (self.hstar * self.hp)
        rhs = rhs_int.copy()
        rhs[0] -= sub[0] * z_left
        rhs[-1] -= sup[-1] * z_right
        n = len(dia)
        ab = np.zeros((3, n))
        ab[0, 1:] = sup[:-1]
        ab[1, :] = dia
        ab[2, :-1] = sub[1:]
        try:
            sol = solve_banded((1, 1), ab, rhs, check_finite=False)
        except Exception as exc:  # singular system for a wild enough mesh
            raise SolverFailureError(f"non-uniform tridiagonal solve failed: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise SolverFailureError("non-uniform tridiagonal solve produced non-finite values")
        out = np.empty(len(self.x))
        out[0], out[-1] = z_left, z_right
        out[1:-1] = sol
        return out

    # -- stepping --

    def first_layer(self) -> tuple[np.ndarray, np.ndarray]:
        """Returns (v^0, v^1)."""
        t1 = self.t[1]
        ht1 = t1 - self.t[0]
        v0 = self._sample(self.prob.u0)
        v0[0], v0[-1] = self._bc(0.0)
        u1 = self._sample(self.prob.u1)
        f0, f1 = self._f(0.0), self._f(t1)
        if self.slow_varying_f0:
            # avg(f^0) - f^0 + third-order start combination fitted to the
            # actual (possibly non-uniform) first two time steps
            w0, w1, w2 = _fd0_weights(self.t[1], self.t[2])
            fd0 = w0 * f0[1:-1] + w1 * f1[1:-1] + w2 * self._f(self.t[2])[1:-1]
            fN0 = self.avg(f0) - f0[1:-1] + fd0
        else:
            fN0 = self.avg(f0) + (f1[1:-1] - f0[1:-1]) / 3.0
        rhs = (-0.5 * ht1 * self.elliptic(v0)
               + self.avg(self.rho * u1)
               - (ht1 * ht1 / 12.0) * self.elliptic(u1)
               + 0.5 * ht1 * fN0)
        gl0, gr0 = self._bc(0.0)
        gl1, gr1 = self._bc(t1)
        dt0 = self._solve_tridiag(ht1 * ht1 / 12.0, rhs,
                                  (gl1 - gl0) / ht1, (gr1 - gr0) / ht1)
        v1 = v0 + ht1 * dt0
        return v0, v1

    def run(self, keep_layers: bool = False):
        """March to the final time; returns (v at T, optional layer list)."""
        c = self.coeffs
        v_prev, v_cur = self.first_layer()
        layers = [v_prev.copy(), v_cur.copy()] if keep_layers else None
        for m in range(1, self.mesh.n_layers):
            tm = self.t[m]
            ht = self.t[m] - self.t[m - 1]
            htp = self.t[m + 1] - self.t[m]
            hts = 0.5 * (ht + htp)
            at, gt, bt = c.alpha_t[m - 1], c.gamma_t[m - 1], c.beta_t[m - 1]
            dbar = (v_cur - v_prev) / ht
            f_avg = (at * self._f(self.t[m - 1]) + 10.0 * gt * self._f(tm)
                     + bt * self._f(self.t[m + 1])) / 12.0
            rhs = (self.avg(self.rho * dbar)
                   + (hts * ht / 12.0) * at * self.elliptic(dbar)
                   - hts * self.elliptic(v_cur)
                   + hts * self.avg(f_avg))
            glm, grm = self._bc(tm)
            glp, grp = self._bc(self.t[m + 1])
            dt_bc_l = (glp - glm) / htp
            dt_bc_r = (grp - grm) / htp
            dt = self._solve_tridiag(hts * htp * bt / 12.0, rhs, dt_bc_l, dt_bc_r)
            v_prev, v_cur = v_cur, v_cur + htp * dt
            if keep_layers:
                layers.append(v_cur.copy())
        return v_cur, layers


def nonuni_step(v_prev: np.ndarray, v_cur: np.ndarray, m: int,
                prob: NonUniProblem1D, mesh: NonUniMesh1D) -> np.ndarray:
    """One interior step of the non-uniform scheme (stand-alone form)."""
    stepper = NonUniStepper(prob, mesh)
    c = stepper.coeffs
    t = mesh.t_arr
    ht = t[m] - t[m - 1]
    htp = t[m + 1] - t[m]
    hts = 0.5 * (ht + htp)
    at, gt, bt = c.alpha_t[m - 1], c.gamma_t[m - 1], c.beta_t[m - 1]
    dbar = (v_cur - v_prev) / ht
    f_avg = (at * stepper._f(t[m - 1]) + 10.0 * gt * stepper._f(t[m])
             + bt * stepper._f(t[m + 1])) / 12.0
    rhs = (stepper.avg(stepper.rho * dbar)
           + (hts * ht / 12.0) * at * stepper.elliptic(dbar)
           - hts * stepper.elliptic(v_cur)
           + hts * stepper.avg(f_avg))
    glm, grm = stepper._bc(t[m])
    glp, grp = stepper._bc(t[m + 1])
    dt = stepper._solve_tridiag(hts * htp * bt / 12.0, rhs,
                                (glp - glm) / htp, (grp - grm) / htp)
    return v_cur + htp * dt


def read_mesh_file(path) -> NonUniMesh1D:
    """Plain-text mesh: a 'space' section then a 'time' section, one node per line."""
    sections: dict[str, list[float]] = {}
    current: list[float] | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.lower() in ("space", "time"):
                current = sections.setdefault(line.lower(), [])
                continue
            if current is None:
                raise ValueError(f"{path}:{lineno}: node before a section header")
            current.append(float(line))
    if "space" not in sections or "time" not in sections:
        raise ValueError(f"{path}: need both a 'space' and a 'time' section")
    return NonUniMesh1D(tuple(sections["space"]), tuple(sections["time"]))


def write_mesh_file(path, mesh: NonUniMesh1D) -> None:
    with open(path, "w") as fh:
        fh.write("space\n")
        for v in mesh.x:
            fh.write(f"{v!r}\n")
        fh.write("time\n")
        for v in mesh.t:
            fh.write(f"{v!r}\n")
