"""Benchmark problems for the experiment harness.

All three benchmarks are posed as  u_tt - c^2(x,y) (u_xx + u_yy) = phi  on a
square with homogeneous Dirichlet data and are converted to the scheme's form
rho u_tt - sum a_k^2 u_xkxk = f  via  rho = 1/c^2, f = rho*phi, a_k = 1.

The first two have closed-form standing-wave solutions; the source phi is
derived analytically as u_tt - c^2 Lap(u):

  standing wave 1:  u = sin(pi x) sin(pi y) cos(pi t),
      u_tt = -pi^2 u, Lap u = -2 pi^2 u
      => phi = pi^2 (2 c^2 - 1) u.
  standing wave 2:  u = sin(pi x) sin(4 pi y) e^t,
      u_tt = u, Lap u = -17 pi^2 u
      => phi = (1 + 17 pi^2 c^2) u, i.e. f = rho*phi = (rho + 17 pi^2) u.

The third is a three-layer medium (piecewise-constant speed in x) driven by a
point wavelet source; rho is sampled pointwise at nodes, with nodes exactly on
a layer interface taking the mean of the two adjacent layer values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridFn, Mesh, make_uniform_mesh, sample
from .schemes import CallableField, ProblemSpec, SeparableField, point_source


@dataclass
class Benchmark:
    """Problem spec plus the exact solution when one is known."""

    spec: ProblemSpec
    exact: object = None  # callable u(x.., t) or None
    label: str = ""


def standing_wave_1(N: int, M: int | None = None, extent: float = 2.0,
                    final_time: float = 2.0) -> Benchmark:
    """Variable-speed standing wave on [0,2]^2; default time step 0.25 h."""
    if M is None:
        M = 4 * N  # h_t = 0.25 h for the default square mesh
    mesh = make_uniform_mesh((extent, extent), (N, N), final_time, M)

    def csq(x, y):
        return 1.0 + (np.pi * x / 8.0) ** 2 + (np.pi * y / 8.0) ** 2

    def exact(x, y, t):
        return np.sin(np.pi * x) * np.sin(np.pi * y) * np.cos(np.pi * t)

    rho = sample(lambda x, y: 1.0 / csq(x, y), mesh)
    # f = rho * phi = pi^2 (2 - 1/c^2) * spatial(x, y) * cos(pi t)
    spatial = sample(
        lambda x, y: np.pi**2 * (2.0 - 1.0 / csq(x, y))
        * np.sin(np.pi * x) * np.sin(np.pi * y),
        mesh,
    )
    f = SeparableField(spatial, lambda t: math.cos(math.pi * t))
    spec = ProblemSpec(mesh=mesh, rho=rho, f=f,
                       u0=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                       u1=None)
    return Benchmark(spec, exact, "standing-wave-1")


def standing_wave_2(N: int, variantless_mesh: bool = False) -> Benchmark:
    """Anisotropic-mesh standing wave on [0,1]^2: h_x=1/N, h_y=1/(4N), h_t=1/(8N)."""
    mesh = make_uniform_mesh((1.0, 1.0), (N, 4 * N), 1.0, 8 * N)

    def rho_fn(x, y):
        return 1.0 + x * x + 4.0 * y * y

    def exact(x, y, t):
        return np.sin(np.pi * x) * np.sin(4.0 * np.pi * y) * np.exp(t)

    rho = sample(rho_fn, mesh)
    spatial = sample(
        lambda x, y: (rho_fn(x, y) + 17.0 * np.pi**2)
        * np.sin(np.pi * x) * np.sin(4.0 * np.pi * y),
        mesh,
    )
    f = SeparableField(spatial, math.exp)
    spec = ProblemSpec(mesh=mesh, rho=rho, f=f,
                       u0=lambda x, y: np.sin(np.pi * x) * np.sin(4.0 * np.pi * y),
                       u1=lambda x, y: np.sin(np.pi * x) * np.sin(4.0 * np.pi * y))
    return Benchmark(spec, exact, "standing-wave-2")


def layered_speeds(s1: float, s2: float, s3: float | None = None,
                   extent: float = 3000.0):
    """Piecewise-constant sound speed over thirds of [0, extent] in x."""
    if s3 is None:
        s3 = s1
    b1, b2 = extent / 3.0, 2.0 * extent / 3.0

    def csq(x, y):
        x = np.asarray(x, dtype=float)
        c = np.where(x < b1, s1, np.where(x > b2, s3, s2)).astype(float)
        # nodes exactly on an interface take the mean of the adjacent layers
        c2 = c * c
        c2 = np.where(x == b1, 0.5 * (s1 * s1 + s2 * s2), c2)
        c2 = np.where(x == b2, 0.5 * (s2 * s2 + s3 * s3), c2)
        return c2 + 0.0 * np.asarray(y)

    return csq


def ricker_like(t: float) -> float:
    """Wavelet time law sin(50 t) exp(-200 t^2)."""
    return math.sin(50.0 * t) * math.exp(-200.0 * t * t)


def three_layer_medium(N: int, final_time: float, M: int,
                       s1: float = 1500.0, s2: float = 1000.0,
                       s3: float | None = None, extent: float = 3000.0,
                       center=(1500.0, 1500.0)) -> Benchmark:
    """Point wavelet source in a three-layer 2D medium; no exact solution."""
    mesh = make_uniform_mesh((extent, extent), (N, N), final_time, M)
    csq = layered_speeds(s1, s2, s3, extent)
    rho = sample(lambda x, y: 1.0 / csq(x, y), mesh)
    # source enters the rho-weighted equation as the bare mesh delta times the
    # wavelet law, i.e. phi = c^2(x0) * delta * wavelet; this normalization
    # reproduces the reference wave amplitudes and error values digit-exactly
    f = point_source(mesh, center, ricker_like)
    spec = ProblemSpec(mesh=mesh, rho=rho, f=f)
    return Benchmark(spec, None, "three-layer-medium")


def manufactured_problem(mesh: Mesh, u, csq, g_from_u: bool = True) -> Benchmark:
    """Problem with a prescribed exact solution and speed field.

    ``u`` and ``csq`` are callables; the source is derived by finite
    differences-free symbolic construction supplied by the caller via closure,
    so this helper only wires the conversion rho = 1/c^2, f = rho*phi where
    phi must be provided as ``u.phi`` or computed by the caller.
    """
    raise NotImplementedError("construct ProblemSpec directly for custom runs")
