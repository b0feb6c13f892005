"""Configuration-driven experiment runner.

Subcommands:

  run          one simulation from a config file (snapshots, energy ledger)
  convergence  mesh-sequence error/rate table (exact or self-convergence)
  example3     layered-medium iteration-count grid plus wave profiles
  checks       quick invariant suite on small meshes

Config files are INI ("key = value" under [problem], [mesh], [scheme],
[solver], [output] sections); see the README for the schema.  Manufactured
problems take numpy expressions of x, y(, z) and t for the solution, squared
speed and source.  Exit codes: 0 success, 2 config error, 3 stability
rejection, 4 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, problems
from .errors import (
    CompactWaveError,
    ConfigError,
    RejectedConfigurationError,
    SolverFailureError,
)
from .grid import interior, make_uniform_mesh, sample
from .nonuniform import NonUniProblem1D, NonUniStepper, read_mesh_file
from .schemes import (
    CallableField,
    F0Variant,
    ProblemSpec,
    SchemeConfig,
    SnapshotWriter,
    Variant,
    run,
    run_explicit2,
)
from .solvers import SolverConfig

_PROBLEM_KINDS = ("example1", "example2", "example3", "manufactured", "from-file")


@dataclass
class RunConfig:
    """Validated run configuration."""

    problem: str
    scheme: SchemeConfig
    N_list: list[int]
    M: int | None  # None = per-problem default coupling of h_t to h
    T: float | None
    out_dir: Path
    table: str = "table.csv"
    snapshot_times: list[float] = field(default_factory=list)
    snapshot_axis_coord: float | None = None
    ledger: str | None = None
    # example3 specifics
    s1: float = 1500.0
    s2: float = 1000.0
    s3: float | None = None
    source: tuple[float, float] = (1500.0, 1500.0)
    s1_values: list[float] = field(default_factory=lambda: [1000.0, 1500.0, 3000.0, 6000.0])
    h_values: list[float] = field(default_factory=lambda: [15.0, 7.5])
    # manufactured expressions
    expressions: dict = field(default_factory=dict)
    mesh_file: str | None = None


def _expr_fn(expr: str, nvars: int, with_t: bool, where: str):
    """Compile a numpy expression of the coordinates (and t)."""
    names = ["x", "y", "z"][:nvars]
    ns = {k: getattr(np, k) for k in ("sin", "cos", "exp", "tanh", "sqrt", "abs", "log")}
    ns["pi"] = np.pi
    ns["np"] = np
    try:
        code = compile(expr, f"<{where}>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: invalid expression {expr!r}: {exc}") from None

    if with_t:
        def fn(*args):
            loc = dict(zip(names + ["t"], args))
            return np.asarray(eval(code, {"__builtins__": {}}, {**ns, **loc})) + np.zeros_like(args[0] + args[-1])
    else:
        def fn(*args):
            loc = dict(zip(names, args))
            out = eval(code, {"__builtins__": {}}, {**ns, **loc})
            return np.asarray(out) + np.zeros_like(sum(args))

    return fn


def _get(cp, section, key, cast, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] {key}: required key is missing")
        return default
    raw = cp.get(section, key)
    try:
        if cast is bool:
            return cp.getboolean(section, key)
        if cast is list_int:
            return [int(v) for v in raw.replace(",", " ").split()]
        if cast is list_float:
            return [float(v) for v in raw.replace(",", " ").split()]
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None


def list_int(_):  # markers for _get
    raise NotImplementedError


def list_float(_):
    raise NotImplementedError


def parse_config(path) -> RunConfig:
    """Parse and validate an INI run configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")
    for section in cp.sections():
        if section not in ("problem", "mesh", "scheme", "solver", "output", "source"):
            raise ConfigError(f"[{section}]: unknown section")
    kind = _get(cp, "problem", "kind", str, required=True)
    if kind not in _PROBLEM_KINDS:
        raise ConfigError(
            f"[problem] kind: unknown value {kind!r}; expected one of {_PROBLEM_KINDS}"
        )

    variant = _get(cp, "scheme", "variant", str, "additive")
    try:
        variant = Variant(variant)
    except ValueError:
        raise ConfigError(
            f"[scheme] variant: unknown value {variant!r}; expected one of "
            f"{[v.value for v in Variant]}"
        ) from None
    f0 = _get(cp, "scheme", "f0_variant", str, "half_step")
    try:
        f0 = F0Variant(f0)
    except ValueError:
        raise ConfigError(f"[scheme] f0_variant: unknown value {f0!r}") from None

    method = _get(cp, "solver", "method", str, "richardson")
    guess = _get(cp, "solver", "guess", str, "sigma0_predictor")
    try:
        solver = SolverConfig(
            method=method,
            eps0_sq=_get(cp, "solver", "eps0_sq", float, 0.5),
            cheb_stages=_get(cp, "solver", "cheb_stages", int, 8),
            tol=_get(cp, "solver", "tol", float, 1e-10),
            max_iter=_get(cp, "solver", "max_iter", int, 1000),
            guess=guess,
        )
        scheme = SchemeConfig(
            variant=variant,
            beta=_get(cp, "scheme", "beta", float, 0.0),
            gamma=_get(cp, "scheme", "gamma", float, 1.0),
            theta=_get(cp, "scheme", "theta", float, 0.0),
            eps1=_get(cp, "scheme", "eps1", float, 1.0),
            eps0_sq=_get(cp, "scheme", "eps0_sq", float, 0.5),
            f0_variant=f0,
            solver=solver,
            override_stability=_get(cp, "scheme", "override_stability", bool, False),
        )
    except ValueError as exc:
        raise ConfigError(f"[scheme]/[solver]: {exc}") from None

    cfg = RunConfig(
        problem=kind,
        scheme=scheme,
        N_list=_get(cp, "mesh", "N", list_int, [8, 16, 32, 64]),
        M=_get(cp, "mesh", "M", int, None),
        T=_get(cp, "mesh", "T", float, None),
        out_dir=Path(_get(cp, "output", "out_dir", str, "out")),
        table=_get(cp, "output", "table", str, "table.csv"),
        snapshot_times=_get(cp, "output", "snapshot_times", list_float, []),
        snapshot_axis_coord=_get(cp, "output", "snapshot_y", float, None),
        ledger=_get(cp, "output", "ledger", str, None),
        s1=_get(cp, "source", "s1", float, 1500.0),
        s2=_get(cp, "source", "s2", float, 1000.0),
        s3=_get(cp, "source", "s3", float, None),
        source=(
            _get(cp, "source", "x0", float, 1500.0),
            _get(cp, "source", "y0", float, 1500.0),
        ),
        s1_values=_get(cp, "source", "s1_values", list_float,
                       [1000.0, 1500.0, 3000.0, 6000.0]),
        h_values=_get(cp, "source", "h_values", list_float, [15.0, 7.5]),
        mesh_file=_get(cp, "problem", "mesh_file", str, None),
    )
    if any(N < 2 for N in cfg.N_list):
        raise ConfigError("[mesh] N: all entries must be >= 2")
    if kind == "manufactured":
        for key in ("u", "csq", "phi"):
            cfg.expressions[key] = _get(cp, "problem", key, str, required=True)
        cfg.expressions["u1"] = _get(cp, "problem", "u1", str, None)
        cfg.expressions["extent"] = _get(cp, "problem", "extent", float, 1.0)
    if kind == "from-file":
        if cfg.mesh_file is None:
            raise ConfigError("[problem] mesh_file: required for kind = from-file")
        for key in ("rho", "u0", "u1", "f", "u"):
            cfg.expressions[key] = _get(cp, "problem", key, str, None)
    return cfg


# --- benchmark construction -------------------------------------------------------


def _build_benchmark(cfg: RunConfig, N: int):
    if cfg.problem == "example1":
        M = cfg.M if cfg.M is not None else 4 * N  # h_t = 0.25 h
        return problems.standing_wave_1(N, M=M)
    if cfg.problem == "example2":
        return problems.standing_wave_2(N)
    if cfg.problem == "example3":
        T = cfg.T if cfg.T is not None else 0.8
        M = cfg.M if cfg.M is not None else N
        return problems.three_layer_medium(
            N, T, M, s1=cfg.s1, s2=cfg.s2, s3=cfg.s3, center=cfg.source
        )
    if cfg.problem == "manufactured":
        X = cfg.expressions["extent"]
        T = cfg.T if cfg.T is not None else 1.0
        M = cfg.M if cfg.M is not None else 4 * N
        mesh = make_uniform_mesh((X, X), (N, N), T, M)
        u_fn = _expr_fn(cfg.expressions["u"], 2, True, "problem.u")
        csq_fn = _expr_fn(cfg.expressions["csq"], 2, False, "problem.csq")
        phi_fn = _expr_fn(cfg.expressions["phi"], 2, True, "problem.phi")
        rho = sample(lambda x, y: 1.0 / csq_fn(x, y), mesh)
        f = CallableField(lambda x, y, t: phi_fn(x, y, t) / csq_fn(x, y))
        u1_fn = None
        if cfg.expressions.get("u1"):
            u1_fn = _expr_fn(cfg.expressions["u1"], 2, False, "problem.u1")
        spec = ProblemSpec(
            mesh=mesh, rho=rho, f=f,
            u0=lambda x, y: u_fn(x, y, 0.0),
            u1=u1_fn,
            g=CallableField(u_fn),
        )
        return problems.Benchmark(spec, u_fn, "manufactured")
    raise ConfigError(f"problem kind {cfg.problem!r} has no uniform-mesh benchmark")


# --- convergence tables -----------------------------------------------------------


@dataclass
class ConvergenceRow:
    N: int
    h_x: float
    h_y: float
    h_t: float
    e_l2: float
    p_l2: float | None
    e_linf: float
    p_linf: float | None
    n_iter: int
    cpu_time: float


_CSV_HEADER = ["N", "h_x", "h_y", "h_t", "e_L2", "p_L2", "e_Linf", "p_Linf",
               "N_iter", "cpu_time"]


def emit_csv(rows: list[ConvergenceRow], path) -> None:
    """Write the table with >= 6 significant digits, '.' decimal separator."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for r in rows:
            w.writerow([
                r.N,
                f"{r.h_x:.8e}", f"{r.h_y:.8e}", f"{r.h_t:.8e}",
                f"{r.e_l2:.8e}",
                "" if r.p_l2 is None else f"{r.p_l2:.4f}",
                f"{r.e_linf:.8e}",
                "" if r.p_linf is None else f"{r.p_linf:.4f}",
                r.n_iter,
                f"{r.cpu_time:.3f}",
            ])


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _rates(values):
    out = [None]
    for prev, cur in zip(values, values[1:]):
        out.append(math.log2(prev / cur))
    return out


def run_convergence(cfg: RunConfig, observers=()) -> list[ConvergenceRow]:
    """Error/rate table over the configured mesh sequence.

    Examples 1-2 and manufactured problems measure against the exact solution
    at t = T; the layered medium self-converges (each run against the
    half-step run restricted to the coarse nodes).
    """
    rows = []
    if cfg.problem == "example3":
        return _run_self_convergence(cfg)
    for N in cfg.N_list:
        bench = _build_benchmark(cfg, N)
        t0 = time.perf_counter()
        if cfg.scheme.variant is Variant.EXPLICIT2:
            result = run_explicit2(bench.spec, cfg.scheme)
        else:
            result = run(bench.spec, cfg.scheme, observers=observers)
        cpu = time.perf_counter() - t0
        e2, einf = analysis.table_errors(
            result.state.v_cur, bench.exact, bench.spec.mesh.final_time
        )
        mesh = bench.spec.mesh
        rows.append(ConvergenceRow(N, mesh.steps[0], mesh.steps[-1], mesh.time_step,
                                   e2, None, einf, None, result.max_iterations, cpu))
    _fill_rates(rows)
    return rows


def _fill_rates(rows):
    e2 = _rates([r.e_l2 for r in rows])
    einf = _rates([r.e_linf for r in rows])
    for r, p2, pinf in zip(rows, e2, einf):
        r.p_l2, r.p_linf = p2, pinf


def _restrict_to_coarse(fine: np.ndarray) -> np.ndarray:
    return fine[::2, ::2]


def _run_self_convergence(cfg: RunConfig) -> list[ConvergenceRow]:
    """Layered-medium error table: v_h against v_{h/2} on the coarse nodes."""
    T = cfg.T if cfg.T is not None else 0.8
    N_all = list(cfg.N_list) + [2 * cfg.N_list[-1]]
    solutions: dict[int, np.ndarray] = {}
    iters: dict[int, int] = {}
    times: dict[int, float] = {}
    reference = None
    if cfg.scheme.variant is Variant.EXPLICIT2:
        # reference: implicit additive-scheme solution on the finest mesh
        ref_cfg = SchemeConfig(variant=Variant.ADDITIVE,
                               solver=SolverConfig(tol=cfg.scheme.solver.tol))
        N_ref = 2 * cfg.N_list[-1]
        bench = problems.three_layer_medium(N_ref, T, int(round(T * N_ref / 0.8)),
                                            s1=cfg.s1, s2=cfg.s2, s3=cfg.s3,
                                            center=cfg.source)
        reference = run(bench.spec, ref_cfg).state.v_cur.values
        N_all = list(cfg.N_list)
    for N in N_all:
        bench = problems.three_layer_medium(N, T, cfg.M if cfg.M else int(round(T * N / 0.8)),
                                            s1=cfg.s1, s2=cfg.s2, s3=cfg.s3,
                                            center=cfg.source)
        t0 = time.perf_counter()
        if cfg.scheme.variant is Variant.EXPLICIT2:
            result = run_explicit2(bench.spec, cfg.scheme)
        else:
            result = run(bench.spec, cfg.scheme)
        times[N] = time.perf_counter() - t0
        solutions[N] = result.state.v_cur.values
        iters[N] = result.max_iterations
    rows = []
    for N in cfg.N_list:
        if reference is not None:
            fine = reference
            skip = (2 * cfg.N_list[-1]) // N
            fine_on_coarse = fine[::skip, ::skip]
        else:
            fine_on_coarse = _restrict_to_coarse(solutions[2 * N])
        diff = interior(solutions[N] - fine_on_coarse)
        # scaled L2: root mean square over interior nodes; max norm companion
        e2 = float(np.sqrt(np.mean(diff**2)))
        einf = float(np.max(np.abs(diff)))
        h = 3000.0 / N
        rows.append(ConvergenceRow(N, h, h, T / (cfg.M if cfg.M else int(round(T * N / 0.8))),
                                   e2, None, einf, None, iters[N], times[N]))
    _fill_rates(rows)
    return rows


# --- layered-medium grid ---------------------------------------------------------


# (speed, final time, coarse-mesh time step) rows of the robustness grid;
# the half-step column uses h_t/2.
_LAYER_GRID = {1000.0: (1.0, 0.005), 1500.0: (0.8, 0.004),
               3000.0: (0.6, 0.002), 6000.0: (0.6, 0.0012)}


def run_example3(cfg: RunConfig) -> list[dict]:
    """Iteration-count grid over (s1, h) plus optional wave profiles."""
    out = []
    for s1 in cfg.s1_values:
        T, ht_coarse = _LAYER_GRID.get(s1, (cfg.T or 0.8, None))
        for h in cfg.h_values:
            N = int(round(3000.0 / h))
            ht = ht_coarse * h / cfg.h_values[0] if ht_coarse else (cfg.T or 0.8) / N
            M = int(round(T / ht))
            bench = problems.three_layer_medium(N, T, M, s1=s1, s2=cfg.s2,
                                                s3=cfg.s3, center=cfg.source)
            observers = []
            writer = None
            if cfg.snapshot_times and h == cfg.h_values[0] and s1 == cfg.s1:
                ycoord = cfg.snapshot_axis_coord
                ycoord = 1500.0 if ycoord is None else ycoord
                writer = SnapshotWriter(cfg.out_dir, cfg.snapshot_times,
                                        profile_axis=0, profile_coords={1: ycoord},
                                        prefix=f"profile_s1_{s1:g}")
                observers.append(writer)
            t0 = time.perf_counter()
            result = run(bench.spec, cfg.scheme, observers=observers)
            out.append({
                "s1": s1, "T": T, "h": h, "h_t": bench.spec.mesh.time_step,
                "N_iter": result.max_iterations,
                "cpu_time": time.perf_counter() - t0,
            })
    return out


def emit_example3_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s1", "T", "h", "h_t", "N_iter", "cpu_time"])
        for r in rows:
            w.writerow([f"{r['s1']:g}", f"{r['T']:g}", f"{r['h']:g}",
                        f"{r['h_t']:.8e}", r["N_iter"], f"{r['cpu_time']:.3f}"])


# --- single run / from-file ------------------------------------------------------


def _run_single(cfg: RunConfig) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.problem == "from-file":
        return _run_from_file(cfg)
    N = cfg.N_list[0]
    bench = _build_benchmark(cfg, N)
    observers = []
    ledger = None
    if cfg.ledger:
        ledger = analysis.EnergyLedger(bench.spec, cfg.scheme)
        observers.append(ledger)
    if cfg.snapshot_times:
        prof = None
        coords = {}
        if cfg.snapshot_axis_coord is not None and bench.spec.mesh.ndim == 2:
            prof = 0
            coords = {1: cfg.snapshot_axis_coord}
        observers.append(SnapshotWriter(cfg.out_dir, cfg.snapshot_times,
                                        profile_axis=prof, profile_coords=coords))
    if cfg.scheme.variant is Variant.EXPLICIT2:
        result = run_explicit2(bench.spec, cfg.scheme, observers=observers)
    else:
        result = run(bench.spec, cfg.scheme, observers=observers)
    if ledger is not None:
        ledger.write_csv(cfg.out_dir / cfg.ledger)
    if bench.exact is not None:
        e2, einf = analysis.table_errors(result.state.v_cur, bench.exact,
                                         bench.spec.mesh.final_time)
        print(f"N={N}: e_L2={e2:.6e} e_Linf={einf:.6e} "
              f"N_iter={result.max_iterations}")
    else:
        print(f"N={N}: final layer max |v| = "
              f"{float(np.max(np.abs(result.state.v_cur.values))):.6e} "
              f"N_iter={result.max_iterations}")
    return 0


def _run_from_file(cfg: RunConfig) -> int:
    mesh = read_mesh_file(cfg.mesh_file)
    ex = cfg.expressions

    def fn1(key, default=None):
        if not ex.get(key):
            return default
        return _expr_fn(ex[key], 1, False, f"problem.{key}")

    def fn2(key):
        if not ex.get(key):
            return None
        return _expr_fn(ex[key], 1, True, f"problem.{key}")

    prob = NonUniProblem1D(
        rho=fn1("rho", lambda x: np.ones_like(x)),
        f=fn2("f"), u0=fn1("u0"), u1=fn1("u1"),
    )
    v, _ = NonUniStepper(prob, mesh).run()
    out = cfg.out_dir / "final_layer.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "v"])
        for x, val in zip(mesh.x_arr, v):
            w.writerow([f"{x:.8e}", f"{val:.8e}"])
    msg = f"wrote {out}"
    u_fn = fn2("u")
    if u_fn is not None:
        err = float(np.max(np.abs(v - u_fn(mesh.x_arr, mesh.t_arr[-1]))))
        msg += f"; e_Linf vs exact = {err:.6e}"
    print(msg)
    return 0


# --- quick invariant checks ------------------------------------------------------


def run_checks() -> int:
    """Small-mesh invariant suite; prints one line per check."""
    from . import operators as ops
    from .grid import GridFn, inner_product_h
    from .transforms import apply_inverse_diagonalizable

    rng = np.random.default_rng(7)
    mesh = make_uniform_mesh((1.3, 0.9), (7, 6), 1.0, 8)
    p = ops.OperatorParams(a=(1.1, 0.8))
    w = GridFn.from_interior(mesh, rng.standard_normal(mesh.interior_shape))
    z = GridFn.from_interior(mesh, rng.standard_normal(mesh.interior_shape))
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    for op in (ops.NUMEROV_SUM, ops.NUMEROV_PROD, ops.ELLIPTIC_SUM, ops.ELLIPTIC_PROD):
        lhs = inner_product_h(ops.apply_operator(op, p, w), z)
        rhs = inner_product_h(w, ops.apply_operator(op, p, z))
        check(f"symmetry of {op.tag.value}", abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs)))
    bw = ops.apply_operator(ops.NUMEROV_PROD, p, ops.apply_operator(ops.ELLIPTIC_SUM, p, w))
    ab = ops.apply_operator(ops.ELLIPTIC_SUM, p, ops.apply_operator(ops.NUMEROV_PROD, p, w))
    from .grid import norm_h
    check("commutation of averaged pair",
          norm_h(GridFn(mesh, bw.values - ab.values)) <= 1e-12 * norm_h(w))
    ray = inner_product_h(ops.apply_operator(ops.NUMEROV_PROD, p, w), w) / inner_product_h(w, w)
    check("product average spectrum in ((2/3)^n, 1)", (2.0 / 3.0) ** 2 < ray < 1.0)
    rt = apply_inverse_diagonalizable(ops.ELLIPTIC_PROD, p,
                                      ops.apply_operator(ops.ELLIPTIC_PROD, p, w))
    check("transform inverse round-trip",
          norm_h(GridFn(mesh, rt.values - w.values)) <= 1e-11 * norm_h(w))
    from .solvers import q0 as q0f, q1 as q1f
    grid = np.linspace(0.0, 0.99, 50)
    ratio_ok = all(0.5 < q1f(e) / q0f(e) <= 5.0 / (5.0 + 4.0 * math.sqrt(1.5)) + 1e-12
                   for e in grid)
    check("q1/q0 within (0.5, 0.5051]", ratio_ok)
    print("checks:", "all passed" if failures == 0 else f"{failures} failed")
    return 0 if failures == 0 else 1


# --- entry point ------------------------------------------------------------------


def _apply_overrides(cfg: RunConfig, args) -> None:
    if args.tol is not None:
        cfg.scheme.solver.tol = args.tol
    if args.eps0_sq is not None:
        cfg.scheme.eps0_sq = args.eps0_sq
        cfg.scheme.solver.eps0_sq = args.eps0_sq
    if args.scheme is not None:
        cfg.scheme.variant = Variant(args.scheme)
    if args.solver is not None:
        cfg.scheme.solver.method = args.solver
    if args.override_stability:
        cfg.scheme.override_stability = True
    if args.out_dir is not None:
        cfg.out_dir = Path(args.out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="compactwave",
        description="Compact 4th-order wave-equation schemes: experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "single simulation from a config file"),
        ("convergence", "mesh-sequence error/rate table"),
        ("example3", "layered-medium iteration grid and profiles"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="INI configuration file")
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--eps0-sq", dest="eps0_sq", type=float, default=None)
        sp.add_argument("--scheme", choices=[v.value for v in Variant], default=None)
        sp.add_argument("--solver",
                        choices=["richardson", "chebyshev", "steepest_descent"],
                        default=None)
        sp.add_argument("--override-stability", action="store_true")
    sub.add_parser("checks", help="quick invariant suite")

    args = parser.parse_args(argv)
    if args.command == "checks":
        return run_checks()
    try:
        cfg = parse_config(args.config)
        _apply_overrides(cfg, args)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            return _run_single(cfg)
        if args.command == "convergence":
            rows = run_convergence(cfg)
            path = cfg.out_dir / cfg.table
            emit_csv(rows, path)
            for r in rows:
                p2 = "---" if r.p_l2 is None else f"{r.p_l2:.3f}"
                pinf = "---" if r.p_linf is None else f"{r.p_linf:.3f}"
                print(f"N={r.N:5d}  e_L2={r.e_l2:.5e}  p_L2={p2:>6}  "
                      f"e_Linf={r.e_linf:.5e}  p_Linf={pinf:>6}  N_iter={r.n_iter}")
            print(f"wrote {path}")
            return 0
        if args.command == "example3":
            rows = run_example3(cfg)
            path = cfg.out_dir / cfg.table
            emit_example3_csv(rows, path)
            for r in rows:
                print(f"s1={r['s1']:6g} h={r['h']:5g} h_t={r['h_t']:.4g} "
                      f"N_iter={r['N_iter']}")
            print(f"wrote {path}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RejectedConfigurationError as exc:
        print(f"rejected configuration: {exc}", file=sys.stderr)
        return 3
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    except CompactWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
