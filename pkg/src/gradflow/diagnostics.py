"""Simulation driver, convergence harness, trace analysis, and test oracle.

This module owns everything around the steppers: initial-condition presets,
the time loop with energy/mass recording, the reference-solution convergence
study that produces the benchmark tables, the monotonicity checker for
modified-energy traces, plain-text snapshot and CSV writers, and a dense
matrix re-implementation of every scheme used as ground truth in tests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    GradflowError,
    RadicandNegativeError,
    UsageError,
)
from .models import EnergyRecord, ModelSpec, energy, make_model
from .schemes import (
    FieldQ,
    ScalarEta,
    ScalarR,
    SchemeConfig,
    StepState,
    aux_scalar,
    init_state,
    modified_energy,
    step,
)
from .spectral import (
    Grid2D,
    ScalarField2D,
    apply_operator,
    make_grid,
    reset_solve_count,
    solve_count,
)

__all__ = [
    "RunConfig",
    "RunResult",
    "ReportRow",
    "ConvergenceReport",
    "PRESET_NAMES",
    "make_initial",
    "run_simulation",
    "convergence_study",
    "compute_rates",
    "check_energy_monotone",
    "dense_oracle",
    "write_trace_csv",
    "write_report_csv",
    "write_snapshot",
    "read_snapshot",
]

PRESET_NAMES = ("sinprod", "two-bubbles", "random-uniform")

# Error norm used for convergence tables: plain root-sum-of-squares over the
# collocation values.  The benchmark tables this harness reproduces report
# their L2 errors in this unweighted convention; multiply by
# sqrt(grid.cell_area) to convert to the quadrature norm.
ERROR_NORMS = ("frobenius", "quadrature")
DEFAULT_ERROR_NORM = "frobenius"


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one simulation run."""

    model_name: str
    epsilon: float
    scheme: SchemeConfig
    nx: int
    ny: int
    lx: float
    ly: float
    mobility: float = 1.0
    beta: float = 0.0
    dealias: bool = False
    preset: str = "sinprod"
    init_params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    snapshot_times: tuple = ()
    record_stride: int = 1
    max_steps: Optional[int] = None
    outdir: Optional[str] = None

    def __post_init__(self) -> None:
        for t_s in self.snapshot_times:
            if not 0.0 <= t_s <= self.scheme.t_end:
                raise ConfigurationError(
                    f"snapshot time {t_s} outside [0, t_end={self.scheme.t_end}]"
                )
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")

    def build_grid(self) -> Grid2D:
        return make_grid(self.lx, self.ly, self.nx, self.ny, self.dealias)

    def build_model(self) -> ModelSpec:
        return make_model(self.model_name, self.epsilon, self.mobility, self.beta)


@dataclass
class RunResult:
    final_phi: ScalarField2D
    trace: list
    snapshots: list
    wall_time_s: float
    steps: int
    solves: int
    state: StepState


def make_initial(
    preset: str, grid: Grid2D, params: Optional[dict] = None, seed: Optional[int] = None
) -> ScalarField2D:
    """Build a preset initial condition.

    sinprod:        amplitude*sin(2*pi*mx*x/lx)*sin(2*pi*my*y/ly)
    two-bubbles:    1 - tanh((d1-r1)/(sqrt(2)*epsilon))
                      - tanh((d2-r2)/(sqrt(2)*epsilon)), two circular
                    interfaces of width epsilon around (x1,y1), (x2,y2)
    random-uniform: mean + amp*U with U i.i.d. uniform on [-1, 1], drawn from
                    a seeded 64-bit counter-based generator (Philox) so the
                    field is bit-reproducible across platforms.
    """
    params = dict(params or {})

    def take(key, default=None):
        if key in params:
            return float(params.pop(key))
        if default is None:
            raise UsageError(f"preset '{preset}' requires parameter '{key}'")
        return float(default)

    x, y = grid.coords()
    if preset == "sinprod":
        amp = take("amplitude", 0.05)
        mx = take("mx", 1.0)
        my = take("my", 1.0)
        vals = amp * np.sin(2 * np.pi * mx * x / grid.lx) * np.sin(
            2 * np.pi * my * y / grid.ly
        )
    elif preset == "two-bubbles":
        eps = take("epsilon")
        r1 = take("r1", 0.15)
        x1 = take("x1", 0.35)
        y1 = take("y1", 0.35)
        r2 = take("r2", 0.2)
        x2 = take("x2", 0.6)
        y2 = take("y2", 0.6)
        d1 = np.sqrt((x - x1) ** 2 + (y - y1) ** 2)
        d2 = np.sqrt((x - x2) ** 2 + (y - y2) ** 2)
        w = np.sqrt(2.0) * eps
        vals = 1.0 - np.tanh((d1 - r1) / w) - np.tanh((d2 - r2) / w)
    elif preset == "random-uniform":
        mean = take("mean")
        amp = take("amp")
        if seed is None:
            raise UsageError("preset 'random-uniform' requires a seed")
        rng = np.random.Generator(np.random.Philox(int(seed)))
        vals = mean + amp * rng.uniform(-1.0, 1.0, size=grid.shape)
    else:
        raise UsageError(
            f"unknown preset '{preset}'; available: {', '.join(PRESET_NAMES)}"
        )
    if params:
        raise UsageError(
            f"unknown parameters for preset '{preset}': {', '.join(sorted(params))}"
        )
    return ScalarField2D(grid, vals)


def _record(state: StepState, model: ModelSpec, cfg: SchemeConfig, solves: int):
    rec = energy(state.phi, model, t=state.t)
    rec.e_modified = modified_energy(state, model, cfg)
    rec.aux = aux_scalar(state)
    rec.solve_count = solves
    return rec


def run_simulation(cfg: RunConfig) -> RunResult:
    """Step from t=0 to t_end, recording energies and requested snapshots.

    Snapshots are taken at the step nearest each requested time (index
    round(t/dt)); the recorded time is the step time, not the requested one.
    An EnergyRecord is appended at t=0, then every ``record_stride`` steps,
    and always at the final step.  Stepper failures are re-raised with the
    step index and time attached.  Given the same config (and seed), the
    run is deterministic.
    """
    grid = cfg.build_grid()
    model = cfg.build_model()
    sch = cfg.scheme
    phi0 = make_initial(cfg.preset, grid, cfg.init_params, cfg.seed)
    nsteps = max(1, round(sch.t_end / sch.dt))
    if cfg.max_steps is not None:
        nsteps = min(nsteps, cfg.max_steps)

    want = {}
    for t_s in cfg.snapshot_times:
        want.setdefault(min(nsteps, max(0, round(t_s / sch.dt))), None)

    state = init_state(phi0, model, sch)
    reset_solve_count()
    trace = [_record(state, model, sch, 0)]
    snapshots = []
    if 0 in want:
        snapshots.append((0.0, state.phi))
    total0 = solve_count()
    t_start = time.perf_counter()
    for k in range(1, nsteps + 1):
        before = solve_count()
        try:
            state = step(state, model, sch)
        except GradflowError as err:
            raise type(err)(f"at step n={k}, t={k * sch.dt:.6g}: {err}") from err
        if k % cfg.record_stride == 0 or k == nsteps:
            trace.append(_record(state, model, sch, solve_count() - before))
        if k in want:
            snapshots.append((state.t, state.phi))
    wall = time.perf_counter() - t_start
    return RunResult(
        final_phi=state.phi,
        trace=trace,
        snapshots=snapshots,
        wall_time_s=wall,
        steps=nsteps,
        solves=solve_count() - total0,
        state=state,
    )


def error_norm(a: ScalarField2D, b: ScalarField2D, norm: str = DEFAULT_ERROR_NORM) -> float:
    """Discrete L2 distance between two fields on the same grid."""
    if norm not in ERROR_NORMS:
        raise UsageError(f"unknown norm '{norm}'; available: {', '.join(ERROR_NORMS)}")
    if a.grid != b.grid:
        raise UsageError("error norm requires fields on the same grid")
    d = float(np.linalg.norm(a.values - b.values))
    if norm == "quadrature":
        d *= float(np.sqrt(a.grid.cell_area))
    return d


def compute_rates(dts: Sequence[float], errors: Sequence[float]):
    """Successive convergence rates log(e[i-1]/e[i])/log(dt[i-1]/dt[i]).

    The first entry is None; rates are invariant under scaling all errors by
    a common factor.
    """
    rates = [None]
    for i in range(1, len(dts)):
        rates.append(
            float(np.log(errors[i - 1] / errors[i]) / np.log(dts[i - 1] / dts[i]))
        )
    return rates


@dataclass
class ReportRow:
    dt: float
    l2_error: float
    rate: Optional[float]
    wall_time_s: float
    solve_count: int
    steps: int

    @property
    def solves_per_step(self) -> float:
        return self.solve_count / max(1, self.steps)


@dataclass
class ConvergenceReport:
    scheme: str
    order: int
    model: str
    ref_dt: float
    rows: list
    norm: str = DEFAULT_ERROR_NORM


def _study_key(base: RunConfig, ref_dt: float) -> str:
    sch = base.scheme
    payload = {
        "model": [base.model_name, base.epsilon, base.mobility, base.beta],
        "grid": [base.nx, base.ny, base.lx, base.ly, base.dealias],
        "scheme": [sch.kind, sch.order, sch.c_policy, sch.delta, sch.t_end],
        "init": [base.preset, sorted(base.init_params.items()), base.seed],
        "ref_dt": ref_dt,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _with_dt(base: RunConfig, dt: float) -> RunConfig:
    sch = base.scheme
    new_sch = SchemeConfig(
        kind=sch.kind,
        order=sch.order,
        dt=dt,
        t_end=sch.t_end,
        c_policy=sch.c_policy,
        delta=sch.delta,
        guard=sch.guard,
        gmres_tol=sch.gmres_tol,
        gmres_maxiter=sch.gmres_maxiter,
    )
    return RunConfig(
        model_name=base.model_name,
        epsilon=base.epsilon,
        scheme=new_sch,
        nx=base.nx,
        ny=base.ny,
        lx=base.lx,
        ly=base.ly,
        mobility=base.mobility,
        beta=base.beta,
        dealias=base.dealias,
        preset=base.preset,
        init_params=base.init_params,
        seed=base.seed,
        record_stride=10**9,
        max_steps=base.max_steps,
    )


def _reference_solution(base: RunConfig, ref_dt: float, cache_path: Optional[str]):
    key = _study_key(base, ref_dt)
    if cache_path:
        meta_path = cache_path + ".meta.json"
        if os.path.exists(cache_path) and os.path.exists(meta_path):
            with open(meta_path) as fh:
                meta = json.load(fh)
            if meta.get("key") == key:
                _, phi = read_snapshot(cache_path)
                return phi
    phi = run_simulation(_with_dt(base, ref_dt)).final_phi
    if cache_path:
        write_snapshot(cache_path, base.scheme.t_end, phi)
        with open(cache_path + ".meta.json", "w") as fh:
            json.dump(
                {
                    "key": key,
                    "scheme": base.scheme.kind,
                    "order": base.scheme.order,
                    "grid": [base.nx, base.ny, base.lx, base.ly],
                    "ref_dt": ref_dt,
                },
                fh,
            )
    return phi


def convergence_study(
    base: RunConfig,
    dts: Sequence[float],
    ref_dt: float,
    ref_cache: Optional[str] = None,
    norm: str = DEFAULT_ERROR_NORM,
) -> ConvergenceReport:
    """Self-convergence study against a fine-step reference of the same scheme.

    The reference solution is computed once per study (or loaded from
    ``ref_cache`` when the sidecar metadata hash matches) and each coarse dt
    is run to the same t_end on the same grid, model, and initial data.
    Errors are final-time L2 distances; rates follow ``compute_rates``.
    """
    if not dts:
        raise ConfigurationError("need at least one dt for a convergence study")
    if ref_dt >= min(dts):
        raise ConfigurationError(
            f"reference dt {ref_dt} must be smaller than every study dt"
        )
    t_end = base.scheme.t_end
    for dt in (*dts, ref_dt):
        if abs(round(t_end / dt) * dt - t_end) > 1e-9 * t_end:
            raise ConfigurationError(
                f"dt={dt:g} does not divide t_end={t_end:g}; the final-time "
                "errors would compare fields at different times"
            )
    phi_ref = _reference_solution(base, ref_dt, ref_cache)
    rows = []
    for dt in dts:
        t0 = time.perf_counter()
        try:
            res = run_simulation(_with_dt(base, dt))
        except GradflowError as err:
            raise type(err)(
                f"study aborted at dt={dt:.6g} after {len(rows)} completed rows: {err}"
            ) from err
        rows.append(
            ReportRow(
                dt=dt,
                l2_error=error_norm(res.final_phi, phi_ref, norm),
                rate=None,
                wall_time_s=time.perf_counter() - t0,
                solve_count=res.solves,
                steps=res.steps,
            )
        )
    rates = compute_rates([r.dt for r in rows], [r.l2_error for r in rows])
    for row, rate in zip(rows, rates):
        row.rate = rate
    return ConvergenceReport(
        scheme=base.scheme.kind,
        order=base.scheme.order,
        model=base.model_name,
        ref_dt=ref_dt,
        rows=rows,
        norm=norm,
    )


def check_energy_monotone(trace: Sequence[EnergyRecord], tol: float):
    """Indices i where e_modified[i+1] exceeds e_modified[i] + tol*max(1,|.|)."""
    bad = []
    for i in range(len(trace) - 1):
        a, b = trace[i].e_modified, trace[i + 1].e_modified
        if b > a + tol * max(1.0, abs(a)):
            bad.append(i)
    return bad


# ---------------------------------------------------------------------------
# Dense brute-force oracle: assembles L and G as explicit matrices and redoes
# one step of the selected scheme with direct dense solves.  Ground truth for
# the spectral steppers on tiny grids.
# ---------------------------------------------------------------------------


def _assemble(grid: Grid2D, symbol) -> np.ndarray:
    n = grid.nx * grid.ny
    mat = np.empty((n, n))
    basis = np.zeros(grid.shape)
    for k in range(n):
        i, j = divmod(k, grid.ny)
        basis[i, j] = 1.0
        mat[:, k] = apply_operator(ScalarField2D(grid, basis), symbol).values.ravel()
        basis[i, j] = 0.0
    return mat


def dense_oracle(
    grid: Grid2D, model: ModelSpec, cfg: SchemeConfig, state: StepState
) -> StepState:
    """One step of cfg's scheme via dense linear algebra (grids up to 8x8)."""
    if grid.nx > 8 or grid.ny > 8:
        raise UsageError(
            f"dense oracle is restricted to grids up to 8x8, got {grid.shape}"
        )
    n = grid.nx * grid.ny
    w = grid.cell_area
    eye = np.eye(n)
    L = _assemble(grid, model.l_symbol)
    G = _assemble(grid, model.g_symbol)
    GL = G @ L
    f = model.potential.f
    df = model.potential.df
    dt = cfg.dt
    c = state.c
    phi = state.phi.values.ravel()

    def e1(vec):
        return float(np.sum(f(vec))) * w

    def dot(a, b):
        return float(np.dot(a, b)) * w

    # evaluation point for the nonlinearity
    if cfg.order == 1:
        phi_e = phi
    elif state.n == 0:
        phi_e = np.linalg.solve(
            eye - 0.5 * dt * GL, phi + 0.5 * dt * (G @ df(phi))
        )
    else:
        phi_e = 1.5 * phi - 0.5 * state.phi_prev.values.ravel()

    kind = cfg.kind
    theta = 1.0 if cfg.order == 1 else 0.5
    A = eye - theta * dt * GL
    explicit = phi if cfg.order == 1 else phi + 0.5 * dt * (GL @ phi)

    if kind in ("3s-sav", "3s-sav-sqrt"):
        if kind == "3s-sav":
            eta = state.aux.eta
            if cfg.order == 1:
                eta_e = eta
            elif state.n == 0:
                eta_e = e1(phi_e) + c
            else:
                eta_e = 1.5 * eta - 0.5 * state.aux_prev.eta
            chi = (eta_e / (e1(phi_e) + c)) * df(phi_e)
        else:
            r = state.aux.r
            chi = (r / np.sqrt(e1(phi) + c)) * df(phi)
        phi_new = np.linalg.solve(A, explicit + dt * (G @ chi))
        inc = dot(chi, phi_new - phi)
        if kind == "3s-sav":
            aux_new = ScalarEta(state.aux.eta + inc)
        else:
            rad = state.aux.r**2 + inc
            if rad < 0.0:
                raise RadicandNegativeError(
                    f"radicand {rad:.3e} negative in dense oracle"
                )
            aux_new = ScalarR(float(np.sqrt(rad)))
    elif kind == "3s-ieq":
        q = state.aux.q.values.ravel()
        if cfg.order == 1:
            q_e = q
        elif state.n == 0:
            q_e = f(phi_e) + c
        else:
            q_e = 1.5 * q - 0.5 * state.aux_prev.q.values.ravel()
        chi = (q_e / (f(phi_e) + c)) * df(phi_e)
        phi_new = np.linalg.solve(A, explicit + dt * (G @ chi))
        aux_new = FieldQ(
            ScalarField2D(grid, (q + chi * (phi_new - phi)).reshape(grid.shape))
        )
    elif kind == "sav":
        r = state.aux.r
        b = df(phi_e) / np.sqrt(e1(phi_e) + c)
        # block system in (phi, r): the phi rows carry dt*G@b*r_new (order 1)
        # or (dt/2)*G@b*(r + r_new) (order 2, r part folded into the rhs),
        # the last row is r_new - 0.5*(b, phi_new - phi) = r
        block = np.zeros((n + 1, n + 1))
        block[:n, :n] = A
        block[:n, n] = -(dt if cfg.order == 1 else 0.5 * dt) * (G @ b)
        block[n, :n] = -0.5 * w * b
        block[n, n] = 1.0
        rhs = np.zeros(n + 1)
        rhs[:n] = explicit + (0.0 if cfg.order == 1 else 0.5 * dt * r) * (G @ b)
        rhs[n] = r - 0.5 * dot(b, phi)
        sol = np.linalg.solve(block, rhs)
        aux_new = ScalarR(float(sol[n]))
        phi_new = sol[:n]
    else:  # ieq
        q = state.aux.q.values.ravel()
        b = df(phi_e) / np.sqrt(f(phi_e) + c)
        coef = 0.5 * dt if cfg.order == 1 else 0.25 * dt
        A_var = A - coef * (G @ np.diag(b * b))
        rhs = explicit + dt * (G @ (b * q)) - coef * (G @ (b * b * phi))
        phi_new = np.linalg.solve(A_var, rhs)
        aux_new = FieldQ(
            ScalarField2D(
                grid, (q + 0.5 * b * (phi_new - phi)).reshape(grid.shape)
            )
        )

    return StepState(
        phi=ScalarField2D(grid, phi_new.reshape(grid.shape)),
        aux=aux_new,
        n=state.n + 1,
        t=(state.n + 1) * dt,
        c=c,
        phi_prev=state.phi,
        aux_prev=state.aux,
    )


# ---------------------------------------------------------------------------
# Plain-text outputs.
# ---------------------------------------------------------------------------

TRACE_COLUMNS = (
    "t",
    "e_total",
    "e_linear",
    "e_nonlinear",
    "e_modified",
    "mass",
    "aux",
    "solve_count",
)
REPORT_COLUMNS = ("dt", "l2_error", "rate", "wall_time_s", "solves_per_step")


def write_trace_csv(path: str, trace: Sequence[EnergyRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow(
                [
                    repr(rec.t),
                    repr(rec.e_total),
                    repr(rec.e_linear),
                    repr(rec.e_nonlinear),
                    "" if rec.e_modified is None else repr(rec.e_modified),
                    repr(rec.mass),
                    "" if rec.aux is None else repr(rec.aux),
                    "" if rec.solve_count is None else rec.solve_count,
                ]
            )


def write_report_csv(path: str, report: ConvergenceReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    repr(row.dt),
                    repr(row.l2_error),
                    "" if row.rate is None else repr(row.rate),
                    f"{row.wall_time_s:.6f}",
                    f"{row.solves_per_step:.6f}",
                ]
            )


def write_snapshot(path: str, t: float, phi: ScalarField2D) -> None:
    """One field per file: five header lines (nx, ny, lx, ly, t), then
    nx rows of ny space-separated values in row-major order."""
    grid = phi.grid
    with open(path, "w") as fh:
        fh.write(f"nx {grid.nx}\n")
        fh.write(f"ny {grid.ny}\n")
        fh.write(f"lx {float(grid.lx)!r}\n")
        fh.write(f"ly {float(grid.ly)!r}\n")
        fh.write(f"t {float(t)!r}\n")
        for row in phi.values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_snapshot(path: str):
    """Inverse of write_snapshot; returns (t, field)."""
    with open(path) as fh:
        head = {}
        for _ in range(5):
            key, val = fh.readline().split()
            head[key] = val
        vals = np.loadtxt(fh, ndmin=2)
    grid = make_grid(float(head["lx"]), float(head["ly"]), int(head["nx"]), int(head["ny"]))
    if vals.shape != grid.shape:
        raise UsageError(
            f"snapshot data shape {vals.shape} does not match header {grid.shape}"
        )
    return float(head["t"]), ScalarField2D(grid, vals)
