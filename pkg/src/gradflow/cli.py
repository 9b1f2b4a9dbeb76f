"""Command-line front end: run single simulations, convergence studies, and
scheme comparisons from flat key=value config files.

Config format: one ``key = value`` per line, ``#`` starts a comment, dotted
keys group related settings (``model.name``, ``scheme.kind``, ``grid.nx``,
``init.preset``, ``c.policy``...).  Every key is validated against a closed
schema; unknown keys are hard errors and are reported all at once.
``--set key=value`` overrides take precedence over file values.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional, Sequence

from .diagnostics import (
    PRESET_NAMES,
    RunConfig,
    convergence_study,
    make_initial,
    run_simulation,
    write_report_csv,
    write_snapshot,
    write_trace_csv,
)
from .errors import ConfigurationError, GradflowError, UsageError
from .models import MODEL_NAMES, make_model
from .schemes import SCHEME_KINDS, SchemeConfig, resolve_c
from .spectral import make_grid

TWO_PI = 2 * math.pi

# Closed configuration schema: key -> (type tag, default).  A None default
# means "unset"; unset init.* parameters are simply not forwarded to the
# preset, which supplies its own defaults or demands the missing key.
_INIT_PARAM_KEYS = (
    "amplitude", "mx", "my",              # sinprod
    "epsilon", "r1", "x1", "y1", "r2", "x2", "y2",  # two-bubbles
    "mean", "amp",                        # random-uniform
)

SCHEMA = {
    "model.name": ("str", "allen-cahn"),
    "model.epsilon": ("float", 0.1),
    "model.mobility": ("float", 1.0),
    "model.beta": ("float", 0.0),
    "grid.nx": ("int", 128),
    "grid.ny": ("int", 128),
    "grid.lx": ("float", TWO_PI),
    "grid.ly": ("float", TWO_PI),
    "grid.dealias": ("bool", False),
    "scheme.kind": ("str", "3s-sav"),
    "scheme.order": ("int", 1),
    "scheme.dt": ("float", 1e-3),
    "scheme.t_end": ("float", 1.0),
    "scheme.guard": ("float", 1e-12),
    "scheme.gmres_tol": ("float", 1e-12),
    "scheme.gmres_maxiter": ("int", 200),
    "c.policy": ("policy", None),
    "c.delta": ("float", 1.0),
    "init.preset": ("str", "sinprod"),
    "init.seed": ("int", None),
    "run.snapshots": ("floats", ()),
    "run.record_stride": ("int", 1),
    "run.max_steps": ("int", None),
}
for _k in _INIT_PARAM_KEYS:
    SCHEMA[f"init.{_k}"] = ("float", None)


def _parse_value(key: str, tag: str, raw: str):
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if tag == "floats":
            return tuple(float(part) for part in raw.split(",") if part.strip())
        if tag == "policy":
            return "auto" if raw == "auto" else float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(
            f"bad value for '{key}': {raw!r} is not a valid {tag}"
        ) from None


def read_config_file(path: str) -> dict:
    """Parse a flat key=value file into a {key: raw string} mapping."""
    entries = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}"
                )
            key, raw = line.split("=", 1)
            entries[key.strip()] = raw.strip()
    return entries


def resolve_config(config_path: Optional[str], overrides: Sequence[str]) -> dict:
    """Merge defaults, file entries, and --set overrides; reject unknown keys."""
    resolved = {key: default for key, (_, default) in SCHEMA.items()}
    pending = []
    if config_path:
        pending.extend(read_config_file(config_path).items())
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        pending.append((key.strip(), raw.strip()))
    unknown = sorted({key for key, _ in pending if key not in SCHEMA})
    if unknown:
        raise ConfigurationError(
            f"unknown config keys: {', '.join(unknown)}"
        )
    for key, raw in pending:
        resolved[key] = _parse_value(key, SCHEMA[key][0], raw)
    return resolved


def build_run_config(resolved: dict, outdir: Optional[str] = None) -> RunConfig:
    scheme = SchemeConfig(
        kind=resolved["scheme.kind"],
        order=resolved["scheme.order"],
        dt=resolved["scheme.dt"],
        t_end=resolved["scheme.t_end"],
        c_policy=resolved["c.policy"],
        delta=resolved["c.delta"],
        guard=resolved["scheme.guard"],
        gmres_tol=resolved["scheme.gmres_tol"],
        gmres_maxiter=resolved["scheme.gmres_maxiter"],
    )
    init_params = {
        name: resolved[f"init.{name}"]
        for name in _INIT_PARAM_KEYS
        if resolved[f"init.{name}"] is not None
    }
    # the two-bubbles interface width defaults to the model's epsilon
    if resolved["init.preset"] == "two-bubbles":
        init_params.setdefault("epsilon", resolved["model.epsilon"])
    return RunConfig(
        model_name=resolved["model.name"],
        epsilon=resolved["model.epsilon"],
        mobility=resolved["model.mobility"],
        beta=resolved["model.beta"],
        scheme=scheme,
        nx=resolved["grid.nx"],
        ny=resolved["grid.ny"],
        lx=resolved["grid.lx"],
        ly=resolved["grid.ly"],
        dealias=resolved["grid.dealias"],
        preset=resolved["init.preset"],
        init_params=init_params,
        seed=resolved["init.seed"],
        snapshot_times=tuple(resolved["run.snapshots"]),
        record_stride=resolved["run.record_stride"],
        max_steps=resolved["run.max_steps"],
        outdir=outdir,
    )


def _print_dry_run(resolved: dict, cfg: RunConfig) -> None:
    print("resolved configuration:")
    for key in sorted(resolved):
        value = resolved[key]
        if value is None or value == ():
            continue
        print(f"  {key} = {value}")
    grid = cfg.build_grid()
    model = cfg.build_model()
    phi0 = make_initial(cfg.preset, grid, cfg.init_params, cfg.seed)
    c = resolve_c(phi0, model, cfg.scheme)
    policy = cfg.scheme.c_policy
    if policy is None:
        policy = "auto" if cfg.scheme.kind == "3s-sav" else 1.0
    print(f"resolved C = {c!r} (policy {policy})")


def _outdir(args) -> str:
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def cmd_run(args) -> int:
    resolved = resolve_config(args.config, args.set or [])
    cfg = build_run_config(resolved, args.out)
    if args.dry_run:
        _print_dry_run(resolved, cfg)
        return 0
    result = run_simulation(cfg)
    outdir = _outdir(args)
    trace_path = os.path.join(outdir, "trace.csv")
    write_trace_csv(trace_path, result.trace)
    written = [trace_path]
    for t_snap, field in result.snapshots:
        path = os.path.join(outdir, f"snapshot_t{t_snap:.6g}.txt")
        write_snapshot(path, t_snap, field)
        written.append(path)
    first, last = result.trace[0], result.trace[-1]
    drift = abs(last.mass - first.mass) / max(1.0, abs(first.mass))
    print(
        f"run complete: steps={result.steps} t_final={result.state.t:.6g} "
        f"energy={last.e_total:.6g} mass_drift={drift:.3e} "
        f"wall={result.wall_time_s:.2f}s"
    )
    print("wrote: " + ", ".join(written))
    return 0


def _parse_dts(args) -> tuple:
    if not args.dts:
        raise UsageError("converge requires --dts (comma-separated step sizes)")
    dts = tuple(float(part) for part in args.dts.split(",") if part.strip())
    if not dts:
        raise UsageError("--dts parsed to an empty list")
    if args.ref_dt is None:
        raise UsageError("converge requires --ref-dt")
    return dts


def _print_report_table(report) -> None:
    print(f"scheme={report.scheme} order={report.order} model={report.model} "
          f"ref_dt={report.ref_dt:g} norm={report.norm}")
    print(f"{'dt':>12} {'error':>14} {'rate':>8} {'time(s)':>9} {'solves/step':>12}")
    for row in report.rows:
        rate = "--" if row.rate is None else f"{row.rate:.4f}"
        print(
            f"{row.dt:>12.4e} {row.l2_error:>14.6e} {rate:>8} "
            f"{row.wall_time_s:>9.2f} {row.solves_per_step:>12.3f}"
        )


def cmd_converge(args) -> int:
    resolved = resolve_config(args.config, args.set or [])
    base = build_run_config(resolved, args.out)
    if args.dry_run:
        _print_dry_run(resolved, base)
        return 0
    dts = _parse_dts(args)
    kinds = (
        [part.strip() for part in args.schemes.split(",") if part.strip()]
        if args.schemes
        else [base.scheme.kind]
    )
    outdir = _outdir(args)
    for kind in kinds:
        scheme_resolved = dict(resolved, **{"scheme.kind": kind})
        base = build_run_config(scheme_resolved, args.out)
        report = convergence_study(base, dts, args.ref_dt)
        _print_report_table(report)
        path = os.path.join(outdir, f"report_{kind}.csv")
        write_report_csv(path, report)
        print(f"wrote: {path}")
    return 0


def cmd_compare(args) -> int:
    resolved = resolve_config(args.config, args.set or [])
    if not args.schemes:
        raise UsageError("compare requires --schemes a,b")
    kinds = [part.strip() for part in args.schemes.split(",") if part.strip()]
    if len(kinds) != 2:
        raise UsageError(f"compare requires exactly two schemes, got {kinds}")
    if args.dry_run:
        _print_dry_run(resolved, build_run_config(resolved, args.out))
        return 0
    outdir = _outdir(args)
    results = {}
    for kind in kinds:
        cfg = build_run_config(dict(resolved, **{"scheme.kind": kind}), args.out)
        results[kind] = run_simulation(cfg)
        path = os.path.join(outdir, f"trace_{kind}.csv")
        write_trace_csv(path, results[kind].trace)
        print(f"wrote: {path}")
    a, b = kinds
    res_a, res_b = results[a], results[b]
    npts = min(len(res_a.trace), len(res_b.trace))
    disc = max(
        (
            abs(ra.e_total - rb.e_total) / max(abs(ra.e_total), 1e-300)
            for ra, rb in zip(res_a.trace[:npts], res_b.trace[:npts])
        ),
        default=0.0,
    )
    ratio = res_a.wall_time_s / max(res_b.wall_time_s, 1e-12)
    print(f"compare {a} vs {b}: max relative energy discrepancy = {disc:.4e}")
    for kind in kinds:
        res = results[kind]
        print(
            f"  {kind}: solves/step={res.solves / max(1, res.steps):.3f} "
            f"wall={res.wall_time_s:.2f}s"
        )
    print(f"wall-time ratio ({a} / {b}) = {ratio:.3f}")
    return 0


def cmd_info(args) -> int:
    print("models:  " + ", ".join(MODEL_NAMES))
    print("schemes: " + ", ".join(SCHEME_KINDS)
          + "  (orders 1 and 2; 3s-sav-sqrt is order 1 only)")
    print("presets: " + ", ".join(PRESET_NAMES))
    print("default C policy: 3s-sav -> auto (C = -E(phi0) - delta, delta = 1); "
          "all other schemes -> C = 1")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable, wins over the file)",
    )
    parser.add_argument("--out", help="output directory (default: current)")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="validate the config and print resolved parameters, then exit",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradflow",
        description="Pseudo-spectral gradient-flow solvers with "
        "auxiliary-variable time integrators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation, write trace/snapshots")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("converge", help="self-referenced convergence study")
    _add_common(p_conv)
    p_conv.add_argument("--dts", help="comma-separated list of step sizes")
    p_conv.add_argument("--ref-dt", type=float, help="reference step size")
    p_conv.add_argument("--schemes", help="comma-separated scheme kinds to study")
    p_conv.set_defaults(func=cmd_converge)

    p_cmp = sub.add_parser("compare", help="run two schemes on identical data")
    _add_common(p_cmp)
    p_cmp.add_argument("--schemes", help="exactly two scheme kinds, e.g. sav,3s-sav")
    p_cmp.set_defaults(func=cmd_compare)

    p_info = sub.add_parser("info", help="list registered models/schemes/presets")
    p_info.set_defaults(func=cmd_info)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GradflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
