"""Tests for presets, the run driver, convergence studies, and file formats.

Covers:
- initial-condition presets (formulas, required parameters, determinism)
- run_simulation: trace layout, snapshot selection, stride, the step cap,
  and the step-context wrapper on stepper failures
- error norms and convergence-rate arithmetic
- check_energy_monotone on synthetic traces
- convergence_study: observed order of accuracy, input validation, the
  divisibility guard, reference caching, and the abort context
- the dense oracle's small-grid guard
- trace/report CSV and snapshot text formats, including exact round trips
"""

import math
import os

import numpy as np
import pytest

from gradflow import (
    ConfigurationError,
    EnergyRecord,
    RadicandNegativeError,
    ScalarField2D,
    SchemeConfig,
    UsageError,
    init_state,
    make_grid,
    make_model,
)
from gradflow.diagnostics import (
    DEFAULT_ERROR_NORM,
    ERROR_NORMS,
    PRESET_NAMES,
    REPORT_COLUMNS,
    TRACE_COLUMNS,
    ConvergenceReport,
    ReportRow,
    RunConfig,
    check_energy_monotone,
    compute_rates,
    convergence_study,
    dense_oracle,
    error_norm,
    make_initial,
    read_snapshot,
    run_simulation,
    write_report_csv,
    write_snapshot,
    write_trace_csv,
)

TWO_PI = 2.0 * np.pi


def _make_run(
    kind="3s-sav",
    order=1,
    dt=0.01,
    t_end=0.1,
    nx=16,
    model_name="allen-cahn",
    epsilon=0.1,
    **kw,
):
    scheme = SchemeConfig(kind, order, dt, t_end)
    return RunConfig(
        model_name=model_name,
        epsilon=epsilon,
        scheme=scheme,
        nx=nx,
        ny=nx,
        lx=TWO_PI,
        ly=TWO_PI,
        **kw,
    )


# =========================================================================
# Presets
# =========================================================================


class TestPresets:
    def test_registered_names(self):
        assert PRESET_NAMES == ("sinprod", "two-bubbles", "random-uniform")

    def test_sinprod_formula(self):
        grid = make_grid(1.0, 2.0, 16, 16)
        x, y = grid.coords()
        f = make_initial("sinprod", grid, {"amplitude": 0.3, "mx": 2, "my": 3})
        expected = 0.3 * np.sin(2 * np.pi * 2 * x / 1.0) * np.sin(2 * np.pi * 3 * y / 2.0)
        assert np.allclose(f.values, expected, atol=1e-14)

    def test_sinprod_defaults(self):
        grid = make_grid(TWO_PI, TWO_PI, 16, 16)
        x, y = grid.coords()
        f = make_initial("sinprod", grid)
        assert np.allclose(f.values, 0.05 * np.sin(x) * np.sin(y), atol=1e-14)

    def test_two_bubbles_formula(self):
        grid = make_grid(1.0, 1.0, 32, 32)
        x, y = grid.coords()
        eps = 0.01
        f = make_initial("two-bubbles", grid, {"epsilon": eps})
        d1 = np.sqrt((x - 0.35) ** 2 + (y - 0.35) ** 2)
        d2 = np.sqrt((x - 0.6) ** 2 + (y - 0.6) ** 2)
        w = math.sqrt(2.0) * eps
        expected = 1.0 - np.tanh((d1 - 0.15) / w) - np.tanh((d2 - 0.2) / w)
        assert np.allclose(f.values, expected, atol=1e-14)
        # Inside a bubble the profile sits near +1, far outside near -1.
        assert f.values[np.argmin(np.abs(x[:, 0] - 0.35)), np.argmin(np.abs(y[0] - 0.35))] > 0.9
        assert f.values[0, 0] < -0.9

    def test_two_bubbles_requires_epsilon(self):
        grid = make_grid(1.0, 1.0, 16, 16)
        with pytest.raises(UsageError, match="requires parameter 'epsilon'"):
            make_initial("two-bubbles", grid)

    def test_random_uniform_is_seed_deterministic(self):
        grid = make_grid(TWO_PI, TWO_PI, 16, 16)
        params = {"mean": 0.25, "amp": 0.4}
        a = make_initial("random-uniform", grid, dict(params), seed=7)
        b = make_initial("random-uniform", grid, dict(params), seed=7)
        c = make_initial("random-uniform", grid, dict(params), seed=8)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert np.all(np.abs(a.values - 0.25) <= 0.4)

    def test_random_uniform_requires_seed(self):
        grid = make_grid(TWO_PI, TWO_PI, 8, 8)
        with pytest.raises(UsageError, match="requires a seed"):
            make_initial("random-uniform", grid, {"mean": 0.0, "amp": 0.1})

    def test_unknown_preset_lists_names(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        with pytest.raises(UsageError, match="sinprod, two-bubbles, random-uniform"):
            make_initial("checkerboard", grid)

    def test_leftover_parameters_rejected(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        with pytest.raises(UsageError, match="unknown parameters.*radius"):
            make_initial("sinprod", grid, {"amplitude": 0.1, "radius": 2.0})


# =========================================================================
# Run driver
# =========================================================================


class TestRunSimulation:
    def test_trace_layout_and_stride(self):
        cfg = _make_run(dt=0.01, t_end=0.1, record_stride=3)
        res = run_simulation(cfg)
        assert res.steps == 10
        times = [rec.t for rec in res.trace]
        # t=0, every 3rd step, and the final step.
        assert np.allclose(times, [0.0, 0.03, 0.06, 0.09, 0.1])
        assert res.trace[0].solve_count == 0
        assert all(rec.solve_count == 1 for rec in res.trace[1:])
        assert res.solves == 10  # one per step for 3s-sav order 1

    def test_trace_records_are_filled(self):
        res = run_simulation(_make_run(dt=0.02, t_end=0.1))
        for rec in res.trace:
            assert rec.e_modified is not None and rec.aux is not None
            assert np.isclose(rec.e_total, rec.e_linear + rec.e_nonlinear)

    def test_snapshots_at_nearest_steps(self):
        cfg = _make_run(dt=0.01, t_end=0.1, snapshot_times=(0.0, 0.055, 0.1))
        res = run_simulation(cfg)
        assert [t for t, _ in res.snapshots] == [0.0, 0.06, 0.1]
        assert np.array_equal(res.snapshots[-1][1].values, res.final_phi.values)

    def test_max_steps_cap(self):
        cfg = _make_run(dt=0.01, t_end=1.0, max_steps=7)
        res = run_simulation(cfg)
        assert res.steps == 7
        assert np.isclose(res.trace[-1].t, 0.07)

    def test_determinism(self):
        cfg = _make_run(
            preset="random-uniform",
            init_params={"mean": 0.1, "amp": 0.2},
            seed=123,
        )
        a = run_simulation(cfg)
        b = run_simulation(cfg)
        assert np.array_equal(a.final_phi.values, b.final_phi.values)

    def test_failure_carries_step_context(self):
        cfg = RunConfig(
            model_name="allen-cahn",
            epsilon=0.01,
            scheme=SchemeConfig("3s-sav-sqrt", 1, 10.0, 100.0),
            nx=32,
            ny=32,
            lx=1.0,
            ly=1.0,
            preset="two-bubbles",
            init_params={"epsilon": 0.01},
        )
        with pytest.raises(RadicandNegativeError, match=r"at step n=\d+, t="):
            run_simulation(cfg)

    def test_snapshot_time_outside_horizon_rejected(self):
        with pytest.raises(ConfigurationError, match="outside"):
            _make_run(snapshot_times=(0.5,), t_end=0.1)

    def test_bad_stride_rejected(self):
        with pytest.raises(ConfigurationError, match="record_stride"):
            _make_run(record_stride=0)


# =========================================================================
# Norms and rates
# =========================================================================


class TestNormsAndRates:
    def test_frobenius_is_plain_l2_of_values(self):
        grid = make_grid(TWO_PI, TWO_PI, 8, 8)
        a = ScalarField2D.constant(grid, 1.0)
        b = ScalarField2D.constant(grid, 0.0)
        assert np.isclose(error_norm(a, b, "frobenius"), 8.0)  # sqrt(64)

    def test_quadrature_norm_scales_by_cell_area(self):
        grid = make_grid(TWO_PI, TWO_PI, 8, 8)
        rng = np.random.default_rng(0)
        a = ScalarField2D(grid, rng.standard_normal(grid.shape))
        b = ScalarField2D(grid, rng.standard_normal(grid.shape))
        frob = error_norm(a, b, "frobenius")
        quad = error_norm(a, b, "quadrature")
        assert np.isclose(quad, frob * np.sqrt(grid.cell_area))
        assert DEFAULT_ERROR_NORM == "frobenius" and ERROR_NORMS == (
            "frobenius",
            "quadrature",
        )

    def test_unknown_norm_rejected(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        a = ScalarField2D.constant(grid, 1.0)
        with pytest.raises(UsageError, match="unknown norm"):
            error_norm(a, a, "l-infinity")

    def test_compute_rates_recovers_power_law(self):
        dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
        for p in (1.0, 2.0):
            errors = [0.37 * dt**p for dt in dts]
            rates = compute_rates(dts, errors)
            assert rates[0] is None
            assert np.allclose(rates[1:], p)

    def test_compute_rates_scale_invariance(self):
        dts = [0.1, 0.05, 0.025]
        errors = [3e-4, 9e-5, 2e-5]
        base = compute_rates(dts, errors)[1:]
        scaled = compute_rates(dts, [1e6 * e for e in errors])[1:]
        assert np.allclose(base, scaled)


class TestEnergyMonotoneCheck:
    def _trace(self, values):
        recs = []
        for i, v in enumerate(values):
            rec = EnergyRecord(t=float(i), e_total=v, e_linear=v, e_nonlinear=0, mass=0)
            rec.e_modified = v
            recs.append(rec)
        return recs

    def test_clean_decrease_passes(self):
        assert check_energy_monotone(self._trace([3.0, 2.0, 1.5, 1.5, 0.2]), 1e-10) == []

    def test_violations_are_indexed(self):
        trace = self._trace([3.0, 2.0, 2.5, 1.0, 1.2])
        assert check_energy_monotone(trace, 1e-10) == [1, 3]

    def test_tolerance_is_relative_to_scale(self):
        # A bump of 1e-8 on an O(1e6) energy is within a 1e-10 relative band.
        trace = self._trace([1e6, 1e6 - 1.0, 1e6 - 1.0 + 1e-8])
        assert check_energy_monotone(trace, 1e-10) == []
        trace = self._trace([1.0, 0.5, 0.5 + 1e-8])
        assert check_energy_monotone(trace, 1e-10) == [1]


# =========================================================================
# Convergence studies
# =========================================================================


class TestConvergenceStudy:
    def test_first_order_scheme_shows_first_order(self):
        base = _make_run(kind="3s-sav", order=1, dt=0.01, t_end=0.04, nx=32)
        report = convergence_study(base, [4e-3, 2e-3, 1e-3], ref_dt=1e-4)
        assert [r.dt for r in report.rows] == [4e-3, 2e-3, 1e-3]
        assert report.rows[0].rate is None
        for row in report.rows[1:]:
            assert 0.85 <= row.rate <= 1.15
        assert report.scheme == "3s-sav" and report.order == 1
        for row in report.rows:
            assert row.solves_per_step == 1.0

    def test_second_order_scheme_shows_second_order(self):
        base = _make_run(kind="3s-sav", order=2, dt=0.01, t_end=0.04, nx=32)
        report = convergence_study(base, [4e-3, 2e-3, 1e-3], ref_dt=1e-4)
        for row in report.rows[1:]:
            assert 1.8 <= row.rate <= 2.2

    def test_errors_shrink_with_dt(self):
        base = _make_run(kind="sav", order=1, dt=0.01, t_end=0.04, nx=16)
        report = convergence_study(base, [4e-3, 2e-3], ref_dt=5e-4)
        assert report.rows[0].l2_error > report.rows[1].l2_error > 0

    def test_empty_dts_rejected(self):
        base = _make_run()
        with pytest.raises(ConfigurationError, match="at least one dt"):
            convergence_study(base, [], ref_dt=1e-4)

    def test_ref_dt_must_be_finest(self):
        base = _make_run(t_end=0.04)
        with pytest.raises(ConfigurationError, match="must be smaller"):
            convergence_study(base, [4e-3, 2e-3], ref_dt=2e-3)

    def test_non_dividing_dt_rejected(self):
        base = _make_run(t_end=0.05)
        with pytest.raises(ConfigurationError, match="does not divide"):
            convergence_study(base, [4e-3], ref_dt=1e-4)

    def test_reference_cache_round_trip(self, tmp_path):
        base = _make_run(kind="3s-sav", order=1, dt=0.01, t_end=0.02, nx=16)
        cache = str(tmp_path / "ref.txt")
        r1 = convergence_study(base, [2e-3], ref_dt=1e-4, ref_cache=cache)
        assert os.path.exists(cache) and os.path.exists(cache + ".meta.json")
        r2 = convergence_study(base, [2e-3], ref_dt=1e-4, ref_cache=cache)
        # Snapshot values are written in full repr precision, so the reloaded
        # reference reproduces the error bit-for-bit.
        assert r1.rows[0].l2_error == r2.rows[0].l2_error

    def test_reference_cache_rejects_mismatched_study(self, tmp_path):
        cache = str(tmp_path / "ref.txt")
        base16 = _make_run(kind="3s-sav", order=1, dt=0.01, t_end=0.02, nx=16)
        base_sav = _make_run(kind="sav", order=1, dt=0.01, t_end=0.02, nx=16)
        convergence_study(base16, [2e-3], ref_dt=1e-4, ref_cache=cache)
        r_sav = convergence_study(base_sav, [2e-3], ref_dt=1e-4, ref_cache=cache)
        # The sidecar key no longer matches, so the reference is recomputed
        # with the sav scheme rather than reused.
        fresh = convergence_study(base_sav, [2e-3], ref_dt=1e-4)
        assert r_sav.rows[0].l2_error == pytest.approx(fresh.rows[0].l2_error, rel=1e-12)

    def test_abort_context_names_dt(self):
        # The reference at dt=0.01 integrates cleanly; the dt=10 row drives
        # the square-root update negative, and the study wraps that failure.
        base = RunConfig(
            model_name="allen-cahn",
            epsilon=0.01,
            scheme=SchemeConfig("3s-sav-sqrt", 1, 0.01, 40.0),
            nx=32,
            ny=32,
            lx=1.0,
            ly=1.0,
            preset="two-bubbles",
            init_params={"epsilon": 0.01},
        )
        with pytest.raises(RadicandNegativeError, match="study aborted at dt=10"):
            convergence_study(base, [10.0], ref_dt=0.01)


# =========================================================================
# Dense oracle guard
# =========================================================================


class TestDenseOracleGuard:
    def test_large_grid_rejected(self):
        grid = make_grid(TWO_PI, TWO_PI, 16, 16)
        model = make_model("allen-cahn", epsilon=0.1)
        cfg = SchemeConfig("3s-sav", 1, 0.01, 0.1)
        phi0 = ScalarField2D.constant(grid, 0.5)
        state = init_state(phi0, model, cfg)
        with pytest.raises(UsageError, match="up to 8x8"):
            dense_oracle(grid, model, cfg, state)


# =========================================================================
# File formats
# =========================================================================


class TestFileFormats:
    def test_trace_csv_layout(self, tmp_path):
        res = run_simulation(_make_run(dt=0.01, t_end=0.03))
        path = str(tmp_path / "trace.csv")
        write_trace_csv(path, res.trace)
        lines = open(path).read().strip().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert lines[0] == "t,e_total,e_linear,e_nonlinear,e_modified,mass,aux,solve_count"
        assert len(lines) == 1 + len(res.trace)
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and int(first[7]) == 0
        # Full-precision round trip of the energy column.
        assert float(lines[2].split(",")[1]) == res.trace[1].e_total

    def test_trace_csv_blank_for_missing_fields(self, tmp_path):
        rec = EnergyRecord(t=0.0, e_total=1.0, e_linear=0.5, e_nonlinear=0.5, mass=0.0)
        path = str(tmp_path / "trace.csv")
        write_trace_csv(path, [rec])
        row = open(path).read().strip().splitlines()[1].split(",")
        assert row[4] == "" and row[6] == "" and row[7] == ""

    def test_report_csv_layout(self, tmp_path):
        report = ConvergenceReport(
            scheme="sav",
            order=1,
            model="allen-cahn",
            ref_dt=1e-6,
            rows=[
                ReportRow(dt=1e-3, l2_error=1e-4, rate=None, wall_time_s=0.5,
                          solve_count=200, steps=100),
                ReportRow(dt=5e-4, l2_error=5e-5, rate=1.0, wall_time_s=1.0,
                          solve_count=400, steps=200),
            ],
        )
        path = str(tmp_path / "report.csv")
        write_report_csv(path, report)
        lines = open(path).read().strip().splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert lines[0] == "dt,l2_error,rate,wall_time_s,solves_per_step"
        r1 = lines[1].split(",")
        assert float(r1[0]) == 1e-3 and r1[2] == ""
        r2 = lines[2].split(",")
        assert float(r2[1]) == 5e-5 and float(r2[2]) == 1.0
        assert float(r2[4]) == 2.0

    def test_snapshot_round_trip_is_exact(self, tmp_path):
        grid = make_grid(1.5, 2.5, 8, 12)
        rng = np.random.default_rng(3)
        phi = ScalarField2D(grid, rng.standard_normal(grid.shape))
        path = str(tmp_path / "snap.txt")
        write_snapshot(path, 0.125, phi)
        t, phi2 = read_snapshot(path)
        assert t == 0.125
        assert phi2.grid.shape == (8, 12)
        assert np.isclose(phi2.grid.lx, 1.5) and np.isclose(phi2.grid.ly, 2.5)
        assert np.array_equal(phi2.values, phi.values)

    def test_snapshot_header_layout(self, tmp_path):
        grid = make_grid(1.0, 1.0, 4, 4)
        phi = ScalarField2D.constant(grid, 0.25)
        path = str(tmp_path / "snap.txt")
        write_snapshot(path, 2.0, phi)
        lines = open(path).read().splitlines()
        assert lines[0].split() == ["nx", "4"]
        assert lines[1].split() == ["ny", "4"]
        assert lines[2].split()[0] == "lx"
        assert lines[3].split()[0] == "ly"
        assert lines[4].split() == ["t", "2.0"]
        assert len(lines) == 5 + 4  # header + one row per x index

    def test_snapshot_shape_mismatch_detected(self, tmp_path):
        grid = make_grid(1.0, 1.0, 4, 4)
        phi = ScalarField2D.constant(grid, 1.0)
        path = str(tmp_path / "snap.txt")
        write_snapshot(path, 0.0, phi)
        lines = open(path).read().splitlines()
        lines[0] = "nx 8"
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with pytest.raises(UsageError, match="does not match"):
            read_snapshot(path)
