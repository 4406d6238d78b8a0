"""Harness: config ingestion, scenario runners, reports, CLI, reproducibility."""

import json
import math
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spherestab.cli import main
from spherestab.errors import ConfigError
from spherestab.geometry import MARKED, geodesic_distance
from spherestab.harness import (
    ScenarioConfig,
    aggregate_runs,
    calibrate_alpha3,
    config_from_dict,
    config_from_toml,
    richardson_ratio,
    run_extend,
    run_iss_sweep,
    run_stabilize,
    run_verify,
    shell_sample,
    trajectory_csv,
)
from spherestab.kernels import run_closed_loop_batch, warm_up


@pytest.fixture(scope="module", autouse=True)
def compiled():
    warm_up()


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = ScenarioConfig()
        assert cfg.scenario == "stabilize"
        assert cfg.deltas == (0.01,)
        assert cfg.step <= min(cfg.deltas)

    @pytest.mark.parametrize(
        ("kwargs", "field"),
        [
            ({"scenario": "bogus"}, "scenario"),
            ({"deltas": ()}, "deltas"),
            ({"deltas": (-0.1,)}, "deltas"),
            ({"step": 0.0}, "step"),
            ({"deltas": (0.1,), "step": 0.2}, "step"),
            ({"kappas": ()}, "kappas"),
            ({"kappas": (-0.5,)}, "kappas"),
            ({"act_bounds": ()}, "act_bounds"),
            ({"seeds": ()}, "seeds"),
            ({"horizon": 0.0}, "horizon"),
            ({"workers": 0}, "workers"),
            ({"jitter_ratio": 1.0}, "jitter_ratio"),
            ({"partition_kind": "random"}, "partition_kind"),
            ({"shells": ((0.5, 0.1),)}, "shells"),
            ({"states": ((1.0, 2.0),)}, "states"),
            ({"sweep_starts": 0}, "sweep_starts"),
            ({"target_radius": -1.0}, "target_radius"),
        ],
    )
    def test_field_level_errors(self, kwargs, field):
        with pytest.raises(ConfigError, match=field):
            ScenarioConfig(**kwargs)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="granularity"):
            config_from_dict({"granularity": 3})

    def test_scalar_shortcuts(self):
        cfg = config_from_dict({"delta": 0.05, "seed": 7})
        assert cfg.deltas == (0.05,)
        assert cfg.seeds == (7,)

    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "scenario.toml"
        path.write_text(
            "[scenario]\n"
            'kind = "iss_sweep"\n'
            "grid_n = 40\n"
            "deltas = [0.01, 0.005]\n"
            "kappas = [0.0, 0.1]\n"
            "act_bounds = [0.0, 0.1, 0.5]\n"
            "seeds = [0, 1, 2, 3]\n"
            "sweep_starts = 25\n"
            "horizon = 30.0\n"
            "step = 1e-3\n"
        )
        cfg = config_from_toml(path)
        assert cfg.scenario == "iss_sweep"
        assert cfg.deltas == (0.01, 0.005)
        assert cfg.kappas == (0.0, 0.1)
        assert cfg.act_bounds == (0.0, 0.1, 0.5)
        assert cfg.seeds == (0, 1, 2, 3)

    def test_toml_missing_table(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("horizon = 30.0\n")
        with pytest.raises(ConfigError, match="scenario"):
            config_from_toml(path)

    def test_toml_invalid_syntax(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[scenario\nkind =\n")
        with pytest.raises(ConfigError, match="TOML"):
            config_from_toml(path)

    def test_overrides_replace_grids(self):
        cfg = ScenarioConfig(deltas=(0.1, 0.05), seeds=(1, 2))
        out = cfg.with_overrides(seed=9, delta=0.02, horizon=5.0, workers=None)
        assert out.seeds == (9,)
        assert out.deltas == (0.02,)
        assert out.horizon == 5.0
        assert out.workers == cfg.workers

    def test_grid_excludes_marked_points(self):
        pts = ScenarioConfig(grid_n=200).initial_states()
        assert pts.shape == (200, 3)
        for p in MARKED:
            assert np.min(geodesic_distance(pts, p)) > 1e-6

    def test_explicit_states_used_verbatim(self):
        cfg = ScenarioConfig(states=((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)))
        assert_allclose(cfg.initial_states(), [[0, 0, 1], [1, 0, 0]])

    def test_shell_sample_respects_shells(self):
        shells = ((0.05, 0.5), (1.3, 3.0))
        pts = shell_sample(shells, 50)
        radii = np.linalg.norm(pts, axis=-1)
        inner = (radii >= 0.05) & (radii <= 0.5)
        outer = (radii >= 1.3) & (radii <= 3.0)
        assert np.all(inner | outer)
        assert np.any(inner) and np.any(outer)
        assert_allclose(shell_sample(shells, 50), pts)


class TestStabilize:
    def test_equilibrium_start_settles_immediately(self):
        cfg = ScenarioConfig(states=((0.0, 0.0, 1.0),), horizon=5.0, decay_checks=False)
        rep = run_stabilize(cfg)
        assert rep.runs[0]["settle_time"] == 0.0
        assert rep.runs[0]["ultimate_radius"] == 0.0
        assert rep.runs[0]["bounded"]

    def test_rows_cover_grid_and_aggregates_recompute(self):
        cfg = ScenarioConfig(grid_n=10, deltas=(0.1, 0.05), horizon=3.0, decay_checks=False)
        rep = run_stabilize(cfg)
        assert len(rep.runs) == 20
        keys = {(r["delta"], r["run_index"]) for r in rep.runs}
        assert len(keys) == 20
        assert aggregate_runs(rep.runs) == rep.aggregates

    def test_settle_time_non_increasing_in_delta(self):
        # finer sampling must not slow convergence (small slack for grid
        # quantization of the last-exceed time)
        cfg = ScenarioConfig(grid_n=12, deltas=(0.2, 0.1, 0.05, 0.01), horizon=30.0, decay_checks=False)
        rep = run_stabilize(cfg)
        mean_settle = {a["delta"]: a["mean_settle_time"] for a in rep.aggregates}
        for coarse, fine in zip((0.2, 0.1, 0.05), (0.1, 0.05, 0.01)):
            assert mean_settle[fine] <= mean_settle[coarse] + 0.1

    def test_decay_fields_present_when_enabled(self):
        cfg = ScenarioConfig(grid_n=3, deltas=(0.01,), horizon=6.0, decay_checks=True)
        rep = run_stabilize(cfg)
        for row in rep.runs:
            assert row["decay_ok"]
            assert row["integral_decay_ok"]
            assert row["invariance_violations"] == 0
            assert row["meridional_margin"] >= -1e-3
            assert row["band_residual"] <= 1e-3

    def test_jittered_partition_fallback(self):
        cfg = ScenarioConfig(
            grid_n=3,
            deltas=(0.1,),
            partition_kind="jittered",
            jitter_ratio=0.3,
            step=0.05,
            horizon=8.0,
            decay_checks=False,
        )
        rep = run_stabilize(cfg)
        assert all(r["bounded"] for r in rep.runs)
        assert all(r["ultimate_radius"] < 0.05 for r in rep.runs)


class TestExtend:
    def test_radial_entry_oracle(self):
        cfg = ScenarioConfig(scenario="extend", states=((2.0, 0.0, 0.0),), horizon=30.0)
        rep = run_extend(cfg)
        row = rep.runs[0]
        assert_allclose(row["t_hat"], 13.0 / 16.0, rtol=0, atol=1e-12)
        assert abs(row["entry_time"] - 13.0 / 16.0) <= 2.0 * cfg.step
        assert row["normal_increase_violations"] == 0
        assert row["within_quarter_tube"]
        assert row["reached_target_tube"]

    def test_on_sphere_starts_stay_on_sphere(self):
        # meridional-region starts (x2 < 0 keeps the transfer bump off)
        thetas = (0.4, 1.2, 2.4)
        states = tuple((0.0, -math.sin(t), math.cos(t)) for t in thetas)
        cfg = ScenarioConfig(scenario="extend", states=states, horizon=30.0)
        rep = run_extend(cfg)
        for row in rep.runs:
            assert row["t_hat"] == 0.0
            assert row["normal_radius_max"] <= 1e-6
            assert row["reached_target_tube"]

    def test_in_tube_shell_skips_approach(self):
        cfg = ScenarioConfig(scenario="extend", shells=((0.85, 1.15),), shell_count=6, horizon=30.0)
        rep = run_extend(cfg)
        for row in rep.runs:
            assert row["t_hat"] == 0.0
            assert row["entry_error"] == 0.0
            assert row["normal_increase_violations"] == 0

    def test_shell_sample_all_reach_tube(self):
        cfg = ScenarioConfig(scenario="extend", shell_count=12, horizon=30.0)
        rep = run_extend(cfg)
        agg = rep.aggregates[0]
        assert agg["reached_fraction"] == 1.0
        assert agg["total_normal_increase_violations"] == 0
        assert agg["max_entry_error"] <= 2.0 * cfg.step
        for row in rep.runs:
            assert row["normal_radius_at_switch"] <= 1.0 / 16.0


class TestSweep:
    CONFIG = dict(
        scenario="iss_sweep",
        grid_n=30,
        sweep_starts=4,
        deltas=(0.05, 0.02),
        kappas=(0.0, 0.1),
        act_bounds=(0.0, 0.5),
        horizon=5.0,
        seeds=(0, 1),
    )

    def test_coverage_is_full_factorial(self):
        rep = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        assert len(rep.runs) == rep.meta["expected_rows"] == 2 * 2 * 2 * 4 * 2
        keys = {
            (r["delta"], r["kappa"], r["act_bound"], r["seed"], r["run_index"])
            for r in rep.runs
        }
        assert len(keys) == len(rep.runs)
        assert aggregate_runs(rep.runs) == rep.aggregates

    def test_zero_noise_cell_matches_stabilize_bitwise(self):
        sweep = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        starts = ScenarioConfig(**self.CONFIG).initial_states()[:4]
        plain = run_stabilize(
            ScenarioConfig(states=tuple(map(tuple, starts)), deltas=(0.05, 0.02), horizon=5.0, decay_checks=False)
        )
        plain_by_key = {(r["delta"], r["run_index"] % 4): r for r in plain.runs}
        quiet = [r for r in sweep.runs if r["kappa"] == 0.0 and r["act_bound"] == 0.0]
        assert len(quiet) == 2 * 4 * 2
        for row in quiet:
            ref = plain_by_key[(row["delta"], row["run_index"] % 4)]
            for field in ("settle_time", "ultimate_radius", "max_distance", "sphere_drift", "max_v_excess"):
                assert row[field] == ref[field]

    def test_parallel_serial_equivalence(self):
        serial = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        parallel = run_iss_sweep(ScenarioConfig(**self.CONFIG, workers=2))
        assert serial.runs == parallel.runs
        assert serial.to_json() == parallel.to_json()
        assert serial.runs_csv() == parallel.runs_csv()

    def test_repeat_runs_byte_identical(self):
        a = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        b = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        assert a.runs_csv() == b.runs_csv()
        assert a.aggregates_csv() == b.aggregates_csv()
        assert a.to_json() == b.to_json()

    def test_monotonicity_summaries_reported(self):
        rep = run_iss_sweep(ScenarioConfig(**self.CONFIG))
        summaries = rep.meta["monotonicity"]
        assert len(summaries) == 4
        for s in summaries:
            assert s["act_bounds"] == [0.0, 0.5]
            assert isinstance(s["nondecreasing"], bool)


class TestVerify:
    def test_default_build_passes(self):
        code, bundle = run_verify(ScenarioConfig(scenario="verify"))
        assert code == 0
        assert bundle["ok"]
        assert bundle["failed"] == []
        assert bundle["checks"]["integrator_order"]["ok"]

    def test_flipped_direction_field_fails(self):
        from spherestab.geometry import geodesic_direction

        code, bundle = run_verify(
            ScenarioConfig(scenario="verify"),
            direction_field=lambda x, p: -geodesic_direction(x, p),
        )
        assert code == 1
        assert "geometry_identities" in bundle["failed"]
        assert "gauss_unit_speed" in bundle["failed"]

    def test_richardson_ratio_in_band(self):
        assert 12.0 <= richardson_ratio() <= 20.0

    def test_calibrated_alpha3_clears_default(self):
        pts = ScenarioConfig(grid_n=30).initial_states()[:3]
        batch = run_closed_loop_batch(pts, 0.01, 10.0, 1e-3, record_states=True)
        trajs = [batch.trajectory(r) for r in range(3)]
        assert calibrate_alpha3(trajs) > 0.05


class TestReports:
    def test_trajectory_csv_shape(self):
        batch = run_closed_loop_batch(np.array([[0.6, 0.0, 0.8]]), 0.1, 1.0, 1e-2, record_states=True)
        text = trajectory_csv(batch.trajectory(0))
        lines = text.strip().split("\n")
        assert lines[0] == "t,x1,x2,x3,u1,u2,norm_minus_1,dist_A,V,M1,sample_index"
        assert len(lines) == 102
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert first[-1] == "0"

    def test_write_emits_three_files(self, tmp_path):
        rep = run_stabilize(ScenarioConfig(grid_n=3, deltas=(0.1,), horizon=2.0, decay_checks=False))
        paths = rep.write(tmp_path / "out")
        assert sorted(paths) == ["aggregate.csv", "runs.csv", "summary.json"]
        with open(paths["runs.csv"]) as fh:
            header = fh.readline().strip().split(",")
        assert header == list(rep.runs[0].keys())
        with open(paths["summary.json"]) as fh:
            summary = json.load(fh)
        assert summary["scenario"] == "stabilize"
        assert summary["n_runs"] == 3

    def test_written_files_reproducible(self, tmp_path):
        cfg = ScenarioConfig(grid_n=3, deltas=(0.1,), horizon=2.0, decay_checks=False)
        paths_a = run_stabilize(cfg).write(tmp_path / "a")
        paths_b = run_stabilize(cfg).write(tmp_path / "b")
        for name in paths_a:
            with open(paths_a[name], "rb") as fa, open(paths_b[name], "rb") as fb:
                assert fa.read() == fb.read()


class TestCLI:
    def test_bad_config_exits_two(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[scenario]\ndeltas = [0.1]\nstep = 0.5\n")
        assert main(["simulate", "--config", str(path)]) == 2

    def test_missing_table_exits_two(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("x = 1\n")
        assert main(["sweep", "--config", str(path)]) == 2

    def test_simulate_streams_trajectory(self, capsys):
        assert main(["simulate", "--delta", "0.1", "--horizon", "1", "--step", "0.01"]) == 0
        out = capsys.readouterr().out
        lines = out.strip().split("\n")
        assert lines[0].startswith("t,x1,x2,x3")
        assert len(lines) == 102

    def test_simulate_writes_file(self, tmp_path, capsys):
        code = main(
            ["simulate", "--delta", "0.1", "--horizon", "1", "--step", "0.01", "--out", str(tmp_path)]
        )
        assert code == 0
        capsys.readouterr()
        with open(tmp_path / "trajectory.csv") as fh:
            assert fh.readline().startswith("t,x1,x2,x3")

    def test_sweep_writes_reports(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            "[scenario]\n"
            "grid_n = 30\n"
            "sweep_starts = 3\n"
            "deltas = [0.05]\n"
            "kappas = [0.0, 0.1]\n"
            "act_bounds = [0.0]\n"
            "seeds = [0]\n"
            "horizon = 3.0\n"
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        capsys.readouterr()
        with open(out / "runs.csv") as fh:
            rows = fh.read().strip().split("\n")
        assert len(rows) == 1 + 2 * 3

    def test_empty_config_file_exits_two(self, capsys):
        assert main(["extend", "--config", "/dev/null"]) == 2
        capsys.readouterr()

    def test_extend_stdout_summary(self, tmp_path, capsys):
        cfg = tmp_path / "extend.toml"
        cfg.write_text('[scenario]\nkind = "extend"\nshell_count = 4\nhorizon = 30.0\n')
        assert main(["extend", "--config", str(cfg)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["scenario"] == "extend"
        assert summary["n_runs"] == 4
        assert summary["aggregates"][0]["reached_fraction"] == 1.0

    def test_verify_passes_and_writes(self, tmp_path, capsys):
        assert main(["verify", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        bundle = json.loads(out)
        assert bundle["ok"]
        with open(tmp_path / "verify.json") as fh:
            assert json.load(fh) == bundle
