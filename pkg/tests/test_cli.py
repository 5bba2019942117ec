import os
import subprocess
import sys

import numpy as np
import pytest

from dyadicflow.cli import main, run_scan, run_simulation, semigroup_norm_series
from dyadicflow.config import (
    FrontScenario,
    RunConfig,
    SweepSpec,
    load_config,
    save_config,
)
from dyadicflow.integrate import Scheme, StepControls
from dyadicflow.model import ModelParams
from dyadicflow.output import read_reports_json, read_scan_csv, read_series_csv


def write_cfg(tmp_path, name="run.cfg", **overrides):
    defaults = dict(
        params=ModelParams(alpha=0.3, trunc_k=8, norm_s=1.5),
        controls=StepControls(scheme=Scheme.EXPLICIT_ADAPTIVE, record_every=0.1),
        scenario=FrontScenario(k0=3, q=1.2, r=0.5),
        t_end=0.5,
        checks=("monotone_nonneg", "max_principle", "sqrt2_structure"),
        output_prefix=str(tmp_path / "out" / "run"),
    )
    defaults.update(overrides)
    cfg = RunConfig(**defaults)
    path = tmp_path / name
    save_config(cfg, path)
    return path, cfg


class TestSimulate:
    def test_reached_end_exit_zero(self, tmp_path, capsys):
        path, cfg = write_cfg(tmp_path)
        assert main(["simulate", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert out.count("\n") == 1  # one-line summary
        assert "reached_t_end" in out
        for suffix in ("_trajectory.csv", "_reports.json", "_state.csv",
                       "_profile.csv", "_blowup.json"):
            assert os.path.exists(cfg.output_prefix + suffix)

    def test_quiet_suppresses_stdout(self, tmp_path, capsys):
        path, _ = write_cfg(tmp_path)
        assert main(["simulate", "--config", str(path), "--quiet"]) == 0
        assert capsys.readouterr().out == ""

    def test_escape_exit_two(self, tmp_path, capsys):
        # deep inviscid cascade crosses the default 1e6-fold norm threshold
        path, cfg = write_cfg(
            tmp_path,
            params=ModelParams(alpha=0.0, trunc_k=26, norm_s=1.5),
            controls=StepControls(
                scheme=Scheme.EXPLICIT_ADAPTIVE, record_every=0.01,
                max_steps=20_000_000,
            ),
            scenario=FrontScenario(k0=4, q=1.3, r=0.5),
            t_end=2.0,
            checks=("monotone_nonneg",),
        )
        assert main(["simulate", "--config", str(path)]) == 2
        assert "escape" in capsys.readouterr().out

    def test_malformed_config_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[model]\ntrunc_k = tiny\n")
        assert main(["simulate", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "trunc_k" in err

    def test_missing_file_exit_one(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 1

    def test_out_override(self, tmp_path):
        path, _ = write_cfg(tmp_path)
        prefix = str(tmp_path / "elsewhere" / "x")
        assert main(["simulate", "--config", str(path), "--out", prefix, "--quiet"]) == 0
        assert os.path.exists(prefix + "_trajectory.csv")

    def test_rerun_byte_identical(self, tmp_path):
        path, cfg = write_cfg(tmp_path)
        assert main(["simulate", "--config", str(path), "--quiet"]) == 0
        first = open(cfg.output_prefix + "_trajectory.csv", "rb").read()
        assert main(["simulate", "--config", str(path), "--quiet"]) == 0
        assert open(cfg.output_prefix + "_trajectory.csv", "rb").read() == first


class TestCheck:
    def test_all_pass_exit_zero(self, tmp_path):
        path, cfg = write_cfg(tmp_path)
        assert main(["check", "--config", str(path), "--quiet"]) == 0
        reports = read_reports_json(cfg.output_prefix + "_reports.json")
        assert all(r.passed for r in reports)

    def test_fault_injection_exit_three(self, tmp_path):
        path, cfg = write_cfg(tmp_path)
        assert main(
            ["check", "--config", str(path), "--fault-inject", "sign-flip", "--quiet"]
        ) == 3
        reports = read_reports_json(cfg.output_prefix + "_reports.json")
        assert any(not r.passed for r in reports)

    def test_ratio_fault_hits_structure_only(self, tmp_path):
        path, cfg = write_cfg(tmp_path)
        assert main(
            ["check", "--config", str(path), "--fault-inject", "sqrt2-ratio", "--quiet"]
        ) == 3
        failed = {r.name for r in read_reports_json(cfg.output_prefix + "_reports.json")
                  if not r.passed}
        assert failed == {"sqrt2_structure"}

    def test_empty_check_list_exit_zero(self, tmp_path):
        path, cfg = write_cfg(tmp_path, checks=())
        assert main(["check", "--config", str(path), "--quiet"]) == 0
        assert read_reports_json(cfg.output_prefix + "_reports.json") == []


class TestScan:
    def make_sweep(self, tmp_path, parallelism=1):
        base = RunConfig(
            params=ModelParams(alpha=0.3, trunc_k=8, norm_s=1.5),
            controls=StepControls(scheme=Scheme.EXPLICIT_ADAPTIVE, record_every=0.05),
            scenario=FrontScenario(k0=3, q=1.2, r=0.5),
            t_end=0.3,
            checks=(),
            output_prefix=str(tmp_path / "out" / "scan"),
        )
        spec = SweepSpec(alphas=(0.15, 0.3), ks=(8, 10), base=base,
                         parallelism=parallelism)
        path = tmp_path / "sweep.cfg"
        save_config(base, path, sweep=spec)
        return path, spec

    def test_scan_summary(self, tmp_path):
        path, spec = self.make_sweep(tmp_path)
        assert main(["scan", "--config", str(path), "--quiet"]) == 0
        rows = read_scan_csv(spec.base.output_prefix + "_scan.csv")
        assert [(a, k) for a, k, _, _ in rows] == [
            (0.15, 8), (0.15, 10), (0.3, 8), (0.3, 10)
        ]
        assert all(m > 0 for _, _, m, _ in rows)

    def test_single_cell_matches_simulate(self, tmp_path):
        base = RunConfig(
            params=ModelParams(alpha=0.3, trunc_k=8, norm_s=1.5),
            controls=StepControls(scheme=Scheme.EXPLICIT_ADAPTIVE, record_every=0.05),
            scenario=FrontScenario(k0=3, q=1.2, r=0.5),
            t_end=0.3,
        )
        spec = SweepSpec(alphas=(0.3,), ks=(8,), base=base)
        rows = run_scan(spec)
        traj = run_simulation(base)
        assert rows == [(0.3, 8, traj.max_xs_norm(), traj.escape_time)]

    def test_parallelism_determinism(self, tmp_path):
        path1, spec1 = self.make_sweep(tmp_path, parallelism=1)
        seq = run_scan(spec1)
        par = run_scan(SweepSpec(spec1.alphas, spec1.ks, spec1.base, parallelism=8))
        assert seq == par


class TestSemigroup:
    def test_contracting_exit_zero(self, tmp_path):
        path, cfg = write_cfg(
            tmp_path,
            params=ModelParams(alpha=0.35, trunc_k=8, norm_s=1.5),
            t_end=1.0,
        )
        assert main(["semigroup", "--config", str(path), "--quiet"]) == 0
        series = read_series_csv(cfg.output_prefix + "_semigroup.csv")
        norms = [n for _, n in series]
        assert all(n1 <= n0 + 1e-9 for n0, n1 in zip(norms, norms[1:]))

    def test_alpha_zero_unsupported_exit_one(self, tmp_path):
        path, _ = write_cfg(tmp_path, params=ModelParams(alpha=0.0, trunc_k=8))
        assert main(["semigroup", "--config", str(path), "--quiet"]) == 1

    def test_constant_data_constant_norm(self, tmp_path):
        from dyadicflow.config import CustomScenario

        path, cfg = write_cfg(
            tmp_path,
            params=ModelParams(alpha=0.3, trunc_k=3, norm_s=1.5),
            scenario=CustomScenario(values=(0.5, 0.5, 0.5, 0.5)),
            checks=(),
            t_end=0.5,
        )
        assert main(["semigroup", "--config", str(path), "--quiet"]) == 0
        series = read_series_csv(cfg.output_prefix + "_semigroup.csv")
        norms = [n for _, n in series]
        assert max(norms) - min(norms) <= 1e-12


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        path, _ = write_cfg(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "dyadicflow", "simulate", "--config", str(path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.count("\n") == 1
