"""
Integration tests for the freebound command line.

Tests verify:
- Help and exit status without a command
- Config errors end in failure.json with the offending line or key
- A short solve writes its artifacts and summary, with the optimizer misfit
- Study argument errors are reported like other domain errors
- The logging filter tags records with the running command
"""

import json
import logging
from unittest.mock import MagicMock

import pytest

from app.application.shape_optimizer import ShapeOptimizer
from app.cli.freebound import IterationContextFilter, build_parser, main

pytestmark = pytest.mark.integration

COARSE_CFG = """\
# coarse run for tests
m = 12
kappa1 = 0.129
kappa2 = 0.233
center = 0.5
r0 = 0.3
n_samples = 120
target_h = 0.05
max_iters = 2
max_backtracks = 12
"""


@pytest.fixture
def coarse_cfg(tmp_path):
    path = tmp_path / "coarse.cfg"
    path.write_text(COARSE_CFG, encoding="utf-8")
    return path


def _failure(out):
    return json.loads((out / "failure.json").read_text(encoding="utf-8"))


# ============================================
# Parser Tests
# ============================================

class TestParser:

    def test_no_command(self, capsys):
        assert main([]) == 1
        assert "solve" in capsys.readouterr().out

    def test_solve_flags(self):
        args = build_parser().parse_args(["solve", "--continuation", "--snapshot-stride", "5", "--out", "x"])

        assert args.continuation
        assert args.snapshot_stride == 5
        assert args.out == "x"
        assert not args.dump_mesh

    def test_study_defaults(self):
        args = build_parser().parse_args(["study-penalization"])

        assert args.eps == [0.1, 0.05, 0.01]


# ============================================
# Failure Records
# ============================================

class TestFailures:

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(COARSE_CFG + "stepsize = 3\n", encoding="utf-8")
        out = tmp_path / "out"

        code = main(["solve", "--config", str(cfg), "--out", str(out)])

        assert code == 1
        failure = _failure(out)
        assert failure["command"] == "solve"
        assert failure["error_type"] == "ConfigError"
        assert failure["line"] == 11
        assert failure["key"] == "stepsize"
        assert "[ERROR]" in capsys.readouterr().err

    def test_missing_geometry_key(self, tmp_path):
        cfg = tmp_path / "no_r0.cfg"
        cfg.write_text(COARSE_CFG.replace("r0 = 0.3\n", ""), encoding="utf-8")
        out = tmp_path / "out"

        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 1

        failure = _failure(out)
        assert failure["key"] == "r0"
        assert "'r0'" in failure["message"]

    def test_missing_config_file(self, tmp_path):
        out = tmp_path / "out"

        assert main(["verify-fem", "--config", str(tmp_path / "absent.cfg"), "--out", str(out)]) == 1

        assert "cannot read config file" in _failure(out)["message"]

    def test_study_argument_error(self, coarse_cfg, tmp_path):
        out = tmp_path / "out"

        code = main(["study-penalization", "--config", str(coarse_cfg), "--out", str(out), "--eps", "0.01", "0.1"])

        assert code == 1
        failure = _failure(out)
        assert failure["error_type"] == "InvalidParameterError"
        assert "strictly decreasing" in failure["message"]


# ============================================
# Solve Command
# ============================================

class TestSolve:

    def test_artifacts(self, coarse_cfg, tmp_path, capsys):
        out = tmp_path / "run"

        code = main(["solve", "--config", str(coarse_cfg), "--out", str(out), "--dump-mesh", "--dump-fields"])

        assert code == 0
        for name in (
            "summary.json",
            "summary.txt",
            "iterations.csv",
            "boundary_initial.csv",
            "boundary_initial.svg",
            "boundary_final.csv",
            "boundary_final.svg",
            "control_points_initial.csv",
            "control_points_final.csv",
            "mesh_final.txt",
            "field_u1.csv",
            "field_u2eps.csv",
            "field_p1.csv",
            "field_p2.csv",
        ):
            assert (out / name).is_file(), name
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["status"] in {"converged", "stationary", "line_search_failed", "max_iters"}
        assert summary["j_eps_final"] <= summary["j_eps_initial"]
        assert summary["stages"] == 1
        assert "J_eps final" in capsys.readouterr().out
        assert not (out / "failure.json").exists()

    def test_misfit_comes_from_the_optimizer(self, coarse_cfg, tmp_path, monkeypatch):
        misfit = MagicMock(return_value=0.25)
        monkeypatch.setattr(ShapeOptimizer, "unpenalized_misfit", misfit)
        out = tmp_path / "run"

        assert main(["solve", "--config", str(coarse_cfg), "--out", str(out)]) == 0

        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["misfit_initial"] == 0.25
        assert summary["misfit_final"] == 0.25
        assert misfit.call_count == 2

    def test_snapshots(self, coarse_cfg, tmp_path):
        out = tmp_path / "run"

        assert main(["solve", "--config", str(coarse_cfg), "--out", str(out), "--snapshot-stride", "1"]) == 0

        snapshots = sorted(p.name for p in (out / "snapshots").iterdir())
        assert snapshots[0] == "iter_0000_eps_0.1.svg"

    @pytest.mark.slow
    def test_reruns_are_identical(self, coarse_cfg, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"

        main(["solve", "--config", str(coarse_cfg), "--out", str(first)])
        main(["solve", "--config", str(coarse_cfg), "--out", str(second)])

        for name in ("iterations.csv", "boundary_final.csv", "control_points_final.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


# ============================================
# Logging Filter
# ============================================

class TestIterationContextFilter:

    def test_prefixes_once(self):
        context = IterationContextFilter("solve")
        record = logging.LogRecord("app", logging.INFO, __file__, 1, "started", None, None)

        assert context.filter(record)
        assert context.filter(record)

        assert record.getMessage() == "[solve] started"

    def test_without_command(self):
        record = logging.LogRecord("app", logging.INFO, __file__, 1, "started", None, None)

        IterationContextFilter().filter(record)

        assert record.getMessage() == "started"
