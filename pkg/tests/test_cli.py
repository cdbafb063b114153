"""End-to-end tests of the kfusion-lab command line."""

from __future__ import annotations

import json

import numpy as np
import pytest

from kfusion_lab.cli import build_parser, main
from kfusion_lab.generators import (
    build_sequence_example,
    haar_unitary,
    positive_perturbation,
    rotated_subspaces,
)
from kfusion_lab.models import FusionSystem
from kfusion_lab.serialization import matrix_to_pairs, write_spec

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _run(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def _example(tmp_path, *extra: str) -> str:
    path = tmp_path / "example.json"
    argv = ["example", "--n", "4", "--alpha", "2", "--beta", "3", *extra]
    assert _run([*argv, "--out", str(path)]) == 0
    return str(path)


def _write_matrix(path, matrix) -> str:
    path.write_text(json.dumps(matrix_to_pairs(matrix)), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class TestParser:
    def test_no_command_prints_help(self, capsys):
        assert _run([]) == 0
        assert "usage" in capsys.readouterr().out

    def test_suite_theorem_is_repeatable(self):
        args = build_parser().parse_args(["suite", "--theorem", "a", "--theorem", "b"])
        assert args.theorems == ["a", "b"]

    def test_transform_requires_matrix(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["transform", "spec.json"])


# ---------------------------------------------------------------------------
# Spec producers
# ---------------------------------------------------------------------------


class TestGenAndExample:
    def test_gen_is_deterministic(self, capsys):
        argv = ["gen", "--dim", "4", "--subspaces", "3", "--k-rank", "2", "--seed", "5"]
        assert _run(argv) == 0
        first = capsys.readouterr().out
        assert _run(argv) == 0
        assert capsys.readouterr().out == first
        assert json.loads(first)["metadata"]["seed"] == "5"

    def test_gen_invalid_dimension(self, capsys):
        assert _run(["gen", "--dim", "0"]) == 2
        assert "Error" in capsys.readouterr().err

    def test_example_writes_file(self, tmp_path):
        path = _example(tmp_path)
        assert json.loads(open(path, encoding="utf-8").read())["dim"] == 4


# ---------------------------------------------------------------------------
# Bounds and checks
# ---------------------------------------------------------------------------


class TestBoundsAndCheck:
    def test_bounds_json(self, tmp_path, capsys):
        path = _example(tmp_path)
        assert _run(["bounds", path, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["upper"] == pytest.approx(6.0)
        assert payload["lower"] == pytest.approx(6.0)
        assert payload["is_frame"] is True

    def test_bounds_identity_k(self, tmp_path, capsys):
        path = _example(tmp_path, "--k", "identity")
        assert _run(["bounds", path, "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["lower"] == pytest.approx(1.5)

    def test_check_passes(self, tmp_path, capsys):
        path = _example(tmp_path)
        assert _run(["check", path, "--lower", "3", "--upper", "6", "--trials", "10000"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_check_inflated_lower_bound_fails(self, tmp_path):
        path = _example(tmp_path)
        assert _run(["check", path, "--lower", "6.5", "--upper", "6", "--trials", "500"]) == 1

    def test_trials_default_from_settings(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("CKFF_VERIFY_TRIALS", "17")
        path = _example(tmp_path)
        assert _run(["check", path, "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["trials"] == 17

    def test_missing_file(self, tmp_path):
        assert _run(["bounds", str(tmp_path / "missing.json")]) == 2

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{", encoding="utf-8")
        assert _run(["bounds", str(path)]) == 2

    def test_invalid_tolerance(self, tmp_path):
        path = _example(tmp_path)
        assert _run(["bounds", path, "--tol-rel", "-1"]) == 2


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


class TestTransformAndPerturb:
    def test_unitary_corollary(self, tmp_path, capsys, rng):
        spec = tmp_path / "spec.json"
        write_spec(spec, build_sequence_example(4, 1.0, 1.0, k="identity"))
        matrix = _write_matrix(tmp_path / "u.json", haar_unitary(4, rng))
        out = tmp_path / "moved.json"
        code = _run(
            ["transform", str(spec), "--matrix", matrix, "--corollary", "--json", "--out", str(out)]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["passed"] is True
        assert out.exists()

    def test_corollary_rejects_non_unitary(self, tmp_path):
        spec = tmp_path / "spec.json"
        write_spec(spec, build_sequence_example(4, 1.0, 1.0, k="identity"))
        matrix = _write_matrix(tmp_path / "u.json", 2 * np.eye(4))
        assert _run(["transform", str(spec), "--matrix", matrix, "--corollary"]) == 1

    def test_perturb(self, tmp_path, capsys, rng):
        extended, family = positive_perturbation(build_sequence_example(4, 2.0, 3.0), 0.2, rng)
        w_path, v_path = tmp_path / "w.json", tmp_path / "v.json"
        write_spec(w_path, extended)
        write_spec(
            v_path,
            extended.with_system(FusionSystem.from_pairs(zip(family, extended.system.weights))),
        )
        argv = ["perturb", str(w_path), "--v-spec", str(v_path), "--radius", "0.25"]
        code = _run([*argv, "--json"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["lower"] == pytest.approx(5.0)

    def test_perturb_failed_hypothesis(self, tmp_path, capsys):
        base = build_sequence_example(4, 2.0, 3.0)
        w_path, v_path = tmp_path / "w.json", tmp_path / "v.json"
        write_spec(w_path, base)
        rotated = rotated_subspaces(base.system, 0.1)
        moved = FusionSystem.from_pairs(zip(rotated, base.system.weights))
        write_spec(v_path, base.with_system(moved))
        assert _run(["perturb", str(w_path), "--v-spec", str(v_path), "--radius", "0.25"]) == 1
        assert "perturbation_positive_definite" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------


class TestSuiteCommand:
    def test_empty_suite(self, capsys):
        assert _run(["suite"]) == 0
        assert "No theorems selected" in capsys.readouterr().out

    def test_suite_json_lines(self, capsys, tmp_path):
        out = tmp_path / "reports.jsonl"
        argv = ["suite", "--theorem", "restrict", "--instances", "3", "--max-dim", "4", "--json"]
        assert _run([*argv, "--out", str(out)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert out.read_text(encoding="utf-8").splitlines() == lines

    def test_unknown_theorem(self):
        assert _run(["suite", "--theorem", "nope"]) == 2

    def test_list_theorems(self, capsys):
        assert _run(["list-theorems"]) == 0
        assert "unitary_transform_corollary" in capsys.readouterr().out
