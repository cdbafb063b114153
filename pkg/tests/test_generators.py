"""Tests for kfusion_lab.generators."""

from __future__ import annotations

import numpy as np
import pytest

from kfusion_lab.engine import block_operators, classify, frame_operator
from kfusion_lab.errors import InvalidConfig
from kfusion_lab.generators import (
    build_sequence_example,
    column_sets,
    gen_instance,
    haar_unitary,
    positive_perturbation,
    random_gl_plus,
    random_rank_k,
    random_subspace,
    rotated_subspaces,
)
from kfusion_lab.models import FusionSystem
from kfusion_lab.operators import is_positive, op_norm, pos_bounds, projection


def _gen(**overrides):
    params = {
        "dim": 5,
        "n_subspaces": 4,
        "max_subdim": 3,
        "controller_condition_number": 4.0,
        "k_rank": 3,
        "seed": 42,
    }
    params.update(overrides)
    return gen_instance(**params)


class TestBuildingBlocks:
    def test_haar_unitary_is_unitary(self, rng):
        u = haar_unitary(5, rng)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(5), atol=1e-12)

    def test_random_subspace_dimension(self, rng):
        assert random_subspace(5, 2, rng).dim == 2
        assert random_subspace(5, 0, rng).dim == 0

    def test_gl_plus_spectrum(self, rng):
        low, high = pos_bounds(random_gl_plus(4, 3.0, rng))
        assert low == pytest.approx(1.0)
        assert high == pytest.approx(3.0)

    def test_rank_k(self, rng):
        assert np.linalg.matrix_rank(random_rank_k(5, 2, rng)) == 2

    def test_column_sets_cover(self, rng):
        sets = column_sets(6, 3, 2, rng)
        assert sorted(np.concatenate(sets).tolist()) == list(range(6))

    def test_column_sets_warn_when_cover_is_impossible(self, rng, caplog):
        with caplog.at_level("WARNING"):
            column_sets(6, 2, 2, rng)
        assert "cannot cover" in caplog.text


class TestGenInstance:
    def test_same_seed_same_instance(self):
        a, b = _gen(), _gen()
        np.testing.assert_array_equal(a.K, b.K)
        np.testing.assert_array_equal(a.C, b.C)

    def test_different_seed_differs(self):
        assert not np.allclose(_gen().K, _gen(seed=43).K)

    def test_positivity_mode_gives_positive_blocks(self):
        spec = _gen()
        assert all(is_positive(b) for b in block_operators(spec))
        assert classify(spec).is_frame

    def test_k_rank(self):
        assert np.linalg.matrix_rank(_gen(k_rank=2).K) == 2

    def test_without_positivity_s_is_not_self_adjoint(self):
        s = frame_operator(_gen(positivity=False))
        assert op_norm(s - s.conj().T) > 1e-6

    @pytest.mark.parametrize(
        "overrides",
        [{"max_subdim": 6}, {"k_rank": 0}, {"dim": 0}, {"controller_condition_number": 0.5}],
    )
    def test_invalid_parameters(self, overrides):
        with pytest.raises(InvalidConfig):
            _gen(**overrides)


class TestSequenceExample:
    def test_frame_operator(self):
        spec = build_sequence_example(3, 2.0, 3.0)
        np.testing.assert_allclose(frame_operator(spec), np.diag([6.0, 3.0, 2.0]), atol=1e-12)

    def test_identity_k(self):
        np.testing.assert_array_equal(build_sequence_example(3, 1, 1, k="identity").K, np.eye(3))

    @pytest.mark.parametrize(
        "args", [(0, 1.0, 1.0), (3, -1.0, 1.0), (3, 1.0, float("nan")), (3, 1.0, 1.0, "zero")]
    )
    def test_invalid_arguments(self, args):
        with pytest.raises(InvalidConfig):
            build_sequence_example(*args)


class TestPerturbedFamilies:
    def test_rotation_by_zero_is_identity(self, sequence_spec):
        rotated = rotated_subspaces(sequence_spec.system, 0)
        for old, new in zip(sequence_spec.system.subspaces, rotated):
            np.testing.assert_allclose(projection(old), projection(new), atol=1e-12)

    def test_positive_perturbation_difference(self, sequence_spec, rng):
        extended, family = positive_perturbation(sequence_spec, 0.2, rng)
        assert len(family) == len(extended.system) == 8
        moved = extended.with_system(
            FusionSystem.from_pairs(zip(family, extended.system.weights))
        )
        d = frame_operator(moved) - frame_operator(extended)
        np.testing.assert_allclose(d, 0.24 * np.eye(4), atol=1e-12)

    def test_epsilon_must_be_positive(self, sequence_spec, rng):
        with pytest.raises(InvalidConfig):
            positive_perturbation(sequence_spec, 0.0, rng)


class TestGeneratorGuarantees:
    @pytest.mark.parametrize("seed", range(20))
    def test_full_rank_k_gives_frame(self, seed):
        assert classify(_gen(seed=seed, k_rank=5)).is_frame

    def test_single_subspace_is_whole_space(self):
        spec = _gen(n_subspaces=1, max_subdim=5)
        assert spec.system.subspaces[0].dim == 5

    def test_one_dimensional_example(self):
        report = classify(build_sequence_example(1, 2.0, 3.0))
        assert (report.lower, report.upper) == pytest.approx((6.0, 6.0))
