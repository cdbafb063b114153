"""Tests for kfusion_lab.engine on the sequence-space example and random specs."""

from __future__ import annotations

import numpy as np
import pytest

from kfusion_lab import engine
from kfusion_lab.engine import (
    analysis_apply,
    analysis_matrix,
    block_operators,
    classify,
    frame_operator,
    frame_operator_sandwich,
    frame_sum,
    optimal_lower_bound,
    plain_frame_operator,
    s_restricted_inverse,
    synthesis_apply,
    synthesis_surjective,
    verify_definition,
)
from kfusion_lab.errors import (
    InvalidConfig,
    NonRealForm,
    NonSelfAdjointS,
    NotAFrame,
    NotPositiveBlock,
    ZeroK,
)
from kfusion_lab.generators import build_sequence_example, gen_instance
from kfusion_lab.models import BlockVector, ControlledFrameSpec, FusionSystem, Subspace
from kfusion_lab.operators import op_norm, pencil_min, sqrt_psd

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _random_spec(seed: int = 3, dim: int = 4, k_rank: int = 4) -> ControlledFrameSpec:
    return gen_instance(
        dim=dim,
        n_subspaces=3,
        max_subdim=dim,
        controller_condition_number=3.0,
        k_rank=k_rank,
        seed=seed,
    )


def _skew_controlled_spec() -> ControlledFrameSpec:
    """Coordinate lines in C^2 with a controller that breaks block positivity."""
    eye = np.eye(2)
    system = FusionSystem.from_pairs((Subspace(basis=eye[:, [i]]), 1.0) for i in range(2))
    return ControlledFrameSpec(
        system=system, C=np.array([[1.0, 1.0], [0.0, 1.0]]), Cp=eye, K=eye
    )


# ---------------------------------------------------------------------------
# Frame operator and quadratic form
# ---------------------------------------------------------------------------


class TestFrameOperator:
    def test_sequence_example_is_diagonal(self, sequence_spec):
        s = frame_operator(sequence_spec)
        np.testing.assert_allclose(s, np.diag(6.0 / np.arange(1, 5)), atol=1e-12)

    def test_frame_sum_matches_form(self, sequence_spec, rng):
        f = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        s = frame_operator(sequence_spec)
        assert frame_sum(sequence_spec, f) == pytest.approx((f.conj() @ s @ f).real)

    def test_blocks_sum_to_s(self):
        spec = _random_spec()
        total = sum(
            w**2 * b for w, b in zip(spec.system.weights, block_operators(spec))
        )
        np.testing.assert_allclose(total, frame_operator(spec), atol=1e-10)

    def test_non_self_adjoint_s_raises(self):
        with pytest.raises(NonSelfAdjointS):
            classify(_skew_controlled_spec())

    def test_complex_frame_sum_raises(self):
        # C' = iC turns every term into -i ||pi_i f||^2
        system = FusionSystem.from_pairs([(Subspace(basis=np.eye(2)), 1.0)])
        spec = ControlledFrameSpec(system=system, C=np.eye(2), Cp=1j * np.eye(2), K=np.eye(2))
        with pytest.raises(NonRealForm):
            frame_sum(spec, np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# Analysis and synthesis
# ---------------------------------------------------------------------------


class TestAnalysisSynthesis:
    def test_s_equals_t_star_t(self):
        spec = _random_spec()
        t = analysis_matrix(spec)
        np.testing.assert_allclose(t.conj().T @ t, frame_operator(spec), atol=1e-9)

    def test_synthesis_is_adjoint_of_analysis(self, rng):
        spec = _random_spec()
        f = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        g = BlockVector(
            blocks=tuple(
                rng.standard_normal(4) + 1j * rng.standard_normal(4) for _ in range(3)
            )
        )
        lhs = analysis_apply(spec, f).inner(g)
        rhs = np.vdot(f, synthesis_apply(spec, g))
        assert lhs == pytest.approx(rhs.conjugate(), rel=1e-9)

    def test_non_positive_block_raises(self):
        with pytest.raises(NotPositiveBlock) as info:
            analysis_matrix(_skew_controlled_spec())
        assert info.value.min_eigenvalue < 0

    def test_synthesis_surjective_for_covering_system(self, sequence_spec):
        assert synthesis_surjective(sequence_spec)


# ---------------------------------------------------------------------------
# Optimal bounds
# ---------------------------------------------------------------------------


class TestClassify:
    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_identity_k_lower_bound(self, n):
        report = classify(build_sequence_example(n, 2.0, 3.0, k="identity"))
        assert report.lower == pytest.approx(6.0 / n)
        assert report.upper == pytest.approx(6.0)

    def test_upper_bound_n16(self):
        assert classify(build_sequence_example(16, 2.0, 3.0)).upper == pytest.approx(6.0)

    def test_weighted_k_lower_bound(self, sequence_spec):
        report = classify(sequence_spec)
        assert report.lower_optimal == pytest.approx(6.0)
        assert report.is_frame
        assert not report.is_parseval

    def test_parseval(self):
        report = classify(build_sequence_example(5, 1.0, 1.0))
        assert report.is_parseval

    def test_bessel_check(self, sequence_spec):
        report = classify(sequence_spec)
        assert report.synthesis_norm == pytest.approx(np.sqrt(6.0))
        assert report.bessel_ok

    def test_bessel_fields_absent_without_analysis_map(self):
        # S = C' is self-adjoint, but C' pi_0 is not
        spec = _skew_controlled_spec()
        spec = spec.with_controllers(np.eye(2), np.array([[2.0, 1.0], [1.0, 2.0]]))
        report = classify(spec)
        assert report.lower == pytest.approx(1.0)
        assert report.synthesis_norm is None
        assert report.bessel_ok is None

    def test_witness_attains_lower_bound(self):
        spec = _random_spec(k_rank=2)
        report = classify(spec)
        w = report.lower_witness
        k_star = np.linalg.norm(spec.K.conj().T @ w) ** 2
        assert frame_sum(spec, w) == pytest.approx(report.lower_optimal * k_star, rel=1e-6)

    def test_non_frame(self):
        eye = np.eye(3)
        system = FusionSystem.from_pairs([(Subspace(basis=eye[:, [0]]), 1.0)])
        report = classify(ControlledFrameSpec.uncontrolled(system))
        assert not report.is_frame
        assert report.lower == pytest.approx(0.0, abs=1e-12)

    def test_rank_deficient_k_ignores_kernel(self):
        eye = np.eye(3)
        system = FusionSystem.from_pairs([(Subspace(basis=eye[:, [0]]), 1.0)])
        spec = ControlledFrameSpec.uncontrolled(system, K=np.diag([1.0, 0.0, 0.0]))
        assert classify(spec).lower_optimal == pytest.approx(1.0)

    def test_zero_k_raises(self, sequence_spec):
        with pytest.raises(ZeroK):
            optimal_lower_bound(sequence_spec.with_k(np.zeros((4, 4))))

    def test_small_norm_k_is_not_zero(self, identity_k_spec):
        report = classify(identity_k_spec.with_k(1e-5 * np.eye(4)))
        # S = diag(6, 3, 2, 1.5), KK* = 1e-10 I
        assert report.lower_optimal == pytest.approx(1.5e10, rel=1e-9)
        assert report.upper == pytest.approx(6.0)
        assert report.is_frame

    def test_k_below_the_absolute_floor_is_zero(self, identity_k_spec):
        with pytest.raises(ZeroK):
            optimal_lower_bound(identity_k_spec.with_k(1e-8 * np.eye(4)))

    def test_sandwich_holds(self):
        spec = _random_spec(seed=11, k_rank=3)
        assert frame_operator_sandwich(spec, classify(spec))


# ---------------------------------------------------------------------------
# Definition check
# ---------------------------------------------------------------------------


class TestVerifyDefinition:
    def test_sequence_bounds_pass(self, sequence_spec):
        check = verify_definition(sequence_spec, 3.0, 6.0, 10_000, seed=0)
        assert check.passed
        assert check.violations == ()

    def test_inflated_lower_bound_fails(self, sequence_spec):
        check = verify_definition(sequence_spec, 6.5, 6.0, 1000, seed=0)
        assert not check.passed
        assert {v.side for v in check.violations} == {"lower"}

    def test_deflated_upper_bound_fails(self, sequence_spec):
        check = verify_definition(sequence_spec, 3.0, 2.0, 1000, seed=0)
        assert any(v.side == "upper" for v in check.violations)

    def test_optimal_bounds_pass_on_random_spec(self):
        spec = _random_spec(seed=5, k_rank=2)
        report = classify(spec)
        assert verify_definition(spec, report.lower, report.upper, 2000, seed=1).passed

    def test_same_seed_same_witness(self, sequence_spec):
        a = verify_definition(sequence_spec, 6.5, 6.0, 100, seed=9)
        b = verify_definition(sequence_spec, 6.5, 6.0, 100, seed=9)
        np.testing.assert_array_equal(a.witness, b.witness)

    def test_zero_trials_rejected(self, sequence_spec):
        with pytest.raises(InvalidConfig):
            verify_definition(sequence_spec, 1.0, 6.0, 0, seed=0)


# ---------------------------------------------------------------------------
# Restricted inverse
# ---------------------------------------------------------------------------


class TestRestrictedInverse:
    def test_inverts_on_range_of_k(self):
        spec = _random_spec(seed=2, k_rank=2)
        result = s_restricted_inverse(spec)
        assert result.certified
        assert result.image.dim == 2
        s = frame_operator(spec)
        x = result.image.basis[:, 0]
        np.testing.assert_allclose(result.inverse @ (s @ x), x, atol=1e-8)

    def test_bracket_constants(self, sequence_spec):
        result = s_restricted_inverse(sequence_spec)
        assert result.lo == pytest.approx(1 / 6)
        # ||K^+||^2 = 4 for n = 4
        assert result.hi == pytest.approx(4 / 6)

    def test_not_a_frame(self):
        eye = np.eye(3)
        system = FusionSystem.from_pairs([(Subspace(basis=eye[:, [0]]), 1.0)])
        with pytest.raises(NotAFrame):
            s_restricted_inverse(ControlledFrameSpec.uncontrolled(system))


# ---------------------------------------------------------------------------
# Mutation: a wrong square root must be caught
# ---------------------------------------------------------------------------


class TestMutation:
    def test_scaled_square_root_breaks_s_equals_t_star_t(self, monkeypatch):
        spec = _random_spec()
        monkeypatch.setattr(engine, "sqrt_psd", lambda a, tol: 1.1 * sqrt_psd(a, tol))
        t = analysis_matrix(spec)
        s = frame_operator(spec)
        assert op_norm(t.conj().T @ t - s) > 1e-3 * op_norm(s)


# ---------------------------------------------------------------------------
# Consistency with independent computations
# ---------------------------------------------------------------------------


class TestConsistency:
    def test_analysis_blocks_sum_to_frame_sum(self, rng):
        spec = _random_spec(seed=4)
        f = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        total = analysis_apply(spec, f).norm_squared()
        assert total == pytest.approx(frame_sum(spec, f), rel=1e-9)

    def test_upper_witness_is_tight(self):
        spec = _random_spec(seed=6)
        report = classify(spec)
        assert frame_sum(spec, report.upper_witness) == pytest.approx(report.upper, rel=1e-9)

    def test_uncontrolled_matches_plain_operator(self):
        spec = _random_spec(seed=7, k_rank=3).plain()
        s = plain_frame_operator(spec.system)
        np.testing.assert_allclose(frame_operator(spec), s, atol=1e-12)
        kk = spec.K @ spec.K.conj().T
        expected = pencil_min(s, kk).value
        assert classify(spec).lower_optimal == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_fusion_bounds_transfer_to_k(self, seed):
        spec = _random_spec(seed=seed, k_rank=2)
        fusion = classify(spec.with_k(np.eye(4)))
        scale = 1e-9 * fusion.lower
        assert classify(spec).lower_optimal >= fusion.lower / op_norm(spec.K) ** 2 - scale

    @pytest.mark.parametrize("seed", range(5))
    def test_surjective_synthesis_gives_frame(self, seed):
        spec = _random_spec(seed=seed, k_rank=1)
        assert synthesis_surjective(spec)
        assert classify(spec).is_frame

    def test_sequence_restricted_inverse_is_diagonal(self, sequence_spec):
        result = s_restricted_inverse(sequence_spec)
        np.testing.assert_allclose(result.inverse, np.diag(np.arange(1, 5) / 6.0), atol=1e-12)

    def test_restricted_inverse_on_a_line(self):
        eye = np.eye(2)
        system = FusionSystem.from_pairs(
            (Subspace(basis=eye[:, [i]]), w) for i, w in enumerate([np.sqrt(6), np.sqrt(3)])
        )
        spec = ControlledFrameSpec.uncontrolled(system, K=np.diag([1.0, 0.0]))
        result = s_restricted_inverse(spec)
        np.testing.assert_allclose(result.inverse, np.diag([1 / 6, 0.0]), atol=1e-12)
        assert result.certified
