"""Controlled K-fusion frame objects.

Given a :class:`~kfusion_lab.models.ControlledFrameSpec` this module computes
the controlled quadratic form ``sum_i w_i^2 <pi_i C f, pi_i C' f>``, the frame
operator ``S = sum_i w_i^2 C'* pi_i C``, the analysis and synthesis maps, the
optimal frame bounds, and randomized checks of the frame inequality.

The analysis map needs every block ``C'* pi_i C`` to be positive; the bound
computations need ``S`` to be self-adjoint.  Both conditions are checked and
reported through dedicated exceptions instead of being assumed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from kfusion_lab.errors import (
    InvalidConfig,
    InvalidOperator,
    NonRealForm,
    NonSelfAdjointS,
    NotAFrame,
    NotPositiveBlock,
    SingularRestriction,
    ZeroK,
    ZeroPencil,
)
from kfusion_lab.models import (
    DEFAULT_TOLERANCE,
    BlockVector,
    BoundsReport,
    ControlledFrameSpec,
    FusionSystem,
    Subspace,
    Tolerance,
)
from kfusion_lab.operators import (
    as_vector,
    hermitian_part,
    is_positive,
    loewner_margin,
    op_norm,
    pencil_min,
    range_basis,
    sqrt_psd,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefinitionViolation:
    """One sampled vector that breaks the frame inequality."""

    index: int
    side: str  # "lower" or "upper"
    margin: float


@dataclass(frozen=True)
class DefinitionCheck:
    """Outcome of :func:`verify_definition`.

    Margins are ``frame_sum - A ||K* f||^2 + scale`` (lower side) and
    ``B ||f||^2 - frame_sum + scale`` (upper side); a negative margin is a
    violation.  ``witness`` is the sampled unit vector with the worst margin.
    """

    passed: bool
    trials: int
    lower: float
    upper: float
    worst_lower_margin: float
    worst_upper_margin: float
    violations: tuple[DefinitionViolation, ...]
    witness: np.ndarray


@dataclass(frozen=True)
class RestrictedInverse:
    """Inverse of ``S`` restricted to ``R_K``, as a map ``S(R_K) -> R_K``.

    ``inverse`` is an ``n x n`` matrix that vanishes on the orthogonal
    complement of ``domain``.  For every ``g`` in ``domain``,
    ``lo ||g|| <= ||inverse g|| <= hi ||g||``; ``certified`` records whether
    the sampled check of that bracket passed.
    """

    inverse: np.ndarray
    domain: Subspace
    image: Subspace
    lo: float
    hi: float
    certified: bool


# ---------------------------------------------------------------------------
# Quadratic form and frame operators
# ---------------------------------------------------------------------------


def _frame_sums(spec: ControlledFrameSpec, vectors: np.ndarray) -> tuple[np.ndarray, float]:
    """Complex frame sums of the rows of *vectors* and a magnitude bound.

    The magnitude is ``max_f sum_i w_i^2 ||pi_i C f|| ||pi_i C' f||``, the
    Cauchy-Schwarz bound of the sum, used to scale the realness check.
    """
    cf = vectors @ spec.C.T
    cpf = vectors @ spec.Cp.T
    sums = np.zeros(vectors.shape[0], dtype=np.complex128)
    bound = np.zeros(vectors.shape[0])
    for item in spec.system.items:
        coeff_c = cf @ item.subspace.basis.conj()
        coeff_cp = cpf @ item.subspace.basis.conj()
        w2 = item.weight**2
        sums += w2 * np.sum(coeff_c * coeff_cp.conj(), axis=1)
        bound += w2 * np.linalg.norm(coeff_c, axis=1) * np.linalg.norm(coeff_cp, axis=1)
    return sums, float(bound.max(initial=0.0))


def frame_sum(
    spec: ControlledFrameSpec, f: object, tol: Tolerance = DEFAULT_TOLERANCE
) -> float:
    """Return ``Re sum_i w_i^2 <pi_i C f, pi_i C' f>``.

    Raises
    ------
    NonRealForm
        If the imaginary part exceeds the tolerance scale.
    """
    vec = as_vector(f, spec.dim, "f")
    sums, bound = _frame_sums(spec, vec[None, :])
    value = sums[0]
    threshold = tol.scale(spec.dim, bound)
    if abs(value.imag) > threshold:
        raise NonRealForm(
            f"frame sum has imaginary part {value.imag:.3e} (> {threshold:.3e})"
        )
    return float(value.real)


def block_operators(spec: ControlledFrameSpec) -> tuple[np.ndarray, ...]:
    """Return ``C'* pi_i C`` for every item, in order."""
    cp_adj = spec.Cp.conj().T
    return tuple(
        cp_adj @ (item.subspace.basis @ (item.subspace.basis.conj().T @ spec.C))
        for item in spec.system.items
    )


def frame_operator(spec: ControlledFrameSpec) -> np.ndarray:
    """``S = sum_i w_i^2 C'* pi_i C``."""
    weights = spec.system.weights
    return sum(
        (w**2 * block for w, block in zip(weights, block_operators(spec))),
        start=np.zeros((spec.dim, spec.dim), dtype=np.complex128),
    )


def plain_frame_operator(system: FusionSystem) -> np.ndarray:
    """Uncontrolled fusion frame operator ``sum_i w_i^2 pi_i``."""
    n = system.ambient_dim
    out = np.zeros((n, n), dtype=np.complex128)
    for item in system.items:
        basis = item.subspace.basis
        out += item.weight**2 * (basis @ basis.conj().T)
    return out


# ---------------------------------------------------------------------------
# Analysis and synthesis
# ---------------------------------------------------------------------------


def _block_root(index: int, block: np.ndarray, tol: Tolerance) -> np.ndarray:
    if not is_positive(block, tol):
        sym = (block + block.conj().T) / 2
        raise NotPositiveBlock(index, float(scipy.linalg.eigvalsh(sym)[0]))
    return sqrt_psd(block, tol)


def block_roots(
    spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE
) -> tuple[np.ndarray, ...]:
    """Return ``w_i (C'* pi_i C)^(1/2)`` for every item.

    Raises :class:`NotPositiveBlock` for the first item whose block is not
    positive.
    """
    return tuple(
        item.weight * _block_root(i, block, tol)
        for i, (item, block) in enumerate(zip(spec.system.items, block_operators(spec)))
    )


def analysis_apply(
    spec: ControlledFrameSpec, f: object, tol: Tolerance = DEFAULT_TOLERANCE
) -> BlockVector:
    """``T f = (w_i (C'* pi_i C)^(1/2) f)_i``."""
    vec = as_vector(f, spec.dim, "f")
    return BlockVector(blocks=tuple(root @ vec for root in block_roots(spec, tol)))


def synthesis_apply(
    spec: ControlledFrameSpec, g: BlockVector, tol: Tolerance = DEFAULT_TOLERANCE
) -> np.ndarray:
    """``T* g = sum_i w_i (C'* pi_i C)^(1/2) g_i``, the adjoint of :func:`analysis_apply`."""
    if len(g) != len(spec.system):
        raise InvalidOperator(
            f"block vector has {len(g)} blocks, system has {len(spec.system)} items"
        )
    out = np.zeros(spec.dim, dtype=np.complex128)
    for root, block in zip(block_roots(spec, tol), g.blocks):
        out += root @ as_vector(block, spec.dim, "block")
    return out


def analysis_matrix(
    spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE
) -> np.ndarray:
    """The analysis map as an ``(m n) x n`` matrix, blocks stacked in item order."""
    return np.vstack(block_roots(spec, tol))


def synthesis_surjective(
    spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE
) -> bool:
    """True iff the synthesis map is onto ``H``, i.e. ``rank(S) = n``."""
    s = hermitian_part(frame_operator(spec), tol, error=NonSelfAdjointS)
    return range_basis(s, tol).dim == spec.dim


# ---------------------------------------------------------------------------
# Optimal bounds
# ---------------------------------------------------------------------------


def _self_adjoint_s(spec: ControlledFrameSpec, tol: Tolerance) -> np.ndarray:
    return hermitian_part(frame_operator(spec), tol, error=NonSelfAdjointS)


def optimal_upper_bound(
    spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE
) -> tuple[float, np.ndarray]:
    """Largest eigenvalue ``B`` of ``S`` and a unit eigenvector attaining it."""
    eig, q = scipy.linalg.eigh(_self_adjoint_s(spec, tol))
    return float(eig[-1]), q[:, -1]


def optimal_lower_bound(
    spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE
) -> tuple[float, np.ndarray]:
    """Largest ``A`` with ``A ||K* f||^2 <= <S f, f>`` for all ``f``.

    Vectors in ``ker K*`` impose no constraint; the value is the minimum of
    the pencil ``(S, K K*)``.  ``K`` counts as zero exactly when that pencil
    has no support.
    """
    s = _self_adjoint_s(spec, tol)
    kk = spec.K @ spec.K.conj().T
    try:
        result = pencil_min(s, kk, tol)
    except ZeroPencil as exc:
        raise ZeroK(f"K vanishes within tolerance (||KK*|| = {op_norm(kk):.3e})") from exc
    return result.value, result.witness


def classify(spec: ControlledFrameSpec, tol: Tolerance = DEFAULT_TOLERANCE) -> BoundsReport:
    """Optimal bounds, frame / Parseval status and the Bessel check.

    ``lower`` is ``min(A_opt, B)``; the raw pencil value stays available as
    ``lower_optimal``.  ``synthesis_norm`` and ``bessel_ok`` are ``None`` when
    some block ``C'* pi_i C`` is not positive (no analysis map exists).
    """
    upper, upper_witness = optimal_upper_bound(spec, tol)
    lower_optimal, lower_witness = optimal_lower_bound(spec, tol)
    scale = tol.scale(spec.dim, abs(upper))
    lower = min(lower_optimal, upper)

    synthesis_norm: float | None = None
    bessel_ok: bool | None = None
    try:
        synthesis_norm = op_norm(analysis_matrix(spec, tol))
    except NotPositiveBlock as exc:
        logger.debug("classify: no analysis map (%s)", exc)
    else:
        bessel_ok = synthesis_norm <= np.sqrt(max(upper, 0.0)) + scale

    report = BoundsReport(
        lower=lower,
        upper=upper,
        lower_optimal=lower_optimal,
        lower_witness=lower_witness,
        upper_witness=upper_witness,
        is_frame=lower_optimal > scale,
        is_parseval=abs(lower - 1.0) <= scale and abs(upper - 1.0) <= scale,
        tol_used=tol,
        synthesis_norm=synthesis_norm,
        bessel_ok=bessel_ok,
    )
    logger.debug(
        "classify: n=%d items=%d A=%.6g B=%.6g frame=%s",
        spec.dim,
        len(spec.system),
        report.lower,
        report.upper,
        report.is_frame,
    )
    return report


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def unit_vectors(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` complex unit vectors of ``C^n`` (rows), uniform on the sphere."""
    z = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def verify_definition(
    spec: ControlledFrameSpec,
    A: float,
    B: float,
    trials: int,
    seed: int,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> DefinitionCheck:
    """Sample ``trials`` unit vectors and test ``A ||K* f||^2 <= sum <= B``.

    Each side is allowed the tolerance scale.  Every violation is listed.
    """
    if trials < 1:
        raise InvalidConfig(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    vectors = unit_vectors(spec.dim, trials, rng)
    sums, _ = _frame_sums(spec, vectors)
    values = sums.real
    k_star = np.linalg.norm(vectors @ spec.K.conj(), axis=1) ** 2
    scale = tol.scale(spec.dim, abs(A), abs(B))

    lower_margins = values - A * k_star + scale
    upper_margins = B - values + scale
    violations = [
        DefinitionViolation(index=int(i), side="lower", margin=float(lower_margins[i]))
        for i in np.flatnonzero(lower_margins < 0)
    ] + [
        DefinitionViolation(index=int(i), side="upper", margin=float(upper_margins[i]))
        for i in np.flatnonzero(upper_margins < 0)
    ]
    violations.sort(key=lambda v: v.index)

    worst = np.minimum(lower_margins, upper_margins)
    check = DefinitionCheck(
        passed=not violations,
        trials=trials,
        lower=float(A),
        upper=float(B),
        worst_lower_margin=float(lower_margins.min()),
        worst_upper_margin=float(upper_margins.min()),
        violations=tuple(violations),
        witness=vectors[int(np.argmin(worst))],
    )
    if not check.passed:
        logger.info(
            "verify_definition: %d of %d samples violate (A=%.6g, B=%.6g)",
            len(violations),
            trials,
            A,
            B,
        )
    return check


def sandwich_margins(
    spec: ControlledFrameSpec,
    lower: float,
    upper: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> tuple[float, float]:
    """Margins of ``lower K K* <= S`` and ``S <= upper I`` (negative = fails)."""
    s = _self_adjoint_s(spec, tol)
    kk = spec.K @ spec.K.conj().T
    return (
        loewner_margin(lower * kk, s, tol),
        loewner_margin(s, upper * np.eye(spec.dim), tol),
    )


def frame_operator_sandwich(
    spec: ControlledFrameSpec,
    report: BoundsReport,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> bool:
    """True iff ``A K K* <= S <= B I`` for the report's ``(A, B)``."""
    low, high = sandwich_margins(spec, report.lower, report.upper, tol)
    return low >= 0 and high >= 0


def s_restricted_inverse(
    spec: ControlledFrameSpec,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    samples: int = 1000,
    seed: int = 0,
) -> RestrictedInverse:
    """Invert ``S`` on ``R_K`` and certify the norm bracket on samples.

    The bracket is ``B^-1 ||g|| <= ||S^-1 g|| <= A^-1 ||K^+||^2 ||g||`` for
    ``g`` in ``S(R_K)``, with ``A`` the optimal lower bound.

    Raises
    ------
    NotAFrame
        If the optimal lower bound is not positive.
    SingularRestriction
        If ``S`` restricted to ``R_K`` has a vanishing singular value.
    """
    report = classify(spec, tol)
    if not report.is_frame:
        raise NotAFrame(f"optimal lower bound {report.lower_optimal:.3e} is not positive")
    image = range_basis(spec.K, tol)
    if image.dim == 0:
        raise ZeroK("range of K is trivial")

    s = _self_adjoint_s(spec, tol)
    restricted = s @ image.basis
    u, sv, vh = scipy.linalg.svd(restricted, full_matrices=False)
    if sv[-1] <= tol.scale(spec.dim, sv[0]):
        raise SingularRestriction(
            f"S on R_K has singular value {sv[-1]:.3e} (largest {sv[0]:.3e})"
        )
    left_inverse = (vh.conj().T / sv) @ u.conj().T
    inverse = image.basis @ left_inverse

    k_pinv_norm = 1.0 / float(scipy.linalg.svdvals(spec.K)[image.dim - 1])
    lo = 1.0 / report.upper
    hi = k_pinv_norm**2 / report.lower_optimal

    rng = np.random.default_rng(seed)
    coords = unit_vectors(image.dim, samples, rng)
    originals = coords @ image.basis.T
    images = originals @ s.T
    recovered = images @ inverse.T
    g_norm = np.linalg.norm(images, axis=1)
    x_norm = np.linalg.norm(recovered, axis=1)
    scale = tol.scale(spec.dim, hi, op_norm(s))
    certified = bool(
        np.all(x_norm >= lo * g_norm - scale)
        and np.all(x_norm <= hi * g_norm + scale)
        and np.allclose(recovered, originals, atol=scale * (1 + hi))
    )
    if not certified:
        logger.warning(
            "s_restricted_inverse: sampled bracket [%.6g, %.6g] does not hold", lo, hi
        )
    return RestrictedInverse(
        inverse=inverse,
        domain=Subspace(basis=u),
        image=image,
        lo=lo,
        hi=hi,
        certified=certified,
    )
