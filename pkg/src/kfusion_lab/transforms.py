"""Bound propagation theorems as executable, checked transforms.

Each transform takes known frame bounds, checks the hypotheses of the
corresponding theorem numerically, and returns the propagated bounds as a
:class:`~kfusion_lab.models.PropagatedBounds`.  The result also carries the
optimal bounds computed directly for the theorem's conclusion, so every call
doubles as a soundness test of the theorem's constants.

A hypothesis whose margin is negative raises
:class:`~kfusion_lab.errors.HypothesisFailed` (or one of its subclasses);
margins are never assumed.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
import scipy.linalg

from kfusion_lab.engine import (
    classify,
    frame_operator,
    plain_frame_operator,
    sandwich_margins,
    unit_vectors,
)
from kfusion_lab.errors import (
    HypothesisFailed,
    InvalidOperator,
    NotInvertible,
    NotSelfAdjoint,
    NotUnitary,
    RangeNotContained,
    RangesNotOrthogonal,
    ZeroK,
)
from kfusion_lab.models import (
    DEFAULT_TOLERANCE,
    ControlledFrameSpec,
    FusionItem,
    FusionSystem,
    HypothesisCheck,
    PropagatedBounds,
    Subspace,
    Theorem,
    Tolerance,
)
from kfusion_lab.operators import (
    adjoint,
    as_operator,
    hermitian_part,
    op_norm,
    pencil_min,
    pinv,
    pos_bounds,
    projection,
    quadratic_forms,
    range_basis,
    sqrt_psd,
    transported_subspace,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _enforce(
    checks: Sequence[HypothesisCheck], error: type[HypothesisFailed] = HypothesisFailed
) -> None:
    for check in checks:
        logger.debug("hypothesis %s: margin %.3e", check.name, check.margin)
        if not check.passed:
            raise error(check.name, check.margin)


def _commutes(name: str, a: np.ndarray, b: np.ndarray, tol: Tolerance) -> HypothesisCheck:
    defect = op_norm(a @ b - b @ a)
    return HypothesisCheck.from_defect(
        name, defect, tol.scale(a.shape[0], op_norm(a) * op_norm(b))
    )


def _input_bounds(
    spec: ControlledFrameSpec, A: float, B: float, tol: Tolerance, suffix: str = ""
) -> list[HypothesisCheck]:
    """Checks that ``(A, B)`` are frame bounds of *spec*."""
    low, high = sandwich_margins(spec, A, B, tol)
    return [
        HypothesisCheck(name=f"lower_bound_valid{suffix}", margin=low),
        HypothesisCheck(name=f"upper_bound_valid{suffix}", margin=high),
    ]


def _vanishes(m: np.ndarray, tol: Tolerance) -> bool:
    """True iff ``M M*`` has no support under the cutoff used by ``pencil_min``."""
    gram = op_norm(m) ** 2
    return gram <= tol.rel * m.shape[0] * gram + tol.abs


def _k_pinv_norm_squared(k: np.ndarray, tol: Tolerance) -> float:
    """``||(K*)^+||^2``; raises :class:`ZeroK` when ``K`` vanishes."""
    if _vanishes(k, tol):
        raise ZeroK("K vanishes within tolerance")
    return op_norm(pinv(adjoint(k), tol)) ** 2


def _finish(
    source: Theorem,
    lower: float,
    upper: float,
    hypotheses: Sequence[HypothesisCheck],
    reference_lower: float,
    reference_upper: float,
    tol: Tolerance,
    n: int,
    *,
    label: str = "",
    notes: Sequence[str] = (),
    extra_ok: bool = True,
) -> PropagatedBounds:
    notes = list(notes)
    if lower > upper:
        notes.append(f"propagated lower {lower:.6g} clipped to upper {upper:.6g}")
        lower = upper
    scale = tol.scale(n, abs(reference_lower), abs(reference_upper), abs(upper))
    conclusion = (
        lower <= reference_lower + scale and upper >= reference_upper - scale and extra_ok
    )
    if not conclusion:
        logger.warning(
            "%s%s: propagated (%.6g, %.6g) does not bracket optimal (%.6g, %.6g)",
            source.value,
            f" [{label}]" if label else "",
            lower,
            upper,
            reference_lower,
            reference_upper,
        )
    return PropagatedBounds(
        lower=float(lower),
        upper=float(upper),
        source=source,
        hypotheses=tuple(hypotheses),
        reference_lower=float(reference_lower),
        reference_upper=float(reference_upper),
        conclusion_passed=conclusion,
        label=label,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Restriction to the range of K
# ---------------------------------------------------------------------------


def restrict_to_range(
    spec: ControlledFrameSpec,
    A: float,
    B: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    samples: int = 1000,
    seed: int = 0,
) -> PropagatedBounds:
    """Bounds ``(A / ||(K*)^+||^2, B)`` of the system as a fusion frame for ``R_K``.

    The optimal reference bounds are the extreme eigenvalues of ``S``
    compressed to ``R_K``; the propagated lower bound is also checked on
    ``samples`` random unit vectors of ``R_K``.
    """
    n = spec.dim
    k_pinv_sq = _k_pinv_norm_squared(spec.K, tol)
    hypotheses = _input_bounds(spec, A, B, tol)
    _enforce(hypotheses)

    lower, upper = A / k_pinv_sq, B
    q = range_basis(spec.K, tol).basis
    s = hermitian_part(frame_operator(spec), tol)
    compressed = scipy.linalg.eigvalsh(q.conj().T @ s @ q)

    rng = np.random.default_rng(seed)
    vectors = unit_vectors(q.shape[1], samples, rng) @ q.T
    sampled = quadratic_forms(s, vectors).real
    scale = tol.scale(n, abs(A), abs(B))
    sampled_ok = bool(np.all(sampled >= lower - scale))

    return _finish(
        Theorem.RESTRICT_TO_RANGE,
        lower,
        upper,
        hypotheses,
        float(compressed[0]),
        float(compressed[-1]),
        tol,
        n,
        notes=(f"||(K*)^+||^2 = {k_pinv_sq:.6g}",),
        extra_ok=sampled_ok,
    )


# ---------------------------------------------------------------------------
# Majorization and transfer to T
# ---------------------------------------------------------------------------


def _douglas(t: object, k: object, tol: Tolerance) -> tuple[float, HypothesisCheck]:
    t_op = as_operator(t, "T")
    k_op = as_operator(k, "K")
    if t_op.shape != k_op.shape:
        raise InvalidOperator(f"T and K differ in shape: {t_op.shape} vs {k_op.shape}")
    n = t_op.shape[0]
    t_norm = op_norm(t_op)
    r_k = range_basis(k_op, tol)
    defect = op_norm(t_op - projection(r_k) @ t_op)
    check = HypothesisCheck.from_defect(
        "range_contained", defect, tol.scale(n, t_norm, op_norm(k_op))
    )
    _enforce([check], RangeNotContained)
    if r_k.dim == 0:
        return 0.0, check

    q = r_k.basis
    gt = q.conj().T @ (t_op @ t_op.conj().T) @ q
    gk = q.conj().T @ (k_op @ k_op.conj().T) @ q
    gt = (gt + gt.conj().T) / 2
    gk = (gk + gk.conj().T) / 2
    lam = float(scipy.linalg.eigh(gt, gk, eigvals_only=True)[-1])
    return max(lam, 0.0), check


def douglas_lambda(t: object, k: object, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Smallest ``lambda >= 0`` with ``T T* <= lambda K K*``.

    Raises :class:`RangeNotContained` unless ``range(T)`` lies in ``range(K)``.
    """
    lam, _ = _douglas(t, k, tol)
    return lam


def douglas_mu(t: object, k: object, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Smallest ``mu`` with ``||T* z|| <= mu ||K* z||`` for all ``z``."""
    return float(np.sqrt(douglas_lambda(t, k, tol)))


def transfer_frame_to_T(
    spec: ControlledFrameSpec,
    A: float,
    B: float,
    T: object,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> PropagatedBounds:
    """Bounds ``(A / lambda, B)`` of the same system as a controlled T-fusion frame."""
    n = spec.dim
    t_op = as_operator(T, "T")
    lam, contained = _douglas(t_op, spec.K, tol)
    if _vanishes(t_op, tol) or lam <= 0.0:
        raise ZeroK(f"T vanishes on range(K) (lambda {lam:.3e})")
    hypotheses = [contained, *_input_bounds(spec, A, B, tol)]
    _enforce(hypotheses)

    reference = classify(spec.with_k(T), tol)
    return _finish(
        Theorem.TRANSFER_FRAME_TO_T,
        A / lam,
        B,
        hypotheses,
        reference.lower_optimal,
        reference.upper,
        tol,
        n,
        notes=(f"lambda = {lam:.6g}",),
    )


# ---------------------------------------------------------------------------
# Combination of two operators with orthogonal ranges
# ---------------------------------------------------------------------------


def combine_k(
    spec: ControlledFrameSpec,
    K1: object,
    K2: object,
    A1: float,
    B1: float,
    A2: float,
    B2: float,
    alpha: complex,
    beta: complex,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> PropagatedBounds:
    """Bounds for ``alpha K1 + beta K2`` from bounds for ``K1`` and ``K2``.

    The ranges of ``K1`` and ``K2`` must be orthogonal (``K2* K1 = 0``) and
    the cross term of ``||(alpha K1 + beta K2)* f||^2`` must vanish
    (``K1 K2* = 0``).  The lower bound is the smaller of
    ``A1 A2 / (2 (|alpha|^2 A1 + |beta|^2 A2))`` and
    ``A1 A2 / (|alpha|^2 A2 + |beta|^2 A1)``; the upper bound is
    ``(B1 + B2) / 2``.
    """
    k1 = as_operator(K1, "K1")
    k2 = as_operator(K2, "K2")
    n = spec.dim
    scale = tol.scale(n, op_norm(k1) * op_norm(k2))
    orthogonality = [
        HypothesisCheck.from_defect("ranges_orthogonal", op_norm(k2.conj().T @ k1), scale),
        HypothesisCheck.from_defect("cross_terms_vanish", op_norm(k1 @ k2.conj().T), scale),
    ]
    _enforce(orthogonality, RangesNotOrthogonal)

    combined = alpha * k1 + beta * k2
    if _vanishes(combined, tol):
        raise ZeroK("alpha K1 + beta K2 vanishes")
    hypotheses = [
        *orthogonality,
        HypothesisCheck(name="positive_lower_bounds", margin=min(A1, A2) - tol.scale(n)),
        *_input_bounds(spec.with_k(k1), A1, B1, tol, "_K1"),
        *_input_bounds(spec.with_k(k2), A2, B2, tol, "_K2"),
    ]
    _enforce(hypotheses)

    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    displayed = A1 * A2 / (2 * (a2 * A1 + b2 * A2))
    corrected = A1 * A2 / (a2 * A2 + b2 * A1)
    reference = classify(spec.with_k(combined), tol)
    return _finish(
        Theorem.COMBINE_K,
        min(displayed, corrected),
        (B1 + B2) / 2,
        hypotheses,
        reference.lower_optimal,
        reference.upper,
        tol,
        n,
        notes=(
            f"displayed constant {displayed:.6g}",
            f"corrected constant {corrected:.6g}",
        ),
    )


# ---------------------------------------------------------------------------
# Controlled <-> uncontrolled
# ---------------------------------------------------------------------------


def _positive_invertible(name: str, c: np.ndarray, tol: Tolerance) -> HypothesisCheck:
    n = c.shape[0]
    try:
        m, big = pos_bounds(c, tol)
    except NotSelfAdjoint:
        defect = op_norm(c - c.conj().T)
        return HypothesisCheck.from_defect(name, defect, tol.scale(n, op_norm(c)))
    return HypothesisCheck(name=name, margin=m - tol.scale(n, big))


def strip_controllers(
    spec: ControlledFrameSpec,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    plain_bounds: tuple[float, float] | None = None,
    controlled_bounds: tuple[float, float] | None = None,
) -> tuple[PropagatedBounds, PropagatedBounds]:
    """Move bounds between the controlled system and its plain counterpart.

    Under the commutation hypotheses ``S_C = C' S_plain C`` equals
    ``(C C')^(1/2) S_plain (C C')^(1/2)``, which gives

    * ``to_plain``: ``(A_c / ||(CC')^(1/2)||^2, B_c ||(CC')^(-1/2)||^2)``;
    * ``from_plain``: ``(m m' A, M M' B)`` with ``(m, M)``, ``(m', M')`` the
      spectral bounds of ``C`` and ``C'``.

    Input bounds default to the optimal ones of each side.

    Returns
    -------
    (to_plain, from_plain)
    """
    c, cp, k = spec.C, spec.Cp, spec.K
    n = spec.dim
    s_plain = plain_frame_operator(spec.system)
    hypotheses = [
        _positive_invertible("C_positive_invertible", c, tol),
        _positive_invertible("Cp_positive_invertible", cp, tol),
        _commutes("C_commutes_with_K", c, k, tol),
        _commutes("Cp_commutes_with_K", cp, k, tol),
        _commutes("S_plain_commutes_with_C", s_plain, c, tol),
        _commutes("S_plain_commutes_with_Cp", s_plain, cp, tol),
        _commutes("C_commutes_with_Cp", c, cp, tol),
    ]
    _enforce(hypotheses)

    plain_report = classify(spec.plain(), tol)
    controlled_report = classify(spec, tol)
    a_plain, b_plain = plain_bounds or (plain_report.lower_optimal, plain_report.upper)
    a_ctrl, b_ctrl = controlled_bounds or (
        controlled_report.lower_optimal,
        controlled_report.upper,
    )

    root = sqrt_psd(hermitian_part(c @ cp, tol), tol)
    root_norm_sq = op_norm(root) ** 2
    inv_root_norm_sq = op_norm(pinv(root, tol)) ** 2
    m, big_m = pos_bounds(c, tol)
    mp, big_mp = pos_bounds(cp, tol)

    to_plain = _finish(
        Theorem.STRIP_CONTROLLERS,
        a_ctrl / root_norm_sq,
        b_ctrl * inv_root_norm_sq,
        hypotheses,
        plain_report.lower_optimal,
        plain_report.upper,
        tol,
        n,
        label="to_plain",
    )
    from_plain = _finish(
        Theorem.STRIP_CONTROLLERS,
        m * mp * a_plain,
        big_m * big_mp * b_plain,
        hypotheses,
        controlled_report.lower_optimal,
        controlled_report.upper,
        tol,
        n,
        label="from_plain",
    )
    return to_plain, from_plain


# ---------------------------------------------------------------------------
# Transport by invertible and unitary operators
# ---------------------------------------------------------------------------


def _transport(
    spec: ControlledFrameSpec,
    u: np.ndarray,
    source: Theorem,
    hypotheses: list[HypothesisCheck],
    bounds: tuple[float, float] | None,
    tol: Tolerance,
) -> tuple[ControlledFrameSpec, PropagatedBounds]:
    _enforce(hypotheses)
    new_system = FusionSystem(
        items=tuple(
            FusionItem(subspace=transported_subspace(u, item.subspace, tol), weight=item.weight)
            for item in spec.system.items
        )
    )
    new_spec = spec.with_system(new_system)
    if bounds is None:
        report = classify(spec, tol)
        bounds = (report.lower_optimal, report.upper)
    A, B = bounds
    hypotheses = [*hypotheses, *_input_bounds(spec, A, B, tol)]
    _enforce(hypotheses)

    distortion = (op_norm(u) * op_norm(np.linalg.inv(u))) ** 2
    reference = classify(new_spec, tol)
    result = _finish(
        source,
        A / distortion,
        B * distortion,
        hypotheses,
        reference.lower_optimal,
        reference.upper,
        tol,
        spec.dim,
        notes=(f"||U||^2 ||U^-1||^2 = {distortion:.6g}",),
    )
    return new_spec, result


def unitary_transform(
    spec: ControlledFrameSpec,
    U: object,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    bounds: tuple[float, float] | None = None,
) -> tuple[ControlledFrameSpec, PropagatedBounds]:
    """Transport a ``(C, C)``-controlled system by an invertible ``U``.

    The new system has subspaces ``U W_i`` and the same weights; its bounds
    are ``(A / (||U||^2 ||U^-1||^2), B ||U||^2 ||U^-1||^2)``.  Requires
    ``C' = C``, ``U* C = C U*`` and ``K* (U*)^-1 = (U*)^-1 K*``.
    """
    u = as_operator(U, "U")
    n = spec.dim
    sv = scipy.linalg.svdvals(u)
    if sv[-1] <= tol.scale(n, sv[0]):
        raise NotInvertible(f"U has singular value {sv[-1]:.3e}")
    u_adj = u.conj().T
    u_adj_inv = np.linalg.inv(u_adj)
    k_adj = spec.K.conj().T
    hypotheses = [
        HypothesisCheck.from_defect(
            "Cp_equals_C", op_norm(spec.Cp - spec.C), tol.scale(n, op_norm(spec.C))
        ),
        _commutes("U_adjoint_commutes_with_C", u_adj, spec.C, tol),
        _commutes("K_adjoint_commutes_with_inverse_U_adjoint", k_adj, u_adj_inv, tol),
    ]
    return _transport(spec, u, Theorem.UNITARY_TRANSFORM, hypotheses, bounds, tol)


def unitary_transform_corollary(
    spec: ControlledFrameSpec,
    U: object,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    bounds: tuple[float, float] | None = None,
) -> tuple[ControlledFrameSpec, PropagatedBounds]:
    """Transport by a unitary ``U``; the bounds are unchanged.

    Requires ``U^-1 C = C U^-1`` and ``K* U = U K*`` besides ``C' = C``.
    """
    u = as_operator(U, "U")
    n = spec.dim
    defect = op_norm(u.conj().T @ u - np.eye(n))
    if defect > tol.scale(n):
        raise NotUnitary(f"||U*U - I|| = {defect:.3e}")
    k_adj = spec.K.conj().T
    hypotheses = [
        HypothesisCheck.from_defect(
            "Cp_equals_C", op_norm(spec.Cp - spec.C), tol.scale(n, op_norm(spec.C))
        ),
        _commutes("inverse_U_commutes_with_C", u.conj().T, spec.C, tol),
        _commutes("K_adjoint_commutes_with_U", k_adj, u, tol),
    ]
    return _transport(spec, u, Theorem.UNITARY_TRANSFORM_COROLLARY, hypotheses, bounds, tol)


# ---------------------------------------------------------------------------
# Perturbation
# ---------------------------------------------------------------------------


def perturb_check(
    spec_w: ControlledFrameSpec,
    subspaces_v: Sequence[Subspace],
    R: float,
    A: float,
    B: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    samples: int = 1000,
    seed: int = 0,
) -> PropagatedBounds:
    """Bounds of the system obtained by replacing each ``W_i`` with ``V_i``.

    With ``D = sum_i w_i^2 C'* (pi_V_i - pi_W_i) C`` self-adjoint and
    ``0 < D <= R I`` for some ``0 < R < A``, the new system is Bessel with
    bound ``R + B`` and satisfies the lower inequality on ``R_K`` with
    ``A - R ||K^+||^2``, which must be positive.
    """
    if len(subspaces_v) != len(spec_w.system):
        raise InvalidOperator(
            f"{len(subspaces_v)} perturbed subspaces for {len(spec_w.system)} items"
        )
    n = spec_w.dim
    spec_v = spec_w.with_system(
        FusionSystem(
            items=tuple(
                FusionItem(subspace=v, weight=item.weight)
                for v, item in zip(subspaces_v, spec_w.system.items)
            )
        )
    )
    k_pinv_sq = _k_pinv_norm_squared(spec_w.K, tol)
    radius = HypothesisCheck(name="radius_in_range", margin=min(R, A - R) - tol.scale(n, A))
    _enforce([radius])

    d = frame_operator(spec_v) - frame_operator(spec_w)
    d_norm = op_norm(d)
    scale = tol.scale(n, d_norm, R)
    self_adjoint = HypothesisCheck.from_defect(
        "perturbation_self_adjoint", op_norm(d - d.conj().T), scale
    )
    _enforce([self_adjoint])
    d_h = (d + d.conj().T) / 2
    eig = scipy.linalg.eigvalsh(d_h)

    rng = np.random.default_rng(seed)
    forms = quadratic_forms(d_h, unit_vectors(n, samples, rng)).real
    lower = A - R * k_pinv_sq
    hypotheses = [
        radius,
        self_adjoint,
        HypothesisCheck(name="perturbation_positive_definite", margin=float(eig[0]) - scale),
        HypothesisCheck(name="perturbation_below_radius", margin=R + scale - float(eig[-1])),
        HypothesisCheck(
            name="perturbation_sampled_form",
            margin=float(min(forms.min(), R - forms.max())) + scale,
        ),
        HypothesisCheck(
            name="corrected_lower_positive", margin=lower - tol.scale(n, A, k_pinv_sq)
        ),
        *_input_bounds(spec_w, A, B, tol),
    ]
    _enforce(hypotheses)

    s_v = hermitian_part(frame_operator(spec_v), tol)
    q = range_basis(spec_w.K, tol).basis
    kk = spec_w.K @ spec_w.K.conj().T
    reference_lower = pencil_min(q.conj().T @ s_v @ q, q.conj().T @ kk @ q, tol).value
    reference_upper = float(scipy.linalg.eigvalsh(s_v)[-1])
    return _finish(
        Theorem.PERTURB_CHECK,
        lower,
        R + B,
        hypotheses,
        reference_lower,
        reference_upper,
        tol,
        n,
        notes=(
            f"lower bound A - R ||K^+||^2 = {A:.6g} - {R:.6g} * {k_pinv_sq:.6g}",
            f"spectrum of D in [{eig[0]:.6g}, {eig[-1]:.6g}]",
        ),
    )


# ---------------------------------------------------------------------------
# From a controlled fusion frame to a controlled K-fusion frame
# ---------------------------------------------------------------------------


def k_from_fusion(
    spec: ControlledFrameSpec,
    A: float,
    B: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> PropagatedBounds:
    """Bounds ``(A / ||K||^2, B)`` with respect to ``K`` from bounds ``(A, B)`` for ``K = I``."""
    n = spec.dim
    if _vanishes(spec.K, tol):
        raise ZeroK("K vanishes within tolerance")
    k_norm = op_norm(spec.K)
    hypotheses = _input_bounds(spec.with_k(np.eye(n)), A, B, tol)
    _enforce(hypotheses)
    reference = classify(spec, tol)
    return _finish(
        Theorem.K_FROM_FUSION,
        A / k_norm**2,
        B,
        hypotheses,
        reference.lower_optimal,
        reference.upper,
        tol,
        n,
    )
