"""Dense linear-algebra kernel on ``H = C^n``.

Adjoints, norms, positivity, square roots, pseudo-inverses, projections,
ranges, Loewner-order checks and the minimum of a positive semidefinite
pencil.  Every function is pure and every comparison goes through an
explicit :class:`~kfusion_lab.models.Tolerance`:

* rank decisions count singular values above ``tol.scale(n, s_max)``;
* Hermitian inputs are symmetrized, ``A <- (A + A*) / 2``, once their
  self-adjointness defect is below the tolerance scale.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from kfusion_lab.errors import (
    InvalidOperator,
    NotPositive,
    NotSelfAdjoint,
    ZeroPencil,
)
from kfusion_lab.models import DEFAULT_TOLERANCE, Subspace, Tolerance, freeze_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PencilMinimum:
    """Smallest value of ``<Sf, f> / <Gf, f>`` and a unit vector attaining it."""

    value: float
    witness: np.ndarray


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def as_operator(a: object, name: str = "operator") -> np.ndarray:
    """Return *a* as a read-only, finite, nonempty square complex matrix."""
    arr = freeze_array(a, ndim=2, name=name)
    if arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidOperator(f"{name}: expected a nonempty square matrix, got {arr.shape}")
    return arr


def as_vector(v: object, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Return *v* as a read-only complex vector, optionally of length *dim*."""
    arr = freeze_array(v, ndim=1, name=name)
    if dim is not None and arr.shape[0] != dim:
        raise InvalidOperator(f"{name}: expected length {dim}, got {arr.shape[0]}")
    return arr


# ---------------------------------------------------------------------------
# Adjoint, norm, positivity
# ---------------------------------------------------------------------------


def adjoint(a: object) -> np.ndarray:
    """Conjugate transpose of *a*."""
    return as_operator(a).conj().T


def op_norm(a: object) -> float:
    """Largest singular value (operator 2-norm) of a matrix of any shape."""
    arr = freeze_array(a, ndim=2, name="matrix")
    if arr.size == 0:
        return 0.0
    return float(scipy.linalg.norm(arr, 2))


def hermitian_defect(a: object) -> float:
    """Return ``||A - A*||``."""
    arr = as_operator(a)
    return op_norm(arr - arr.conj().T)


def hermitian_part(
    a: object,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    error: type[NotSelfAdjoint] = NotSelfAdjoint,
) -> np.ndarray:
    """Return ``(A + A*) / 2`` after checking that *a* is self-adjoint.

    Raises *error* (a :class:`NotSelfAdjoint` subclass) when the defect
    ``||A - A*||`` exceeds the tolerance scale.
    """
    arr = as_operator(a)
    defect = op_norm(arr - arr.conj().T)
    threshold = tol.scale(arr.shape[0], op_norm(arr))
    if defect > threshold:
        raise error(
            f"operator is not self-adjoint (defect {defect:.3e} > {threshold:.3e})"
        )
    return (arr + arr.conj().T) / 2


def pos_bounds(a: object, tol: Tolerance = DEFAULT_TOLERANCE) -> tuple[float, float]:
    """Return ``(m, M)``, the extreme eigenvalues of self-adjoint *a*.

    ``m I <= A <= M I`` holds by construction.
    """
    eig = scipy.linalg.eigvalsh(hermitian_part(a, tol))
    return float(eig[0]), float(eig[-1])


def is_positive(a: object, tol: Tolerance = DEFAULT_TOLERANCE) -> bool:
    """True iff *a* is self-adjoint and its spectrum is ``>= -tol scale``."""
    arr = as_operator(a)
    try:
        m, big = pos_bounds(arr, tol)
    except NotSelfAdjoint:
        return False
    return m >= -tol.scale(arr.shape[0], abs(m), abs(big))


def sqrt_psd(a: object, tol: Tolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    """Positive square root of a positive semidefinite operator.

    Eigenvalues in ``[-tol scale, 0)`` are treated as zero.
    """
    if not is_positive(a, tol):
        raise NotPositive("square root requires a positive semidefinite operator")
    eig, q = scipy.linalg.eigh(hermitian_part(a, tol))
    root = (q * np.sqrt(np.clip(eig, 0.0, None))) @ q.conj().T
    return (root + root.conj().T) / 2


# ---------------------------------------------------------------------------
# Pseudo-inverse, projections, ranges
# ---------------------------------------------------------------------------


def pinv(a: object, tol: Tolerance = DEFAULT_TOLERANCE) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via a thresholded SVD.

    Singular values at or below ``tol.scale(n, s_max)`` are treated as zero.
    The thresholds of ``A`` and ``A*`` coincide, so
    ``pinv(adjoint(A)) == adjoint(pinv(A))`` up to rounding.
    """
    arr = as_operator(a)
    u, s, vh = scipy.linalg.svd(arr)
    keep = s > tol.scale(arr.shape[0], s[0])
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


def projection(w: Subspace) -> np.ndarray:
    """Orthogonal projection ``basis @ basis*`` onto *w*."""
    return w.basis @ w.basis.conj().T


def _column_space(m: np.ndarray, tol: Tolerance) -> Subspace:
    n, cols = m.shape
    if cols == 0:
        return Subspace.zero(n)
    u, s, _ = scipy.linalg.svd(m, full_matrices=False)
    rank = int(np.count_nonzero(s > tol.scale(n, s[0])))
    return Subspace(basis=u[:, :rank])


def orthonormalize(
    vectors: Sequence[object] | np.ndarray,
    tol: Tolerance = DEFAULT_TOLERANCE,
    *,
    dim: int | None = None,
) -> Subspace:
    """Orthonormal basis of the span of *vectors*.

    *vectors* is either a sequence of vectors or a 2-D array whose columns
    are the vectors.  An empty input yields the zero subspace, which needs
    *dim* to fix the ambient space.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        stacked = freeze_array(vectors, ndim=2, name="vectors")
    elif len(vectors) == 0:
        if dim is None:
            raise InvalidOperator("cannot infer the ambient dimension of an empty family")
        return Subspace.zero(dim)
    else:
        cols = [as_vector(v, dim) for v in vectors]
        if len({c.shape[0] for c in cols}) != 1:
            raise InvalidOperator("vectors have different lengths")
        stacked = np.column_stack(cols)
    if dim is not None and stacked.shape[0] != dim:
        raise InvalidOperator(f"vectors live in C^{stacked.shape[0]}, expected C^{dim}")
    if stacked.shape[0] == 0:
        raise InvalidOperator("ambient dimension must be positive")
    return _column_space(stacked, tol)


def range_basis(a: object, tol: Tolerance = DEFAULT_TOLERANCE) -> Subspace:
    """Orthonormal basis of ``range(A)``."""
    return _column_space(as_operator(a), tol)


def transported_subspace(
    u: object, w: Subspace, tol: Tolerance = DEFAULT_TOLERANCE
) -> Subspace:
    """Orthonormal basis of ``U W``."""
    op = as_operator(u, "U")
    return orthonormalize(op @ w.basis, tol, dim=w.ambient_dim)


# ---------------------------------------------------------------------------
# Loewner order
# ---------------------------------------------------------------------------


def loewner_margin(a: object, b: object, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Return ``lambda_min(B - A) + tol scale``; non-negative iff ``A <= B``."""
    ha = hermitian_part(a, tol)
    hb = hermitian_part(b, tol)
    if ha.shape != hb.shape:
        raise InvalidOperator(f"shapes differ: {ha.shape} vs {hb.shape}")
    low = float(scipy.linalg.eigvalsh(hb - ha)[0])
    return low + tol.scale(ha.shape[0], op_norm(ha), op_norm(hb))


def loewner_leq(a: object, b: object, tol: Tolerance = DEFAULT_TOLERANCE) -> bool:
    """True iff ``A <= B`` in the Loewner order, within tolerance."""
    return loewner_margin(a, b, tol) >= 0


def quadratic_forms(a: object, vectors: np.ndarray) -> np.ndarray:
    """Return ``<A f, f>`` for every row ``f`` of *vectors* (complex)."""
    op = as_operator(a)
    return np.einsum("ij,kj,ki->k", op, vectors, vectors.conj())


# ---------------------------------------------------------------------------
# Pencils
# ---------------------------------------------------------------------------


def pencil_min(
    s: object, g: object, tol: Tolerance = DEFAULT_TOLERANCE
) -> PencilMinimum:
    """Infimum of ``<Sf, f> / <Gf, f>`` over ``f`` with ``<Gf, f> > 0``.

    ``H`` is split into ``R = range(G)`` and ``N = ker(G)``.  Minimizing over
    the ``N`` component leaves the Schur complement
    ``S/N = S_RR - S_RN S_NN^+ S_NR``, and the value is the smallest
    eigenvalue of the pencil ``(S/N, G_RR)``.  The witness is the unit
    vector attaining it.

    Parameters
    ----------
    s, g:
        Self-adjoint positive semidefinite operators of equal size.
    tol:
        Tolerance for the self-adjointness, positivity and rank decisions.

    Raises
    ------
    ZeroPencil
        If no eigenvalue of ``G`` exceeds ``tol.rel * n * ||G|| + tol.abs``.
    """
    hs = hermitian_part(s, tol)
    hg = hermitian_part(g, tol)
    n = hs.shape[0]
    if hg.shape != hs.shape:
        raise InvalidOperator(f"shapes differ: {hs.shape} vs {hg.shape}")
    scale = tol.scale(n, op_norm(hs), op_norm(hg))

    g_eig, q = scipy.linalg.eigh(hg)
    if g_eig[0] < -scale:
        raise NotPositive(f"G is not positive (smallest eigenvalue {g_eig[0]:.3e})")
    s_low = float(scipy.linalg.eigvalsh(hs)[0])
    if s_low < -scale:
        raise NotPositive(f"S is not positive (smallest eigenvalue {s_low:.3e})")

    # support is relative to ||G||, without the max(1, ...) floor
    g_top = max(float(g_eig[-1]), 0.0)
    support = g_eig > tol.rel * n * g_top + tol.abs
    if not support.any():
        raise ZeroPencil("G vanishes within tolerance")
    kernel = ~support

    rotated = q.conj().T @ hs @ q
    s_rr = rotated[np.ix_(support, support)]
    schur = s_rr
    coupling = None
    if kernel.any():
        s_nn = rotated[np.ix_(kernel, kernel)]
        s_nr = rotated[np.ix_(kernel, support)]
        coupling = pinv(s_nn, tol) @ s_nr
        schur = s_rr - s_nr.conj().T @ coupling

    inv_root = 1.0 / np.sqrt(g_eig[support])
    scaled = schur * inv_root[:, None] * inv_root[None, :]
    mu, y = scipy.linalg.eigh((scaled + scaled.conj().T) / 2)

    x_r = y[:, 0] * inv_root
    witness = q[:, support] @ x_r
    if coupling is not None:
        witness = witness - q[:, kernel] @ (coupling @ x_r)
    witness = witness / np.linalg.norm(witness)

    logger.debug(
        "pencil_min: n=%d rank(G)=%d value=%.6g", n, int(support.sum()), mu[0]
    )
    return PencilMinimum(value=max(float(mu[0]), 0.0), witness=witness)
