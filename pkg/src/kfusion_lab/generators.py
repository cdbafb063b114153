"""Seeded random instances and the truncated sequence-space example.

All randomness flows through a ``numpy.random.Generator`` created from an
explicit seed, so identical seeds give identical instances.

Two generation modes:

* ``positivity=True`` (default): subspaces are spanned by columns of one
  Haar-random unitary ``Q`` and ``C = Q diag(c) Q*``, ``C' = gamma C``, so
  every ``C'* pi_i C`` is positive and ``S`` is self-adjoint;
* ``positivity=False``: subspaces and controllers are drawn independently,
  which almost surely breaks block positivity (negative tests).
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from kfusion_lab.errors import InvalidConfig
from kfusion_lab.models import (
    ControlledFrameSpec,
    FusionItem,
    FusionSystem,
    Subspace,
)
from kfusion_lab.operators import orthonormalize

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Random building blocks
# ---------------------------------------------------------------------------


def complex_gaussian(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Standard complex Gaussian array (independent real and imaginary parts)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: the polar factor ``U V*`` of a Gaussian matrix."""
    u, _, vh = np.linalg.svd(complex_gaussian((n, n), rng))
    return u @ vh


def random_subspace(n: int, k: int, rng: np.random.Generator) -> Subspace:
    """Rotation-invariant random ``k``-dimensional subspace of ``C^n``."""
    if k == 0:
        return Subspace.zero(n)
    return orthonormalize(complex_gaussian((n, k), rng), dim=n)


def random_gl_plus(
    n: int, condition_number: float, rng: np.random.Generator
) -> np.ndarray:
    """Positive invertible operator with spectrum in ``[1, condition_number]``."""
    q = haar_unitary(n, rng)
    return hermitian_from_eigen(q, controller_spectrum(n, condition_number, rng))


def random_rank_k(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``X Y*`` with Gaussian ``n x k`` factors; rank exactly ``k`` almost surely."""
    return complex_gaussian((n, k), rng) @ complex_gaussian((n, k), rng).conj().T


def controller_spectrum(
    n: int, condition_number: float, rng: np.random.Generator
) -> np.ndarray:
    """Eigenvalues in ``[1, condition_number]`` with both endpoints attained."""
    c = rng.uniform(1.0, condition_number, n)
    c[0] = 1.0
    if n > 1:
        c[-1] = condition_number
    return c


def hermitian_from_eigen(q: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    """``Q diag(eigenvalues) Q*``, symmetrized."""
    h = (q * eigenvalues) @ q.conj().T
    return (h + h.conj().T) / 2


# ---------------------------------------------------------------------------
# Instance configuration
# ---------------------------------------------------------------------------


class InstanceConfig(BaseModel):
    """Parameters of :func:`gen_instance`."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    n_subspaces: int = Field(ge=1)
    max_subdim: int = Field(ge=1)
    controller_condition_number: float = Field(default=4.0, ge=1, allow_inf_nan=False)
    k_rank: int = Field(ge=1)
    seed: int = Field(ge=0)
    positivity: bool = True

    @model_validator(mode="after")
    def _fits_dimension(self) -> "InstanceConfig":
        if self.max_subdim > self.dim:
            raise ValueError(f"max_subdim {self.max_subdim} exceeds dim {self.dim}")
        if self.k_rank > self.dim:
            raise ValueError(f"k_rank {self.k_rank} exceeds dim {self.dim}")
        return self


def column_sets(
    n: int, m: int, max_subdim: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Column index sets, one per subspace, covering ``0..n-1`` when possible."""
    order = rng.permutation(n)
    covering = m * max_subdim >= n
    if not covering:
        logger.warning(
            "%d subspaces of dimension <= %d cannot cover C^%d; S will be singular",
            m,
            max_subdim,
            n,
        )
    sets = []
    for i in range(m):
        base = list(order[i::m]) if covering else []
        size = int(rng.integers(max(len(base), 1), max_subdim + 1))
        rest = [j for j in rng.permutation(n) if j not in base]
        sets.append(np.sort(np.array(base + rest[: size - len(base)], dtype=int)))
    return sets


def _generate(config: InstanceConfig) -> ControlledFrameSpec:
    rng = np.random.default_rng(config.seed)
    n, m = config.dim, config.n_subspaces
    cond = config.controller_condition_number

    if config.positivity:
        q = haar_unitary(n, rng)
        subspaces = [
            Subspace(basis=q[:, cols]) for cols in column_sets(n, m, config.max_subdim, rng)
        ]
        c = hermitian_from_eigen(q, controller_spectrum(n, cond, rng))
        cp = rng.uniform(0.5, 2.0) * c
    else:
        subspaces = [
            random_subspace(n, int(rng.integers(1, config.max_subdim + 1)), rng)
            for _ in range(m)
        ]
        c = random_gl_plus(n, cond, rng)
        cp = random_gl_plus(n, cond, rng)

    weights = rng.uniform(0.5, 2.0, m)
    k = random_rank_k(n, config.k_rank, rng)
    system = FusionSystem.from_pairs(zip(subspaces, weights))
    logger.debug(
        "gen_instance: seed=%d n=%d m=%d dims=%s positivity=%s",
        config.seed,
        n,
        m,
        [s.dim for s in subspaces],
        config.positivity,
    )
    return ControlledFrameSpec(system=system, C=c, Cp=cp, K=k)


def gen_instance(
    dim: int,
    n_subspaces: int,
    max_subdim: int,
    controller_condition_number: float,
    k_rank: int,
    seed: int,
    positivity: bool = True,
) -> ControlledFrameSpec:
    """Deterministic random :class:`ControlledFrameSpec`.

    Parameters
    ----------
    dim:
        Ambient dimension ``n``.
    n_subspaces:
        Number of weighted subspaces.
    max_subdim:
        Largest subspace dimension, ``1 <= max_subdim <= dim``.
    controller_condition_number:
        Ratio of the spectral bounds of ``C`` (``>= 1``).
    k_rank:
        Exact rank of ``K``, ``1 <= k_rank <= dim``.
    seed:
        Seed of the random generator.
    positivity:
        Keep every ``C'* pi_i C`` positive (see module docstring).

    Raises
    ------
    InvalidConfig
        If a parameter is out of range.
    """
    try:
        config = InstanceConfig(
            dim=dim,
            n_subspaces=n_subspaces,
            max_subdim=max_subdim,
            controller_condition_number=controller_condition_number,
            k_rank=k_rank,
            seed=seed,
            positivity=positivity,
        )
    except ValidationError as exc:
        raise InvalidConfig(str(exc)) from exc
    return _generate(config)


# ---------------------------------------------------------------------------
# Sequence-space example
# ---------------------------------------------------------------------------

SEQUENCE_K_CHOICES = ("weighted", "identity")


def build_sequence_example(
    n: int, alpha: float, beta: float, k: str = "weighted"
) -> ControlledFrameSpec:
    """Truncation to ``C^n`` of the weighted coordinate system.

    ``W_i = span{e_i}``, ``w_i = 1 / sqrt(i + 1)``, ``C = alpha I``,
    ``C' = beta I``.  ``k="weighted"`` gives ``K = diag(1 / sqrt(i + 1))``,
    ``k="identity"`` gives ``K = I``.  The frame operator is
    ``diag(alpha beta / (i + 1))``.
    """
    if n < 1:
        raise InvalidConfig(f"n must be >= 1, got {n}")
    for name, value in (("alpha", alpha), ("beta", beta)):
        if not np.isfinite(value) or value <= 0:
            raise InvalidConfig(f"{name} must be positive and finite, got {value}")
    if k not in SEQUENCE_K_CHOICES:
        raise InvalidConfig(f"k must be one of {SEQUENCE_K_CHOICES}, got {k!r}")

    eye = np.eye(n)
    scales = 1.0 / np.sqrt(np.arange(1, n + 1))
    system = FusionSystem.from_pairs(
        (Subspace(basis=eye[:, [i]]), float(scales[i])) for i in range(n)
    )
    K = np.diag(scales) if k == "weighted" else eye
    return ControlledFrameSpec(system=system, C=alpha * eye, Cp=beta * eye, K=K)


# ---------------------------------------------------------------------------
# Perturbed families
# ---------------------------------------------------------------------------


def rotated_subspaces(system: FusionSystem, theta: float) -> tuple[Subspace, ...]:
    """Rotate the ``i``-th subspace by ``theta`` in the ``(e_i, e_{i+1 mod n})`` plane."""
    n = system.ambient_dim
    out = []
    for i, subspace in enumerate(system.subspaces):
        j = (i + 1) % n
        g = np.eye(n, dtype=np.complex128)
        if j != i:
            g[[i, i, j, j], [i, j, i, j]] = [
                np.cos(theta),
                -np.sin(theta),
                np.sin(theta),
                np.cos(theta),
            ]
        out.append(Subspace(basis=g @ subspace.basis))
    return tuple(out)


def positive_perturbation(
    spec: ControlledFrameSpec,
    epsilon: float,
    rng: np.random.Generator,
    *,
    directions: Sequence[int] | None = None,
) -> tuple[ControlledFrameSpec, tuple[Subspace, ...]]:
    """Extend *spec* so that a perturbation with positive definite ``D`` exists.

    The returned spec appends ``n`` items ``({0}, epsilon)``; the returned
    family keeps the original subspaces and replaces the appended ones with
    ``span{u_j}`` for the columns of a Haar unitary.  Then
    ``D = epsilon^2 C'* C``.  *directions* picks a subset of the ``n``
    columns (all by default).
    """
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise InvalidConfig(f"epsilon must be positive and finite, got {epsilon}")
    n = spec.dim
    u = haar_unitary(n, rng)
    cols = list(range(n)) if directions is None else list(directions)
    extended = spec.with_system(
        FusionSystem(
            items=spec.system.items
            + tuple(FusionItem(subspace=Subspace.zero(n), weight=epsilon) for _ in cols)
        )
    )
    family = spec.system.subspaces + tuple(Subspace(basis=u[:, [j]]) for j in cols)
    return extended, family
