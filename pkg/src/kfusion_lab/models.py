"""Core data models for the controlled K-fusion frame laboratory.

Validated domain values (tolerances, subspaces, weighted systems, controlled
frame specifications) are frozen pydantic models.  Every numpy array they
hold is converted to ``complex128`` and marked read-only, so a model is
immutable after construction and safe to share between threads.

Computed results (block vectors, bound reports, propagated bounds) are
frozen dataclasses.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from kfusion_lab.errors import InvalidOperator

# Orthonormality of stored bases is checked against this fixed threshold;
# bases produced by orthonormalize() sit many orders of magnitude below it.
ORTHONORMAL_TOLERANCE = 1e-8


# ---------------------------------------------------------------------------
# Array plumbing
# ---------------------------------------------------------------------------


def freeze_array(value: Any, *, ndim: int, name: str = "array") -> np.ndarray:
    """Return a read-only ``complex128`` copy of *value*.

    Real input is embedded into the complex field.  Raises
    :class:`~kfusion_lab.errors.InvalidOperator` when the number of axes is
    wrong or an entry is NaN / infinite.
    """
    try:
        arr = np.array(value, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise InvalidOperator(f"{name}: not a numeric array ({exc})") from exc
    if arr.ndim != ndim:
        raise InvalidOperator(f"{name}: expected {ndim} axes, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidOperator(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Tolerance
# ---------------------------------------------------------------------------


class Tolerance(BaseModel):
    """Relative threshold plus absolute floor used by every comparison.

    The *scale* of a comparison on ``n``-dimensional inputs whose relevant
    norms are ``m1, m2, ...`` is ``rel * n * max(1, m1, m2, ...) + abs``.
    """

    model_config = ConfigDict(frozen=True)

    rel: float = Field(default=1e-9, gt=0, allow_inf_nan=False)
    abs: float = Field(default=1e-12, ge=0, allow_inf_nan=False)

    def scale(self, n: int, *magnitudes: float) -> float:
        size = max([1.0, *(float(m) for m in magnitudes)])
        return self.rel * max(n, 1) * size + self.abs


DEFAULT_TOLERANCE = Tolerance()


# ---------------------------------------------------------------------------
# Subspaces and fusion systems
# ---------------------------------------------------------------------------


class Subspace(BaseModel):
    """Closed subspace of ``C^n`` given by an orthonormal basis.

    Fields
    ------
    basis:  ``n x k`` matrix with orthonormal columns (``k`` may be zero).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: np.ndarray

    @field_validator("basis", mode="before")
    @classmethod
    def _to_array(cls, v: Any) -> np.ndarray:
        return freeze_array(v, ndim=2, name="basis")

    @model_validator(mode="after")
    def _check_orthonormal(self) -> "Subspace":
        n, k = self.basis.shape
        if n == 0:
            raise ValueError("ambient dimension must be positive")
        if k > n:
            raise ValueError(f"{k} basis vectors cannot be independent in C^{n}")
        if k:
            gram = self.basis.conj().T @ self.basis
            defect = float(np.max(np.abs(gram - np.eye(k))))
            if defect > ORTHONORMAL_TOLERANCE * k:
                raise ValueError(f"basis columns are not orthonormal (defect {defect:.3e})")
        return self

    @classmethod
    def zero(cls, ambient_dim: int) -> "Subspace":
        """Return the trivial subspace ``{0}`` of ``C^ambient_dim``."""
        return cls(basis=np.zeros((ambient_dim, 0)))

    @property
    def ambient_dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])


class FusionItem(BaseModel):
    """One weighted subspace ``(W_i, w_i)``; the weight must be positive."""

    model_config = ConfigDict(frozen=True)

    subspace: Subspace
    weight: float = Field(gt=0, allow_inf_nan=False)


class FusionSystem(BaseModel):
    """Ordered, nonempty family of weighted subspaces sharing one ambient space."""

    model_config = ConfigDict(frozen=True)

    items: tuple[FusionItem, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _same_ambient_space(self) -> "FusionSystem":
        dims = {item.subspace.ambient_dim for item in self.items}
        if len(dims) != 1:
            raise ValueError(f"subspaces live in different ambient spaces: {sorted(dims)}")
        return self

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Subspace, float]]) -> "FusionSystem":
        """Build a system from ``(subspace, weight)`` pairs."""
        return cls(
            items=tuple(FusionItem(subspace=s, weight=w) for s, w in pairs)
        )

    @property
    def ambient_dim(self) -> int:
        return self.items[0].subspace.ambient_dim

    @property
    def subspaces(self) -> tuple[Subspace, ...]:
        return tuple(item.subspace for item in self.items)

    @property
    def weights(self) -> np.ndarray:
        return np.array([item.weight for item in self.items])

    def __len__(self) -> int:
        return len(self.items)


# ---------------------------------------------------------------------------
# Controlled frame specification
# ---------------------------------------------------------------------------


class ControlledFrameSpec(BaseModel):
    """A fusion system together with controllers ``C``, ``C'`` and operator ``K``.

    ``C`` and ``Cp`` (for ``C'``) must be invertible: their smallest singular
    value has to exceed ``DEFAULT_TOLERANCE.scale(n, s_max)``.  This check
    runs at construction, so ``--tol-rel`` / ``--tol-abs`` and the
    ``CKFF_DEFAULT_TOL_*`` settings do not loosen it.  ``K`` is arbitrary.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    system: FusionSystem
    C: np.ndarray
    Cp: np.ndarray
    K: np.ndarray

    @field_validator("C", "Cp", "K", mode="before")
    @classmethod
    def _to_array(cls, v: Any) -> np.ndarray:
        return freeze_array(v, ndim=2, name="operator")

    @model_validator(mode="after")
    def _check_operators(self) -> "ControlledFrameSpec":
        n = self.system.ambient_dim
        for name in ("C", "Cp", "K"):
            shape = getattr(self, name).shape
            if shape != (n, n):
                raise ValueError(f"{name} has shape {shape}, expected ({n}, {n})")
        for name in ("C", "Cp"):
            s = np.linalg.svd(getattr(self, name), compute_uv=False)
            if s[-1] <= DEFAULT_TOLERANCE.scale(n, s[0]):
                raise ValueError(
                    f"{name} is not invertible (smallest singular value {s[-1]:.3e})"
                )
        return self

    @classmethod
    def uncontrolled(
        cls, system: FusionSystem, K: np.ndarray | None = None
    ) -> "ControlledFrameSpec":
        """Return the spec with ``C = C' = I`` (and ``K = I`` unless given)."""
        eye = np.eye(system.ambient_dim)
        return cls(system=system, C=eye, Cp=eye, K=eye if K is None else K)

    @property
    def dim(self) -> int:
        return self.system.ambient_dim

    def with_k(self, K: np.ndarray) -> "ControlledFrameSpec":
        return ControlledFrameSpec(system=self.system, C=self.C, Cp=self.Cp, K=K)

    def with_system(self, system: FusionSystem) -> "ControlledFrameSpec":
        return ControlledFrameSpec(system=system, C=self.C, Cp=self.Cp, K=self.K)

    def with_controllers(self, C: np.ndarray, Cp: np.ndarray) -> "ControlledFrameSpec":
        return ControlledFrameSpec(system=self.system, C=C, Cp=Cp, K=self.K)

    def plain(self) -> "ControlledFrameSpec":
        """Return the same system and ``K`` with both controllers set to ``I``."""
        eye = np.eye(self.dim)
        return self.with_controllers(eye, eye)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockVector:
    """Element of the block space: one vector of ``C^n`` per frame item."""

    blocks: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def inner(self, other: "BlockVector") -> complex:
        """Blockwise inner product ``<self, other>``, linear in *self*."""
        if len(other) != len(self):
            raise ValueError("block vectors have different lengths")
        return complex(sum(np.vdot(g, f) for f, g in zip(self.blocks, other.blocks)))

    def norm_squared(self) -> float:
        return float(sum(np.vdot(b, b).real for b in self.blocks))


@dataclass(frozen=True)
class BoundsReport:
    """Optimal frame bounds of a controlled K-fusion system.

    ``lower_optimal`` is the largest constant satisfying the lower frame
    inequality; ``lower`` is the same value capped at ``upper`` so that the
    reported pair always satisfies ``lower <= upper``.
    """

    lower: float
    upper: float
    lower_optimal: float
    lower_witness: np.ndarray
    upper_witness: np.ndarray
    is_frame: bool
    is_parseval: bool
    tol_used: Tolerance
    synthesis_norm: float | None = None
    bessel_ok: bool | None = None


class Theorem(str, Enum):
    """Theorem operations known to the laboratory."""

    SANDWICH = "sandwich"
    DEFINITION = "definition"
    RESTRICT_TO_RANGE = "restrict_to_range"
    TRANSFER_FRAME_TO_T = "transfer_frame_to_T"
    COMBINE_K = "combine_k"
    STRIP_CONTROLLERS = "strip_controllers"
    UNITARY_TRANSFORM = "unitary_transform"
    UNITARY_TRANSFORM_COROLLARY = "unitary_transform_corollary"
    PERTURB_CHECK = "perturb_check"
    K_FROM_FUSION = "k_from_fusion"


@dataclass(frozen=True)
class HypothesisCheck:
    """Numerical margin of one theorem hypothesis (negative means violated)."""

    name: str
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= 0

    @classmethod
    def from_defect(cls, name: str, defect: float, threshold: float) -> "HypothesisCheck":
        """Margin of a condition of the form ``defect <= threshold``."""
        return cls(name=name, margin=float(threshold - defect))


@dataclass(frozen=True)
class PropagatedBounds:
    """Bounds produced by a theorem, with the evidence behind them.

    ``reference_lower`` / ``reference_upper`` are the optimal bounds computed
    directly for the theorem's conclusion; ``conclusion_passed`` records
    whether the propagated pair brackets them.
    """

    lower: float
    upper: float
    source: Theorem
    hypotheses: tuple[HypothesisCheck, ...] = ()
    reference_lower: float | None = None
    reference_upper: float | None = None
    conclusion_passed: bool | None = None
    label: str = ""
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(h.passed for h in self.hypotheses) and self.conclusion_passed is not False
