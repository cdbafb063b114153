"""JSON documents for specs and verification reports.

Spec documents
--------------
A :class:`SpecDocument` is the schema-versioned JSON form of a
:class:`~kfusion_lab.models.ControlledFrameSpec`.  Complex numbers are
``[re, im]`` pairs and matrices are lists of rows.  :func:`dumps_spec` writes
the canonical form (sorted keys, two-space indent, trailing newline), and
``loads_spec(dumps_spec(spec))`` reproduces every matrix bit for bit.

Verification reports
--------------------
One :class:`VerificationReport` per suite instance, written as JSON lines.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from kfusion_lab.errors import InvalidConfig
from kfusion_lab.models import (
    ControlledFrameSpec,
    FusionSystem,
    PropagatedBounds,
    Subspace,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

ComplexPair = tuple[float, float]
ComplexMatrix = list[list[ComplexPair]]


# ---------------------------------------------------------------------------
# Complex matrices <-> nested lists
# ---------------------------------------------------------------------------


def matrix_to_pairs(matrix: np.ndarray) -> ComplexMatrix:
    """Row-major ``[re, im]`` form of a complex matrix."""
    return [[(float(z.real), float(z.imag)) for z in row] for row in matrix]


def pairs_to_matrix(rows: ComplexMatrix, name: str = "matrix") -> np.ndarray:
    """Inverse of :func:`matrix_to_pairs`; an ``n x 0`` matrix is a list of empty rows."""
    if not rows:
        raise InvalidConfig(f"{name}: matrix has no rows")
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise InvalidConfig(f"{name}: rows have different lengths {sorted(widths)}")
    width = widths.pop()
    out = np.empty((len(rows), width), dtype=np.complex128)
    if width:
        arr = np.array(rows, dtype=np.float64)
        out.real = arr[..., 0]
        out.imag = arr[..., 1]
    return out


# ---------------------------------------------------------------------------
# Spec document
# ---------------------------------------------------------------------------


class SubspaceDocument(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    basis: ComplexMatrix


class SpecDocument(BaseModel):
    """Schema-versioned JSON form of a controlled frame spec."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    dim: int = Field(ge=1)
    field: Literal["complex"] = "complex"
    subspaces: list[SubspaceDocument] = Field(min_length=1)
    weights: list[float] = Field(min_length=1)
    C: ComplexMatrix
    Cp: ComplexMatrix
    K: ComplexMatrix
    metadata: dict[str, str] = Field(default_factory=dict)


def spec_to_document(
    spec: ControlledFrameSpec, metadata: dict[str, str] | None = None
) -> SpecDocument:
    return SpecDocument(
        dim=spec.dim,
        subspaces=[
            SubspaceDocument(basis=matrix_to_pairs(s.basis)) for s in spec.system.subspaces
        ],
        weights=[float(w) for w in spec.system.weights],
        C=matrix_to_pairs(spec.C),
        Cp=matrix_to_pairs(spec.Cp),
        K=matrix_to_pairs(spec.K),
        metadata=dict(metadata or {}),
    )


def document_to_spec(doc: SpecDocument) -> ControlledFrameSpec:
    """Build the spec described by *doc*.

    Raises :class:`InvalidConfig` when the document is internally inconsistent;
    invariant violations of the spec itself surface as ``ValidationError``.
    """
    if len(doc.subspaces) != len(doc.weights):
        raise InvalidConfig(
            f"{len(doc.subspaces)} subspaces but {len(doc.weights)} weights"
        )
    matrices = {
        name: pairs_to_matrix(getattr(doc, name), name) for name in ("C", "Cp", "K")
    }
    for name, matrix in matrices.items():
        if matrix.shape != (doc.dim, doc.dim):
            raise InvalidConfig(f"{name} has shape {matrix.shape}, dim is {doc.dim}")
    subspaces = []
    for i, sub in enumerate(doc.subspaces):
        basis = pairs_to_matrix(sub.basis, f"subspaces[{i}]")
        if basis.shape[0] != doc.dim:
            raise InvalidConfig(f"subspaces[{i}] has {basis.shape[0]} rows, dim is {doc.dim}")
        subspaces.append(Subspace(basis=basis))
    system = FusionSystem.from_pairs(zip(subspaces, doc.weights))
    return ControlledFrameSpec(system=system, **matrices)


def dumps_spec(spec: ControlledFrameSpec, metadata: dict[str, str] | None = None) -> str:
    """Canonical JSON text of *spec*."""
    payload = spec_to_document(spec, metadata).model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_spec(text: str) -> ControlledFrameSpec:
    """Parse JSON text produced by :func:`dumps_spec` (or written by hand)."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"malformed JSON: {exc}") from exc
    return document_to_spec(SpecDocument.model_validate(payload))


def write_spec(
    path: Path, spec: ControlledFrameSpec, metadata: dict[str, str] | None = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_spec(spec, metadata), encoding="utf-8")
    logger.debug("wrote spec (n=%d, %d items) to %s", spec.dim, len(spec.system), path)


def read_spec(path: Path) -> ControlledFrameSpec:
    return loads_spec(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Verification reports
# ---------------------------------------------------------------------------


class HypothesisRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    margin: float = Field(allow_inf_nan=False)
    passed: bool


class ConclusionRecord(BaseModel):
    """Propagated bounds next to the directly computed optimal ones."""

    model_config = ConfigDict(frozen=True)

    label: str = ""
    propagated_lower: float
    propagated_upper: float
    reference_lower: float | None = None
    reference_upper: float | None = None
    passed: bool


class VerificationReport(BaseModel):
    """Outcome of one theorem check on one generated instance."""

    model_config = ConfigDict(frozen=True)

    instance_id: str
    seed: int
    theorem: str
    hypotheses: list[HypothesisRecord] = Field(default_factory=list)
    conclusion: list[ConclusionRecord] = Field(default_factory=list)
    timing_ms: float = Field(ge=0)
    error: str | None = None
    notes: list[str] = Field(default_factory=list)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return (
            self.error is None
            and all(h.passed for h in self.hypotheses)
            and bool(self.conclusion)
            and all(c.passed for c in self.conclusion)
        )


def report_from_bounds(
    instance_id: str,
    seed: int,
    theorem: str,
    results: Sequence[PropagatedBounds],
    timing_ms: float,
) -> VerificationReport:
    """Assemble a report from the :class:`PropagatedBounds` of one check."""
    seen: dict[str, HypothesisRecord] = {}
    for result in results:
        for check in result.hypotheses:
            seen.setdefault(
                check.name,
                HypothesisRecord(name=check.name, margin=check.margin, passed=check.passed),
            )
    return VerificationReport(
        instance_id=instance_id,
        seed=seed,
        theorem=theorem,
        hypotheses=list(seen.values()),
        conclusion=[
            ConclusionRecord(
                label=r.label,
                propagated_lower=r.lower,
                propagated_upper=r.upper,
                reference_lower=r.reference_lower,
                reference_upper=r.reference_upper,
                passed=bool(r.conclusion_passed),
            )
            for r in results
        ],
        timing_ms=timing_ms,
        notes=[note for r in results for note in r.notes],
    )


def dumps_reports(reports: Iterable[VerificationReport]) -> str:
    """JSON lines, one report per line."""
    return "".join(report.model_dump_json() + "\n" for report in reports)


def loads_reports(text: str) -> list[VerificationReport]:
    return [
        VerificationReport.model_validate_json(line)
        for line in text.splitlines()
        if line.strip()
    ]
