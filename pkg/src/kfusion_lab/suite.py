"""Theorem registry and the randomized verification suite.

Every registered theorem has a *case*: a function that draws an instance
satisfying the theorem's hypotheses from a seeded generator, applies the
transform, and returns the resulting
:class:`~kfusion_lab.models.PropagatedBounds` (conclusions compared with the
optimal bounds).  :func:`run_suite` evaluates ``instances`` cases per theorem,
optionally on a thread pool, and returns one
:class:`~kfusion_lab.serialization.VerificationReport` per case, ordered by
instance id.

Typical usage
-------------
>>> reports = run_suite(SuiteConfig(theorems=("sandwich", "restrict"), instances=10))
>>> suite_exit_code(reports)
0
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from kfusion_lab import engine
from kfusion_lab.errors import FrameLabError, HypothesisFailed, InvalidConfig
from kfusion_lab.generators import (
    column_sets,
    complex_gaussian,
    gen_instance,
    haar_unitary,
    hermitian_from_eigen,
    positive_perturbation,
)
from kfusion_lab.models import (
    DEFAULT_TOLERANCE,
    ControlledFrameSpec,
    FusionSystem,
    HypothesisCheck,
    PropagatedBounds,
    Subspace,
    Theorem,
    Tolerance,
)
from kfusion_lab.operators import op_norm, orthonormalize, pinv
from kfusion_lab.serialization import (
    HypothesisRecord,
    VerificationReport,
    report_from_bounds,
)
from kfusion_lab.transforms import (
    combine_k,
    k_from_fusion,
    perturb_check,
    restrict_to_range,
    strip_controllers,
    transfer_frame_to_T,
    unitary_transform,
    unitary_transform_corollary,
)

logger = logging.getLogger(__name__)

Case = Callable[[np.random.Generator, int, Tolerance], tuple[PropagatedBounds, ...]]

ALIASES: dict[str, Theorem] = {
    "restrict": Theorem.RESTRICT_TO_RANGE,
    "transfer": Theorem.TRANSFER_FRAME_TO_T,
    "unitary": Theorem.UNITARY_TRANSFORM,
    "perturb": Theorem.PERTURB_CHECK,
}

DEFINITION_TRIALS = 1000


class SuiteConfig(BaseModel):
    """Which theorems to check, on how many instances, and how."""

    model_config = ConfigDict(frozen=True)

    theorems: tuple[str, ...] = ()
    instances: int = Field(default=100, ge=0)
    seed: int = Field(default=0, ge=0)
    max_dim: int = Field(default=6, ge=2)
    tol: Tolerance = DEFAULT_TOLERANCE
    workers: int = Field(default=1, ge=1)


def resolve_theorem(name: str) -> Theorem:
    """Map a registry name or alias to its :class:`Theorem`."""
    key = name.strip()
    if key in ALIASES:
        return ALIASES[key]
    try:
        return Theorem(key)
    except ValueError:
        raise InvalidConfig(
            f"unknown theorem {name!r}; known: {', '.join(t.value for t in Theorem)}"
        ) from None


def list_theorems() -> list[str]:
    """Registry names followed by aliases, each alias as ``alias -> name``."""
    return [t.value for t in Theorem] + [
        f"{alias} -> {target.value}" for alias, target in sorted(ALIASES.items())
    ]


# ---------------------------------------------------------------------------
# Instance constructors
# ---------------------------------------------------------------------------


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31))


def _draw_instance(rng: np.random.Generator, dim: int) -> ControlledFrameSpec:
    """Positivity-respecting instance whose subspaces cover ``C^dim``."""
    m = int(rng.integers(2, dim + 2))
    return gen_instance(
        dim=dim,
        n_subspaces=m,
        max_subdim=int(rng.integers(math.ceil(dim / m), dim + 1)),
        controller_condition_number=float(rng.uniform(1.0, 4.0)),
        k_rank=int(rng.integers(1, dim + 1)),
        seed=_seed(rng),
    )


def _weights(count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.5, 2.0, count)


def _well_conditioned_k(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    x = haar_unitary(dim, rng)[:, :rank]
    y = haar_unitary(dim, rng)[:, :rank]
    return (x * rng.uniform(0.5, 2.0, rank)) @ y.conj().T


def _groups(dim: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random partition of ``0..dim-1`` into nonempty index groups."""
    order = rng.permutation(dim)
    count = int(rng.integers(1, dim + 1))
    cuts = np.sort(rng.choice(np.arange(1, dim), size=count - 1, replace=False))
    return [np.sort(g) for g in np.split(order, cuts)]


def _spanning_subspaces(dim: int, rng: np.random.Generator) -> list[Subspace]:
    """Random Gaussian subspaces whose dimensions add up to at least ``dim``."""
    sizes = [int(rng.integers(1, dim + 1)) for _ in range(int(rng.integers(2, dim + 2)))]
    sizes[-1] = max(sizes[-1], min(dim, dim - sum(sizes[:-1])))
    return [orthonormalize(complex_gaussian((dim, k), rng), dim=dim) for k in sizes]


def _aligned_spec(rng: np.random.Generator, dim: int) -> ControlledFrameSpec:
    """``C``, ``C'``, ``K`` and every projection diagonal in one unitary basis."""
    q = haar_unitary(dim, rng)
    m = int(rng.integers(2, dim + 2))
    cols = column_sets(dim, m, int(rng.integers(math.ceil(dim / m), dim + 1)), rng)
    kappa = rng.uniform(0.5, 2.0, dim) * np.exp(2j * np.pi * rng.random(dim))
    kappa[rng.random(dim) < 0.25] = 0.0
    kappa[int(rng.integers(dim))] = 1.0
    return ControlledFrameSpec(
        system=FusionSystem.from_pairs(
            zip((Subspace(basis=q[:, c]) for c in cols), _weights(m, rng))
        ),
        C=hermitian_from_eigen(q, rng.uniform(1.0, 3.0, dim)),
        Cp=hermitian_from_eigen(q, rng.uniform(1.0, 3.0, dim)),
        K=(q * kappa) @ q.conj().T,
    )


def _transport_instance(
    rng: np.random.Generator, dim: int, *, unitary: bool
) -> tuple[ControlledFrameSpec, np.ndarray]:
    """Spec with ``C' = C`` and ``K`` scalar on index groups, plus a block ``U``.

    ``U`` acts inside each group, so it commutes with ``C`` and ``K*``.
    """
    q = haar_unitary(dim, rng)
    c = np.empty(dim)
    kappa = np.empty(dim, dtype=np.complex128)
    blocks = np.zeros((dim, dim), dtype=np.complex128)
    groups = _groups(dim, rng)
    for g in groups:
        c[g] = rng.uniform(1.0, 3.0)
        kappa[g] = 0.0 if rng.random() < 0.25 else rng.uniform(0.5, 2.0) * np.exp(
            2j * np.pi * rng.random()
        )
        block = haar_unitary(len(g), rng)
        if not unitary:
            block = (block * rng.uniform(0.5, 2.0, len(g))) @ haar_unitary(len(g), rng)
        blocks[np.ix_(g, g)] = block
    if not np.any(kappa):
        kappa[groups[0]] = 1.0

    ctrl = hermitian_from_eigen(q, c)
    subspaces = _spanning_subspaces(dim, rng)
    spec = ControlledFrameSpec(
        system=FusionSystem.from_pairs(zip(subspaces, _weights(len(subspaces), rng))),
        C=ctrl,
        Cp=ctrl,
        K=(q * kappa) @ q.conj().T,
    )
    return spec, q @ blocks @ q.conj().T


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------


def _case_sandwich(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    report = engine.classify(spec, tol)
    s = engine.frame_operator(spec)
    t = engine.analysis_matrix(spec, tol)
    scale = tol.scale(dim, op_norm(s))
    hypotheses = (
        HypothesisCheck.from_defect("S_self_adjoint", op_norm(s - s.conj().T), scale),
        HypothesisCheck.from_defect("S_equals_TstarT", op_norm(s - t.conj().T @ t), scale),
        HypothesisCheck(
            name="synthesis_norm_within_sqrt_B",
            margin=float(np.sqrt(max(report.upper, 0.0)) + scale - op_norm(t)),
        ),
    )
    low, high = engine.sandwich_margins(spec, report.lower, report.upper, tol)
    return (
        PropagatedBounds(
            lower=report.lower,
            upper=report.upper,
            source=Theorem.SANDWICH,
            hypotheses=hypotheses,
            reference_lower=report.lower_optimal,
            reference_upper=report.upper,
            conclusion_passed=low >= 0 and high >= 0,
        ),
    )


def _case_definition(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    report = engine.classify(spec, tol)
    check = engine.verify_definition(
        spec, report.lower, report.upper, DEFINITION_TRIALS, _seed(rng), tol
    )
    return (
        PropagatedBounds(
            lower=report.lower,
            upper=report.upper,
            source=Theorem.DEFINITION,
            hypotheses=(
                HypothesisCheck(name="sampled_lower_side", margin=check.worst_lower_margin),
                HypothesisCheck(name="sampled_upper_side", margin=check.worst_upper_margin),
            ),
            reference_lower=report.lower_optimal,
            reference_upper=report.upper,
            conclusion_passed=check.passed,
        ),
    )


def _case_restrict(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    report = engine.classify(spec, tol)
    return (restrict_to_range(spec, report.lower, report.upper, tol, seed=_seed(rng)),)


def _case_transfer(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    report = engine.classify(spec, tol)
    m = complex_gaussian((dim, dim), rng)
    m = m / (op_norm(m) * rng.uniform(1.0, 2.0))
    return (transfer_frame_to_T(spec, report.lower, report.upper, spec.K @ m, tol),)


def _case_combine(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    q = haar_unitary(dim, rng)
    order = rng.permutation(dim)
    split = int(rng.integers(1, dim))
    k1, k2 = (
        hermitian_from_eigen(q[:, idx], rng.uniform(0.5, 2.0, len(idx)))
        for idx in (order[:split], order[split:])
    )
    r1 = engine.classify(spec.with_k(k1), tol)
    r2 = engine.classify(spec.with_k(k2), tol)
    alpha, beta = complex_gaussian((2,), rng)
    return (
        combine_k(spec, k1, k2, r1.lower, r1.upper, r2.lower, r2.upper, alpha, beta, tol),
    )


def _case_strip(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    return strip_controllers(_aligned_spec(rng, dim), tol)


def _case_unitary(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec, u = _transport_instance(rng, dim, unitary=False)
    return (unitary_transform(spec, u, tol)[1],)


def _case_unitary_corollary(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec, u = _transport_instance(rng, dim, unitary=True)
    return (unitary_transform_corollary(spec, u, tol)[1],)


def _case_perturb(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    base = _draw_instance(rng, dim)
    spec = base.with_k(_well_conditioned_k(dim, int(rng.integers(1, dim + 1)), rng))
    report = engine.classify(spec, tol)
    A, B = report.lower, report.upper
    k_pinv_sq = op_norm(pinv(spec.K, tol)) ** 2
    radius = 0.5 * min(A, A / k_pinv_sq)
    # D = epsilon^2 C'* C; keep its top eigenvalue at 90% of the radius
    top = op_norm(spec.Cp.conj().T @ spec.C)
    extended, family = positive_perturbation(spec, float(np.sqrt(0.9 * radius / top)), rng)
    return (perturb_check(extended, family, radius, A, B, tol, seed=_seed(rng)),)


def _case_k_from_fusion(
    rng: np.random.Generator, dim: int, tol: Tolerance
) -> tuple[PropagatedBounds, ...]:
    spec = _draw_instance(rng, dim)
    fusion = engine.classify(spec.with_k(np.eye(dim)), tol)
    return (k_from_fusion(spec, fusion.lower, fusion.upper, tol),)


CASES: dict[Theorem, Case] = {
    Theorem.SANDWICH: _case_sandwich,
    Theorem.DEFINITION: _case_definition,
    Theorem.RESTRICT_TO_RANGE: _case_restrict,
    Theorem.TRANSFER_FRAME_TO_T: _case_transfer,
    Theorem.COMBINE_K: _case_combine,
    Theorem.STRIP_CONTROLLERS: _case_strip,
    Theorem.UNITARY_TRANSFORM: _case_unitary,
    Theorem.UNITARY_TRANSFORM_COROLLARY: _case_unitary_corollary,
    Theorem.PERTURB_CHECK: _case_perturb,
    Theorem.K_FROM_FUSION: _case_k_from_fusion,
}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def instance_rng(theorem: Theorem, seed: int) -> np.random.Generator:
    """Generator of one suite instance; reproducible from the report's seed."""
    return np.random.default_rng([seed, list(Theorem).index(theorem)])


def run_case(
    theorem: Theorem, index: int, config: SuiteConfig
) -> VerificationReport:
    """Evaluate instance *index* of *theorem*; errors become failed reports."""
    seed = config.seed + index
    instance_id = f"{theorem.value}-{index:04d}"
    rng = instance_rng(theorem, seed)
    dim = int(rng.integers(2, config.max_dim + 1))
    start = time.perf_counter()
    try:
        results = CASES[theorem](rng, dim, config.tol)
    except FrameLabError as exc:
        elapsed = (time.perf_counter() - start) * 1000
        logger.warning("%s: %s: %s", instance_id, type(exc).__name__, exc)
        hypotheses = []
        if isinstance(exc, HypothesisFailed):
            hypotheses.append(
                HypothesisRecord(name=exc.name, margin=exc.margin, passed=False)
            )
        return VerificationReport(
            instance_id=instance_id,
            seed=seed,
            theorem=theorem.value,
            hypotheses=hypotheses,
            timing_ms=elapsed,
            error=f"{type(exc).__name__}: {exc}",
        )
    elapsed = (time.perf_counter() - start) * 1000
    report = report_from_bounds(instance_id, seed, theorem.value, results, elapsed)
    logger.debug("%s: dim=%d passed=%s (%.1f ms)", instance_id, dim, report.passed, elapsed)
    return report


def run_suite(config: SuiteConfig) -> list[VerificationReport]:
    """Run every requested theorem on ``config.instances`` seeded instances.

    Raises
    ------
    InvalidConfig
        If a theorem name is unknown.
    """
    theorems = list(dict.fromkeys(resolve_theorem(name) for name in config.theorems))
    tasks = [(t, i) for t in theorems for i in range(config.instances)]
    if config.workers == 1:
        reports = [run_case(t, i, config) for t, i in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(lambda task: run_case(*task, config), tasks))
    failed = sum(not r.passed for r in reports)
    if failed:
        logger.warning("suite: %d of %d instances failed", failed, len(reports))
    return sorted(reports, key=lambda r: r.instance_id)


def suite_exit_code(reports: list[VerificationReport]) -> int:
    """0 when every report passed (or there are none), otherwise 1."""
    return 0 if all(r.passed for r in reports) else 1
