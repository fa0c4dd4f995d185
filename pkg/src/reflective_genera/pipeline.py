"""Classification of totally-reflective genera in dimensions 3 and 4.

Three stages, each feeding the next:

1. ``ssf``: strongly square free genera. Determinant shapes are enumerated
   under the Nref/M bound, every genus symbol of each surviving determinant
   is built, and its classes are enumerated until a non-reflective class
   shows up or the mass is exhausted.
2. ``sf``: square free genera, the closure of stage 1 under partial duals.
3. ``all``: every primitive genus, the closure of stage 2 under Watson
   pre-images. Only totally-reflective genera are expanded further, since
   the Watson image of a totally-reflective genus is totally reflective.

Work items (one determinant in stage 1, one candidate genus in stage 3) run
in worker processes when ``jobs > 1``. Every finished item is appended to a
JSON lines checkpoint log so an interrupted run can resume.
"""

import asyncio
import logging
import os
from collections import deque
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

import anyio
import anyio.to_process
from pydantic import BaseModel, Field, ValidationError
from sympy import factorint, primerange

from reflective_genera.bounds import (
    m_lower,
    shapes_within_bounds,
    symbol_nref,
    watson_prime_cutoff,
)
from reflective_genera.classes import genus_classes, reflective_mass
from reflective_genera.local import (
    DetShape,
    GenusSymbol,
    enumerate_symbols,
    parse_symbol,
    partial_dual_symbol,
    primitive_symbol,
    valuation,
    watson_preimages,
    watson_symbol,
)
from reflective_genera.mass import mass
from reflective_genera.utils.errors import (
    BudgetExhaustedError,
    DeterminantCapError,
    WatsonRoundTripError,
)

logger = logging.getLogger(__name__)

Stage = Literal["ssf", "sf", "all"]


def _default_jobs() -> int:
    return int(os.environ.get("REFLECTIVE_GENERA_JOBS", "1"))


# =============================================================================
# Configuration and records
# =============================================================================


class PipelineConfig(BaseModel):
    """Options of one classification run."""

    dim: Literal[3, 4]
    stage: Stage = "all"
    jobs: int = Field(default_factory=_default_jobs, ge=1)
    resume: Path | None = None
    class_budget: int | None = Field(default=None, ge=1)
    # Largest growth of v_p(det) over the square free ancestor; defaults to 2 * dim
    cap_exponent: int | None = Field(default=None, ge=1)
    # Restricts every stage to determinants up to this value (partial runs)
    max_determinant: int | None = Field(default=None, ge=1)

    @property
    def effective_cap(self) -> int:
        return self.cap_exponent if self.cap_exponent is not None else 2 * self.dim

    def within_limit(self, det: int) -> bool:
        return self.max_determinant is None or det <= self.max_determinant


class GenusRecord(BaseModel):
    """One totally-reflective genus with its class data."""

    symbol: str
    rank: int
    determinant: int
    class_number: int
    mass: str
    reflective_mass: str
    nref: str

    def genus(self) -> GenusSymbol:
        return parse_symbol(self.symbol, self.rank)

    def line(self) -> str:
        return (
            f"{self.symbol:<40} det={self.determinant:<10} h={self.class_number:<4} "
            f"mass={self.mass:<16} m_ref={self.reflective_mass}"
        )


class CheckpointRecord(BaseModel):
    """Outcome of one work item, as stored in the checkpoint log."""

    stage: Stage
    dim: int
    key: str
    genera: list[GenusRecord] = Field(default_factory=list)
    incomplete: list[str] = Field(default_factory=list)
    visited: int = 0
    violations: list[str] = Field(default_factory=list)


def genus_record(symbol: GenusSymbol, class_number: int, m_ref: Fraction) -> GenusRecord:
    canonical = symbol.canonical()
    return GenusRecord(
        symbol=str(canonical),
        rank=canonical.rank,
        determinant=canonical.determinant,
        class_number=class_number,
        mass=str(mass(canonical)),
        reflective_mass=str(m_ref),
        nref=str(symbol_nref(canonical)),
    )


class CheckpointLog:
    """Append-only JSON lines log of finished work items."""

    def __init__(self, path: Path | None = None) -> None:
        self.path = path
        self._records: dict[tuple[str, str], CheckpointRecord] = {}
        if path is not None and path.exists():
            self._load(path)

    def _load(self, path: Path) -> None:
        with path.open() as fh:
            for number, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = CheckpointRecord.model_validate_json(line)
                except ValidationError as e:
                    logger.warning(f"Skipping unreadable checkpoint line {number} in {path}: {e}")
                    continue
                self._records[(record.stage, record.key)] = record
        logger.info(f"Loaded {len(self._records)} checkpoint records from {path}")

    def get(self, stage: Stage, key: str) -> CheckpointRecord | None:
        return self._records.get((stage, key))

    def append(self, record: CheckpointRecord) -> None:
        self._records[(record.stage, record.key)] = record
        if self.path is None:
            return
        with self.path.open("a") as fh:
            fh.write(record.model_dump_json() + "\n")

    def __len__(self) -> int:
        return len(self._records)


# =============================================================================
# Work items (run in worker processes)
# =============================================================================


def classify_determinant(dim: int, det: int, class_budget: int | None) -> dict[str, Any]:
    """Strongly square free totally-reflective genera of one determinant.

    Also audits the bounds on every genus visited: M(d) must not exceed the
    mass, and the reflective mass of a kept genus must not exceed Nref.
    """
    shape = DetShape.from_determinant(det)
    lower = m_lower(shape, dim)
    symbols = enumerate_symbols(dim, det, strongly_square_free=True)
    record = CheckpointRecord(stage="ssf", dim=dim, key=str(det), visited=len(symbols))
    for symbol in symbols:
        genus_mass = mass(symbol)
        if lower.certainly_above(genus_mass):
            record.violations.append(f"M({shape}) exceeds the mass {genus_mass} of {symbol}")
        try:
            classes = genus_classes(
                symbol, stop_when_nonreflective=True, class_budget=class_budget
            )
        except BudgetExhaustedError as e:
            logger.warning(f"Giving up on {symbol}: {e}")
            record.incomplete.append(str(symbol))
            continue
        if not (classes.certified and classes.all_reflective):
            continue
        m_ref = reflective_mass(classes)
        if m_ref > symbol_nref(symbol):
            record.violations.append(f"reflective mass {m_ref} of {symbol} exceeds Nref")
        record.genera.append(genus_record(symbol, classes.class_number, m_ref))
    logger.debug(f"det {det}: {len(record.genera)} of {len(symbols)} genera kept")
    return record.model_dump()


def classify_candidate(text: str, rank: int, class_budget: int | None) -> dict[str, Any]:
    """Test one Watson pre-image for total reflectivity."""
    symbol = parse_symbol(text, rank)
    record = CheckpointRecord(stage="all", dim=rank, key=text, visited=1)
    try:
        classes = genus_classes(symbol, stop_when_nonreflective=True, class_budget=class_budget)
    except BudgetExhaustedError as e:
        logger.warning(f"Giving up on {symbol}: {e}")
        record.incomplete.append(text)
        return record.model_dump()
    if classes.certified and classes.all_reflective:
        record.genera.append(genus_record(symbol, classes.class_number, reflective_mass(classes)))
    return record.model_dump()


async def _run_items(
    func: Callable[..., dict[str, Any]],
    items: Sequence[tuple[Any, ...]],
    jobs: int,
    on_result: Callable[[CheckpointRecord], None],
) -> list[CheckpointRecord]:
    """Run ``func`` over ``items``, in worker processes when jobs > 1; results keep input order."""
    results: list[CheckpointRecord | None] = [None] * len(items)
    if jobs <= 1:
        for i, args in enumerate(items):
            record = CheckpointRecord.model_validate(func(*args))
            results[i] = record
            on_result(record)
        return [r for r in results if r is not None]

    limiter = anyio.CapacityLimiter(jobs)
    lock = asyncio.Lock()

    async def work(i: int, args: tuple[Any, ...]) -> None:
        raw = await anyio.to_process.run_sync(func, *args, limiter=limiter)
        record = CheckpointRecord.model_validate(raw)
        async with lock:
            results[i] = record
            on_result(record)

    async with anyio.create_task_group() as tg:
        for i, args in enumerate(items):
            tg.start_soon(work, i, args)
    return [r for r in results if r is not None]


# =============================================================================
# Stages
# =============================================================================


@dataclass
class StageOutcome:
    genera: list[GenusRecord]
    incomplete: list[str] = field(default_factory=list)
    visited: int = 0
    violations: list[str] = field(default_factory=list)


def _sorted_records(records: Sequence[GenusRecord]) -> list[GenusRecord]:
    return sorted(records, key=lambda r: (r.determinant, r.symbol))


async def enumerate_ssf(config: PipelineConfig, log: CheckpointLog | None = None) -> StageOutcome:
    """Strongly square free totally-reflective genera of dimension ``config.dim``."""
    log = log or CheckpointLog()
    dets = sorted(
        {shape.determinant for shape in shapes_within_bounds(config.dim)
         if config.within_limit(shape.determinant)}
    )
    logger.info(f"{len(dets)} determinants within the bounds in dimension {config.dim}")
    done = [r for d in dets if (r := log.get("ssf", str(d))) is not None]
    todo = [(config.dim, d, config.class_budget) for d in dets if log.get("ssf", str(d)) is None]
    if done:
        logger.info(f"Resuming: {len(done)} determinants already classified")

    def finished(record: CheckpointRecord) -> None:
        log.append(record)
        if record.genera:
            logger.info(f"det {record.key}: {len(record.genera)} genera")

    records = done + await _run_items(classify_determinant, todo, config.jobs, finished)
    outcome = StageOutcome(genera=[])
    for record in records:
        outcome.genera.extend(record.genera)
        outcome.incomplete.extend(record.incomplete)
        outcome.visited += record.visited
        outcome.violations.extend(record.violations)
    outcome.genera = _sorted_records(outcome.genera)
    for violation in outcome.violations:
        logger.error(f"Bound audit: {violation}")
    logger.info(f"Stage ssf: {len(outcome.genera)} genera")
    return outcome


def expand_partial_duals(
    ssf: Sequence[GenusRecord], config: PipelineConfig | None = None
) -> list[GenusRecord]:
    """Closure under the partial duals D_p, p | det, up to primitive rescaling.

    D_p is a bijection between the classes of two genera that preserves
    automorphism groups and roots, so class numbers carry over and the
    reflective mass equals the mass.
    """
    found: dict[GenusSymbol, GenusRecord] = {r.genus(): r for r in ssf}
    queue = deque(found)
    while queue:
        current = queue.popleft()
        source = found[current]
        for p in sorted(int(q) for q in factorint(current.determinant)):
            image = primitive_symbol(partial_dual_symbol(current, p)).canonical()
            if image in found:
                continue
            if config is not None and not config.within_limit(image.determinant):
                continue
            found[image] = genus_record(image, source.class_number, mass(image))
            queue.append(image)
    logger.info(f"Stage sf: {len(found)} genera from {len(ssf)}")
    return _sorted_records(list(found.values()))


def watson_primes(symbol: GenusSymbol) -> list[int]:
    """Primes at which totally-reflective Watson pre-images of ``symbol`` can occur.

    The primes dividing 2 det, and the odd primes not dividing det up to the
    mass growth cutoff.
    """
    det = symbol.determinant
    primes = {2} | {int(p) for p in factorint(det)}
    cutoff = watson_prime_cutoff(symbol_nref(symbol), mass(symbol), symbol.rank, det)
    if cutoff is not None:
        primes |= {int(p) for p in primerange(3, cutoff + 1) if det % p}
    return sorted(primes)


def _beyond_cap(candidate: GenusSymbol, root_det: int, p: int, cap: int) -> bool:
    return valuation(candidate.determinant, p) - valuation(root_det, p) > cap


async def close_under_watson_preimages(
    sf: Sequence[GenusRecord],
    config: PipelineConfig,
    log: CheckpointLog | None = None,
) -> StageOutcome:
    """Closure of the square free genera under totally-reflective Watson pre-images.

    Proceeds in rounds: every pre-image of the previous round's genera is
    tested, and the totally-reflective ones form the next round. A pre-image
    whose determinant grows past the cap at p is still tested; if it turns
    out totally reflective the cap was too small and the run fails.
    """
    log = log or CheckpointLog()
    found: dict[GenusSymbol, GenusRecord] = {r.genus(): r for r in sf}
    roots: dict[GenusSymbol, int] = {g: g.determinant for g in found}
    frontier = list(found)
    outcome = StageOutcome(genera=[])
    round_number = 0
    while frontier:
        round_number += 1
        candidates: dict[GenusSymbol, tuple[GenusSymbol, int]] = {}
        for genus in frontier:
            for p in watson_primes(genus):
                for candidate in watson_preimages(genus, p):
                    candidate = candidate.canonical()
                    if candidate in found or candidate in candidates:
                        continue
                    if not config.within_limit(candidate.determinant):
                        continue
                    candidates[candidate] = (genus, p)
        ordered = sorted(candidates, key=lambda g: g.sort_key())
        logger.info(f"Watson round {round_number}: {len(ordered)} candidates")
        done = {g: r for g in ordered if (r := log.get("all", str(g))) is not None}
        todo = [(str(g), g.rank, config.class_budget) for g in ordered if g not in done]
        records = await _run_items(classify_candidate, todo, config.jobs, log.append)
        by_key = {r.key: r for r in records} | {r.key: r for r in done.values()}
        frontier = []
        for candidate in ordered:
            record = by_key[str(candidate)]
            outcome.visited += record.visited
            outcome.incomplete.extend(record.incomplete)
            if not record.genera:
                continue
            parent, p = candidates[candidate]
            if watson_symbol(candidate, p) != parent:
                raise WatsonRoundTripError(f"{candidate} does not map back to {parent} at {p}")
            if _beyond_cap(candidate, roots[parent], p, config.effective_cap):
                raise DeterminantCapError(
                    f"totally-reflective pre-image {candidate} of {parent} at {p} lies beyond "
                    f"the cap p^{config.effective_cap} * {roots[parent]}"
                )
            found[candidate] = record.genera[0]
            roots[candidate] = roots[parent]
            frontier.append(candidate)
    outcome.genera = _sorted_records(list(found.values()))
    logger.info(f"Stage all: {len(outcome.genera)} genera after {round_number} rounds")
    return outcome


# =============================================================================
# Reports
# =============================================================================


def extremes(records: Sequence[GenusRecord]) -> dict[str, Any]:
    """Largest shape and primes among strongly square free genera."""
    max_r = max_s = largest_squared = largest_simple = 0
    for record in records:
        shape = DetShape.from_determinant(record.determinant)
        max_r = max(max_r, shape.r)
        max_s = max(max_s, shape.s)
        largest_squared = max([largest_squared, *shape.squared])
        largest_simple = max([largest_simple, *shape.simple])
    return {
        "max_r": max_r,
        "max_s": max_s,
        "largest_squared_prime": largest_squared or None,
        "largest_simple_prime": largest_simple or None,
    }


@dataclass
class ClassificationReport:
    dim: int
    ssf_genera: list[GenusRecord]
    sf_genera: list[GenusRecord] = field(default_factory=list)
    all_genera: list[GenusRecord] = field(default_factory=list)
    incomplete: list[str] = field(default_factory=list)
    audit_visited: int = 0
    audit_violations: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.incomplete

    @property
    def counts(self) -> dict[str, int]:
        return {
            "ssf": len(self.ssf_genera),
            "sf": len(self.sf_genera),
            "all": len(self.all_genera),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "counts": self.counts,
            "complete": self.complete,
            "incomplete": self.incomplete,
            "extremes": extremes(self.ssf_genera),
            "audit": {"visited": self.audit_visited, "violations": self.audit_violations},
            "ssf": [r.model_dump() for r in self.ssf_genera],
            "sf": [r.model_dump() for r in self.sf_genera],
            "all": [r.model_dump() for r in self.all_genera],
        }

    def table(self) -> str:
        lines = [f"Totally-reflective genera in dimension {self.dim}"]
        for name, records in (("strongly square free", self.ssf_genera),
                               ("square free", self.sf_genera),
                               ("all primitive", self.all_genera)):
            if not records:
                continue
            lines.append("")
            lines.append(f"{name}: {len(records)}")
            lines.extend(f"  {r.line()}" for r in records)
        ext = extremes(self.ssf_genera)
        lines.append("")
        lines.append(
            f"extremes: shape <= ({ext['max_r']}, {ext['max_s']}), largest squared prime "
            f"{ext['largest_squared_prime']}, largest simple prime {ext['largest_simple_prime']}"
        )
        lines.append(
            f"bound audit: {self.audit_visited} genera visited, "
            f"{len(self.audit_violations)} violations"
        )
        if self.incomplete:
            lines.append(f"INCOMPLETE: {len(self.incomplete)} genera exceeded the class budget")
        return "\n".join(lines)


async def run_pipeline(config: PipelineConfig) -> ClassificationReport:
    log = CheckpointLog(config.resume)
    ssf = await enumerate_ssf(config, log)
    report = ClassificationReport(
        dim=config.dim,
        ssf_genera=ssf.genera,
        incomplete=list(ssf.incomplete),
        audit_visited=ssf.visited,
        audit_violations=list(ssf.violations),
    )
    if config.stage == "ssf":
        return report
    report.sf_genera = expand_partial_duals(ssf.genera, config)
    if config.stage == "sf":
        return report
    closure = await close_under_watson_preimages(report.sf_genera, config, log)
    report.all_genera = closure.genera
    report.incomplete.extend(closure.incomplete)
    if report.incomplete:
        logger.warning(f"Run incomplete: {len(report.incomplete)} genera exceeded the budget")
    return report


def classify(config: PipelineConfig) -> ClassificationReport:
    """Synchronous entry point for :func:`run_pipeline`."""
    return asyncio.run(run_pipeline(config))
