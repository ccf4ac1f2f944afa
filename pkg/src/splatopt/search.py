"""Evolutionary search over a program's EVOLVE-BLOCK regions.

One logical controller owns a bounded elitist population. Each iteration
selects a parent from the top ranks, asks the generator for a rewrite,
validates the markers, optionally gates through the equivalence checker,
scores the survivor, and records everything. The whole run is a pure function
of (config, inputs): rerunning it reproduces every output byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import checker as checker_mod
from .errors import ConfigError, NoEvolveBlocks, UnbalancedMarkers, UnparseableVerdict
from .evaluator import (
    DEFAULT_TOLERANCE,
    EvaluationBackend,
    FailureKind,
    evaluate,
)
from .gateway import BackendConfig, Gateway
from .oracle import Scene, WorkloadStats
from .planner import (
    Plan,
    PrunedPlan,
    build_plan_prompt,
    build_prune_prompt,
    parse_advice,
    parse_pruned,
    profile_digest,
    render_plan,
)
from .profiles import OccupancyAnalysis, SystemProfile
from .program import SourceProgram, diff_outside_blocks, extract_blocks, source_digest
from .templates import load_template, render_template

log = logging.getLogger(__name__)

ADVICE_MODES = ("none", "plan", "pruned_plan")

# Failure kinds that count toward the error rate: the candidate never made it
# to a score, as opposed to scoring zero at the equivalence gate.
ERROR_KINDS = frozenset(
    {
        FailureKind.MARKER_VIOLATION.value,
        FailureKind.COMPILE_ERROR.value,
        FailureKind.RUNTIME_ERROR.value,
    }
)

_CODE_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int
    population_size: int = 16
    top_k: int = 8
    seed: int = 0
    advice_mode: str = "none"
    check_enabled: bool = False
    tolerance: float = DEFAULT_TOLERANCE
    record_every: int = 10
    parallel: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if self.population_size < 1:
            raise ConfigError("population_size must be at least 1")
        if not 1 <= self.top_k <= self.population_size:
            raise ConfigError("top_k must be in [1, population_size]")
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")
        if self.advice_mode not in ADVICE_MODES:
            raise ConfigError(f"advice_mode must be one of {ADVICE_MODES}")


@dataclass(frozen=True)
class ProfileBundle:
    system: SystemProfile
    workload: WorkloadStats
    occupancy: OccupancyAnalysis


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    candidate_id: str
    score: float
    failure: str | None
    checked: bool
    llm_calls: int


@dataclass
class Member:
    program: SourceProgram
    candidate_id: str
    score: float
    latency: float
    order: int


@dataclass(frozen=True)
class SearchReport:
    best_curve: tuple[tuple[int, float], ...]
    error_curve: tuple[tuple[int, float], ...]
    final_best_id: str
    final_best_source: str
    total_llm_calls: int
    records: tuple[IterationRecord, ...]


@dataclass(frozen=True)
class SearchState:
    report: SearchReport
    population: tuple[Member, ...]
    plan: Plan | None
    pruned: PrunedPlan | None


def _rng(*parts) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _candidate_id(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _ranked(population: list[Member]) -> list[Member]:
    return sorted(population, key=lambda m: (-m.score, m.latency, m.order))


def select_parent(
    population: list[Member], seed: int, iteration: int, top_k: int
) -> Member:
    """Uniform choice among the top_k members, deterministic per iteration."""
    top = _ranked(population)[: max(1, top_k)]
    return top[_rng("select", seed, iteration).randrange(len(top))]


def insert_candidate(
    population: list[Member], member: Member, population_size: int
) -> bool:
    """Bounded elitist insertion; zero-score members never enter."""
    if member.score <= 0.0:
        return False
    if len(population) < population_size:
        population.append(member)
        return True
    worst = min(population, key=lambda m: (m.score, -m.latency, -m.order))
    if member.score > worst.score:
        population.remove(worst)
        population.append(member)
        return True
    return False


def extract_candidate_source(response: str) -> str:
    """Unwrap a generator response that arrived inside a code fence."""
    fences = _CODE_FENCE.findall(response)
    if fences:
        return max(fences, key=len)
    return response


def _review_prompt(candidate_text: str, score: float) -> str:
    return (
        "You are reviewing one step of an optimization search.\n"
        f"The candidate below scored {score:g}.\n"
        "Comment briefly on the quality and diversity of the rewrite.\n\n"
        "--- BEGIN CANDIDATE ---\n"
        f"{candidate_text}\n"
        "--- END CANDIDATE ---\n"
    )


def _resolve_advice(
    cfg: SearchConfig,
    baseline: SourceProgram,
    profiles: ProfileBundle | None,
    gateway: Gateway,
    templates_dir: Path | str | None,
) -> tuple[str, Plan | None, PrunedPlan | None]:
    if cfg.advice_mode == "none":
        return "(none)", None, None
    plan_prompt = build_plan_prompt(baseline, templates_dir)
    plan = parse_advice(
        gateway.complete("planner", plan_prompt).response,
        source_digest=source_digest(baseline),
    )
    if cfg.advice_mode == "plan":
        return render_plan(plan), plan, None
    if profiles is None:
        raise ConfigError("advice_mode=pruned_plan needs profile inputs")
    prune_prompt = build_prune_prompt(
        plan, profiles.system, profiles.workload, profiles.occupancy, templates_dir
    )
    pruned = parse_pruned(
        gateway.complete("planner", prune_prompt).response,
        plan,
        profile_digest=profile_digest(
            profiles.system, profiles.workload, profiles.occupancy
        ),
    )
    kept = tuple(a for a in plan.advice if a.id in pruned.kept)
    if not kept:
        return "(none)", plan, pruned
    advice = render_plan(Plan(advice=kept, source_digest=plan.source_digest))
    return advice, plan, pruned


def run_search_full(
    cfg: SearchConfig,
    baseline: SourceProgram,
    scene: Scene | None,
    profiles: ProfileBundle | None,
    gateway: Gateway,
    evaluator_backend: EvaluationBackend,
    checker_cfg: BackendConfig | None = None,
    out_dir: Path | str | None = None,
    templates_dir: Path | str | None = None,
) -> SearchState:
    if not baseline.blocks:
        raise NoEvolveBlocks("baseline program has no EVOLVE-BLOCK region")
    if cfg.check_enabled and checker_cfg is None:
        checker_cfg = gateway.config("checker")

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        (out_path / "best").mkdir(parents=True, exist_ok=True)

    advice_text, plan, pruned = _resolve_advice(
        cfg, baseline, profiles, gateway, templates_dir
    )
    generate_template = load_template("generate", templates_dir)

    base_result = evaluate(baseline, baseline, scene, evaluator_backend, cfg.tolerance)
    if base_result.failure is not None:
        raise ConfigError(f"baseline fails its own evaluation: {base_result.detail}")
    population: list[Member] = [
        Member(
            program=baseline,
            candidate_id=_candidate_id(baseline.full_text),
            score=base_result.score,
            latency=base_result.latency or 0.0,
            order=0,
        )
    ]

    records: list[IterationRecord] = []
    best_curve: list[tuple[int, float]] = []
    error_curve: list[tuple[int, float]] = []
    errors = 0

    def run_iteration(iteration: int, parent: Member) -> tuple[IterationRecord, Member | None]:
        prompt = render_template(
            generate_template,
            {
                "source": parent.program.full_text,
                "advice": advice_text,
                "iteration": str(iteration),
            },
        )
        response = gateway.complete("generator", prompt).response
        calls = 1
        candidate_text = extract_candidate_source(response)
        candidate_id = _candidate_id(candidate_text)
        failure: str | None = None
        checked = False
        member: Member | None = None
        candidate: SourceProgram | None = None
        try:
            candidate = extract_blocks(candidate_text)
            if diff_outside_blocks(baseline, candidate_text):
                failure = FailureKind.MARKER_VIOLATION.value
        except UnbalancedMarkers:
            failure = FailureKind.MARKER_VIOLATION.value
        if failure is None and cfg.check_enabled:
            calls += 1
            checked = True
            try:
                verdict = checker_mod.check(
                    baseline,
                    candidate,
                    checker_cfg,
                    templates_dir=templates_dir,
                    transport=gateway.complete_with,
                )
                if not verdict.equivalent:
                    failure = FailureKind.EQUIVALENCE_REJECTED.value
            except UnparseableVerdict:
                # Fail closed: an unreadable verdict never lets code through.
                failure = FailureKind.EQUIVALENCE_REJECTED.value
        score = 0.0
        if failure is None:
            result = evaluate(candidate, baseline, scene, evaluator_backend, cfg.tolerance)
            score = result.score
            failure = result.failure
            if score > 0.0:
                member = Member(
                    program=candidate,
                    candidate_id=candidate_id,
                    score=score,
                    latency=result.latency or 0.0,
                    order=iteration,
                )
        gateway.complete("reviewer", _review_prompt(candidate_text, score))
        calls += 1
        record = IterationRecord(
            iteration=iteration,
            candidate_id=candidate_id,
            score=score,
            failure=failure,
            checked=checked,
            llm_calls=calls,
        )
        return record, member

    def checkpoint(iteration: int) -> None:
        if iteration % cfg.record_every != 0 and iteration != cfg.max_iterations:
            return
        best = _ranked(population)[0]
        best_curve.append((iteration, best.score))
        error_curve.append((iteration, errors / iteration))
        if out_path is not None:
            (out_path / "best" / f"{iteration}.src").write_text(
                best.program.full_text, encoding="utf-8"
            )

    def land(record: IterationRecord, member: Member | None) -> None:
        nonlocal errors
        records.append(record)
        if record.failure in ERROR_KINDS:
            errors += 1
        if member is not None:
            insert_candidate(population, member, cfg.population_size)
        checkpoint(record.iteration)

    if cfg.parallel:
        iteration = 1
        with ThreadPoolExecutor(max_workers=2) as pool:
            while iteration <= cfg.max_iterations:
                window = [iteration]
                if iteration + 1 <= cfg.max_iterations:
                    window.append(iteration + 1)
                parents = {
                    i: select_parent(population, cfg.seed, i, cfg.top_k) for i in window
                }
                futures = {i: pool.submit(run_iteration, i, parents[i]) for i in window}
                for i in window:
                    land(*futures[i].result())
                iteration += len(window)
    else:
        for iteration in range(1, cfg.max_iterations + 1):
            parent = select_parent(population, cfg.seed, iteration, cfg.top_k)
            land(*run_iteration(iteration, parent))

    final_best = _ranked(population)[0]
    report = SearchReport(
        best_curve=tuple(best_curve),
        error_curve=tuple(error_curve),
        final_best_id=final_best.candidate_id,
        final_best_source=final_best.program.full_text,
        total_llm_calls=sum(r.llm_calls for r in records),
        records=tuple(records),
    )
    if out_path is not None:
        _write_run_dir(out_path, cfg, report)
    return SearchState(
        report=report,
        population=tuple(population),
        plan=plan,
        pruned=pruned,
    )


def run_search(
    cfg: SearchConfig,
    baseline: SourceProgram,
    scene: Scene | None,
    profiles: ProfileBundle | None,
    gateway: Gateway,
    evaluator_backend: EvaluationBackend,
    checker_cfg: BackendConfig | None = None,
    out_dir: Path | str | None = None,
    templates_dir: Path | str | None = None,
) -> SearchReport:
    return run_search_full(
        cfg, baseline, scene, profiles, gateway, evaluator_backend,
        checker_cfg=checker_cfg, out_dir=out_dir, templates_dir=templates_dir,
    ).report


def _write_run_dir(out_path: Path, cfg: SearchConfig, report: SearchReport) -> None:
    """Persist the run. Only run.json carries wall-clock state; the record
    stream and the report are byte-stable across reruns."""
    run_payload = {
        "config": dataclasses.asdict(cfg),
        "meta": {"finished": datetime.now(timezone.utc).isoformat()},
    }
    (out_path / "run.json").write_text(
        json.dumps(run_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    with open(out_path / "iterations.jsonl", "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(dataclasses.asdict(record), sort_keys=True) + "\n")
    report_payload = {
        "best_curve": [[i, s] for i, s in report.best_curve],
        "error_curve": [[i, e] for i, e in report.error_curve],
        "final_best": {
            "candidate_id": report.final_best_id,
            "source": report.final_best_source,
        },
        "total_llm_calls": report.total_llm_calls,
    }
    (out_path / "report.json").write_text(
        json.dumps(report_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
