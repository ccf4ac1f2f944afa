"""Plan and prune stages: ask for optimization advice, then filter it
against profiling evidence before it reaches the generator.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyPlan, NoEvolveBlocks, NoIdsRecognized
from .oracle import WorkloadStats
from .profiles import OccupancyAnalysis, SystemProfile, summarize_profile
from .program import SourceProgram
from .templates import load_template, render_template

log = logging.getLogger(__name__)

_BULLET = re.compile(r"^\s*(?:(\d+)[.):]\s+|[-*]\s+)(.+?)\s*$")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_KEEP_DROP = re.compile(r"\b(keep|drop)\b", re.IGNORECASE)
_ID_WITH_REASON = re.compile(r"(\d+)\s*(?:\(([^)]*)\))?")


@dataclass(frozen=True)
class OptimizationAdvice:
    id: int
    title: str
    rationale: str = ""
    preconditions: str = ""


@dataclass(frozen=True)
class Plan:
    advice: tuple[OptimizationAdvice, ...]
    source_digest: str

    def __post_init__(self):
        ids = [a.id for a in self.advice]
        if len(set(ids)) != len(ids):
            raise ValueError("advice ids must be unique within a plan")


@dataclass(frozen=True)
class PrunedPlan:
    kept: tuple[int, ...]
    dropped: tuple[tuple[int, str], ...]
    profile_digest: str


def build_plan_prompt(
    program: SourceProgram, templates_dir: Path | str | None = None
) -> str:
    if not program.blocks:
        raise NoEvolveBlocks("program has no EVOLVE-BLOCK region to plan for")
    return render_template(
        load_template("plan", templates_dir), {"source": program.full_text}
    )


def parse_advice(response: str, source_digest: str = "") -> Plan:
    """Pull numbered or bulleted advice items out of free-form text.

    The first sentence of an item becomes its title, the rest its rationale.
    Non-bullet lines (preamble, closing prose) are skipped; an empty result
    is an error.
    """
    advice: list[OptimizationAdvice] = []
    used_ids: set[int] = set()
    skipped = 0
    for line in response.splitlines():
        if not line.strip():
            continue
        match = _BULLET.match(line)
        if match is None:
            skipped += 1
            continue
        explicit, text = match.groups()
        item_id = int(explicit) if explicit is not None else None
        if item_id is None or item_id in used_ids:
            item_id = 1 + (max(used_ids) if used_ids else 0)
        used_ids.add(item_id)
        parts = _SENTENCE_SPLIT.split(text, maxsplit=1)
        title = parts[0].rstrip(".!?").strip()
        rationale = parts[1].strip() if len(parts) > 1 else ""
        if not title:
            skipped += 1
            continue
        advice.append(OptimizationAdvice(id=item_id, title=title, rationale=rationale))
    if skipped:
        log.debug("parse_advice skipped %d non-bullet line(s)", skipped)
    if not advice:
        raise EmptyPlan("no advice items recognized in response")
    return Plan(advice=tuple(advice), source_digest=source_digest)


def render_plan(plan: Plan) -> str:
    """Canonical advice list rendering; parse_advice round-trips the titles."""
    lines = []
    for item in plan.advice:
        line = f"{item.id}. {item.title}."
        if item.rationale:
            line += f" {item.rationale}"
        lines.append(line)
    return "\n".join(lines)


def profile_digest(
    profile: SystemProfile, workload: WorkloadStats, occupancy: OccupancyAnalysis
) -> str:
    payload = json.dumps(
        {
            "profile": {
                **{k: getattr(profile, k) for k in (
                    "ai_turning_point", "perf_turning_point", "ai_kernel",
                    "perf_kernel", "warp_cycles_per_issued_instruction",
                    "theoretical_occupancy_pct", "achieved_occupancy_pct",
                    "block_limit_warps", "top_unit_name", "top_unit_util_pct",
                )},
                "stalls": dict(sorted(profile.stalls.items())),
            },
            "workload": vars(workload),
            "occupancy": vars(occupancy),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_prune_prompt(
    plan: Plan,
    profile: SystemProfile,
    workload: WorkloadStats,
    occupancy: OccupancyAnalysis,
    templates_dir: Path | str | None = None,
) -> str:
    if not plan.advice:
        raise EmptyPlan("cannot prune an empty plan")
    return render_template(
        load_template("prune", templates_dir),
        {
            "profile_summary": summarize_profile(profile, workload, occupancy),
            "advice": render_plan(plan),
        },
    )


def parse_pruned(response: str, plan: Plan, profile_digest: str = "") -> PrunedPlan:
    """Partition the plan's ids into kept and dropped.

    Ids are recognized only inside a keep/drop context. Ids the response never
    mentions are dropped with reason "unmentioned"; an id claimed as both kept
    and dropped stays kept. Unknown ids are ignored.
    """
    plan_ids = {a.id for a in plan.advice}
    kept: set[int] = set()
    dropped: dict[int, str] = {}
    marks = list(_KEEP_DROP.finditer(response))
    for pos, mark in enumerate(marks):
        region_end = marks[pos + 1].start() if pos + 1 < len(marks) else len(response)
        region = response[mark.end(): region_end]
        for id_match in _ID_WITH_REASON.finditer(region):
            item_id = int(id_match.group(1))
            if item_id not in plan_ids:
                continue
            if mark.group(1).lower() == "keep":
                kept.add(item_id)
            else:
                dropped.setdefault(item_id, id_match.group(2) or "dropped by planner")
    if not kept and not dropped:
        raise NoIdsRecognized("response referenced no advice ids")
    dropped = {i: r for i, r in dropped.items() if i not in kept}
    for item_id in sorted(plan_ids - kept - set(dropped)):
        dropped[item_id] = "unmentioned"
    return PrunedPlan(
        kept=tuple(sorted(kept)),
        dropped=tuple(sorted(dropped.items())),
        profile_digest=profile_digest,
    )


# --- persistence -------------------------------------------------------------

def plan_to_json(plan: Plan) -> str:
    return json.dumps(
        {
            "source_digest": plan.source_digest,
            "advice": [
                {
                    "id": a.id,
                    "title": a.title,
                    "rationale": a.rationale,
                    "preconditions": a.preconditions,
                }
                for a in plan.advice
            ],
        },
        sort_keys=True,
        indent=2,
    ) + "\n"


def plan_from_json(text: str) -> Plan:
    data = json.loads(text)
    return Plan(
        advice=tuple(
            OptimizationAdvice(
                id=int(a["id"]),
                title=a["title"],
                rationale=a.get("rationale", ""),
                preconditions=a.get("preconditions", ""),
            )
            for a in data["advice"]
        ),
        source_digest=data.get("source_digest", ""),
    )


def pruned_to_json(pruned: PrunedPlan) -> str:
    return json.dumps(
        {
            "kept": list(pruned.kept),
            "dropped": [{"id": i, "reason": r} for i, r in pruned.dropped],
            "profile_digest": pruned.profile_digest,
        },
        sort_keys=True,
        indent=2,
    ) + "\n"


def pruned_from_json(text: str) -> PrunedPlan:
    data = json.loads(text)
    return PrunedPlan(
        kept=tuple(int(i) for i in data["kept"]),
        dropped=tuple((int(d["id"]), d["reason"]) for d in data["dropped"]),
        profile_digest=data.get("profile_digest", ""),
    )
