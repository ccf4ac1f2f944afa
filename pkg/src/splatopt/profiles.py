"""Profiler metric ingestion and the arithmetic derived from it.

Metrics arrive as a two-column CSV (metric,value) exported from a profiler
run; workload statistics arrive as a matching stat,value CSV. From those this
module classifies the kernel against the roofline turning point, ranks warp
stall reasons, and works out grid/wave occupancy for a launch shape.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import EmptyStalls, InputError, MalformedRow, MissingMetric
from .oracle import WorkloadStats

REQUIRED_METRICS = (
    "ai_turning_point",
    "perf_turning_point",
    "ai_kernel",
    "perf_kernel",
    "warp_cycles_per_issued_instruction",
    "theoretical_occupancy_pct",
    "achieved_occupancy_pct",
    "block_limit_warps",
    "top_unit_name",
    "top_unit_util_pct",
)

STALL_PREFIX = "stall_"

# The profiler's baseline row: cycles where the warp was actually issuing.
# It is kept in the stalls map but never ranked as a stall reason.
SELECTED_STALL = "selected"

WORKLOAD_KEYS = (
    "mean_per_tile",
    "var_per_tile",
    "mean_computed_fraction",
    "var_computed_fraction",
)

# A computed fraction at or above this means the early-stop path is nearly
# never taken; the profile summary calls that out in words.
EARLY_STOP_RARE_FRACTION = 0.9


class RooflineKind(enum.Enum):
    COMPUTE_BOUND = "compute-bound"
    MEMORY_BOUND = "memory-bound"


@dataclass(frozen=True)
class SystemProfile:
    ai_turning_point: float
    perf_turning_point: float
    ai_kernel: float
    perf_kernel: float
    warp_cycles_per_issued_instruction: float
    theoretical_occupancy_pct: float
    achieved_occupancy_pct: float
    block_limit_warps: int
    top_unit_name: str
    top_unit_util_pct: float
    stalls: Mapping[str, float]

    def __post_init__(self):
        numeric = {
            "ai_turning_point": self.ai_turning_point,
            "perf_turning_point": self.perf_turning_point,
            "ai_kernel": self.ai_kernel,
            "perf_kernel": self.perf_kernel,
            "warp_cycles_per_issued_instruction": self.warp_cycles_per_issued_instruction,
            "top_unit_util_pct": self.top_unit_util_pct,
        }
        for name, value in numeric.items():
            if not value >= 0.0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        for name, value in (
            ("theoretical_occupancy_pct", self.theoretical_occupancy_pct),
            ("achieved_occupancy_pct", self.achieved_occupancy_pct),
        ):
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {value}")
        if self.block_limit_warps < 1:
            raise ValueError("block_limit_warps must be at least 1")
        for name, value in self.stalls.items():
            if not value >= 0.0:
                raise ValueError(f"stall {name} must be non-negative, got {value}")


@dataclass(frozen=True)
class RooflineVerdict:
    kind: RooflineKind
    margin: float


@dataclass(frozen=True)
class GpuShape:
    sm_count: int
    max_threads_per_sm: int
    block_limit: int

    def __post_init__(self):
        if min(self.sm_count, self.max_threads_per_sm, self.block_limit) < 1:
            raise ValueError("GPU shape fields must all be at least 1")


@dataclass(frozen=True)
class OccupancyAnalysis:
    blocks_x: int
    blocks_y: int
    total_blocks: int
    concurrent_blocks: int
    waves: int


def _rows(text: str, expected_header: tuple[str, str]) -> list[tuple[int, str, str]]:
    rows = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedRow(f"expected 2 columns, got {len(row)}: {row}", line_no)
        if line_no == 1:
            if tuple(v.strip() for v in row) != expected_header:
                raise MalformedRow(
                    f"expected header {','.join(expected_header)}, got {','.join(row)}", 1
                )
            continue
        rows.append((line_no, row[0].strip(), row[1].strip()))
    return rows


def _float(value: str, name: str, line_no: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise MalformedRow(f"{name}: not a number: {value!r}", line_no) from None


def parse_metrics(text: str) -> SystemProfile:
    """Parse metric,value CSV text into a profile."""
    values: dict[str, float | str] = {}
    stalls: dict[str, float] = {}
    for line_no, key, raw in _rows(text, ("metric", "value")):
        if key.startswith(STALL_PREFIX):
            stalls[key[len(STALL_PREFIX):]] = _float(raw, key, line_no)
        elif key == "top_unit_name":
            values[key] = raw
        else:
            values[key] = _float(raw, key, line_no)
    for name in REQUIRED_METRICS:
        if name not in values:
            raise MissingMetric(name)
    try:
        return SystemProfile(
            ai_turning_point=values["ai_turning_point"],
            perf_turning_point=values["perf_turning_point"],
            ai_kernel=values["ai_kernel"],
            perf_kernel=values["perf_kernel"],
            warp_cycles_per_issued_instruction=values["warp_cycles_per_issued_instruction"],
            theoretical_occupancy_pct=values["theoretical_occupancy_pct"],
            achieved_occupancy_pct=values["achieved_occupancy_pct"],
            block_limit_warps=int(values["block_limit_warps"]),
            top_unit_name=values["top_unit_name"],
            top_unit_util_pct=values["top_unit_util_pct"],
            stalls=stalls,
        )
    except ValueError as exc:
        raise MalformedRow(str(exc)) from exc


def serialize_metrics(profile: SystemProfile) -> str:
    lines = ["metric,value"]
    for name in REQUIRED_METRICS:
        value = getattr(profile, name)
        lines.append(f"{name},{value!r}" if isinstance(value, float) else f"{name},{value}")
    for name in sorted(profile.stalls):
        lines.append(f"{STALL_PREFIX}{name},{profile.stalls[name]!r}")
    return "\n".join(lines) + "\n"


def _read_text(path: Path | str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def load_metrics(path: Path | str) -> SystemProfile:
    return parse_metrics(_read_text(path))


def parse_workload_csv(text: str) -> WorkloadStats:
    values: dict[str, float] = {}
    for line_no, key, raw in _rows(text, ("stat", "value")):
        values[key] = _float(raw, key, line_no)
    for name in WORKLOAD_KEYS:
        if name not in values:
            raise MissingMetric(name)
    return WorkloadStats(**{name: values[name] for name in WORKLOAD_KEYS})


def load_workload(path: Path | str) -> WorkloadStats:
    return parse_workload_csv(_read_text(path))


def serialize_workload(stats: WorkloadStats) -> str:
    lines = ["stat,value"]
    lines += [f"{name},{getattr(stats, name)!r}" for name in WORKLOAD_KEYS]
    return "\n".join(lines) + "\n"


def classify_roofline(profile: SystemProfile) -> RooflineVerdict:
    """Compute-bound iff kernel arithmetic intensity reaches the turning point.

    Margin is the ratio between the two, so a margin well above 1 means the
    kernel sits deep in the compute-bound region.
    """
    if profile.ai_turning_point <= 0.0:
        raise ValueError("ai_turning_point must be positive")
    margin = profile.ai_kernel / profile.ai_turning_point
    kind = (
        RooflineKind.COMPUTE_BOUND
        if profile.ai_kernel >= profile.ai_turning_point
        else RooflineKind.MEMORY_BOUND
    )
    return RooflineVerdict(kind=kind, margin=margin)


def dominant_stall(profile: SystemProfile) -> tuple[str, float]:
    """Largest stall contributor, excluding the issuing baseline row.

    Ties resolve to the lexicographically smallest name.
    """
    candidates = {k: v for k, v in profile.stalls.items() if k != SELECTED_STALL}
    if not candidates:
        raise EmptyStalls("no stall rows besides the issuing baseline")
    name = min(candidates, key=lambda k: (-candidates[k], k))
    return name, candidates[name]


def compute_waves(
    width: int, height: int, tile: tuple[int, int], shape: GpuShape
) -> OccupancyAnalysis:
    """Grid size and wave count for a tile-per-block launch."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be at least 1x1")
    blocks_x = -(-width // tile[0])
    blocks_y = -(-height // tile[1])
    total = blocks_x * blocks_y
    concurrent = shape.sm_count * shape.block_limit
    return OccupancyAnalysis(
        blocks_x=blocks_x,
        blocks_y=blocks_y,
        total_blocks=total,
        concurrent_blocks=concurrent,
        waves=-(-total // concurrent),
    )


def summarize_profile(
    profile: SystemProfile, workload: WorkloadStats, occupancy: OccupancyAnalysis
) -> str:
    """Human-readable profile summary.

    This exact text is what the prune prompt embeds and what the profile
    subcommand prints, so downstream consumers (including the deterministic
    mock planner) parse these lines and nothing else.
    """
    verdict = classify_roofline(profile)
    stall_name, stall_value = dominant_stall(profile)
    waves_word = "wave" if occupancy.waves == 1 else "waves"
    if workload.mean_computed_fraction >= EARLY_STOP_RARE_FRACTION:
        early_stop = (
            "early-stop behavior: early-stop rarely fires "
            "(most splats are blended before the transmittance cutoff)"
        )
    else:
        early_stop = (
            "early-stop behavior: early-stop fires often "
            "(many pixels reach the transmittance cutoff early)"
        )
    return "\n".join(
        [
            (
                f"roofline verdict: {verdict.kind.value} "
                f"(margin {verdict.margin:.2f}; kernel {profile.ai_kernel:g} "
                f"vs turning point {profile.ai_turning_point:g} FLOP/byte)"
            ),
            f"dominant stall: {stall_name} ({stall_value:g} cycles per issued instruction)",
            (
                f"occupancy: theoretical {profile.theoretical_occupancy_pct:g}%, "
                f"achieved {profile.achieved_occupancy_pct:g}%"
            ),
            (
                f"grid: {occupancy.blocks_x}x{occupancy.blocks_y} = "
                f"{occupancy.total_blocks} blocks, {occupancy.concurrent_blocks} "
                f"concurrent, {occupancy.waves} {waves_word}"
            ),
            (
                f"splats per tile: mean {workload.mean_per_tile:g}, "
                f"variance {workload.var_per_tile:g}"
            ),
            (
                f"computed fraction per thread: mean {workload.mean_computed_fraction:g}, "
                f"variance {workload.var_computed_fraction:g}"
            ),
            early_stop,
        ]
    )
