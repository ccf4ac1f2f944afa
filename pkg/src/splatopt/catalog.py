"""Catalog of kernel transforms the cost model knows how to price.

Candidates carry their applied transforms as tag comment lines inside their
rewritable blocks; the evaluator prices a candidate by composing the speedup
factors of every applied tag whose condition holds on the profiled workload.
Factors for fastmath, drop-contributor, simplify-loop, coalesce-rgb and
shmem-layout are measured values; entries marked "model constant" below are
plausible placeholders for transforms nobody has measured in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigError, UnknownTag
from .oracle import WorkloadStats
from .profiles import RooflineVerdict, SystemProfile, classify_roofline

TAG_LINE_PREFIX = "// transform: "
GENERATOR_LINE_PREFIX = "// generator: "

_OPS = {
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


def metrics_view(workload: WorkloadStats, profile: SystemProfile | None) -> dict:
    """Flatten the stats a condition may test into one name->value map."""
    view = {
        "mean_per_tile": workload.mean_per_tile,
        "var_per_tile": workload.var_per_tile,
        "mean_computed_fraction": workload.mean_computed_fraction,
        "var_computed_fraction": workload.var_computed_fraction,
    }
    if profile is not None:
        verdict: RooflineVerdict = classify_roofline(profile)
        view["roofline"] = verdict.kind.value
        view["ai_margin"] = verdict.margin
    return view


@dataclass(frozen=True)
class Condition:
    metric: str
    op: str
    value: float | str

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unsupported condition operator {self.op!r}")

    def holds(self, metrics: Mapping[str, float | str]) -> bool:
        if self.metric not in metrics:
            return False
        return _OPS[self.op](metrics[self.metric], self.value)

    def describe(self) -> str:
        return f"{self.metric} {self.op} {self.value}"


@dataclass(frozen=True)
class TransformCatalogEntry:
    tag: str
    speedup_factor: float
    condition: Condition | None = None
    unsafe: bool = False
    accuracy_penalty: float = 0.0

    def __post_init__(self):
        if self.speedup_factor <= 0.0:
            raise ValueError(f"{self.tag}: speedup factor must be positive")
        if not self.unsafe and self.accuracy_penalty != 0.0:
            raise ValueError(f"{self.tag}: safe entries carry no accuracy penalty")
        if self.accuracy_penalty < 0.0:
            raise ValueError(f"{self.tag}: accuracy penalty must be non-negative")


@dataclass(frozen=True)
class TransformCatalog:
    entries: tuple[TransformCatalogEntry, ...]
    _by_tag: Mapping[str, TransformCatalogEntry] = field(
        init=False, repr=False, compare=False, default=None  # type: ignore[assignment]
    )

    def __post_init__(self):
        by_tag = {}
        for entry in self.entries:
            if entry.tag in by_tag:
                raise ValueError(f"duplicate catalog tag {entry.tag!r}")
            by_tag[entry.tag] = entry
        object.__setattr__(self, "_by_tag", by_tag)

    def get(self, tag: str) -> TransformCatalogEntry:
        try:
            return self._by_tag[tag]
        except KeyError:
            raise UnknownTag(f"tag {tag!r} is not in the transform catalog") from None

    def __contains__(self, tag: str) -> bool:
        return tag in self._by_tag

    @property
    def safe_tags(self) -> tuple[str, ...]:
        return tuple(e.tag for e in self.entries if not e.unsafe)

    @property
    def unsafe_tags(self) -> tuple[str, ...]:
        return tuple(e.tag for e in self.entries if e.unsafe)


DEFAULT_CATALOG = TransformCatalog(
    entries=(
        # Measured in isolation on the original kernel.
        TransformCatalogEntry("fastmath", 1.1035),
        TransformCatalogEntry("drop-contributor", 1.0091),
        TransformCatalogEntry(
            "simplify-loop", 1.0566, Condition("mean_per_tile", ">=", 256.0)
        ),
        TransformCatalogEntry("coalesce-rgb", 1.03),
        TransformCatalogEntry("shmem-layout", 1.113),
        # Model constants: directionally right, never measured in isolation.
        TransformCatalogEntry("warp-primitives", 1.02),
        TransformCatalogEntry(
            "remove-early-stop", 1.005, Condition("mean_computed_fraction", ">=", 0.9)
        ),
        TransformCatalogEntry(
            "vector-prefetch", 1.08, Condition("roofline", "==", "memory-bound")
        ),
        # Cosmetic or counterproductive rewrites generators sometimes produce.
        TransformCatalogEntry("rename-locals", 1.0),
        TransformCatalogEntry("reorder-declarations", 1.0),
        TransformCatalogEntry("branch-hints", 0.995),
        TransformCatalogEntry("extra-sync", 0.97),
        # The tempting-but-wrong rewrite: claims a big win, breaks the output.
        TransformCatalogEntry(
            "remove-inner-loop", 1.30, unsafe=True, accuracy_penalty=0.05
        ),
    )
)


def load_catalog(path: Path | str) -> TransformCatalog:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = []
        for item in data["entries"]:
            condition = None
            if item.get("condition"):
                c = item["condition"]
                condition = Condition(c["metric"], c["op"], c["value"])
            entries.append(
                TransformCatalogEntry(
                    tag=item["tag"],
                    speedup_factor=float(item["speedup_factor"]),
                    condition=condition,
                    unsafe=bool(item.get("unsafe", False)),
                    accuracy_penalty=float(item.get("accuracy_penalty", 0.0)),
                )
            )
        return TransformCatalog(entries=tuple(entries))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load transform catalog {path}: {exc}") from exc


# --- tag lines inside block bodies ------------------------------------------

def body_tags(body: str) -> tuple[str, ...]:
    tags = []
    for line in body.splitlines():
        stripped = line.strip()
        if stripped.startswith(TAG_LINE_PREFIX):
            tags.append(stripped[len(TAG_LINE_PREFIX):].strip())
    return tuple(tags)


def program_tags(program) -> tuple[str, ...]:
    """Sorted union of transform tags across all block bodies."""
    tags: set[str] = set()
    for block in program.blocks:
        tags.update(body_tags(block.body))
    return tuple(sorted(tags))


def strip_annotations(body: str) -> str:
    """Body without tag or generator lines."""
    kept = [
        line
        for line in body.splitlines(keepends=True)
        if not line.strip().startswith((TAG_LINE_PREFIX, GENERATOR_LINE_PREFIX))
    ]
    return "".join(kept)


def annotate_body(body: str, tags: tuple[str, ...], generator: str | None = None) -> str:
    out = strip_annotations(body)
    if out and not out.endswith("\n"):
        out += "\n"
    if generator:
        out += f"{GENERATOR_LINE_PREFIX}{generator}\n"
    for tag in sorted(tags):
        out += f"{TAG_LINE_PREFIX}{tag}\n"
    return out


def generator_label(program) -> str | None:
    for block in program.blocks:
        for line in block.body.splitlines():
            stripped = line.strip()
            if stripped.startswith(GENERATOR_LINE_PREFIX):
                return stripped[len(GENERATOR_LINE_PREFIX):].strip()
    return None
