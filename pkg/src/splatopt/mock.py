"""Deterministic stand-ins for the four LLM roles.

Every response is a pure function of (seed, profile, prompt): the mocks read
their inputs back out of the rendered prompt text, exactly the way a remote
model would, so the prompts stay honest. The generator rewrites block bodies
by tagging them with catalog transforms; the checker flags unsafe tags with a
configurable per-generator detection rate; the planner emits a fixed advice
list and prunes it against the profile summary embedded in the prompt.
"""

from __future__ import annotations

import hashlib
import random
import re

from .catalog import (
    DEFAULT_CATALOG,
    annotate_body,
    generator_label,
    program_tags,
)
from .errors import ConfigError, UnbalancedMarkers
from .program import END_MARKER, Modification, apply_modification, extract_blocks

# Advice the mock planner always proposes, in this order. Keywords link each
# item to a catalog tag; the prune step and the generator's sampling bias both
# key off their presence in prompt text.
DEFAULT_ADVICE: tuple[tuple[str, str], ...] = (
    (
        "Replace the exponential with the fast-math intrinsic",
        "The blend weight is dominated by the exponential; the fast variant cuts ALU pressure.",
    ),
    (
        "Drop the redundant contributor counter",
        "Per-pixel contributor bookkeeping costs registers and instructions in the hot loop.",
    ),
    (
        "Simplify the loop condition so the compiler can unroll the blend loop",
        "A constant trip count lets the compiler unroll and schedule the loop body.",
    ),
    (
        "Coalesce the RGB feature loads",
        "Loading the channels together turns three strided reads into one transaction.",
    ),
    (
        "Restage splat data in shared memory with a tighter layout",
        "A denser shared memory layout cuts bank conflicts while blending.",
    ),
    (
        "Exchange per-batch values with warp-level primitives",
        "Warp shuffles avoid a round trip through shared memory.",
    ),
    (
        "Remove the early-stop transmittance check",
        "When almost every splat is blended anyway, the check is pure overhead.",
    ),
    (
        "Prefetch splat attributes with wider vector loads",
        "Wider loads hide memory latency between blend steps.",
    ),
)

KEYWORD_TO_TAG = {
    "fast-math": "fastmath",
    "contributor": "drop-contributor",
    "unroll": "simplify-loop",
    "coalesce": "coalesce-rgb",
    "shared memory": "shmem-layout",
    "warp": "warp-primitives",
    "early-stop": "remove-early-stop",
    "prefetch": "vector-prefetch",
}

TAG_TO_KEYWORD = {tag: keyword for keyword, tag in KEYWORD_TO_TAG.items()}

UNSAFE_TAG = "remove-inner-loop"

# Weight multiplier for transforms whose keyword appears in the prompt's
# advice section, unless the profile's catalog_bias overrides it.
DEFAULT_ADVICE_WEIGHT = 4.0

# Chance that a rewrite loses one previously applied transform.
P_DROP_TAG = 0.2

_ADVICE_LINE = re.compile(r"^\s*(\d+)[.)]\s+(.+?)\s*$", re.MULTILINE)
_MEAN_PER_TILE = re.compile(r"splats per tile: mean ([0-9.eE+-]+)")
_MEAN_FRACTION = re.compile(r"computed fraction per thread: mean ([0-9.eE+-]+)")
_ROOFLINE = re.compile(r"roofline verdict: (compute-bound|memory-bound)")


def _rng(*parts) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _unit(*parts) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _fenced(prompt: str, name: str) -> str:
    begin = f"--- BEGIN {name} ---\n"
    end = f"\n--- END {name} ---"
    start = prompt.find(begin)
    if start == -1:
        raise ConfigError(f"prompt has no {name} section for the mock to read")
    start += len(begin)
    stop = prompt.find(end, start)
    if stop == -1:
        raise ConfigError(f"prompt has an unterminated {name} section")
    return prompt[start:stop]


def _advice_region(prompt: str) -> str:
    label = prompt.find("Suggested optimizations:")
    if label == -1:
        return ""
    fence = prompt.find("--- BEGIN PROGRAM ---", label)
    return prompt[label : fence if fence != -1 else len(prompt)]


def _weighted_sample(rng: random.Random, weights: dict[str, float], k: int) -> list[str]:
    pool = sorted(weights.items())
    chosen: list[str] = []
    for _ in range(min(k, len(pool))):
        total = sum(weight for _, weight in pool)
        pick = rng.random() * total
        running = 0.0
        for i, (tag, weight) in enumerate(pool):
            running += weight
            if pick < running or i == len(pool) - 1:
                chosen.append(tag)
                pool.pop(i)
                break
    return chosen


def mock_plan() -> str:
    lines = ["Here are the optimizations worth trying, in rough priority order:"]
    lines += [
        f"{i}. {title}. {rationale}"
        for i, (title, rationale) in enumerate(DEFAULT_ADVICE, start=1)
    ]
    return "\n".join(lines)


def mock_prune(prompt: str) -> str:
    """Keep advice whose transform's condition holds on the profile the
    prompt describes; drop the rest with a one-line reason."""
    metrics: dict[str, float | str] = {}
    if match := _MEAN_PER_TILE.search(prompt):
        metrics["mean_per_tile"] = float(match.group(1))
    if match := _MEAN_FRACTION.search(prompt):
        metrics["mean_computed_fraction"] = float(match.group(1))
    if match := _ROOFLINE.search(prompt):
        metrics["roofline"] = match.group(1)
    kept: list[int] = []
    dropped: list[tuple[int, str]] = []
    for match in _ADVICE_LINE.finditer(_advice_region(prompt)):
        item_id, text = int(match.group(1)), match.group(2).lower()
        tag = next((t for kw, t in KEYWORD_TO_TAG.items() if kw in text), None)
        if tag is None or tag not in DEFAULT_CATALOG:
            dropped.append((item_id, "no matching transform"))
            continue
        condition = DEFAULT_CATALOG.get(tag).condition
        if condition is None or condition.holds(metrics):
            kept.append(item_id)
        else:
            dropped.append((item_id, f"requires {condition.describe()}"))
    keep_line = "KEEP: " + (", ".join(str(i) for i in kept) if kept else "(none)")
    drop_line = "DROP: " + (
        ", ".join(f"{i} ({reason})" for i, reason in dropped) if dropped else "(none)"
    )
    return f"{keep_line}\n{drop_line}"


def mock_generate(profile, seed: int, prompt: str, label: str = "mock") -> str:
    """Rewrite the fenced program's block bodies with sampled transform tags.

    Deterministic in (seed, prompt). Advice keywords in the prompt bias the
    sampling toward their transforms; p_malformed corrupts the output and
    p_unsafe sneaks in the unsafe rewrite.
    """
    source = _fenced(prompt, "PROGRAM")
    program = extract_blocks(source)
    rng = _rng("generate", seed, prompt)
    roll_malformed = rng.random()
    roll_unsafe = rng.random()

    advice_text = _advice_region(prompt).lower()
    advised = {tag for kw, tag in KEYWORD_TO_TAG.items() if kw in advice_text}
    weights = {}
    for tag in DEFAULT_CATALOG.safe_tags:
        if tag in advised:
            keyword = TAG_TO_KEYWORD.get(tag, tag)
            weights[tag] = float(profile.catalog_bias.get(keyword, DEFAULT_ADVICE_WEIGHT))
        else:
            weights[tag] = 1.0

    picks = rng.choice((1, 2)) if advised else 1
    tags = set(program_tags(program))
    tags.update(_weighted_sample(rng, weights, picks))
    roll_drop = rng.random()
    if len(tags) > 1 and roll_drop < P_DROP_TAG:
        tags.remove(rng.choice(sorted(tags)))
    if roll_unsafe < profile.p_unsafe:
        tags.add(UNSAFE_TAG)

    bodies = {}
    for block in program.blocks:
        bodies[block.index] = annotate_body(
            block.body,
            tuple(tags) if block.index == 0 else (),
            generator=label if block.index == 0 else None,
        )
    candidate = apply_modification(
        program, Modification(id="mock", description="tag rewrite", replacements=bodies)
    ).full_text

    if roll_malformed < profile.p_malformed:
        if rng.random() < 0.5:
            candidate = candidate.replace(END_MARKER, "EVOLVE-BLOCK-EN", 1)
        else:
            candidate += "// scratch notes from the model, not meant to ship\n"
    return candidate


def mock_check(profile, seed: int, original: str, candidate: str) -> str:
    """Equivalence verdict: unsafe tags are caught at the configured
    per-generator detection rate; everything else passes."""
    try:
        candidate_program = extract_blocks(candidate)
    except UnbalancedMarkers:
        return "NOT EQUIVALENT\n- the candidate's block markers are corrupted"
    tags = set(program_tags(candidate_program))
    unsafe = tags.intersection(DEFAULT_CATALOG.unsafe_tags)
    if not unsafe:
        return "EQUIVALENT\nThe rewrite only applies output-preserving transforms."
    label = generator_label(candidate_program) or "mock"
    accuracy = profile.checker_accuracy.get(
        label, profile.checker_accuracy.get("*", 1.0)
    )
    if _unit("check", seed, original, candidate) < accuracy:
        return (
            "NOT EQUIVALENT\n"
            "- the rewrite removes the inner blending loop over batched splats\n"
            "- pixels lose contributions, so the output image drifts"
        )
    return "EQUIVALENT\nThe rewrite preserves the blending loop semantics."


def mock_review(prompt: str) -> str:
    try:
        tags = program_tags(extract_blocks(_fenced(prompt, "CANDIDATE")))
    except (ConfigError, UnbalancedMarkers):
        return "The candidate does not parse cleanly; nothing to assess."
    applied = ", ".join(tags) if tags else "no tagged transforms"
    return f"The candidate stays inside the marked regions and applies {applied}."


def respond(role: str, seed: int, profile, prompt: str, label: str = "mock") -> str:
    if role == "planner":
        return mock_prune(prompt) if "KEEP:" in prompt else mock_plan()
    if role == "generator":
        return mock_generate(profile, seed, prompt, label=label)
    if role == "reviewer":
        return mock_review(prompt)
    if role == "checker":
        return mock_check(
            profile, seed, _fenced(prompt, "ORIGINAL"), _fenced(prompt, "CANDIDATE")
        )
    raise ConfigError(f"mock backend has no behavior for role {role!r}")
