from __future__ import annotations

import pytest

from splatopt.catalog import program_tags
from splatopt.errors import ConfigError, UnbalancedMarkers
from splatopt.gateway import MockProfile
from splatopt.mock import (
    UNSAFE_TAG,
    mock_check,
    mock_generate,
    mock_plan,
    mock_prune,
    mock_review,
    respond,
)
from splatopt.oracle import WorkloadStats
from splatopt.planner import build_prune_prompt, parse_advice, render_plan
from splatopt.profiles import GpuShape, compute_waves, load_metrics
from splatopt.program import diff_outside_blocks, extract_blocks

KERNEL = (
    "// setup\n"
    "// EVOLVE-BLOCK-START\n"
    "float t = 1.0f;\n"
    "// EVOLVE-BLOCK-END\n"
    "// teardown\n"
)


def _generate_prompt(advice: str = "(none)", source: str = KERNEL) -> str:
    return (
        "Iteration: 1\n"
        f"Suggested optimizations:\n{advice}\n"
        f"--- BEGIN PROGRAM ---\n{source}\n--- END PROGRAM ---\n"
    )


def _prune_prompt(fixtures_dir, workload: WorkloadStats | None = None) -> str:
    profile = load_metrics(fixtures_dir / "metrics_mipnerf360.csv")
    occupancy = compute_waves(778, 519, (16, 16), GpuShape(24, 2048, 6))
    stats = workload or WorkloadStats(
        mean_per_tile=1189.0,
        var_per_tile=614608.0,
        mean_computed_fraction=0.95,
        var_computed_fraction=0.02,
    )
    plan = parse_advice(mock_plan())
    return build_prune_prompt(plan, profile, stats, occupancy)


def test_mock_plan_is_parseable_advice():
    plan = parse_advice(mock_plan())
    assert len(plan.advice) == 8
    assert [a.id for a in plan.advice] == list(range(1, 9))
    assert plan.advice[0].title.startswith("Replace the exponential")


def test_mock_prune_keeps_condition_passing_items(fixtures_dir):
    response = mock_prune(_prune_prompt(fixtures_dir))
    # Everything survives except the prefetch item, which wants a
    # memory-bound kernel and this profile is compute-bound.
    assert response == (
        "KEEP: 1, 2, 3, 4, 5, 6, 7\n"
        "DROP: 8 (requires roofline == memory-bound)"
    )


def test_mock_prune_reacts_to_workload(fixtures_dir):
    sparse = WorkloadStats(
        mean_per_tile=100.0,
        var_per_tile=50.0,
        mean_computed_fraction=0.95,
        var_computed_fraction=0.02,
    )
    response = mock_prune(_prune_prompt(fixtures_dir, sparse))
    assert "3 (requires mean_per_tile >= 256.0)" in response
    assert "KEEP: 1, 2, 4, 5, 6, 7" in response


def test_mock_generate_deterministic():
    profile = MockProfile()
    prompt = _generate_prompt()
    assert mock_generate(profile, 7, prompt) == mock_generate(profile, 7, prompt)


def test_mock_generate_stays_inside_blocks():
    profile = MockProfile()
    original = extract_blocks(KERNEL)
    for seed in range(10):
        candidate = mock_generate(profile, seed, _generate_prompt())
        program = extract_blocks(candidate)
        assert diff_outside_blocks(original, candidate) is False
        tags = program_tags(program)
        # No advice in the prompt means exactly one sampled transform.
        assert len(tags) == 1
        assert UNSAFE_TAG not in tags


def test_mock_generate_malformed_everywhere_at_p_one():
    profile = MockProfile(p_malformed=1.0)
    original = extract_blocks(KERNEL)
    for seed in range(10):
        candidate = mock_generate(profile, seed, _generate_prompt())
        try:
            broken = diff_outside_blocks(original, candidate)
        except UnbalancedMarkers:
            broken = True
        assert broken


def test_mock_generate_unsafe_everywhere_at_p_one():
    profile = MockProfile(p_unsafe=1.0)
    for seed in range(10):
        candidate = mock_generate(profile, seed, _generate_prompt())
        assert UNSAFE_TAG in program_tags(extract_blocks(candidate))


def test_mock_generate_follows_advice_keywords():
    profile = MockProfile(catalog_bias={"fast-math": 10000.0})
    prompt = _generate_prompt(advice="1. Replace exp with the fast-math intrinsic.")
    hits = sum(
        "fastmath" in program_tags(extract_blocks(mock_generate(profile, seed, prompt)))
        for seed in range(20)
    )
    assert hits >= 15


def test_mock_generate_labels_candidate():
    candidate = mock_generate(MockProfile(), 3, _generate_prompt(), label="gpt5")
    assert "// generator: gpt5" in candidate


def test_mock_check_passes_safe_candidates():
    tagged = KERNEL.replace("float t = 1.0f;\n", "float t = 1.0f;\n// transform: fastmath\n")
    verdict = mock_check(MockProfile(), 0, KERNEL, tagged)
    assert verdict.startswith("EQUIVALENT")


def _unsafe_candidate(label: str = "mock") -> str:
    return KERNEL.replace(
        "float t = 1.0f;\n",
        f"float t = 1.0f;\n// generator: {label}\n// transform: {UNSAFE_TAG}\n",
    )


def test_mock_check_catches_unsafe_with_perfect_accuracy():
    profile = MockProfile(checker_accuracy={"*": 1.0})
    for seed in range(8):
        verdict = mock_check(profile, seed, KERNEL, _unsafe_candidate())
        assert verdict.startswith("NOT EQUIVALENT")
        assert "- " in verdict


def test_mock_check_accuracy_keyed_by_generator_label():
    profile = MockProfile(checker_accuracy={"gpt5": 0.0, "*": 1.0})
    missed = mock_check(profile, 0, KERNEL, _unsafe_candidate("gpt5"))
    caught = mock_check(profile, 0, KERNEL, _unsafe_candidate("gemini"))
    assert missed.startswith("EQUIVALENT")
    assert caught.startswith("NOT EQUIVALENT")


def test_mock_check_rejects_corrupt_markers():
    verdict = mock_check(
        MockProfile(), 0, KERNEL, KERNEL.replace("EVOLVE-BLOCK-END", "EVOLVE-BLOCK-EN")
    )
    assert verdict.startswith("NOT EQUIVALENT")
    assert "markers" in verdict


def test_mock_review_names_applied_tags():
    prompt = (
        "--- BEGIN CANDIDATE ---\n"
        + KERNEL.replace("float t = 1.0f;\n", "float t = 1.0f;\n// transform: fastmath\n")
        + "\n--- END CANDIDATE ---\n"
    )
    assert "fastmath" in mock_review(prompt)
    assert "nothing to assess" in mock_review("--- BEGIN CANDIDATE ---\n// EVOLVE-BLOCK-START\n\n--- END CANDIDATE ---\n")


def test_respond_routes_planner_by_prompt_shape(fixtures_dir):
    profile = MockProfile()
    assert respond("planner", 0, profile, "anything").startswith("Here are")
    prune = respond("planner", 0, profile, _prune_prompt(fixtures_dir))
    assert prune.startswith("KEEP:")
    with pytest.raises(ConfigError):
        respond("librarian", 0, profile, "x")
