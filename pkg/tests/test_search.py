from __future__ import annotations

import json

import pytest

from splatopt.catalog import DEFAULT_CATALOG, program_tags
from splatopt.errors import ConfigError, NoEvolveBlocks
from splatopt.evaluator import CostModelBackend, FailureKind
from splatopt.gateway import BackendConfig, Gateway, MockProfile
from splatopt.oracle import WorkloadStats
from splatopt.profiles import GpuShape, compute_waves, load_metrics
from splatopt.program import extract_blocks
from splatopt.search import (
    Member,
    ProfileBundle,
    SearchConfig,
    extract_candidate_source,
    insert_candidate,
    run_search,
    run_search_full,
    select_parent,
)

KERNEL = (
    "// setup\n// EVOLVE-BLOCK-START\nblend();\n// EVOLVE-BLOCK-END\n// done\n"
)

WORKLOAD = WorkloadStats(
    mean_per_tile=1189.0,
    var_per_tile=614608.0,
    mean_computed_fraction=0.95,
    var_computed_fraction=0.02,
)


def _gateway(
    p_malformed: float = 0.0,
    p_unsafe: float = 0.0,
    checker_accuracy: dict | None = None,
) -> Gateway:
    generator_profile = MockProfile(p_malformed=p_malformed, p_unsafe=p_unsafe)
    checker_profile = MockProfile(checker_accuracy=checker_accuracy or {"*": 1.0})
    plain = MockProfile()
    return Gateway(
        {
            "planner": BackendConfig(role="planner", kind="mock", mock_seed=11,
                                     mock_profile=plain),
            "generator": BackendConfig(role="generator", kind="mock", mock_seed=23,
                                       mock_profile=generator_profile),
            "reviewer": BackendConfig(role="reviewer", kind="mock", mock_seed=41,
                                      mock_profile=plain),
            "checker": BackendConfig(role="checker", kind="mock", mock_seed=37,
                                     mock_profile=checker_profile),
        }
    )


def _backend() -> CostModelBackend:
    return CostModelBackend(DEFAULT_CATALOG, WORKLOAD)


def _bundle(fixtures_dir) -> ProfileBundle:
    return ProfileBundle(
        system=load_metrics(fixtures_dir / "metrics_mipnerf360.csv"),
        workload=WORKLOAD,
        occupancy=compute_waves(778, 519, (16, 16), GpuShape(24, 2048, 6)),
    )


def _run(cfg: SearchConfig, gateway: Gateway | None = None, **kw):
    return run_search_full(
        cfg,
        extract_blocks(KERNEL),
        None,
        kw.pop("profiles", None),
        gateway or _gateway(),
        _backend(),
        **kw,
    )


def test_search_config_validation():
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=-1)
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=1, population_size=0)
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=1, top_k=0)
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=1, population_size=4, top_k=5)
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=1, record_every=0)
    with pytest.raises(ConfigError):
        SearchConfig(max_iterations=1, advice_mode="vibes")


def test_extract_candidate_source_unwraps_fences():
    assert extract_candidate_source("plain text") == "plain text"
    assert extract_candidate_source("```cuda\ncode here\n```") == "code here\n"
    longest = extract_candidate_source(
        "```\nshort\n```\nintermission\n```c\nmuch longer body\n```"
    )
    assert longest == "much longer body\n"


def _member(i: int, score: float, latency: float = 1.0) -> Member:
    return Member(
        program=extract_blocks(KERNEL), candidate_id=f"c{i}",
        score=score, latency=latency, order=i,
    )


def test_select_parent_deterministic_over_top_k():
    population = [_member(i, score=1.0 + i / 10) for i in range(6)]
    a = select_parent(population, seed=3, iteration=5, top_k=4)
    b = select_parent(population, seed=3, iteration=5, top_k=4)
    assert a is b
    picks = {
        select_parent(population, 3, it, 4).candidate_id for it in range(1, 40)
    }
    top_ids = {m.candidate_id for m in sorted(population, key=lambda m: -m.score)[:4]}
    assert picks <= top_ids
    assert len(picks) > 1


def test_select_parent_top_one_is_greedy():
    population = [_member(i, score=1.0 + i / 10) for i in range(4)]
    for it in range(1, 10):
        assert select_parent(population, 0, it, 1).candidate_id == "c3"


def test_insert_candidate_rules():
    population = [_member(0, 1.0)]
    assert insert_candidate(population, _member(1, 0.0), 4) is False
    assert len(population) == 1

    assert insert_candidate(population, _member(1, 1.2), 2) is True
    assert len(population) == 2

    # Full: beating the worst member strictly evicts it.
    assert insert_candidate(population, _member(2, 1.2), 2) is True
    assert {m.candidate_id for m in population} == {"c1", "c2"}

    # Full: matching the worst score does not displace anyone.
    assert insert_candidate(population, _member(3, 1.2), 2) is False
    assert {m.candidate_id for m in population} == {"c1", "c2"}

    # Among equally scored and equally fast members, the newest one goes.
    assert insert_candidate(population, _member(4, 1.5), 2) is True
    assert {m.candidate_id for m in population} == {"c1", "c4"}


def test_insert_candidate_evicts_slowest_at_equal_score():
    population = [_member(0, 1.0, latency=2.0), _member(1, 1.0, latency=1.0)]
    insert_candidate(population, _member(2, 1.1), 2)
    assert {m.candidate_id for m in population} == {"c1", "c2"}


def test_zero_iterations_returns_baseline():
    state = _run(SearchConfig(max_iterations=0))
    report = state.report
    assert report.records == ()
    assert report.best_curve == ()
    assert report.error_curve == ()
    assert report.total_llm_calls == 0
    assert report.final_best_source == KERNEL
    assert len(state.population) == 1


def test_all_malformed_responses_never_crash_the_loop():
    cfg = SearchConfig(max_iterations=12, seed=5, record_every=4)
    report = _run(cfg, gateway=_gateway(p_malformed=1.0)).report
    assert len(report.records) == 12
    assert all(
        r.failure == FailureKind.MARKER_VIOLATION.value for r in report.records
    )
    assert all(r.score == 0.0 for r in report.records)
    assert report.error_curve == ((4, 1.0), (8, 1.0), (12, 1.0))
    assert all(score == 1.0 for _, score in report.best_curve)
    assert report.final_best_source == KERNEL


def test_best_curve_monotone_and_improving():
    cfg = SearchConfig(max_iterations=20, seed=7, record_every=5)
    report = _run(cfg).report
    scores = [s for _, s in report.best_curve]
    assert all(b >= a for a, b in zip(scores, scores[1:]))
    assert scores[-1] > 1.0


def test_records_arrive_in_iteration_order():
    report = _run(SearchConfig(max_iterations=8, seed=2)).report
    assert [r.iteration for r in report.records] == list(range(1, 9))
    assert all(len(r.candidate_id) == 12 for r in report.records)


def test_llm_call_accounting():
    unchecked = _run(SearchConfig(max_iterations=10, seed=3)).report
    assert all(r.llm_calls == 2 and not r.checked for r in unchecked.records)
    assert unchecked.total_llm_calls == 20

    checked = _run(SearchConfig(max_iterations=10, seed=3, check_enabled=True)).report
    assert all(r.llm_calls == 3 and r.checked for r in checked.records)
    assert checked.total_llm_calls == 30

    # Malformed candidates never reach the checker, so they stay at 2 calls.
    mixed = _run(
        SearchConfig(max_iterations=20, seed=3, check_enabled=True),
        gateway=_gateway(p_malformed=0.5),
    ).report
    assert all(r.llm_calls == (3 if r.checked else 2) for r in mixed.records)


def test_perfect_checker_keeps_unsafe_out_of_population():
    cfg = SearchConfig(max_iterations=25, seed=9, check_enabled=True)
    state = _run(cfg, gateway=_gateway(p_unsafe=0.5, checker_accuracy={"*": 1.0}))
    rejected = [
        r for r in state.report.records
        if r.failure == FailureKind.EQUIVALENCE_REJECTED.value
    ]
    assert rejected  # the generator really was injecting unsafe rewrites
    for member in state.population:
        assert "remove-inner-loop" not in program_tags(member.program)


def test_pruned_plan_mode_requires_profiles():
    with pytest.raises(ConfigError):
        _run(SearchConfig(max_iterations=1, advice_mode="pruned_plan"))


def test_pruned_plan_mode_records_the_pruning(fixtures_dir):
    cfg = SearchConfig(max_iterations=4, seed=1, advice_mode="pruned_plan")
    state = _run(cfg, profiles=_bundle(fixtures_dir))
    assert state.plan is not None
    assert state.pruned is not None
    assert state.pruned.kept  # the fixture profile keeps most advice
    assert 8 in {i for i, _ in state.pruned.dropped}


def test_baseline_must_pass_evaluation():
    bad = KERNEL.replace("blend();\n", "blend();\n// transform: remove-inner-loop\n")
    with pytest.raises(ConfigError, match="baseline"):
        run_search_full(
            SearchConfig(max_iterations=1),
            extract_blocks(bad), None, None, _gateway(), _backend(),
        )


def test_baseline_needs_blocks():
    with pytest.raises(NoEvolveBlocks):
        run_search_full(
            SearchConfig(max_iterations=1),
            extract_blocks("no blocks\n"), None, None, _gateway(), _backend(),
        )


def test_run_dir_is_byte_deterministic(tmp_path):
    cfg = SearchConfig(max_iterations=10, seed=4, record_every=5)
    for name in ("a", "b"):
        _run(cfg, out_dir=tmp_path / name)
    for filename in ("iterations.jsonl", "report.json"):
        assert (tmp_path / "a" / filename).read_bytes() == (
            tmp_path / "b" / filename
        ).read_bytes()
    a_best = sorted(p.name for p in (tmp_path / "a" / "best").iterdir())
    assert a_best == ["10.src", "5.src"]
    for name in a_best:
        assert (tmp_path / "a" / "best" / name).read_bytes() == (
            tmp_path / "b" / "best" / name
        ).read_bytes()


def test_run_dir_layout_and_report_shape(tmp_path):
    cfg = SearchConfig(max_iterations=10, seed=4, record_every=5)
    report = _run(cfg, out_dir=tmp_path).report
    payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert payload["best_curve"] == [[i, s] for i, s in report.best_curve]
    assert payload["final_best"]["candidate_id"] == report.final_best_id
    assert payload["total_llm_calls"] == report.total_llm_calls
    lines = (tmp_path / "iterations.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 10
    assert json.loads(lines[0])["iteration"] == 1
    run_meta = json.loads((tmp_path / "run.json").read_text(encoding="utf-8"))
    assert run_meta["config"]["seed"] == 4
    assert "finished" in run_meta["meta"]


def test_parallel_mode_is_deterministic():
    cfg = SearchConfig(max_iterations=14, seed=6, parallel=True)
    first = _run(cfg).report
    second = _run(cfg).report
    assert first == second
    assert [r.iteration for r in first.records] == list(range(1, 15))
    scores = [s for _, s in first.best_curve]
    assert all(b >= a for a, b in zip(scores, scores[1:]))


def test_run_search_returns_report_only():
    report = run_search(
        SearchConfig(max_iterations=3, seed=8),
        extract_blocks(KERNEL), None, None, _gateway(), _backend(),
    )
    assert len(report.records) == 3
