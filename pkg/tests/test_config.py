"""Run-config parsing: role coverage, path resolution, overrides."""

import json

import pytest

from splatopt.config import load_run_config
from splatopt.errors import ConfigError
from splatopt.gateway import ROLES


def _minimal(**extra):
    data = {
        "backends": {
            role: {"kind": "mock", "mock_seed": i, "mock_profile": {}}
            for i, role in enumerate(ROLES)
        },
        "search": {"max_iterations": 5},
        "paths": {"source": "kernel.cu"},
    }
    data.update(extra)
    return data


def _write(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    (tmp_path / "kernel.cu").write_text("// stub\n", encoding="utf-8")
    return path


def test_loads_shipped_search_config(configs_dir, fixtures_dir):
    cfg = load_run_config(configs_dir / "mock_search.json")
    assert set(cfg.backends) == set(ROLES)
    assert all(b.kind == "mock" for b in cfg.backends.values())
    assert cfg.backends["generator"].model == "gpt5"
    assert cfg.backends["generator"].mock_profile.p_malformed == 0.08
    assert cfg.search.max_iterations == 40
    assert cfg.search.advice_mode == "pruned_plan"
    assert cfg.search.check_enabled
    assert cfg.source_path == fixtures_dir / "kernel_blend.cu"
    assert cfg.scene_path == fixtures_dir / "scene_demo.json"
    assert cfg.metrics_path == fixtures_dir / "metrics_mipnerf360.csv"
    assert cfg.workload_path == fixtures_dir / "workload_mipnerf360.csv"
    assert cfg.gpu_shape is not None
    assert (cfg.gpu_shape.sm_count, cfg.gpu_shape.block_limit) == (24, 6)
    assert cfg.frame is not None
    assert (cfg.frame.width, cfg.frame.height, cfg.frame.tile) == (778, 519, (16, 16))


def test_relative_paths_resolve_against_config_dir(tmp_path):
    nested = tmp_path / "runs"
    nested.mkdir()
    path = _write(nested, _minimal())
    cfg = load_run_config(path)
    assert cfg.source_path == nested / "kernel.cu"
    assert cfg.scene_path is None
    assert cfg.metrics_path is None
    assert cfg.gpu_shape is None
    assert cfg.frame is None
    assert cfg.crosscheck is None


def test_absolute_path_kept_as_is(tmp_path):
    kernel = tmp_path / "elsewhere.cu"
    kernel.write_text("// stub\n", encoding="utf-8")
    data = _minimal()
    data["paths"]["source"] = str(kernel)
    path = _write(tmp_path, data)
    assert load_run_config(path).source_path == kernel


def test_catalog_and_templates_resolve(tmp_path):
    data = _minimal(catalog="transforms.json", templates_dir="prompts")
    path = _write(tmp_path, data)
    cfg = load_run_config(path)
    assert cfg.catalog_path == tmp_path / "transforms.json"
    assert cfg.templates_dir == tmp_path / "prompts"


def test_every_role_required(tmp_path):
    data = _minimal()
    del data["backends"]["reviewer"]
    del data["backends"]["checker"]
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="reviewer"):
        load_run_config(path)


def test_max_iterations_required(tmp_path):
    data = _minimal()
    data["search"] = {"population_size": 8}
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="max_iterations"):
        load_run_config(path)


def test_seed_override_touches_only_search_seed(tmp_path):
    data = _minimal()
    data["search"] = {"max_iterations": 12, "seed": 3, "top_k": 4}
    path = _write(tmp_path, data)
    plain = load_run_config(path)
    overridden = load_run_config(path, seed=99)
    assert plain.search.seed == 3
    assert overridden.search.seed == 99
    assert overridden.search.max_iterations == 12
    assert overridden.search.top_k == 4
    # The override is per-call; the file itself is untouched.
    assert load_run_config(path).search.seed == 3


def test_force_mock_flips_remote_backends(tmp_path):
    data = _minimal()
    data["backends"]["generator"] = {
        "kind": "remote",
        "endpoint": "https://example.invalid/v1/chat",
        "model": "big-model",
        "api_key_env": "EXAMPLE_KEY",
    }
    path = _write(tmp_path, data)
    remote = load_run_config(path)
    assert remote.backends["generator"].kind == "remote"
    mocked = load_run_config(path, force_mock=True)
    gen = mocked.backends["generator"]
    assert gen.kind == "mock"
    assert gen.mock_seed == 0
    assert gen.mock_profile is not None
    assert gen.model == "big-model"


def test_rejects_non_object_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("[1, 2, 3]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_run_config(path)


def test_rejects_invalid_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "absent.json")


def test_source_path_required(tmp_path):
    data = _minimal()
    data["paths"] = {}
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="paths.source"):
        load_run_config(path)


def test_bad_search_key_reported(tmp_path):
    data = _minimal()
    data["search"] = {"max_iterations": 5, "beam_width": 3}
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="bad search section"):
        load_run_config(path)


def test_bad_gpu_section(tmp_path):
    data = _minimal(gpu={"sm_count": 24, "max_threads_per_sm": 2048})
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="bad gpu section"):
        load_run_config(path)


def test_bad_frame_section(tmp_path):
    data = _minimal(frame={"height": 519})
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="bad frame section"):
        load_run_config(path)


def test_bad_mock_profile_values(tmp_path):
    data = _minimal()
    data["backends"]["generator"]["mock_profile"] = {"p_malformed": 2.0}
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="bad mock_profile"):
        load_run_config(path)


def test_crosscheck_section_parses(configs_dir):
    cfg = load_run_config(configs_dir / "crosscheck_mock.json")
    assert cfg.crosscheck is not None
    labels = [label for label, _ in cfg.crosscheck.checkers]
    assert labels == ["gpt5", "deepseek_r1", "gemini", "claude"]
    assert cfg.crosscheck.generators == ("gpt5", "deepseek_r1", "gemini", "claude")
    for _, backend in cfg.crosscheck.checkers:
        assert backend.role == "checker"
        assert backend.kind == "mock"


def test_crosscheck_needs_checkers_and_generators(tmp_path):
    data = _minimal(crosscheck={"checkers": [], "generators": ["gpt5"]})
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="at least one"):
        load_run_config(path)


def test_crosscheck_malformed_entry(tmp_path):
    data = _minimal(
        crosscheck={
            "checkers": [{"kind": "mock", "mock_seed": 1, "mock_profile": {}}],
            "generators": ["gpt5"],
        }
    )
    path = _write(tmp_path, data)
    with pytest.raises(ConfigError, match="bad crosscheck section"):
        load_run_config(path)
