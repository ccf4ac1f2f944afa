"""Run configuration loading.

A run is described by one JSON file: backend configs for the four roles,
search knobs, and paths to the inputs (program, scene, profiler exports).
Relative paths are resolved against the directory containing the config file,
so a config can travel with its fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .gateway import ROLES, BackendConfig, MockProfile
from .profiles import GpuShape
from .search import SearchConfig


@dataclass(frozen=True)
class CrosscheckConfig:
    checkers: tuple[tuple[str, BackendConfig], ...]
    generators: tuple[str, ...]


@dataclass(frozen=True)
class FrameShape:
    """Launch geometry of the profiled frame, one thread block per tile."""

    width: int
    height: int
    tile: tuple[int, int] = (16, 16)


@dataclass(frozen=True)
class RunConfig:
    backends: Mapping[str, BackendConfig]
    search: SearchConfig
    source_path: Path
    scene_path: Path | None = None
    metrics_path: Path | None = None
    workload_path: Path | None = None
    gpu_shape: GpuShape | None = None
    frame: FrameShape | None = None
    catalog_path: Path | None = None
    templates_dir: Path | None = None
    crosscheck: CrosscheckConfig | None = None


def _mock_profile(raw: Mapping[str, Any]) -> MockProfile:
    try:
        return MockProfile(
            p_malformed=float(raw.get("p_malformed", 0.0)),
            p_unsafe=float(raw.get("p_unsafe", 0.0)),
            catalog_bias={str(k): float(v) for k, v in raw.get("catalog_bias", {}).items()},
            checker_accuracy={
                str(k): float(v) for k, v in raw.get("checker_accuracy", {}).items()
            },
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mock_profile: {exc}") from exc


def _backend(role: str, raw: Mapping[str, Any], force_mock: bool) -> BackendConfig:
    kind = str(raw.get("kind", "mock"))
    if force_mock:
        kind = "mock"
    common = dict(
        role=role,
        kind=kind,
        model=raw.get("model"),
        temperature=float(raw.get("temperature", 0.7)),
        timeout=float(raw.get("timeout", 30.0)),
        max_retries=int(raw.get("max_retries", 2)),
    )
    if kind == "mock":
        return BackendConfig(
            mock_seed=int(raw.get("mock_seed", 0)),
            mock_profile=_mock_profile(raw.get("mock_profile", {})),
            **common,
        )
    return BackendConfig(
        endpoint=raw.get("endpoint"),
        api_key_env=raw.get("api_key_env"),
        **common,
    )


def _resolve(base: Path, value: Any, key: str, required: bool = False) -> Path | None:
    if value is None:
        if required:
            raise ConfigError(f"config is missing required path {key!r}")
        return None
    path = Path(value)
    if not path.is_absolute():
        path = (base / path).resolve()
    return path


def load_run_config(
    path: Path | str, force_mock: bool = False, seed: int | None = None
) -> RunConfig:
    """Parse a run config file. `force_mock` flips every backend to its mock
    twin; `seed` overrides the search seed without touching the file."""
    config_path = Path(path)
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {config_path} must hold a JSON object")
    base = config_path.resolve().parent

    backends_raw = data.get("backends")
    if not isinstance(backends_raw, dict):
        raise ConfigError("config needs a 'backends' object")
    missing = [role for role in ROLES if role not in backends_raw]
    if missing:
        raise ConfigError(f"config is missing backend roles: {', '.join(missing)}")
    backends = {
        role: _backend(role, backends_raw[role], force_mock) for role in ROLES
    }

    search_raw = dict(data.get("search", {}))
    if "max_iterations" not in search_raw:
        raise ConfigError("config needs search.max_iterations")
    if seed is not None:
        search_raw["seed"] = seed
    try:
        search = SearchConfig(**search_raw)
    except TypeError as exc:
        raise ConfigError(f"bad search section: {exc}") from exc

    paths_raw = data.get("paths", {})
    if not isinstance(paths_raw, dict):
        raise ConfigError("config 'paths' must be an object")
    source_path = _resolve(base, paths_raw.get("source"), "paths.source", required=True)
    scene_path = _resolve(base, paths_raw.get("scene"), "paths.scene")
    metrics_path = _resolve(base, paths_raw.get("metrics"), "paths.metrics")
    workload_path = _resolve(base, paths_raw.get("workload"), "paths.workload")
    catalog_path = _resolve(base, data.get("catalog"), "catalog")
    templates_dir = _resolve(base, data.get("templates_dir"), "templates_dir")

    gpu_shape = None
    if "gpu" in data:
        gpu_raw = data["gpu"]
        try:
            gpu_shape = GpuShape(
                sm_count=int(gpu_raw["sm_count"]),
                max_threads_per_sm=int(gpu_raw["max_threads_per_sm"]),
                block_limit=int(gpu_raw["block_limit"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad gpu section: {exc}") from exc

    frame = None
    if "frame" in data:
        frame_raw = data["frame"]
        try:
            tile_raw = frame_raw.get("tile", (16, 16))
            frame = FrameShape(
                width=int(frame_raw["width"]),
                height=int(frame_raw["height"]),
                tile=(int(tile_raw[0]), int(tile_raw[1])),
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad frame section: {exc}") from exc

    crosscheck = None
    if "crosscheck" in data:
        cc_raw = data["crosscheck"]
        try:
            checkers = tuple(
                (str(item["label"]), _backend("checker", item, force_mock))
                for item in cc_raw["checkers"]
            )
            generators = tuple(str(g) for g in cc_raw["generators"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad crosscheck section: {exc}") from exc
        if not checkers or not generators:
            raise ConfigError("crosscheck needs at least one checker and generator")
        crosscheck = CrosscheckConfig(checkers=checkers, generators=generators)

    return RunConfig(
        backends=backends,
        search=search,
        source_path=source_path,
        scene_path=scene_path,
        metrics_path=metrics_path,
        workload_path=workload_path,
        gpu_shape=gpu_shape,
        frame=frame,
        catalog_path=catalog_path,
        templates_dir=templates_dir,
        crosscheck=crosscheck,
    )
