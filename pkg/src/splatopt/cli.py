"""Command line entry points.

Every subcommand reads one JSON run config (see config.py) so a whole
experiment travels as config + fixtures. Exit codes: 0 on success, 2 for
input/config problems, 3 for backend problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .catalog import DEFAULT_CATALOG, annotate_body, load_catalog
from .checker import build_matrix, check, check_benefit, matrix_to_csv
from .config import FrameShape, RunConfig, load_run_config
from .errors import BackendError, ConfigError, DegenerateWorkload, InputError
from .evaluator import CostModelBackend
from .gateway import Gateway
from .oracle import Scene, load_scene, render, workload_stats
from .pfm import write_pfm
from .planner import (
    build_plan_prompt,
    build_prune_prompt,
    parse_advice,
    parse_pruned,
    plan_from_json,
    plan_to_json,
    profile_digest,
    pruned_to_json,
)
from .profiles import compute_waves, load_metrics, load_workload, summarize_profile
from .program import (
    Modification,
    apply_modification,
    read_program,
    source_digest,
)
from .search import ERROR_KINDS, ProfileBundle, run_search_full

log = logging.getLogger(__name__)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"this command needs {what} in the run config")
    return value


def _occupancy(rc: RunConfig, scene: Scene | None = None):
    shape = _require(rc.gpu_shape, "a 'gpu' section")
    frame = rc.frame
    if frame is None and scene is not None:
        frame = FrameShape(width=scene.width, height=scene.height, tile=scene.tile)
    frame = _require(frame, "a 'frame' section (or a scene to take dimensions from)")
    return compute_waves(frame.width, frame.height, frame.tile, shape)


def _profile_bundle(rc: RunConfig, scene: Scene | None = None) -> ProfileBundle:
    profile = load_metrics(_require(rc.metrics_path, "paths.metrics"))
    workload = load_workload(_require(rc.workload_path, "paths.workload"))
    return ProfileBundle(
        system=profile, workload=workload, occupancy=_occupancy(rc, scene)
    )


def cmd_profile(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    bundle = _profile_bundle(rc)
    print(summarize_profile(bundle.system, bundle.workload, bundle.occupancy))
    return 0


def cmd_render(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    scene_path = Path(args.scene) if args.scene else _require(rc.scene_path, "paths.scene")
    scene = load_scene(scene_path)
    out = render(scene)
    try:
        stats = workload_stats(scene, out)
    except DegenerateWorkload:
        # An empty scene still renders (all background); it just has no
        # workload distribution to report.
        stats = None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pfm(out_dir / "image.pfm", out.image.astype(np.float32))
    summary = {
        "width": scene.width,
        "height": scene.height,
        "channels": scene.channels,
        "splats": len(scene.splats),
        "n_contrib_total": int(out.n_contrib.sum()),
        "per_pixel_computed_total": int(out.per_pixel_computed.sum()),
        "final_T_mean": float(out.final_T.mean()),
        "final_T_min": float(out.final_T.min()),
    }
    (out_dir / "image.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if stats is not None:
        (out_dir / "stats.csv").write_text(
            "name,value\n"
            + f"mean_per_tile,{stats.mean_per_tile!r}\n"
            + f"var_per_tile,{stats.var_per_tile!r}\n"
            + f"mean_computed_fraction,{stats.mean_computed_fraction!r}\n"
            + f"var_computed_fraction,{stats.var_computed_fraction!r}\n",
            encoding="utf-8",
        )
    print(
        f"rendered {scene.width}x{scene.height} scene "
        f"({len(scene.splats)} splats) -> {out_dir}"
    )
    return 0


def _make_plan(rc: RunConfig, gateway: Gateway, program):
    prompt = build_plan_prompt(program, rc.templates_dir)
    response = gateway.complete("planner", prompt).response
    return parse_advice(response, source_digest=source_digest(program))


def cmd_plan(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    program = read_program(rc.source_path)
    plan = _make_plan(rc, Gateway(rc.backends), program)
    _emit(plan_to_json(plan), args.out)
    return 0


def cmd_prune(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    program = read_program(rc.source_path)
    gateway = Gateway(rc.backends)
    if args.plan:
        plan = plan_from_json(Path(args.plan).read_text(encoding="utf-8"))
    else:
        plan = _make_plan(rc, gateway, program)
    bundle = _profile_bundle(rc)
    prompt = build_prune_prompt(
        plan, bundle.system, bundle.workload, bundle.occupancy, rc.templates_dir
    )
    pruned = parse_pruned(
        gateway.complete("planner", prompt).response,
        plan,
        profile_digest=profile_digest(bundle.system, bundle.workload, bundle.occupancy),
    )
    _emit(pruned_to_json(pruned), args.out)
    return 0


def cmd_search(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    program = read_program(rc.source_path)
    scene = load_scene(rc.scene_path) if rc.scene_path else None
    catalog = load_catalog(rc.catalog_path) if rc.catalog_path else DEFAULT_CATALOG
    if rc.workload_path:
        workload = load_workload(rc.workload_path)
    elif scene is not None:
        workload = workload_stats(scene, render(scene))
    else:
        raise ConfigError("search needs paths.workload or paths.scene")
    profile = load_metrics(rc.metrics_path) if rc.metrics_path else None
    bundle = None
    if profile is not None and rc.gpu_shape is not None:
        bundle = ProfileBundle(
            system=profile, workload=workload, occupancy=_occupancy(rc, scene)
        )
    backend = CostModelBackend(catalog, workload, profile)
    state = run_search_full(
        rc.search,
        program,
        scene,
        bundle,
        Gateway(rc.backends),
        backend,
        out_dir=args.out,
        templates_dir=rc.templates_dir,
    )
    report = state.report
    best_score = max((m.score for m in state.population), default=0.0)
    n = len(report.records)
    error_rate = (
        sum(1 for r in report.records if r.failure in ERROR_KINDS) / n if n else 0.0
    )
    print(f"iterations: {n}")
    print(f"best score: {best_score:.4f} (candidate {report.final_best_id})")
    print(f"error rate: {error_rate:.3f}")
    print(f"llm calls: {report.total_llm_calls}")
    if args.out:
        print(f"run dir: {args.out}")
    return 0


def cmd_check(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    original = read_program(rc.source_path)
    candidate = read_program(args.candidate)
    gateway = Gateway(rc.backends)
    verdict = check(
        original,
        candidate,
        gateway.config("checker"),
        templates_dir=rc.templates_dir,
        transport=gateway.complete_with,
    )
    print("EQUIVALENT" if verdict.equivalent else "NOT EQUIVALENT")
    for reason in verdict.reasons:
        print(f"- {reason}")
    return 0


def cmd_crosscheck(args) -> int:
    rc = load_run_config(args.config, args.mock, args.seed)
    cc = _require(rc.crosscheck, "a 'crosscheck' section")
    original = read_program(rc.source_path)
    catalog = load_catalog(rc.catalog_path) if rc.catalog_path else DEFAULT_CATALOG
    if not catalog.unsafe_tags:
        raise ConfigError("crosscheck needs at least one unsafe catalog tag")
    bad_tag = catalog.unsafe_tags[0]
    fixtures = {}
    for label in cc.generators:
        body = annotate_body(original.blocks[0].body, (bad_tag,), generator=label)
        fixtures[label] = apply_modification(
            original,
            Modification(
                id=f"plant-{label}",
                description=f"plant an unsafe rewrite attributed to {label}",
                replacements={0: body},
            ),
        )
    gateway = Gateway(rc.backends)
    matrix = build_matrix(
        cc.checkers,
        cc.generators,
        fixtures,
        original,
        templates_dir=rc.templates_dir,
        transport=gateway.complete_with,
    )
    _emit(matrix_to_csv(matrix), args.out)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.json"
    if not report_path.is_file():
        raise InputError(f"{report_path} not found; is this a run directory?")
    try:
        report = json.loads(report_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{report_path} is not valid JSON: {exc}") from exc
    records = []
    jsonl = run_dir / "iterations.jsonl"
    if jsonl.is_file():
        for line in jsonl.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(json.loads(line))
    n = len(records)
    errors = sum(1 for r in records if r.get("failure") in ERROR_KINDS)
    error_rate = errors / n if n else 0.0
    best = report.get("best_curve") or [[0, 0.0]]
    print(f"iterations: {n}")
    print(f"best score: {best[-1][1]:.4f} (candidate {report['final_best']['candidate_id']})")
    print(f"errors: {errors} ({error_rate:.3f} per iteration)")
    print(f"llm calls: {report['total_llm_calls']}")
    calls_per_iter = report["total_llm_calls"] / n if n else 0.0
    worth_it = check_benefit(error_rate, calls_per_iteration=max(calls_per_iter, 1.0))
    print(f"equivalence checking pays off at this error rate: {'yes' if worth_it else 'no'}")
    return 0


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="run config JSON")
    parser.add_argument(
        "--mock", action="store_true", help="force every backend to its mock twin"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="override the search seed"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatopt",
        description="LLM-in-the-loop optimization search for tile-based "
        "splatting kernels, with deterministic mock backends.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="print the profile summary")
    _add_common(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("render", help="render the scene with the reference blender")
    _add_common(p)
    p.add_argument("--scene", help="scene JSON (overrides paths.scene)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("plan", help="ask the planner for optimization advice")
    _add_common(p)
    p.add_argument("--out", help="write plan JSON here (default: stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("prune", help="prune a plan against the profile")
    _add_common(p)
    p.add_argument("--plan", help="plan JSON from a previous run (default: re-plan)")
    p.add_argument("--out", help="write pruned plan JSON here (default: stdout)")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("search", help="run the evolutionary search")
    _add_common(p)
    p.add_argument("--out", help="run directory (default: in-memory only)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("check", help="ask the checker whether a candidate is equivalent")
    _add_common(p)
    p.add_argument("--candidate", required=True, help="candidate source file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("crosscheck", help="cross-check generators against checkers")
    _add_common(p)
    p.add_argument("--out", help="write the Y/N matrix CSV here (default: stdout)")
    p.set_defaults(func=cmd_crosscheck)

    p = sub.add_parser("report", help="summarize a finished run directory")
    p.add_argument("--run", required=True, help="run directory from `search --out`")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
