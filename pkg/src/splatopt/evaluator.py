"""Candidate scoring: accuracy-gated speedup.

A candidate's score is its speedup over the baseline, gated to zero whenever
its mean absolute per-channel error against the oracle image exceeds the
tolerance. Two backends provide the (accuracy, latency) pair: a deterministic
cost model that prices transform tags through the catalog, and a subprocess
contract that compiles, runs, and measures a real toolchain.
"""

from __future__ import annotations

import enum
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from .catalog import TransformCatalog, metrics_view, program_tags
from .errors import (
    CommandTimedOut,
    CompileFailed,
    MeasureParseError,
    RunFailed,
    ToolchainError,
    UnknownTag,
)
from .oracle import Scene, WorkloadStats
from .pfm import read_pfm
from .profiles import SystemProfile
from .program import SourceProgram, source_digest, write_program

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3


class FailureKind(str, enum.Enum):
    COMPILE_ERROR = "CompileError"
    RUNTIME_ERROR = "RuntimeError"
    MARKER_VIOLATION = "MarkerViolation"
    EQUIVALENCE_REJECTED = "EquivalenceRejected"


@dataclass(frozen=True)
class EvaluationResult:
    score: float
    compiled: bool = False
    ran: bool = False
    accuracy_err: float | None = None
    latency: float | None = None
    speedup: float | None = None
    failure: str | None = None
    detail: str = ""

    def __post_init__(self):
        if (self.failure is not None) != (self.score == 0.0):
            raise ValueError("failure must be set exactly when score is zero")


def failed(kind: FailureKind, detail: str = "", compiled: bool = False,
           ran: bool = False, accuracy_err: float | None = None,
           latency: float | None = None) -> EvaluationResult:
    return EvaluationResult(
        score=0.0, compiled=compiled, ran=ran, accuracy_err=accuracy_err,
        latency=latency, failure=kind.value, detail=detail,
    )


def combined_score(accuracy_err: float, speedup: float, tolerance: float) -> float:
    """Speedup when accuracy is within tolerance (inclusive), else zero."""
    if speedup <= 0.0:
        raise ValueError("speedup must be positive")
    if accuracy_err < 0.0:
        raise ValueError("accuracy error must be non-negative")
    return speedup if accuracy_err <= tolerance else 0.0


def cost_model_latency(
    tags: tuple[str, ...],
    workload: WorkloadStats,
    profile: SystemProfile | None,
    catalog: TransformCatalog,
) -> float:
    """Relative latency multiplier for a tag set (baseline is 1.0).

    Tags compose multiplicatively; a tag whose condition fails contributes
    nothing. Iteration is in sorted order so any permutation of the same tag
    set produces the same float, bit for bit.
    """
    metrics = metrics_view(workload, profile)
    multiplier = 1.0
    for tag in sorted(set(tags)):
        entry = catalog.get(tag)
        if entry.condition is None or entry.condition.holds(metrics):
            multiplier *= 1.0 / entry.speedup_factor
    return multiplier


class EvaluationBackend(Protocol):
    def baseline_latency(self, baseline: SourceProgram) -> float: ...
    def measure(
        self, candidate: SourceProgram, scene: Scene | None = None
    ) -> tuple[float, float]: ...


class CostModelBackend:
    """Prices candidates by their transform tags alone. No toolchain."""

    def __init__(
        self,
        catalog: TransformCatalog,
        workload: WorkloadStats,
        profile: SystemProfile | None = None,
    ):
        self.catalog = catalog
        self.workload = workload
        self.profile = profile

    def baseline_latency(self, baseline: SourceProgram) -> float:
        return 1.0

    def measure(
        self, candidate: SourceProgram, scene: Scene | None = None
    ) -> tuple[float, float]:
        tags = program_tags(candidate)
        latency = cost_model_latency(tags, self.workload, self.profile, self.catalog)
        accuracy_err = sum(
            self.catalog.get(tag).accuracy_penalty
            for tag in tags
            if self.catalog.get(tag).unsafe
        )
        return float(accuracy_err), latency


class SubprocessBackend:
    """Compile/run/measure through configured shell commands.

    Command templates may use {src}, {bin}, {scene}, and {out}. The run
    command must write the candidate's image to {out} as PFM; the measure
    command must print the measured latency (in seconds) as the last line of
    stdout. Every evaluation gets a private work directory.
    """

    def __init__(
        self,
        commands: Mapping[str, str],
        scene_path: Path | str,
        reference_image: np.ndarray,
        work_root: Path | str,
        timeout: float = 120.0,
        latency_unit: str = "ms",
    ):
        for name in ("compile_cmd", "run_cmd", "measure_cmd"):
            if name not in commands:
                raise ValueError(f"subprocess backend needs {name}")
        if latency_unit not in ("s", "ms"):
            raise ValueError("latency_unit must be 's' or 'ms'")
        self.commands = dict(commands)
        self.scene_path = Path(scene_path)
        self.reference_image = np.asarray(reference_image, dtype=np.float64)
        self.work_root = Path(work_root)
        self.timeout = timeout
        self.latency_unit = latency_unit
        self._baseline: float | None = None

    def baseline_latency(self, baseline: SourceProgram) -> float:
        if self._baseline is None:
            _, self._baseline = self.measure(baseline)
        return self._baseline

    # The scene rides along for interface compatibility; the backend renders
    # against the reference image captured at construction time.

    def _run_stage(self, stage: str, command: str, error: type[ToolchainError]) -> str:
        try:
            proc = subprocess.run(
                shlex.split(command),
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            raise CommandTimedOut(f"{stage} exceeded {self.timeout}s: {command}")
        except OSError as exc:
            raise error(f"{stage} could not start: {exc}")
        if proc.returncode != 0:
            raise error(
                f"{stage} exited {proc.returncode}",
                output=(proc.stderr or proc.stdout)[-2000:],
            )
        return proc.stdout

    def measure(
        self, candidate: SourceProgram, scene: Scene | None = None
    ) -> tuple[float, float]:
        self.work_root.mkdir(parents=True, exist_ok=True)
        workdir = Path(
            tempfile.mkdtemp(prefix=source_digest(candidate)[:8] + "-", dir=self.work_root)
        )
        paths = {
            "src": str(workdir / "candidate.cu"),
            "bin": str(workdir / "candidate.bin"),
            "scene": str(self.scene_path),
            "out": str(workdir / "out.pfm"),
        }
        write_program(paths["src"], candidate)
        self._run_stage("compile", self.commands["compile_cmd"].format(**paths), CompileFailed)
        self._run_stage("run", self.commands["run_cmd"].format(**paths), RunFailed)
        stdout = self._run_stage(
            "measure", self.commands["measure_cmd"].format(**paths), RunFailed
        )
        lines = [line for line in stdout.splitlines() if line.strip()]
        try:
            seconds = float(lines[-1])
        except (IndexError, ValueError):
            raise MeasureParseError(
                "measure stdout has no trailing latency number", output=stdout[-2000:]
            ) from None
        try:
            image = read_pfm(paths["out"])
        except Exception as exc:
            raise RunFailed(f"candidate image unreadable: {exc}") from exc
        if image.shape != self.reference_image.shape:
            raise RunFailed(
                f"candidate image shape {image.shape} != reference "
                f"{self.reference_image.shape}"
            )
        accuracy_err = float(np.mean(np.abs(image - self.reference_image)))
        latency = seconds * (1000.0 if self.latency_unit == "ms" else 1.0)
        return accuracy_err, latency


_FAILURE_BY_STAGE = {
    "compile": (FailureKind.COMPILE_ERROR, False, False),
    "run": (FailureKind.RUNTIME_ERROR, True, False),
    "measure": (FailureKind.RUNTIME_ERROR, True, True),
    "timeout": (FailureKind.RUNTIME_ERROR, False, False),
}


def evaluate(
    candidate: SourceProgram,
    baseline: SourceProgram,
    scene: Scene | None,
    backend: EvaluationBackend,
    tolerance: float = DEFAULT_TOLERANCE,
) -> EvaluationResult:
    """Score a candidate. Backend failures become zero-score results."""
    try:
        base = backend.baseline_latency(baseline)
        accuracy_err, latency = backend.measure(candidate, scene)
    except ToolchainError as exc:
        kind, compiled, ran = _FAILURE_BY_STAGE[exc.stage]
        log.debug("evaluation failed at %s: %s", exc.stage, exc)
        return failed(kind, detail=str(exc), compiled=compiled, ran=ran)
    except UnknownTag as exc:
        return failed(FailureKind.RUNTIME_ERROR, detail=str(exc))
    speedup = base / latency
    score = combined_score(accuracy_err, speedup, tolerance)
    if score == 0.0:
        return failed(
            FailureKind.EQUIVALENCE_REJECTED,
            detail=f"accuracy error {accuracy_err:g} above tolerance {tolerance:g}",
            compiled=True,
            ran=True,
            accuracy_err=accuracy_err,
            latency=latency,
        )
    return EvaluationResult(
        score=score,
        compiled=True,
        ran=True,
        accuracy_err=accuracy_err,
        latency=latency,
        speedup=speedup,
    )
