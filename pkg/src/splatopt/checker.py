"""LLM-based equivalence checking and the economics of running it.

The checker is a gate, not a repair tool: it answers EQUIVALENT or
NOT EQUIVALENT on its first line and anything it cannot answer cleanly fails
closed. check_benefit() decides whether spending an extra call per iteration
on checking beats letting bad candidates burn evaluation budget.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import UnparseableVerdict
from .gateway import BackendConfig, Exchange, complete
from .program import SourceProgram
from .templates import load_template, render_template

Transport = Callable[[BackendConfig, str], Exchange]

_FALLBACK_REASON = "not equivalent (checker gave no reasons)"


@dataclass(frozen=True)
class EquivalenceVerdict:
    equivalent: bool
    reasons: tuple[str, ...]
    checker_role: str = "checker"

    def __post_init__(self):
        if not self.equivalent and not self.reasons:
            raise ValueError("a negative verdict needs at least one reason")


def build_check_prompt(
    original: SourceProgram,
    candidate: SourceProgram,
    templates_dir: Path | str | None = None,
) -> str:
    return render_template(
        load_template("check", templates_dir),
        {"original": original.full_text, "candidate": candidate.full_text},
    )


def parse_verdict(response: str, checker_role: str = "checker") -> EquivalenceVerdict:
    """Find the first verdict line; everything after it is reasons."""
    lines = response.splitlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if "NOT EQUIVALENT" in stripped:
            reasons = tuple(
                l.strip().lstrip("-* ").strip()
                for l in lines[i + 1:]
                if l.strip().lstrip("-* ").strip()
            )
            return EquivalenceVerdict(
                equivalent=False,
                reasons=reasons or (_FALLBACK_REASON,),
                checker_role=checker_role,
            )
        if "EQUIVALENT" in stripped:
            return EquivalenceVerdict(
                equivalent=True, reasons=(), checker_role=checker_role
            )
    raise UnparseableVerdict(f"no verdict line in response: {response[:120]!r}")


def check(
    original: SourceProgram,
    candidate: SourceProgram,
    cfg: BackendConfig,
    templates_dir: Path | str | None = None,
    transport: Transport = complete,
) -> EquivalenceVerdict:
    prompt = build_check_prompt(original, candidate, templates_dir)
    exchange = transport(cfg, prompt)
    return parse_verdict(exchange.response, checker_role=cfg.role)


def check_benefit(
    error_rate: float, calls_per_iteration: int = 2, check_cost: float = 1.0
) -> bool:
    """True when adding a check call per iteration pays for itself.

    The break-even point is check_cost / (calls_per_iteration + check_cost);
    the comparison is strict, so sitting exactly on the threshold says no.
    """
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError("error_rate must be in [0, 1]")
    if calls_per_iteration < 1:
        raise ValueError("calls_per_iteration must be at least 1")
    if check_cost <= 0.0:
        raise ValueError("check_cost must be positive")
    return error_rate > check_cost / (calls_per_iteration + check_cost)


@dataclass(frozen=True)
class CrossCheckMatrix:
    """Detection outcomes: rows are checkers, columns are generators."""

    checkers: tuple[str, ...]
    generators: tuple[str, ...]
    detected: tuple[tuple[bool, ...], ...]
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.detected) != len(self.checkers) or any(
            len(row) != len(self.generators) for row in self.detected
        ):
            raise ValueError("matrix must be rectangular over checkers x generators")


def build_matrix(
    checkers: Sequence[tuple[str, BackendConfig]],
    generators: Sequence[str],
    fixtures: Mapping[str, SourceProgram],
    original: SourceProgram,
    templates_dir: Path | str | None = None,
    transport: Transport = complete,
) -> CrossCheckMatrix:
    """Run every checker against every generator's fixture candidate.

    A backend error in one cell is recorded as undetected plus a note; it
    never aborts the rest of the matrix.
    """
    rows = []
    notes: list[str] = []
    for checker_label, cfg in checkers:
        row = []
        for generator_label in generators:
            try:
                verdict = check(
                    original, fixtures[generator_label], cfg,
                    templates_dir=templates_dir, transport=transport,
                )
                row.append(not verdict.equivalent)
            except Exception as exc:
                row.append(False)
                notes.append(f"{checker_label} x {generator_label}: {exc}")
        rows.append(tuple(row))
    return CrossCheckMatrix(
        checkers=tuple(label for label, _ in checkers),
        generators=tuple(generators),
        detected=tuple(rows),
        notes=tuple(notes),
    )


def matrix_to_csv(matrix: CrossCheckMatrix) -> str:
    lines = ["checker," + ",".join(matrix.generators)]
    for label, row in zip(matrix.checkers, matrix.detected):
        lines.append(label + "," + ",".join("Y" if cell else "N" for cell in row))
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> CrossCheckMatrix:
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows or rows[0][:1] != ["checker"]:
        raise ValueError("not a cross-check matrix CSV")
    generators = tuple(rows[0][1:])
    checkers = tuple(row[0] for row in rows[1:])
    detected = tuple(tuple(cell == "Y" for cell in row[1:]) for row in rows[1:])
    return CrossCheckMatrix(checkers=checkers, generators=generators, detected=detected)
