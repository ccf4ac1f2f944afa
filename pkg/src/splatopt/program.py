"""Source programs with rewritable EVOLVE-BLOCK regions.

A program is ordinary text plus zero or more regions fenced by marker lines.
Any line containing EVOLVE-BLOCK-START opens a region and any line containing
EVOLVE-BLOCK-END closes it; the marker lines themselves are scaffolding and
are never part of a block body. Only block bodies may change between program
variants. Everything is newline-normalized internally; the original line
ending style is remembered so files round-trip.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Mapping

from .errors import InputError, UnbalancedMarkers, UnknownBlockIndex

START_MARKER = "EVOLVE-BLOCK-START"
END_MARKER = "EVOLVE-BLOCK-END"

# Sentinel used when comparing two programs' fixed scaffolding.
_BODY_SENTINEL = "\x00BODY\x00"


@dataclass(frozen=True)
class EvolveBlock:
    """One rewritable region. Line numbers are 1-based body bounds."""

    index: int
    body: str
    start_line: int
    end_line: int


@dataclass(frozen=True)
class SourceProgram:
    full_text: str
    blocks: tuple[EvolveBlock, ...]
    origin_path: Path | None = None
    newline: str = "\n"


@dataclass(frozen=True)
class Modification:
    """A named rewrite of one or more block bodies."""

    id: str
    description: str
    replacements: Mapping[int, str]


@dataclass(frozen=True)
class ModificationSequence:
    steps: tuple[Modification, ...] = ()
    bound: int = 8

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("bound must be non-negative")
        if len(self.steps) > self.bound:
            raise ValueError(
                f"sequence has {len(self.steps)} steps, bound is {self.bound}"
            )


def extract_blocks(
    text: str,
    origin_path: Path | None = None,
    newline: str = "\n",
) -> SourceProgram:
    """Parse marker-fenced regions out of ``text``.

    Raises UnbalancedMarkers on nesting, stray closers, or an unclosed block.
    """
    lines = text.splitlines(keepends=True)
    blocks: list[EvolveBlock] = []
    open_at: int | None = None
    for i, line in enumerate(lines):
        has_start = START_MARKER in line
        has_end = END_MARKER in line
        if has_start and has_end:
            raise UnbalancedMarkers(f"line {i + 1}: both markers on one line")
        if has_start:
            if open_at is not None:
                raise UnbalancedMarkers(f"line {i + 1}: nested {START_MARKER}")
            open_at = i
        elif has_end:
            if open_at is None:
                raise UnbalancedMarkers(f"line {i + 1}: {END_MARKER} without opener")
            body = "".join(lines[open_at + 1 : i])
            blocks.append(
                EvolveBlock(
                    index=len(blocks),
                    body=body,
                    start_line=open_at + 2,
                    end_line=i,
                )
            )
            open_at = None
    if open_at is not None:
        raise UnbalancedMarkers(f"line {open_at + 1}: unclosed {START_MARKER}")
    return SourceProgram(
        full_text=text,
        blocks=tuple(blocks),
        origin_path=origin_path,
        newline=newline,
    )


def source_digest(program: SourceProgram) -> str:
    return hashlib.sha256(program.full_text.encode("utf-8")).hexdigest()


def _rebuild(program: SourceProgram, bodies: Mapping[int, str]) -> str:
    """Replace selected block bodies, leaving all other bytes untouched."""
    lines = program.full_text.splitlines(keepends=True)
    # Work back to front so earlier line numbers stay valid.
    for block in reversed(program.blocks):
        if block.index not in bodies:
            continue
        body = bodies[block.index]
        if body and not body.endswith("\n"):
            body += "\n"
        lines[block.start_line - 1 : block.end_line] = [body] if body else []
    return "".join(lines)


def apply_modification(program: SourceProgram, mod: Modification) -> SourceProgram:
    """Return a new program with the modification's bodies swapped in."""
    for index in mod.replacements:
        if not 0 <= index < len(program.blocks):
            raise UnknownBlockIndex(
                f"modification {mod.id!r} targets block {index}, "
                f"program has {len(program.blocks)}"
            )
    text = _rebuild(program, mod.replacements)
    return extract_blocks(text, origin_path=program.origin_path, newline=program.newline)


def apply_sequence(program: SourceProgram, seq: ModificationSequence) -> SourceProgram:
    return reduce(apply_modification, seq.steps, program)


def _skeleton(program: SourceProgram) -> str:
    return _rebuild(
        program, {b.index: _BODY_SENTINEL + "\n" for b in program.blocks}
    )


def diff_outside_blocks(program: SourceProgram, candidate_text: str) -> bool:
    """True when the candidate changed anything outside the block bodies.

    Marker lines count as outside text: rewriting one is a violation.
    Raises UnbalancedMarkers when the candidate's markers do not parse.
    """
    candidate = extract_blocks(candidate_text)
    return _skeleton(program) != _skeleton(candidate)


def read_program(path: Path | str) -> SourceProgram:
    """Load a program file, normalizing line endings but remembering them."""
    try:
        raw = Path(path).read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read program {path}: {exc}") from exc
    newline = "\r\n" if "\r\n" in raw else "\n"
    return extract_blocks(raw.replace("\r\n", "\n"), origin_path=Path(path), newline=newline)


def write_program(path: Path | str, program: SourceProgram) -> None:
    text = program.full_text
    if program.newline != "\n":
        text = text.replace("\n", program.newline)
    Path(path).write_bytes(text.encode("utf-8"))
