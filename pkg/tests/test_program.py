from __future__ import annotations

import random

import pytest

from splatopt.errors import UnbalancedMarkers, UnknownBlockIndex
from splatopt.program import (
    Modification,
    ModificationSequence,
    apply_modification,
    apply_sequence,
    diff_outside_blocks,
    extract_blocks,
    read_program,
    source_digest,
    write_program,
)

SIMPLE = """\
// header
// EVOLVE-BLOCK-START
float t = 1.0f;
acc += w;
// EVOLVE-BLOCK-END
// footer
"""


def test_extract_single_block():
    program = extract_blocks(SIMPLE)
    assert len(program.blocks) == 1
    block = program.blocks[0]
    assert block.index == 0
    assert block.body == "float t = 1.0f;\nacc += w;\n"
    assert block.start_line == 3
    assert block.end_line == 4
    assert program.full_text == SIMPLE


def test_extract_no_blocks():
    program = extract_blocks("int main() { return 0; }\n")
    assert program.blocks == ()


def test_extract_multiple_blocks_indexed_in_order():
    text = (
        "a\n// EVOLVE-BLOCK-START\nfirst\n// EVOLVE-BLOCK-END\n"
        "b\n// EVOLVE-BLOCK-START\nsecond\n// EVOLVE-BLOCK-END\nc\n"
    )
    program = extract_blocks(text)
    assert [b.index for b in program.blocks] == [0, 1]
    assert [b.body for b in program.blocks] == ["first\n", "second\n"]


def test_nested_start_rejected():
    text = "// EVOLVE-BLOCK-START\n// EVOLVE-BLOCK-START\n// EVOLVE-BLOCK-END\n"
    with pytest.raises(UnbalancedMarkers):
        extract_blocks(text)


def test_stray_end_rejected():
    with pytest.raises(UnbalancedMarkers):
        extract_blocks("x\n// EVOLVE-BLOCK-END\n")


def test_unclosed_block_rejected():
    with pytest.raises(UnbalancedMarkers):
        extract_blocks("// EVOLVE-BLOCK-START\nbody\n")


def test_both_markers_on_one_line_rejected():
    with pytest.raises(UnbalancedMarkers):
        extract_blocks("// EVOLVE-BLOCK-START EVOLVE-BLOCK-END\n")


def _random_program(rng: random.Random) -> str:
    lines = []
    for _ in range(rng.randrange(4)):
        lines.append(f"outer_{rng.randrange(1000)};\n")
    for b in range(rng.randrange(1, 4)):
        lines.append("// EVOLVE-BLOCK-START\n")
        for _ in range(rng.randrange(4)):
            lines.append(f"body_{b}_{rng.randrange(1000)};\n")
        lines.append("// EVOLVE-BLOCK-END\n")
        for _ in range(rng.randrange(3)):
            lines.append(f"between_{rng.randrange(1000)};\n")
    return "".join(lines)


def test_identity_modification_round_trips():
    """Re-applying every block's current body must reproduce the input."""
    for seed in range(50):
        rng = random.Random(seed)
        text = _random_program(rng)
        program = extract_blocks(text)
        same = apply_modification(
            program,
            Modification(
                id="identity",
                description="no-op",
                replacements={b.index: b.body for b in program.blocks},
            ),
        )
        assert same.full_text == text
        empty = apply_modification(
            program, Modification(id="noop", description="", replacements={})
        )
        assert empty.full_text == text


def test_apply_modification_swaps_only_target_body():
    program = extract_blocks(SIMPLE)
    mod = Modification(id="m1", description="swap", replacements={0: "acc = 0;\n"})
    out = apply_modification(program, mod)
    assert out.blocks[0].body == "acc = 0;\n"
    assert out.full_text.startswith("// header\n")
    assert out.full_text.endswith("// footer\n")
    assert program.full_text == SIMPLE  # input untouched


def test_apply_modification_appends_missing_newline():
    program = extract_blocks(SIMPLE)
    out = apply_modification(
        program, Modification(id="m", description="", replacements={0: "x = 1;"})
    )
    assert out.blocks[0].body == "x = 1;\n"


def test_apply_modification_empty_body_removes_lines():
    program = extract_blocks(SIMPLE)
    out = apply_modification(
        program, Modification(id="m", description="", replacements={0: ""})
    )
    assert out.blocks[0].body == ""
    assert "float t" not in out.full_text


def test_unknown_block_index_rejected():
    program = extract_blocks(SIMPLE)
    with pytest.raises(UnknownBlockIndex):
        apply_modification(
            program, Modification(id="m", description="", replacements={3: "x\n"})
        )


def test_disjoint_modifications_commute():
    text = (
        "top\n// EVOLVE-BLOCK-START\none\n// EVOLVE-BLOCK-END\n"
        "mid\n// EVOLVE-BLOCK-START\ntwo\n// EVOLVE-BLOCK-END\nbottom\n"
    )
    program = extract_blocks(text)
    m0 = Modification(id="a", description="", replacements={0: "ONE\n"})
    m1 = Modification(id="b", description="", replacements={1: "TWO\nTWO2\n"})
    ab = apply_modification(apply_modification(program, m0), m1)
    ba = apply_modification(apply_modification(program, m1), m0)
    assert ab.full_text == ba.full_text


def test_sequence_bound_enforced():
    mods = tuple(
        Modification(id=str(i), description="", replacements={}) for i in range(3)
    )
    with pytest.raises(ValueError):
        ModificationSequence(steps=mods, bound=2)
    ModificationSequence(steps=mods, bound=3)
    with pytest.raises(ValueError):
        ModificationSequence(bound=-1)


def test_apply_sequence_runs_in_order():
    program = extract_blocks(SIMPLE)
    seq = ModificationSequence(
        steps=(
            Modification(id="1", description="", replacements={0: "first\n"}),
            Modification(id="2", description="", replacements={0: "second\n"}),
        )
    )
    out = apply_sequence(program, seq)
    assert out.blocks[0].body == "second\n"


def test_diff_outside_blocks_ignores_body_edits():
    program = extract_blocks(SIMPLE)
    edited = apply_modification(
        program, Modification(id="m", description="", replacements={0: "other;\n"})
    )
    assert diff_outside_blocks(program, edited.full_text) is False


def test_diff_outside_blocks_catches_scaffold_edits():
    program = extract_blocks(SIMPLE)
    assert diff_outside_blocks(program, SIMPLE.replace("// footer", "// tail")) is True
    # Dropping a marker pair turns a block into outside text.
    gutted = SIMPLE.replace("// EVOLVE-BLOCK-START\n", "").replace(
        "// EVOLVE-BLOCK-END\n", ""
    )
    assert diff_outside_blocks(program, gutted) is True


def test_diff_outside_blocks_rejects_corrupt_markers():
    program = extract_blocks(SIMPLE)
    with pytest.raises(UnbalancedMarkers):
        diff_outside_blocks(program, SIMPLE.replace("EVOLVE-BLOCK-END", "EVOLVE-BLOCK-EN"))


def test_source_digest_tracks_text():
    a = extract_blocks(SIMPLE)
    b = extract_blocks(SIMPLE.replace("acc", "sum"))
    assert source_digest(a) != source_digest(b)
    assert source_digest(a) == source_digest(extract_blocks(SIMPLE))


def test_read_write_preserves_crlf(tmp_path):
    path = tmp_path / "kernel.cu"
    raw = SIMPLE.replace("\n", "\r\n").encode("utf-8")
    path.write_bytes(raw)
    program = read_program(path)
    assert program.newline == "\r\n"
    assert "\r" not in program.full_text
    out = tmp_path / "copy.cu"
    write_program(out, program)
    assert out.read_bytes() == raw
