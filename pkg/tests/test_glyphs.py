import io

import pytest

from pixeltower.errors import HexParseError
from pixeltower.glyphs import (
    GLYPH_HEIGHT,
    SOLID_BOX,
    builtin_font_path,
    load_builtin_table,
    load_glyph_table,
    parse_hex_line,
)

# Independent oracle: decode a hex data field two chars (one byte) at a
# time with plain int() arithmetic, no library code.
def decode_rows_oracle(data):
    step = 2 if len(data) == 32 else 4
    return [int(data[i : i + step], 16) for i in range(0, len(data), step)]


CAP_A = "0041:0000000018242442427E424242420000"


def test_parse_known_glyph_against_hand_decode():
    glyph = parse_hex_line(CAP_A)
    assert glyph.codepoint == 0x41
    assert glyph.width_px == 8
    expected = decode_rows_oracle(CAP_A.split(":")[1])
    assert list(glyph.rows) == expected
    assert glyph.rows[4] == 0x18


def test_parse_blank_space():
    glyph = parse_hex_line("0020:" + "0" * 32)
    assert glyph.width_px == 8
    assert all(r == 0 for r in glyph.rows)
    assert glyph.popcount() == 0


def test_parse_sixteen_wide():
    data = "FFFF" + "0000" * 15
    glyph = parse_hex_line("3042:" + data)
    assert glyph.width_px == 16
    assert glyph.rows[0] == 0xFFFF
    assert len(glyph.rows) == GLYPH_HEIGHT


def test_parse_supplementary_plane_codepoint():
    glyph = parse_hex_line("10FFFF:" + "0" * 32)
    assert glyph.codepoint == 0x10FFFF


@pytest.mark.parametrize(
    "line",
    [
        "0041;" + "0" * 32,  # wrong separator
        "0041:" + "0" * 40,  # illegal length
        "0041:" + "0" * 31 + "G",  # non-hex digit
        "0041:" + "0" * 31 + "a",  # lowercase rejected
        "41:" + "0" * 32,  # codepoint too short
        "0000041:" + "0" * 32,  # codepoint too long
        "004G:" + "0" * 32,  # non-hex codepoint
    ],
)
def test_parse_rejects_malformed(line):
    with pytest.raises(HexParseError):
        parse_hex_line(line)


def test_parse_error_carries_line_number():
    with pytest.raises(HexParseError) as err:
        parse_hex_line("bogus", line_no=7)
    assert "line 7" in str(err.value)


def test_load_two_line_file():
    src = io.StringIO(CAP_A + "\n0042:" + "0" * 32 + "\n")
    table = load_glyph_table(src)
    assert len(table) == 2
    assert 0x41 in table and 0x42 in table


def test_load_skips_comments_and_blanks():
    src = io.StringIO("# comment\n\n" + CAP_A + "\n")
    assert len(load_glyph_table(src)) == 1


def test_fallback_is_ufffd_when_present():
    src = io.StringIO("FFFD:" + "FF" * 16 + "\n" + CAP_A + "\n")
    table = load_glyph_table(src)
    assert table.fallback.codepoint == 0xFFFD
    assert table.fallback.rows[0] == 0xFF


def test_fallback_is_solid_box_otherwise():
    table = load_glyph_table(io.StringIO(CAP_A + "\n"))
    assert table.fallback is SOLID_BOX
    assert all(r == 0xFF for r in table.fallback.rows)


def test_duplicate_codepoint_last_wins():
    second = "0041:" + "FF" * 16
    table = load_glyph_table(io.StringIO(CAP_A + "\n" + second + "\n"))
    assert len(table) == 1
    assert table.overridden == 1
    assert table.lookup(0x41).rows[0] == 0xFF


def test_strict_mode_aborts_with_line_number():
    src = io.StringIO(CAP_A + "\nnot hex\n")
    with pytest.raises(HexParseError) as err:
        load_glyph_table(src)
    assert "line 2" in str(err.value)


def test_lenient_mode_counts_skips():
    src = io.StringIO(CAP_A + "\nnot hex\n0042:" + "0" * 32 + "\n")
    table = load_glyph_table(src, strict=False)
    assert len(table) == 2
    assert table.skipped == 1


def test_lookup_identity_and_fallback():
    table = load_glyph_table(io.StringIO(CAP_A + "\n"))
    assert table.lookup(0x41).codepoint == 0x41
    assert table.lookup(0x10FFFF) is table.fallback


def test_lookup_wide_glyph_in_builtin_font():
    # Oracle: grep the raw hex file for the 3042 line and classify by
    # data length alone.
    widths = {}
    for raw in open(builtin_font_path(), encoding="utf-8"):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        cp, data = raw.split(":")
        widths[int(cp, 16)] = 8 if len(data) == 32 else 16
    table = load_builtin_table()
    assert widths[0x3042] == 16
    assert table.lookup(0x3042).width_px == 16


def test_round_trip_over_builtin_font():
    table = load_builtin_table()
    originals = {}
    for raw in open(builtin_font_path(), encoding="utf-8"):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        cp, data = raw.split(":")
        originals[int(cp, 16)] = data
    assert len(originals) == len(table)
    for cp, data in originals.items():
        assert table.lookup(cp).to_hex_data() == data


def test_every_glyph_has_sixteen_rows():
    table = load_builtin_table()
    for cp in table.codepoints():
        assert len(table.lookup(cp).rows) == GLYPH_HEIGHT


def test_lookup_is_total_over_random_codepoints():
    import random

    table = load_builtin_table()
    rng = random.Random(0)
    for _ in range(200):
        cp = rng.randrange(0, 0x110000)
        glyph = table.lookup(cp)
        assert len(glyph.rows) == GLYPH_HEIGHT
