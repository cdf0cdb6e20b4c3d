"""GNU Unifont .hex parsing and constant-time glyph lookup.

The .hex format is one glyph per line, ``CODEPOINT:HEXDATA``, where
CODEPOINT is 4-6 uppercase hex digits and HEXDATA encodes 16 bitmap rows
top to bottom: 2 hex chars per row for 8px-wide glyphs (32 chars total),
4 per row for 16px-wide ones (64 chars). The most significant bit of a
row is the leftmost pixel. A small original font covering printable
ASCII ships with the package; pass any real Unifont file for full
coverage.
"""

from __future__ import annotations

import importlib.resources
import io
import os
from dataclasses import dataclass

from .errors import HexParseError

GLYPH_HEIGHT = 16

_HEX_UPPER = set("0123456789ABCDEF")


@dataclass(frozen=True)
class Glyph:
    """One fixed-height bitmap glyph.

    rows holds 16 bitmasks, row 0 at the top; bit (width_px - 1 - x) of a
    row is the pixel at column x, so the MSB is the leftmost pixel.
    """

    codepoint: int
    width_px: int
    rows: tuple[int, ...]

    def __post_init__(self):
        if self.width_px not in (8, 16):
            raise HexParseError(f"glyph width must be 8 or 16, got {self.width_px}")
        if len(self.rows) != GLYPH_HEIGHT:
            raise HexParseError(f"glyph must have 16 rows, got {len(self.rows)}")
        limit = 1 << self.width_px
        if any(not 0 <= r < limit for r in self.rows):
            raise HexParseError("row bitmask does not fit glyph width")

    def pixel(self, x: int, y: int) -> bool:
        return bool(self.rows[y] >> (self.width_px - 1 - x) & 1)

    def popcount(self) -> int:
        return sum(int(r).bit_count() for r in self.rows)

    def to_hex_data(self) -> str:
        """Re-serialize the row data exactly as it appeared in the file."""
        digits = self.width_px // 4
        return "".join(f"{r:0{digits}X}" for r in self.rows)


SOLID_BOX = Glyph(codepoint=-1, width_px=8, rows=(0xFF,) * GLYPH_HEIGHT)


def parse_hex_line(line: str, line_no: int | None = None) -> Glyph:
    """Parse one CODEPOINT:HEXDATA line into a Glyph.

    Both fields must be uppercase hex; the codepoint takes 4-6 digits
    (supplementary planes use 5 or 6) and the data 32 or 64 chars.
    """
    line = line.rstrip("\r\n")
    head, sep, data = line.partition(":")
    if not sep:
        raise HexParseError("missing ':' separator", line_no)
    if not 4 <= len(head) <= 6 or not set(head) <= _HEX_UPPER:
        raise HexParseError(f"bad codepoint field {head!r}", line_no)
    codepoint = int(head, 16)
    if codepoint > 0x10FFFF:
        raise HexParseError(f"codepoint U+{head} beyond Unicode range", line_no)
    if len(data) == 32:
        width = 8
    elif len(data) == 64:
        width = 16
    else:
        raise HexParseError(f"data field must be 32 or 64 hex chars, got {len(data)}", line_no)
    if not set(data) <= _HEX_UPPER:
        raise HexParseError("non-hex digit in data field", line_no)
    step = width // 4
    rows = tuple(int(data[i : i + step], 16) for i in range(0, len(data), step))
    return Glyph(codepoint=codepoint, width_px=width, rows=rows)


class GlyphTable:
    """Immutable codepoint -> Glyph mapping with a total lookup."""

    def __init__(self, entries: dict[int, Glyph], fallback: Glyph, overridden: int = 0):
        self._entries = dict(entries)
        self.fallback = fallback
        self.overridden = overridden

    def __len__(self):
        return len(self._entries)

    def __contains__(self, codepoint: int):
        return codepoint in self._entries

    def lookup(self, codepoint: int) -> Glyph:
        """Return the glyph for codepoint, or the fallback. Never fails."""
        return self._entries.get(codepoint, self.fallback)

    def codepoints(self):
        return self._entries.keys()


def load_glyph_table(source, strict: bool = True) -> GlyphTable:
    """Load a .hex font into a GlyphTable.

    source may be a path, a text stream, or an iterable of lines. Blank
    lines and lines starting with '#' are skipped. In strict mode (the
    default) any malformed line aborts with its line number; in lenient
    mode bad lines are counted and skipped. Duplicate codepoints keep the
    last definition and bump the overridden counter. The fallback glyph
    is U+FFFD when the font defines it, else a solid 8x16 box.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_glyph_table(fh, strict=strict)
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))

    entries: dict[int, Glyph] = {}
    overridden = 0
    skipped = 0
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            glyph = parse_hex_line(line, line_no)
        except HexParseError:
            if strict:
                raise
            skipped += 1
            continue
        if glyph.codepoint in entries:
            overridden += 1
        entries[glyph.codepoint] = glyph

    fallback = entries.get(0xFFFD, SOLID_BOX)
    table = GlyphTable(entries, fallback, overridden)
    table.skipped = skipped
    return table


def builtin_font_path() -> str:
    """Path of the bundled ASCII font file."""
    return str(importlib.resources.files("pixeltower.data") / "builtin8x16.hex")


def load_builtin_table() -> GlyphTable:
    return load_glyph_table(builtin_font_path())
