#!/usr/bin/env python3
"""Regenerate include/headscope/detail/unicode_tables.hpp.

The GPT-2 pre-tokenizer is defined in terms of the `regex` module's \\p{L},
\\p{N} and \\s classes, so the tables are taken from that module directly.
"""
import sys
from pathlib import Path

import regex

CLASSES = {
    "kLetterRanges": regex.compile(r"\p{L}"),
    "kNumberRanges": regex.compile(r"\p{N}"),
    "kSpaceRanges": regex.compile(r"\s"),
}


def ranges(pattern):
    out = []
    start = None
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            hit = False
        else:
            hit = pattern.fullmatch(chr(cp)) is not None
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def main():
    root = Path(__file__).resolve().parent.parent
    target = root / "include" / "headscope" / "detail" / "unicode_tables.hpp"
    lines = [
        "// Generated by tools/gen_unicode_tables.py from the Python `regex` module",
        f"// (version {regex.__version__}). Do not edit by hand.",
        "#pragma once",
        "",
        "#include <array>",
        "#include <cstdint>",
        "",
        "namespace headscope::detail {",
        "",
        "struct CodepointRange {",
        "  std::uint32_t first;",
        "  std::uint32_t last;",
        "};",
        "",
    ]
    for name, pattern in CLASSES.items():
        rs = ranges(pattern)
        lines.append(f"inline constexpr std::array<CodepointRange, {len(rs)}> {name}{{{{")
        for a, b in rs:
            lines.append(f"    {{0x{a:X}, 0x{b:X}}},")
        lines.append("}};")
        lines.append("")
    lines.append("}  // namespace headscope::detail")
    target.write_text("\n".join(lines) + "\n")
    print(f"wrote {target}", file=sys.stderr)


if __name__ == "__main__":
    main()
