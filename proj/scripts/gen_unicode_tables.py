#!/usr/bin/env python3
"""Regenerate src/unicode_tables.inc and tests/data/nfc_cases.tsv.

The C++ normalizer needs four pieces of Unicode data: full canonical
decompositions, canonical combining classes, primary composition pairs, and
a handful of category range sets (letters, decimal digits, whitespace,
control). Everything is derived from the unicodedata module of the running
Python interpreter; Hangul syllables are excluded because both decomposition
and composition are algorithmic for them.

Run from the repository root:  python3 scripts/gen_unicode_tables.py
"""

import random
import sys
import unicodedata as ud
from pathlib import Path

MAX_CP = 0x110000
HANGUL_BASE, HANGUL_END = 0xAC00, 0xD7A3


def is_surrogate(cp: int) -> bool:
    return 0xD800 <= cp <= 0xDFFF


def full_canonical_decomposition():
    """cp -> fully expanded canonical decomposition (list of cps)."""
    table = {}
    for cp in range(MAX_CP):
        if is_surrogate(cp) or HANGUL_BASE <= cp <= HANGUL_END:
            continue
        ch = chr(cp)
        nfd = ud.normalize("NFD", ch)
        if nfd != ch:
            table[cp] = [ord(c) for c in nfd]
    return table


def combining_classes():
    table = {}
    for cp in range(MAX_CP):
        if is_surrogate(cp):
            continue
        ccc = ud.combining(chr(cp))
        if ccc:
            table[cp] = ccc
    return table


def composition_pairs():
    """(first, second) -> composite, for primary composites only.

    A two-codepoint canonical decomposition is a primary composite exactly
    when NFC maps the pair back to the original character; this check bakes
    in the composition exclusions without needing the exclusion list.
    """
    pairs = {}
    for cp in range(MAX_CP):
        if is_surrogate(cp) or HANGUL_BASE <= cp <= HANGUL_END:
            continue
        decomp = ud.decomposition(chr(cp))
        if not decomp or decomp.startswith("<"):
            continue
        parts = decomp.split()
        if len(parts) != 2:
            continue
        a, b = (int(p, 16) for p in parts)
        if ud.normalize("NFC", chr(a) + chr(b)) == chr(cp):
            pairs[(a, b)] = cp
    return pairs


def category_ranges(pred):
    ranges = []
    start = None
    for cp in range(MAX_CP):
        ok = not is_surrogate(cp) and pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            ranges.append((start, cp - 1))
            start = None
    if start is not None:
        ranges.append((start, MAX_CP - 1))
    return ranges


def cat(cp: int) -> str:
    return ud.category(chr(cp))


def emit_tables(out_path: Path):
    decomp = full_canonical_decomposition()
    ccc = combining_classes()
    comp = composition_pairs()
    letters = category_ranges(lambda cp: cat(cp).startswith("L"))
    digits = category_ranges(lambda cp: cat(cp) == "Nd")
    # Whitespace: ASCII tab..CR plus the Unicode space/line/paragraph separators.
    spaces = category_ranges(
        lambda cp: cp in (0x09, 0x0A, 0x0B, 0x0C, 0x0D) or cat(cp) in ("Zs", "Zl", "Zp")
    )
    # Control (Cc) minus the codepoints already treated as whitespace.
    controls = category_ranges(
        lambda cp: cat(cp) == "Cc" and cp not in (0x09, 0x0A, 0x0B, 0x0C, 0x0D)
    )

    buf = []
    entries = []
    for cp in sorted(decomp):
        seq = decomp[cp]
        entries.append((cp, len(buf), len(seq)))
        buf.extend(seq)

    lines = []
    w = lines.append
    w("// Generated by scripts/gen_unicode_tables.py (Unicode %s). Do not edit." % ud.unidata_version)
    w("")
    w("struct DecompEntry { uint32_t cp; uint32_t offset; uint8_t len; };")
    w("struct CccEntry { uint32_t cp; uint8_t ccc; };")
    w("struct CompEntry { uint64_t key; uint32_t composite; };")
    w("struct CpRange { uint32_t lo; uint32_t hi; };")
    w("")

    def emit_array(name, typ, rows, fmt, per_line):
        w(f"static constexpr {typ} {name}[] = {{")
        for i in range(0, len(rows), per_line):
            w("    " + " ".join(fmt(r) for r in rows[i : i + per_line]))
        w("};")
        w("")

    emit_array("kDecompEntries", "DecompEntry", entries,
               lambda e: "{0x%X,%d,%d}," % e, 6)
    emit_array("kDecompBuffer", "uint32_t", buf,
               lambda v: "0x%X," % v, 12)
    emit_array("kCccEntries", "CccEntry", sorted(ccc.items()),
               lambda e: "{0x%X,%d}," % e, 8)
    comp_rows = sorted(((a << 21) | b, c) for (a, b), c in comp.items())
    emit_array("kCompEntries", "CompEntry", comp_rows,
               lambda e: "{0x%XULL,0x%X}," % e, 5)
    emit_array("kLetterRanges", "CpRange", letters,
               lambda e: "{0x%X,0x%X}," % e, 8)
    emit_array("kDigitRanges", "CpRange", digits,
               lambda e: "{0x%X,0x%X}," % e, 8)
    emit_array("kSpaceRanges", "CpRange", spaces,
               lambda e: "{0x%X,0x%X}," % e, 8)
    emit_array("kControlRanges", "CpRange", controls,
               lambda e: "{0x%X,0x%X}," % e, 8)

    out_path.write_text("\n".join(lines))
    print(f"wrote {out_path}: {len(entries)} decompositions, {len(ccc)} combining classes, "
          f"{len(comp)} compositions, {len(letters)} letter ranges")


def emit_nfc_cases(out_path: Path):
    """Frozen NFC vectors: tab-separated hex-encoded UTF-8 (input, expected)."""
    rng = random.Random(20240811)
    cases = []

    def add(s):
        cases.append((s, ud.normalize("NFC", s)))

    add("")
    add("hello world")
    add("café")                       # e + combining acute -> é
    add("é̂")               # competing marks
    add("Å")                           # angstrom sign -> Å
    add("Ω")                           # ohm sign -> Ω
    add("ḍ̇")                     # d-dot-above + dot-below: reorders
    add("ḍ̇")               # same, fully decomposed
    add("क़")                           # composition exclusion: stays decomposed
    add("क़")                     # qa decomposed form
    add("가")                           # Hangul GA
    add("가")                     # L+V -> GA
    add("각")               # L+V+T -> GAK
    add("각")                     # LV + T -> GAK
    add("Å")                     # A + ring -> Å
    add("Å")
    add("ṩ")                    # s + dot-below + dot-above
    add("ṩ")                    # s + dot-above + dot-below (reorders)
    add("q̣̇")
    add("ά")                     # Greek alpha + acute
    add("ӑ")                     # Cyrillic a + breve
    add("İ")                           # I with dot above (singleton-free)
    add("ﬁ")                           # fi ligature: compat only, NFC keeps
    add("ą́")                    # ogonek + acute
    add("ǭ")                           # o with ogonek and macron, precomposed
    add("ǭ")

    marks = [0x0300, 0x0301, 0x0302, 0x0308, 0x030A, 0x0323, 0x0328, 0x0331, 0x05B4, 0x3099]
    bases = [ord(c) for c in "aeiousznc"] + [0x03B1, 0x03B5, 0x0430, 0x3042, 0x304B, 0x1100, 0xAC00]
    for _ in range(240):
        n = rng.randint(1, 6)
        chars = []
        for _ in range(n):
            r = rng.random()
            if r < 0.45:
                chars.append(chr(rng.choice(bases)))
            elif r < 0.85:
                chars.append(chr(rng.choice(marks)))
            else:
                chars.append(chr(rng.choice([0x1161, 0x11A8, 0x212B, 0x0065, 0x0301])))
        add("".join(chars))

    with out_path.open("w") as f:
        for src, expect in cases:
            f.write(src.encode("utf-8").hex() + "\t" + expect.encode("utf-8").hex() + "\n")
    print(f"wrote {out_path}: {len(cases)} cases")


def main():
    root = Path(__file__).resolve().parent.parent
    emit_tables(root / "src" / "unicode_tables.inc")
    (root / "tests" / "data").mkdir(parents=True, exist_ok=True)
    emit_nfc_cases(root / "tests" / "data" / "nfc_cases.tsv")


if __name__ == "__main__":
    sys.exit(main())
