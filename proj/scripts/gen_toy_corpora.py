#!/usr/bin/env python3
"""Builds the bundled toy corpora under data/toy.

Five synthetic languages with 40-word vocabularies. Parallel data is a
word-for-word bijection of English, so a small model can actually learn the
mapping. Lingala and Afrikaans words carry non-ASCII letters to keep the
byte-level paths honest. Deterministic; rerunning rewrites identical files.
"""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "toy"

EN_WORDS = [
    "the", "water", "fish", "river", "big", "small", "we", "see",
    "go", "come", "house", "tree", "sun", "moon", "day", "night",
    "man", "woman", "child", "food", "eat", "drink", "good", "bad",
    "one", "two", "three", "many", "walk", "speak", "know", "love",
    "rain", "stone", "road", "bird", "dog", "fire", "wind", "sleep",
]

SYLLABLES = {
    "af": ["ka", "be", "vo", "du", "së", "graa", "ler", "mi", "po", "ne"],
    "ln": ["ba", "ko", "li", "mo", "nzɛ", "sɔ", "ma", "te", "ya", "ngu"],
    "sw": ["ku", "ma", "wa", "ni", "ji", "ta", "ke", "sha", "mbo", "re"],
    "zu": ["uku", "aba", "ama", "isi", "tha", "ngo", "we", "lu", "zi", "pho"],
}

MONO_LINES = {"en": 800, "af": 400, "ln": 400, "sw": 400, "zu": 400}
PARALLEL_PAIRS = 160


def words_for(lang):
    combos = []
    for a in SYLLABLES[lang]:
        for b in SYLLABLES[lang]:
            combos.append(a + b)
    unique = list(dict.fromkeys(combos))
    assert len(unique) >= len(EN_WORDS), lang
    return unique[: len(EN_WORDS)]


def sentence(rng, words, max_words=9):
    return " ".join(rng.choice(words) for _ in range(rng.randint(3, max_words)))


def write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    vocab = {lang: words_for(lang) for lang in SYLLABLES}
    vocab["en"] = EN_WORDS

    for i, (lang, n) in enumerate(sorted(MONO_LINES.items())):
        rng = random.Random(100 + i)
        write(OUT / f"mono.{lang}.txt", [sentence(rng, vocab[lang]) for _ in range(n)])

    for i, tgt in enumerate(sorted(SYLLABLES)):
        rng = random.Random(200 + i)
        mapping = dict(zip(EN_WORDS, vocab[tgt]))
        rows = []
        for _ in range(PARALLEL_PAIRS):
            en = [rng.choice(EN_WORDS) for _ in range(rng.randint(3, 8))]
            rows.append(" ".join(en) + "\t" + " ".join(mapping[w] for w in en))
        write(OUT / f"para.en-{tgt}.tsv", rows)

    print(f"wrote {len(MONO_LINES)} mono + {len(SYLLABLES)} parallel files to {OUT}")


if __name__ == "__main__":
    main()
