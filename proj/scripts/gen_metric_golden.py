#!/usr/bin/env python3
"""Regenerate tests/data/metrics_golden.tsv.

Reference implementation of the pinned BLEU/chrF scoring rules, written
against unicodedata directly so the C++ scorers can be checked against an
independently produced set of expected values. The first line stores the
corpus-level scores over all pairs; each following line is
hyp<TAB>ref<TAB>bleu<TAB>chrf where the scores treat that pair as a
one-sentence corpus.

Run from the repository root:  python3 scripts/gen_metric_golden.py
"""

import math
import random
import unicodedata as ud
from collections import Counter
from pathlib import Path


def is_space(ch):
    o = ord(ch)
    return o == 0x20 or 0x09 <= o <= 0x0D or ud.category(ch) in ("Zs", "Zl", "Zp")


def tokenize(text):
    text = ud.normalize("NFC", text)
    toks, cur = [], []
    for ch in text:
        cat = ud.category(ch)
        if is_space(ch):
            if cur:
                toks.append("".join(cur))
                cur = []
        elif cat.startswith("L") or cat == "Nd":
            cur.append(ch)
        else:
            if cur:
                toks.append("".join(cur))
                cur = []
            toks.append(ch)
    if cur:
        toks.append("".join(cur))
    return toks


def ngram_counts(seq, n):
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def clipped(hyp_counts, ref_counts):
    return sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())


def corpus_bleu(hyps, refs):
    assert len(hyps) == len(refs)
    matches, totals = [0] * 4, [0] * 4
    c = r = 0
    for h, ref in zip(hyps, refs):
        ht, rt = tokenize(h), tokenize(ref)
        c += len(ht)
        r += len(rt)
        for n in range(1, 5):
            if len(ht) < n:
                continue
            totals[n - 1] += len(ht) - n + 1
            matches[n - 1] += clipped(ngram_counts(ht, n), ngram_counts(rt, n))
    if c == 0:
        return 0.0
    smooth = 1
    logsum = 0.0
    for n in range(4):
        if matches[n] > 0:
            p = matches[n] / totals[n]
        else:
            smooth *= 2
            p = 1.0 / (smooth * max(totals[n], 1))
        logsum += math.log(p)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(logsum / 4.0)


def corpus_chrf(hyps, refs, beta=2.0):
    assert len(hyps) == len(refs)
    matches, hyp_totals, ref_totals = [0] * 6, [0] * 6, [0] * 6
    for h, ref in zip(hyps, refs):
        hc = [ch for ch in h if not is_space(ch)]
        rc = [ch for ch in ref if not is_space(ch)]
        for n in range(1, 7):
            hyp_totals[n - 1] += max(len(hc) - n + 1, 0)
            ref_totals[n - 1] += max(len(rc) - n + 1, 0)
            matches[n - 1] += clipped(ngram_counts(hc, n), ngram_counts(rc, n))
    f_sum = 0.0
    orders = 0
    for n in range(6):
        if hyp_totals[n] == 0 and ref_totals[n] == 0:
            continue
        orders += 1
        if matches[n] > 0:
            p = matches[n] / hyp_totals[n]
            r = matches[n] / ref_totals[n]
            f_sum += (1 + beta * beta) * p * r / (beta * beta * p + r)
    return 0.0 if orders == 0 else 100.0 * f_sum / orders


def build_pairs():
    rng = random.Random(20240817)
    pairs = [
        # hand-workable anchors
        ("the cat sat on mat", "the cat sat on the mat"),
        ("ab", "abcd"),
        ("perfect copy of the line", "perfect copy of the line"),
        ("", "non empty reference"),
        ("single", "single"),
        ("Hello, world!", "Hello, world!"),
        ("Hello world", "Hello, world!"),
        ("mbote na yo", "mbote na bino"),
        ("numbers 12345 here", "numbers 12345 there"),
        ("café au lait", "café au lait"),
        ("totally unrelated words", "nothing shared at all"),
        ("a b c d e f g", "a b c d e f g h i"),
        ("short", "a considerably longer reference sentence than that"),
        ("东京は晴れ", "东京は雨"),
        ("one two three four", "four three two one"),
    ]
    words_en = "the of water people language child school road year day good new many".split()
    words_ln = "mbote mai bato monoko mwana kelasi nzela mobu mokolo malamu sika mingi".split()
    words_sw = "maji watu lugha mtoto shule barabara mwaka siku nzuri mpya wengi habari".split()
    puncts = [",", ".", "!", "?", ";"]
    pools = [words_en, words_ln, words_sw]
    while len(pairs) < 50:
        pool = rng.choice(pools)
        n = rng.randint(3, 12)
        ref = [rng.choice(pool) for _ in range(n)]
        if rng.random() < 0.5:
            ref.insert(rng.randrange(len(ref) + 1), rng.choice(puncts))
        hyp = list(ref)
        for _ in range(rng.randint(0, 4)):
            op = rng.random()
            if not hyp:
                break
            if op < 0.4:
                hyp[rng.randrange(len(hyp))] = rng.choice(pool)
            elif op < 0.7:
                del hyp[rng.randrange(len(hyp))]
            else:
                hyp.insert(rng.randrange(len(hyp) + 1), rng.choice(pool))
        pairs.append((" ".join(hyp), " ".join(ref)))
    return pairs


def main():
    root = Path(__file__).resolve().parent.parent
    out_path = root / "tests" / "data" / "metrics_golden.tsv"
    pairs = build_pairs()
    hyps = [h for h, _ in pairs]
    refs = [r for _, r in pairs]
    with out_path.open("w") as f:
        f.write(
            "#corpus\t%.6f\t%.6f\n" % (corpus_bleu(hyps, refs), corpus_chrf(hyps, refs))
        )
        for h, r in pairs:
            f.write(
                "%s\t%s\t%.6f\t%.6f\n" % (h, r, corpus_bleu([h], [r]), corpus_chrf([h], [r]))
            )
    print(f"wrote {out_path}: {len(pairs)} pairs")


if __name__ == "__main__":
    main()
