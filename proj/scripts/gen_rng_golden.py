#!/usr/bin/env python3
"""Regenerate tests/data/rng_golden.tsv.

Independent Python mirror of the splitmix64 generator and the noising
primitives built on it. Python integers and IEEE doubles let us reproduce
the exact draw sequences without sharing any code with the C++ side, so
the golden file catches any drift in the generator or in how the noisers
consume it. Each line is name<TAB>params...<TAB>expected.

Run from the repository root:  python3 scripts/gen_rng_golden.py
"""

import math
from pathlib import Path

U64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK_ID = 4  # fixed by the vocab layout


def mix(z):
    z = ((z ^ (z >> 30)) * MIX1) & U64
    z = ((z ^ (z >> 27)) * MIX2) & U64
    return z ^ (z >> 31)


class Rng:
    def __init__(self, seed):
        self.state = seed & U64

    def next_u64(self):
        self.state = (self.state + GAMMA) & U64
        return mix(self.state)

    def below(self, n):
        # n <= 1 answers without consuming a draw.
        return 0 if n <= 1 else self.next_u64() % n

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def poisson(self, lam):
        u = self.uniform()
        p = cdf = math.exp(-lam)
        k = 0
        while u >= cdf and k < 1 << 20:
            k += 1
            p *= lam / k
            cdf += p
        return k


def derive(seed, a, b):
    return mix((seed + GAMMA * (a + 1) + MIX1 * (b + 1)) & U64)


def partial_shuffle(v, k, rng):
    n = len(v)
    k = min(k, n)
    i = 0
    while i + 1 < n and i < k:
        j = i + rng.below(n - i)
        v[i], v[j] = v[j], v[i]
        i += 1


def sample_positions(n, k, rng):
    idx = list(range(n))
    partial_shuffle(idx, k, rng)
    return idx[:k]


def mask_tokens(ids, ratio, rng):
    k = int(math.floor(ratio * len(ids) + 0.5))
    out = list(ids)
    for pos in sample_positions(len(ids), k, rng):
        out[pos] = MASK_ID
    return out


def delete_tokens(ids, ratio, rng):
    k = int(math.floor(ratio * len(ids) + 0.5))
    gone = set(sample_positions(len(ids), k, rng))
    return [t for i, t in enumerate(ids) if i not in gone]


def infill_spans(ids, ratio, lam, rng):
    n = len(ids)
    k = int(math.floor(ratio * n + 0.5))
    if k == 0:
        return list(ids)
    work = [(t, True) for t in ids]
    removed = 0
    while removed < k:
        length = rng.poisson(lam)
        length = min(length, k - removed)
        run = longest = 0
        for _, orig in work:
            run = run + 1 if orig else 0
            longest = max(longest, run)
        length = min(length, longest)
        if length == 0:
            pos = rng.below(len(work) + 1)
            work.insert(pos, (MASK_ID, False))
            continue
        starts, run = [], 0
        for i, (_, orig) in enumerate(work):
            run = run + 1 if orig else 0
            if run >= length:
                starts.append(i + 1 - length)
        start = starts[rng.below(len(starts))]
        work[start : start + length] = [(MASK_ID, False)]
        removed += length
    return [t for t, _ in work]


def fmt_ids(ids):
    return " ".join(str(t) for t in ids)


def main():
    out = []

    for seed in (0, 1, 42):
        rng = Rng(seed)
        out.append(("u64", str(seed), fmt_ids(rng.next_u64() for _ in range(8))))

    rng = Rng(3)
    out.append(("below", "3 10", fmt_ids(rng.below(10) for _ in range(16))))

    rng = Rng(5)
    out.append(("uniform", "5", " ".join(repr(rng.uniform()) for _ in range(8))))

    rng = Rng(7)
    out.append(("poisson", "7 3.5", fmt_ids(rng.poisson(3.5) for _ in range(16))))
    rng = Rng(8)
    out.append(("poisson", "8 0.4", fmt_ids(rng.poisson(0.4) for _ in range(16))))

    pairs = [(0, 0), (0, 1), (1, 0), (7, 3), (1000000, 2000000)]
    out.append(
        ("derive", "99", fmt_ids(derive(99, a, b) for a, b in pairs))
    )

    rng = Rng(9)
    v = list(range(10))
    partial_shuffle(v, 4, rng)
    out.append(("partial_shuffle", "9 10 4", fmt_ids(v)))

    rng = Rng(11)
    v = list(range(6))
    partial_shuffle(v, 6, rng)
    out.append(("shuffle", "11 6", fmt_ids(v)))

    ids = list(range(10, 18))
    rng = Rng(13)
    out.append(("mask", "13 0.5", fmt_ids(mask_tokens(ids, 0.5, rng))))

    rng = Rng(17)
    out.append(("delete", "17 0.25", fmt_ids(delete_tokens(ids, 0.25, rng))))

    ids = list(range(100, 120))
    rng = Rng(19)
    out.append(("infill", "19 0.35 3.5", fmt_ids(infill_spans(ids, 0.35, 3.5, rng))))
    rng = Rng(20)
    out.append(("infill", "20 0.9 0.1", fmt_ids(infill_spans(ids, 0.9, 0.1, rng))))

    sentences = [[100], [200, 201], [300, 301, 302]]
    rng = Rng(23)
    partial_shuffle(sentences, 3, rng)
    out.append(("permute", "23", " | ".join(fmt_ids(s) for s in sentences)))

    path = Path(__file__).resolve().parent.parent / "tests" / "data" / "rng_golden.tsv"
    with open(path, "w", encoding="utf-8") as f:
        for name, params, expected in out:
            f.write(f"{name}\t{params}\t{expected}\n")
    print(f"wrote {len(out)} cases to {path}")


if __name__ == "__main__":
    main()
