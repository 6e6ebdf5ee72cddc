"""Sentence-level BLEU-4, ROUGE-L and an exact-match METEOR variant.

All three work on lowercased word tokens produced by :func:`tokenize`.
METEOR here has no stemming or synonym stages, so its scores are not
comparable with resource-backed METEOR implementations.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

_STRIP = '.,:;!?"()'
EXHAUSTIVE_ALIGNMENT_MAX = 10

Tokens = Sequence[str]


def tokenize(text: str) -> list[str]:
    text = text.lower()
    for ch in _STRIP:
        text = text.replace(ch, "")
    return text.split()


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# --- BLEU -------------------------------------------------------------------


def bleu_counts(candidate: Tokens, reference: Tokens, max_n: int = 4) -> tuple[list[int], list[int]]:
    """Clipped n-gram matches and candidate n-gram totals for n = 1..max_n."""
    matches, totals = [], []
    for n in range(1, max_n + 1):
        cand = ngrams(candidate, n)
        ref = ngrams(reference, n)
        matches.append(sum(min(c, ref[g]) for g, c in cand.items()))
        totals.append(max(len(candidate) - n + 1, 0))
    return matches, totals


def _bleu_from_counts(
    matches: Sequence[int], totals: Sequence[int], cand_len: int, ref_len: int, smooth: str | None
) -> float:
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if smooth == "add-one" and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = 1.0 if cand_len >= ref_len else math.exp(1 - ref_len / cand_len)
    return bp * math.exp(log_sum / len(matches))


def bleu4(candidate: Tokens, reference: Tokens, smooth: str | None = None) -> float:
    """Sentence BLEU-4 with uniform weights and brevity penalty.

    Without smoothing any zero n-gram precision gives 0. ``smooth="add-one"``
    adds one to numerator and denominator of the 2- to 4-gram precisions.
    """
    if smooth not in (None, "add-one"):
        raise ValueError(f"unknown smoothing {smooth!r}")
    matches, totals = bleu_counts(candidate, reference)
    return _bleu_from_counts(matches, totals, len(candidate), len(reference), smooth)


def corpus_bleu4(pairs: Sequence[tuple[Tokens, Tokens]], smooth: str | None = None) -> float:
    """BLEU-4 over n-gram counts and lengths pooled across all pairs."""
    matches, totals = [0] * 4, [0] * 4
    c_len = r_len = 0
    for cand, ref in pairs:
        m, t = bleu_counts(cand, ref)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c_len += len(cand)
        r_len += len(ref)
    return _bleu_from_counts(matches, totals, c_len, r_len, smooth)


# --- ROUGE-L ----------------------------------------------------------------


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """ROUGE-L F1 (beta = 1)."""
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    return 2 * p * r / (p + r)


# --- METEOR (exact match only) ----------------------------------------------


def _exhaustive_alignment(candidate: Tokens, reference: Tokens) -> tuple[int, int]:
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int) -> tuple[int, int]:
        # (matches, -chunks) for candidate[i:], maximised lexicographically
        if i == len(candidate):
            return 0, 0
        result = best(i + 1, used, -1)
        for j in positions.get(candidate[i], ()):
            if used >> j & 1:
                continue
            m, neg_chunks = best(i + 1, used | 1 << j, j)
            opens = 0 if prev >= 0 and j == prev + 1 else 1
            result = max(result, (m + 1, neg_chunks - opens))
        return result

    matches, neg_chunks = best(0, 0, -1)
    return matches, -neg_chunks


def _greedy_alignment(candidate: Tokens, reference: Tokens) -> tuple[int, int]:
    free: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        free.setdefault(tok, []).append(j)
    matches = chunks = 0
    prev = -1
    for tok in candidate:
        slots = free.get(tok)
        if not slots:
            prev = -1
            continue
        j = prev + 1 if prev >= 0 and prev + 1 in slots else slots[0]
        slots.remove(j)
        matches += 1
        if not (prev >= 0 and j == prev + 1):
            chunks += 1
        prev = j
    return matches, chunks


def align(candidate: Tokens, reference: Tokens) -> tuple[int, int, str]:
    """Unigram alignment with the most matches, then the fewest chunks.

    Returns ``(matches, chunks, mode)``; mode is ``"exhaustive"`` when the
    match count is at most ``EXHAUSTIVE_ALIGNMENT_MAX`` and ``"greedy"``
    beyond that.
    """
    c, r = Counter(candidate), Counter(reference)
    m = sum(min(n, r[t]) for t, n in c.items())
    if m == 0:
        return 0, 0, "exhaustive"
    if m <= EXHAUSTIVE_ALIGNMENT_MAX:
        return (*_exhaustive_alignment(tuple(candidate), tuple(reference)), "exhaustive")
    return (*_greedy_alignment(candidate, reference), "greedy")


def _meteor_from_alignment(m: int, chunks: int, cand_len: int, ref_len: int) -> float:
    if m == 0:
        return 0.0
    p, r = m / cand_len, m / ref_len
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


def meteor_lite(candidate: Tokens, reference: Tokens) -> float:
    m, chunks, _ = align(candidate, reference)
    return _meteor_from_alignment(m, chunks, len(candidate), len(reference))


# --- corpus evaluation ------------------------------------------------------


@dataclass
class TextScore:
    bleu4: float
    rouge_l: float
    meteor: float
    detail: dict = field(default_factory=dict)


def score_text_pair(candidate: Tokens, reference: Tokens, smooth: str | None = None) -> TextScore:
    matches, totals = bleu_counts(candidate, reference)
    m, chunks, mode = align(candidate, reference)
    return TextScore(
        bleu4=bleu4(candidate, reference, smooth),
        rouge_l=rouge_l(candidate, reference),
        meteor=_meteor_from_alignment(m, chunks, len(candidate), len(reference)),
        detail={
            "ngram_matches": matches,
            "ngram_totals": totals,
            "candidate_length": len(candidate),
            "reference_length": len(reference),
            "lcs_length": lcs_length(candidate, reference),
            "unigram_matches": m,
            "chunks": chunks,
            "alignment_mode": mode,
        },
    )


def evaluate_corpus(
    pairs: Sequence[tuple[Tokens, Tokens]], smooth: str | None = None, corpus_bleu: bool = False
) -> tuple[TextScore, list[TextScore]]:
    """Macro-average of per-pair scores; returns ``(aggregate, per_pair)``.

    With ``corpus_bleu`` the aggregate BLEU uses pooled counts instead of the
    mean of sentence scores.
    """
    if not pairs:
        raise ValueError("cannot evaluate an empty corpus")
    per_pair = [score_text_pair(c, r, smooth) for c, r in pairs]
    n = len(per_pair)
    agg = TextScore(
        bleu4=math.fsum(s.bleu4 for s in per_pair) / n,
        rouge_l=math.fsum(s.rouge_l for s in per_pair) / n,
        meteor=math.fsum(s.meteor for s in per_pair) / n,
        detail={
            "pairs": n,
            "bleu_mode": "corpus" if corpus_bleu else "sentence-mean",
            "smoothing": smooth or "none",
            "rouge_variant": "ROUGE-L F1 (beta=1)",
            "meteor_variant": "exact-match only, alpha=0.9, beta=3, gamma=0.5",
        },
    )
    if corpus_bleu:
        agg.bleu4 = corpus_bleu4(pairs, smooth)
    return agg, per_pair
