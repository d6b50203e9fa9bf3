"""Evaluation metrics: phoneme error rate and homograph accuracy."""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = np.arange(len(b) + 1)
    for i, x in enumerate(a, start=1):
        cur = np.empty(len(b) + 1, dtype=np.int64)
        cur[0] = i
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return int(prev[-1])


def strip_token(seq: Sequence, token) -> List:
    return [x for x in seq if x != token]


def per(ref: Sequence, hyp: Sequence, exclude: Optional[object] = None) -> float:
    """Phoneme error rate in percent: 100 * edits / len(ref).

    exclude removes one token (the word separator) from both sides first.
    """
    if exclude is not None:
        ref = strip_token(ref, exclude)
        hyp = strip_token(hyp, exclude)
    if not len(ref):
        raise ValueError("empty reference")
    return 100.0 * levenshtein(ref, hyp) / len(ref)


def corpus_per(
    refs: Iterable[Sequence], hyps: Iterable[Sequence], exclude: Optional[object] = None
) -> float:
    """Corpus-level rate: edits and reference lengths pool before dividing."""
    edits = 0
    total = 0
    n = 0
    for ref, hyp in zip(refs, hyps):
        if exclude is not None:
            ref = strip_token(ref, exclude)
            hyp = strip_token(hyp, exclude)
        edits += levenshtein(ref, hyp)
        total += len(ref)
        n += 1
    if total == 0:
        raise ValueError("empty reference corpus")
    return 100.0 * edits / total


def split_words(seq: Sequence[int], sep: int) -> List[Tuple[int, ...]]:
    """Split an id sequence on a separator id; empty segments are kept."""
    out: List[Tuple[int, ...]] = []
    cur: List[int] = []
    for x in seq:
        if x == sep:
            out.append(tuple(cur))
            cur = []
        else:
            cur.append(x)
    out.append(tuple(cur))
    return out


def word_at(seq: Sequence[int], sep: int, index: int) -> Optional[Tuple[int, ...]]:
    """The index-th separator-delimited word, or None past the end."""
    words = split_words(seq, sep)
    if index < 0 or index >= len(words):
        return None
    return words[index]


def homograph_correct(
    pred: Sequence[int], sep: int, word_index: int, true_word: Sequence[int]
) -> bool:
    """Exact match of the predicted word at the homograph position.

    Predictions with too few words count as incorrect.
    """
    got = word_at(pred, sep, word_index)
    return got is not None and got == tuple(true_word)


def homograph_accuracy(
    items: Iterable[Tuple[Sequence[int], int, Sequence[int]]], sep: int
) -> float:
    """Percentage of exactly-right homograph words.

    items yields (prediction ids, word index, true word ids).
    """
    n = 0
    correct = 0
    for pred, idx, true_word in items:
        n += 1
        correct += homograph_correct(pred, sep, idx, true_word)
    if n == 0:
        raise ValueError("no homograph items")
    return 100.0 * correct / n


class ConfusionTable:
    """Variant-level confusion counts per homograph word.

    Predicted pronunciations are labeled by exact match against the variant
    pronunciations seen so far; anything else counts under ``~other``.
    """

    OTHER = "~other"

    def __init__(self):
        self.counts: Dict[str, Counter] = defaultdict(Counter)
        self.variant_prons: Dict[str, Dict[Tuple[int, ...], str]] = defaultdict(dict)

    def register_variant(self, word: str, label: str, pron: Sequence[int]) -> None:
        self.variant_prons[word][tuple(pron)] = label

    def add(self, word: str, true_label: str, pred_word: Optional[Sequence[int]]) -> None:
        pred_label = self.OTHER
        if pred_word is not None:
            pred_label = self.variant_prons[word].get(tuple(pred_word), self.OTHER)
        self.counts[word][(true_label, pred_label)] += 1

    def rows(self) -> List[Tuple[str, str, str, int]]:
        out = []
        for word in sorted(self.counts):
            for (true_label, pred_label), n in sorted(self.counts[word].items()):
                out.append((word, true_label, pred_label, n))
        return out

    def total(self) -> int:
        return sum(n for _, _, _, n in self.rows())


def evaluate_homographs(
    items: Iterable[Tuple[str, str, Sequence[int], int, Sequence[int]]],
    sep: int,
    variants: Optional[Dict[str, Dict[str, Sequence[int]]]] = None,
) -> Tuple[float, ConfusionTable]:
    """Accuracy percentage plus a variant confusion table.

    items yields (word, variant label, prediction ids, word index, true word
    ids); variants maps word -> label -> pronunciation for labeling wrong
    predictions that match a known alternative.
    """
    table = ConfusionTable()
    if variants:
        for word, by_label in variants.items():
            for label, pron in by_label.items():
                table.register_variant(word, label, pron)
    n = 0
    correct = 0
    for word, label, pred, idx, true_word in items:
        table.register_variant(word, label, true_word)
        got = word_at(pred, sep, idx)
        correct += got == tuple(true_word)
        table.add(word, label, got)
        n += 1
    if n == 0:
        raise ValueError("no homograph items")
    return 100.0 * correct / n, table
