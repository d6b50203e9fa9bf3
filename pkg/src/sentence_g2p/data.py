"""Dataset construction: lexicon parsing, slices, splits, balanced sampling.

Three training slices share one record schema:
  * lexicon: single words, first-listed pronunciation
  * sentence: word sequences, pronunciations joined with the space token
  * homograph: sentences with one tagged word whose pronunciation comes from
    a variant glossary (IPA, converted to the ARPABET-style inventory)

Records serialize as JSONL; ``phn`` holds phoneme symbols with " " as the
word separator so files stay human-readable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .inventory import PHONEMES

_PHONEME_SET = set(PHONEMES)
_STRESS = re.compile(r"\d+$")
_KEEP = re.compile(r"[^A-Z' ]")
_MULTISPACE = re.compile(r" +")


def normalize_text(text: str) -> str:
    """Uppercase, keep letters/apostrophe/space, collapse runs of spaces."""
    up = text.upper()
    kept = _KEEP.sub("", up)
    return _MULTISPACE.sub(" ", kept).strip()


def normalize_offset(text: str, offset: int) -> int:
    """Position in normalize_text(text) of the character at text[offset].

    Only meaningful when text[offset] survives normalization and is not a
    space (word starts qualify): the normalized prefix then ends either at a
    word boundary (one space survives collapsing) or mid-word, and its
    length is exactly the new offset.
    """
    prefix = _MULTISPACE.sub(" ", _KEEP.sub("", text[:offset].upper())).lstrip()
    return len(prefix)


# ---------------------------------------------------------------------------
# Pronunciation lexicon
# ---------------------------------------------------------------------------

_ALT = re.compile(r"^(.(?:.*?)?)\((\d+)\)$")


def parse_lexicon(lines: Iterable[str], log=None) -> Tuple[Dict[str, List[List[str]]], int]:
    """Dictionary-format lexicon: ``WORD  PH PH ..`` with (2)/(3) alternates.

    Stress digits are stripped; ;;; starts a comment line. Lines with a
    symbol outside the phoneme inventory are rejected (and counted).
    """
    entries: Dict[str, List[Tuple[int, List[str]]]] = {}
    rejected = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith(";;;"):
            continue
        parts = line.split()
        head, prons = parts[0], parts[1:]
        m = _ALT.match(head)
        if m:
            word, variant = m.group(1), int(m.group(2))
        else:
            word, variant = head, 1
        word = word.upper()
        phones = [_STRESS.sub("", p) for p in prons]
        bad = [p for p in phones if p not in _PHONEME_SET]
        if bad or not phones:
            rejected += 1
            if log is not None:
                log(f"line {lineno}: rejected {word!r} (bad symbols {bad})")
            continue
        entries.setdefault(word, []).append((variant, phones))
    out = {w: [p for _, p in sorted(vs, key=lambda t: t[0])] for w, vs in entries.items()}
    return out, rejected


def load_lexicon(path, log=None) -> Tuple[Dict[str, List[List[str]]], int]:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        return parse_lexicon(f, log=log)


# Spoken letter names, for acronyms written in capitals that miss the lexicon.
LETTER_NAMES: Dict[str, List[str]] = {
    "A": ["EY"], "B": ["B", "IY"], "C": ["S", "IY"], "D": ["D", "IY"],
    "E": ["IY"], "F": ["EH", "F"], "G": ["JH", "IY"], "H": ["EY", "CH"],
    "I": ["AY"], "J": ["JH", "EY"], "K": ["K", "EY"], "L": ["EH", "L"],
    "M": ["EH", "M"], "N": ["EH", "N"], "O": ["OW"], "P": ["P", "IY"],
    "Q": ["K", "Y", "UW"], "R": ["AA", "R"], "S": ["EH", "S"], "T": ["T", "IY"],
    "U": ["Y", "UW"], "V": ["V", "IY"], "W": ["D", "AH", "B", "AH", "L", "Y", "UW"],
    "X": ["EH", "K", "S"], "Y": ["W", "AY"], "Z": ["Z", "IY"],
}


def acronym_pronunciation(word: str) -> Optional[List[str]]:
    """Letter-by-letter reading; None when any character has no letter name."""
    out: List[str] = []
    for ch in word:
        names = LETTER_NAMES.get(ch)
        if names is None:
            return None
        out.extend(names)
    return out


# ---------------------------------------------------------------------------
# IPA to the ARPABET-style inventory
# ---------------------------------------------------------------------------

IPA_TO_ARPABET: Dict[str, str] = {
    "tʃ": "CH", "dʒ": "JH", "eɪ": "EY", "aɪ": "AY", "aʊ": "AW", "oʊ": "OW",
    "ɔɪ": "OY", "iː": "IY", "i": "IY", "ɪ": "IH", "ɛ": "EH", "e": "EH",
    "æ": "AE", "ʌ": "AH", "ə": "AH", "ɑː": "AA", "ɑ": "AA", "ɒ": "AA",
    "ɔː": "AO", "ɔ": "AO", "ʊ": "UH", "uː": "UW", "u": "UW",
    "ɝ": "ER", "ɚ": "ER", "ɜː": "ER", "ɜ": "ER",
    "θ": "TH", "ð": "DH", "ʃ": "SH", "ʒ": "ZH", "ŋ": "NG",
    "j": "Y", "ɹ": "R", "r": "R", "ɡ": "G", "g": "G",
    "b": "B", "d": "D", "f": "F", "h": "HH", "k": "K", "l": "L",
    "m": "M", "n": "N", "p": "P", "s": "S", "t": "T", "v": "V",
    "w": "W", "z": "Z",
}

_IPA_IGNORE = set("ˈˌ.ː‿ ")

ARPABET_TO_IPA: Dict[str, str] = {
    "AA": "ɑ", "AE": "æ", "AH": "ʌ", "AO": "ɔ", "AW": "aʊ", "AX": "ə",
    "AXR": "ɚ", "AY": "aɪ", "B": "b", "CH": "tʃ", "D": "d", "DH": "ð",
    "EH": "ɛ", "ER": "ɝ", "EY": "eɪ", "F": "f", "G": "ɡ", "HH": "h",
    "IH": "ɪ", "IY": "i", "JH": "dʒ", "K": "k", "L": "l", "M": "m",
    "N": "n", "NG": "ŋ", "OW": "oʊ", "OY": "ɔɪ", "P": "p", "R": "ɹ",
    "S": "s", "SH": "ʃ", "T": "t", "TH": "θ", "UH": "ʊ", "UW": "u",
    "V": "v", "W": "w", "Y": "j", "Z": "z", "ZH": "ʒ",
}


def ipa_to_arpabet(ipa: str) -> List[str]:
    """Greedy longest-match transliteration; raises on unmappable input."""
    out: List[str] = []
    i = 0
    n = len(ipa)
    maxlen = max(len(k) for k in IPA_TO_ARPABET)
    while i < n:
        ch = ipa[i]
        if ch in _IPA_IGNORE:
            i += 1
            continue
        for width in range(min(maxlen, n - i), 0, -1):
            sym = IPA_TO_ARPABET.get(ipa[i : i + width])
            if sym is not None:
                out.append(sym)
                i += width
                break
        else:
            raise ValueError(f"unmappable IPA at position {i}: {ipa[i:]!r}")
    return out


def arpabet_to_ipa(phones: Sequence[str]) -> str:
    return "".join(ARPABET_TO_IPA[p] for p in phones)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class Example:
    id: str
    char: str
    phn: List[str]  # phoneme symbols; " " separates words
    words: List[str]
    homograph_word: Optional[str] = None
    homograph_char_span: Optional[Tuple[int, int]] = None
    homograph_phn_span: Optional[Tuple[int, int]] = None
    variant: Optional[str] = None

    def to_json(self) -> str:
        d = {"id": self.id, "char": self.char, "phn": self.phn, "words": self.words}
        if self.homograph_word is not None:
            d["homograph_word"] = self.homograph_word
            d["homograph_char_span"] = list(self.homograph_char_span)
            d["homograph_phn_span"] = list(self.homograph_phn_span)
            d["variant"] = self.variant
        return json.dumps(d, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "Example":
        d = json.loads(line)
        span_c = d.get("homograph_char_span")
        span_p = d.get("homograph_phn_span")
        return cls(
            id=d["id"],
            char=d["char"],
            phn=list(d["phn"]),
            words=list(d["words"]),
            homograph_word=d.get("homograph_word"),
            homograph_char_span=tuple(span_c) if span_c else None,
            homograph_phn_span=tuple(span_p) if span_p else None,
            variant=d.get("variant"),
        )


def write_jsonl(path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(ex.to_json() + "\n")


def read_jsonl(path) -> List[Example]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(Example.from_json(line))
    return out


def _join_prons(prons: Sequence[List[str]]) -> List[str]:
    phn: List[str] = []
    for i, p in enumerate(prons):
        if i:
            phn.append(" ")
        phn.extend(p)
    return phn


# ---------------------------------------------------------------------------
# Slice builders
# ---------------------------------------------------------------------------


def build_lexicon_slice(lexicon: Dict[str, List[List[str]]]) -> List[Example]:
    """One example per word, first pronunciation only."""
    out = []
    for i, word in enumerate(sorted(lexicon)):
        out.append(
            Example(id=f"lex-{i:06d}", char=word, phn=list(lexicon[word][0]), words=[word])
        )
    return out


@dataclass
class BuildStats:
    built: int = 0
    dropped: int = 0
    reasons: Dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def _resolve_word(word: str, raw_token: str, lexicon) -> Optional[List[str]]:
    pron = lexicon.get(word)
    if pron is not None:
        return list(pron[0])
    if len(raw_token) >= 2 and raw_token.isalpha() and raw_token.isupper():
        return acronym_pronunciation(word)
    return None


def build_sentence_slice(
    sentences: Iterable[str],
    lexicon: Dict[str, List[List[str]]],
    prons_per_sentence: Optional[Iterable[List[List[str]]]] = None,
    harmonize: bool = False,
) -> Tuple[List[Example], BuildStats]:
    """Sentence examples; pronunciations come from the lexicon (first
    variant) unless explicit prons are supplied.

    harmonize replaces every supplied pronunciation with the lexicon's first
    variant when the word is known, making train/test pronunciations agree.
    """
    stats = BuildStats()
    out: List[Example] = []
    pron_iter = iter(prons_per_sentence) if prons_per_sentence is not None else None
    for idx, raw in enumerate(sentences):
        given = next(pron_iter) if pron_iter is not None else None
        text = normalize_text(raw)
        if not text:
            stats.drop("empty")
            continue
        words = text.split(" ")
        raw_tokens = raw.split()
        prons: List[List[str]] = []
        ok = True
        for wi, w in enumerate(words):
            if given is not None and wi < len(given):
                pron = list(given[wi])
                if harmonize and w in lexicon:
                    pron = list(lexicon[w][0])
            else:
                raw_tok = raw_tokens[wi] if wi < len(raw_tokens) else w
                pron = _resolve_word(w, raw_tok, lexicon)
            if pron is None:
                ok = False
                break
            prons.append(pron)
        if not ok:
            stats.drop("oov")
            continue
        out.append(Example(id=f"sent-{idx:06d}", char=text, phn=_join_prons(prons), words=words))
        stats.built += 1
    return out, stats


def build_homograph_slice(
    records: Iterable[Dict],
    lexicon: Dict[str, List[List[str]]],
    glossary: Dict[str, Dict[str, str]],
) -> Tuple[List[Example], BuildStats]:
    """records: {"sentence", "homograph", "variant", "start", "end"} dicts.

    glossary maps homograph word -> variant label -> IPA string. The tagged
    word takes the glossary pronunciation; every other word resolves through
    the lexicon (first variant) or, for capitalized out-of-vocabulary
    tokens, a letter-name expansion. Unresolvable sentences are dropped and
    counted.
    """
    stats = BuildStats()
    out: List[Example] = []
    glossary = {normalize_text(w): dict(v) for w, v in glossary.items()}
    for idx, rec in enumerate(records):
        raw = rec["sentence"]
        label = rec["variant"]
        hg_word = normalize_text(rec["homograph"])
        ipa = glossary.get(hg_word, {}).get(label)
        if ipa is None:
            stats.drop("unknown-variant")
            continue
        try:
            hg_pron = ipa_to_arpabet(ipa)
        except ValueError:
            stats.drop("bad-ipa")
            continue
        text = normalize_text(raw)
        if not text:
            stats.drop("empty")
            continue
        start = normalize_offset(raw, int(rec["start"]))
        # index of the word containing the tagged span
        hg_index = text[:start].count(" ")
        words = text.split(" ")
        if hg_index >= len(words) or words[hg_index] != hg_word:
            # offset drift: fall back to the first occurrence
            if hg_word in words:
                hg_index = words.index(hg_word)
            else:
                stats.drop("span-mismatch")
                continue
        raw_tokens = raw.split()
        prons: List[List[str]] = []
        ok = True
        for wi, w in enumerate(words):
            if wi == hg_index:
                prons.append(list(hg_pron))
                continue
            raw_tok = raw_tokens[wi] if wi < len(raw_tokens) else w
            pron = _resolve_word(w, raw_tok, lexicon)
            if pron is None:
                ok = False
                break
            prons.append(pron)
        if not ok:
            stats.drop("oov")
            continue
        char_start = sum(len(w) + 1 for w in words[:hg_index])
        char_span = (char_start, char_start + len(words[hg_index]))
        phn_start = sum(len(p) + 1 for p in prons[:hg_index])
        phn_span = (phn_start, phn_start + len(hg_pron))
        out.append(
            Example(
                id=f"hg-{idx:06d}",
                char=text,
                phn=_join_prons(prons),
                words=words,
                homograph_word=hg_word,
                homograph_char_span=char_span,
                homograph_phn_span=phn_span,
                variant=label,
            )
        )
        stats.built += 1
    return out, stats


# ---------------------------------------------------------------------------
# Splits and sampling
# ---------------------------------------------------------------------------


def split_dataset(
    examples: List[Example],
    seed: int,
    train_frac: Optional[float] = None,
    valid_frac: Optional[float] = None,
    valid_count: Optional[int] = None,
    test_count: Optional[int] = None,
) -> Tuple[List[Example], List[Example], List[Example]]:
    """Shuffled three-way split.

    Fraction mode floors the train and valid sizes and gives the remainder
    to test; count mode reserves fixed valid/test counts off the end.
    """
    order = np.random.default_rng(seed).permutation(len(examples))
    shuffled = [examples[i] for i in order]
    n = len(shuffled)
    if train_frac is not None:
        if valid_frac is None:
            raise ValueError("fraction mode needs valid_frac")
        n_train = int(np.floor(n * train_frac))
        n_valid = int(np.floor(n * valid_frac))
        if n_train + n_valid > n:
            raise ValueError("fractions exceed the dataset")
    elif valid_count is not None and test_count is not None:
        n_valid = valid_count
        n_train = n - valid_count - test_count
        if n_train < 0:
            raise ValueError("counts exceed the dataset")
    else:
        raise ValueError("give train_frac/valid_frac or valid_count/test_count")
    train = shuffled[:n_train]
    valid = shuffled[n_train : n_train + n_valid]
    test = shuffled[n_train + n_valid :]
    return train, valid, test


def balanced_weights(examples: Sequence[Example]) -> np.ndarray:
    """Sampling weights equalizing homographs and their variants.

    weight = 1 / (n_homographs * n_variants(word) * count(word, variant)),
    so each homograph carries equal mass, split equally over its variants,
    split equally over that variant's examples. Weights sum to 1.
    """
    pair_counts: Dict[Tuple[str, str], int] = {}
    variants: Dict[str, set] = {}
    for ex in examples:
        if ex.homograph_word is None:
            raise ValueError(f"{ex.id}: balanced sampling needs homograph records")
        key = (ex.homograph_word, ex.variant)
        pair_counts[key] = pair_counts.get(key, 0) + 1
        variants.setdefault(ex.homograph_word, set()).add(ex.variant)
    n_words = len(variants)
    w = np.empty(len(examples))
    for i, ex in enumerate(examples):
        key = (ex.homograph_word, ex.variant)
        w[i] = 1.0 / (n_words * len(variants[ex.homograph_word]) * pair_counts[key])
    return w


class BalancedSampler:
    """Draws example indices with the balanced-weight distribution."""

    def __init__(self, examples: Sequence[Example], rng: np.random.Generator):
        self.weights = balanced_weights(examples)
        self.n = len(examples)
        self.rng = rng

    def draw(self, k: int) -> np.ndarray:
        return self.rng.choice(self.n, size=k, p=self.weights)
