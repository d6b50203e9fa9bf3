"""Deterministic synthetic corpus for end-to-end exercises.

A miniature language with fixed spelling-to-sound rules: a handful of
digraphs map to single phonemes, every other letter maps one-to-one, so a
character model can reach zero error in principle. Four special words carry
two pronunciations each; which one applies is decided by the word directly
in front of them (the cue). The cue-to-variant rule is the sign of the
first component of the cue's hashed word vector: a model fed those vectors
can read the rule off a single feature and generalize it to cues never seen
next to the special words, while a character-only model can only memorize
cue spellings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import arpabet_to_ipa
from .wordvec import HashedWordVectors

# Ordered spelling rules; digraphs take precedence over single letters.
DIGRAPH_RULES: Dict[str, Tuple[str, ...]] = {
    "SH": ("SH",), "CH": ("CH",), "TH": ("TH",), "NG": ("NG",),
    "EE": ("IY",), "OO": ("UW",),
}
LETTER_RULES: Dict[str, Tuple[str, ...]] = {
    "A": ("AE",), "B": ("B",), "C": ("K",), "D": ("D",), "E": ("EH",),
    "F": ("F",), "G": ("G",), "H": ("HH",), "I": ("IH",), "J": ("JH",),
    "K": ("K",), "L": ("L",), "M": ("M",), "N": ("N",), "O": ("AA",),
    "P": ("P",), "Q": ("K",), "R": ("R",), "S": ("S",), "T": ("T",),
    "U": ("AH",), "V": ("V",), "W": ("W",), "X": ("K", "S"), "Y": ("Y",),
    "Z": ("Z",),
}

_ONSETS = ["B", "D", "F", "G", "K", "L", "M", "N", "P", "R", "S", "T", "V", "Z", "SH", "CH", "TH"]
_VOWELS = ["A", "E", "I", "O", "U", "EE", "OO"]
_CODAS = ["", "", "B", "D", "G", "K", "L", "M", "N", "P", "R", "S", "T", "Z", "NG"]

# The four two-pronunciation words. Variant "a" follows the spelling rules;
# variant "b" swaps the first vowel phoneme.
HOMOGRAPHS: Tuple[str, ...] = ("TEEBO", "SAKEL", "DORUM", "CHEENO")
_VOWEL_SWAP = {
    "AE": "OW", "EH": "AY", "IH": "EY", "AA": "UW", "AH": "IY",
    "IY": "OW", "UW": "EY", "OW": "AY", "EY": "AW",
}
_VOWEL_PHONES = set(_VOWEL_SWAP)


def spell(word: str) -> List[str]:
    """Rule pronunciation of an uppercase word (digraphs before letters)."""
    out: List[str] = []
    i = 0
    while i < len(word):
        pair = word[i : i + 2]
        if pair in DIGRAPH_RULES:
            out.extend(DIGRAPH_RULES[pair])
            i += 2
            continue
        rule = LETTER_RULES.get(word[i])
        if rule is None:
            raise ValueError(f"no rule for character {word[i]!r}")
        out.extend(rule)
        i += 1
    return out


def variant_pronunciations(word: str) -> Dict[str, List[str]]:
    """Variant "a" by rule; variant "b" with the first vowel swapped."""
    a = spell(word)
    b = list(a)
    for i, p in enumerate(b):
        if p in _VOWEL_PHONES:
            b[i] = _VOWEL_SWAP[p]
            break
    else:
        raise ValueError(f"{word} has no vowel to swap")
    return {"a": a, "b": b}


def generate_words(rng: np.random.Generator, n: int) -> List[str]:
    """n unique pronounceable words of one to three syllables."""
    words: List[str] = []
    seen = set(HOMOGRAPHS)
    while len(words) < n:
        n_syll = int(rng.integers(1, 4))
        parts = []
        for _ in range(n_syll):
            parts.append(str(rng.choice(_ONSETS)))
            parts.append(str(rng.choice(_VOWELS)))
            parts.append(str(rng.choice(_CODAS)))
        w = "".join(parts)
        if w in seen or not 3 <= len(w) <= 9:
            continue
        seen.add(w)
        words.append(w)
    return words


@dataclass
class ToyCorpus:
    """Raw inputs for the dataset builders, plus the cue bookkeeping."""

    lexicon: Dict[str, List[List[str]]]
    sentences: List[str]
    homograph_records: List[Dict]
    heldout_records: List[Dict]  # same shape, cues unseen next to homographs
    glossary: Dict[str, Dict[str, str]]  # word -> variant label -> IPA
    cue_words_train: List[str]
    cue_words_heldout: List[str]
    vec_dim: int
    salt: str

    def lexicon_text(self) -> str:
        lines = [";;; generated lexicon"]
        for w in sorted(self.lexicon):
            for k, pron in enumerate(self.lexicon[w]):
                head = w if k == 0 else f"{w}({k + 1})"
                lines.append(f"{head}  {' '.join(pron)}")
        return "\n".join(lines) + "\n"


def _cue_variant(provider: HashedWordVectors, cue: str) -> str:
    return "a" if provider(cue)[0] > 0 else "b"


def _pick_balanced_cues(
    provider: HashedWordVectors, candidates: Sequence[str], per_sign: int
) -> List[str]:
    pos = [w for w in candidates if provider(w)[0] > 0][:per_sign]
    neg = [w for w in candidates if provider(w)[0] <= 0][:per_sign]
    if len(pos) < per_sign or len(neg) < per_sign:
        raise ValueError("not enough cue candidates of each sign")
    return pos + neg


def _homograph_sentence(
    rng: np.random.Generator,
    vocab: Sequence[str],
    cue: str,
    hg: str,
    before: Tuple[int, int] = (0, 3),
    after: Tuple[int, int] = (1, 3),
) -> Dict:
    n_before = int(rng.integers(*before))
    n_after = int(rng.integers(*after))
    pre = [str(rng.choice(vocab)) for _ in range(n_before)]
    post = [str(rng.choice(vocab)) for _ in range(n_after)]
    words = pre + [cue, hg] + post
    sentence = " ".join(words)
    start = sum(len(w) + 1 for w in words[: len(pre) + 1])
    return {
        "sentence": sentence,
        "homograph": hg,
        "variant": None,  # filled by the caller
        "start": start,
        "end": start + len(hg),
    }


def build_toy_corpus(
    seed: int = 0,
    n_words: int = 200,
    n_sentences: int = 2000,
    n_homograph_sentences: int = 600,
    n_heldout_sentences: int = 240,
    cues_per_sign: int = 12,
    heldout_cues_per_sign: int = 6,
    vec_dim: int = 16,
    salt: str = "toy-cues",
    sentence_words: Tuple[int, int] = (3, 7),
    hg_context: Tuple[Tuple[int, int], Tuple[int, int]] = ((0, 3), (1, 3)),
) -> ToyCorpus:
    """Generate the full raw corpus from one seed.

    sentence_words and hg_context take half-open integer ranges; smaller
    ranges give shorter sentences, which train much faster.
    """
    rng = np.random.default_rng(seed)
    provider = HashedWordVectors(vec_dim, salt=salt)

    words = generate_words(rng, n_words)
    lexicon: Dict[str, List[List[str]]] = {w: [spell(w)] for w in words}
    glossary: Dict[str, Dict[str, str]] = {}
    for hg in HOMOGRAPHS:
        prons = variant_pronunciations(hg)
        lexicon[hg] = [prons["a"]]  # the lexicon lists only the default
        glossary[hg] = {label: arpabet_to_ipa(p) for label, p in prons.items()}

    # prefer short cue words, fall back to the rest of the vocabulary
    ranked = sorted(words, key=lambda w: (len(w) > 6, rng.random()))
    candidates = list(ranked)
    train_cues = _pick_balanced_cues(provider, candidates, cues_per_sign)
    rest = [w for w in candidates if w not in set(train_cues)]
    heldout_cues = _pick_balanced_cues(provider, rest, heldout_cues_per_sign)

    sentences = []
    for _ in range(n_sentences):
        k = int(rng.integers(*sentence_words))
        sentences.append(" ".join(str(rng.choice(words)) for _ in range(k)))

    def make_records(n: int, cues: Sequence[str]) -> List[Dict]:
        recs = []
        for i in range(n):
            hg = HOMOGRAPHS[i % len(HOMOGRAPHS)]
            cue = str(rng.choice(cues))
            rec = _homograph_sentence(rng, words, cue, hg, *hg_context)
            rec["variant"] = _cue_variant(provider, cue)
            recs.append(rec)
        return recs

    return ToyCorpus(
        lexicon=lexicon,
        sentences=sentences,
        homograph_records=make_records(n_homograph_sentences, train_cues),
        heldout_records=make_records(n_heldout_sentences, heldout_cues),
        glossary=glossary,
        cue_words_train=train_cues,
        cue_words_heldout=heldout_cues,
        vec_dim=vec_dim,
        salt=salt,
    )


def write_toy_corpus(corpus: ToyCorpus, outdir) -> Dict[str, str]:
    """Write the raw corpus files a build-dataset run consumes."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "lexicon": out / "lexicon.txt",
        "sentences": out / "sentences.txt",
        "homograph_records": out / "homograph_records.jsonl",
        "heldout_records": out / "heldout_records.jsonl",
        "glossary": out / "glossary.json",
    }
    paths["lexicon"].write_text(corpus.lexicon_text(), encoding="utf-8")
    paths["sentences"].write_text("\n".join(corpus.sentences) + "\n", encoding="utf-8")
    for key in ("homograph_records", "heldout_records"):
        recs = getattr(corpus, key)
        with open(paths[key], "w", encoding="utf-8") as f:
            for rec in recs:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    paths["glossary"].write_text(
        json.dumps(corpus.glossary, ensure_ascii=False, indent=1), encoding="utf-8"
    )
    return {k: str(v) for k, v in paths.items()}
