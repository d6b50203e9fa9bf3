"""Word-vector providers and the character-to-word alignment.

The encoder can consume a word-level embedding alongside each grapheme. Two
providers exist: a deterministic hashed provider (salted SHA-256 of the word
seeds a generator that draws a unit-norm gaussian vector) and a file-backed
table with an <unk> fallback row. Alignment maps every character position to
its word's vector; spaces take the following word's vector, and a trailing
space gets zeros.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

UNK = "<unk>"


class HashedWordVectors:
    """Pseudo-embeddings: fixed unit vectors derived from the word's hash."""

    def __init__(self, dim: int, salt: str = "word-vec"):
        self.dim = dim
        self.salt = salt
        self._cache: Dict[str, np.ndarray] = {}

    def __call__(self, word: str) -> np.ndarray:
        v = self._cache.get(word)
        if v is None:
            digest = hashlib.sha256(f"{self.salt}:{word}".encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            g = np.random.default_rng(seed)
            v = g.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            self._cache[word] = v
        return v


class FileWordVectors:
    """Plain-text table: one ``word v1 .. vD`` row per line; needs an <unk> row."""

    def __init__(self, table: Dict[str, np.ndarray], dim: int):
        if UNK not in table:
            raise ValueError(f"word-vector table must contain an {UNK} row")
        self.table = table
        self.dim = dim

    @classmethod
    def load(cls, path) -> "FileWordVectors":
        table: Dict[str, np.ndarray] = {}
        dim = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            parts = line.split()
            word = parts[0]
            vec = np.array([float(x) for x in parts[1:]])
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"inconsistent vector width for {word!r}")
            table[word] = vec
        if dim is None:
            raise ValueError(f"{path}: empty word-vector file")
        return cls(table, dim)

    def save(self, path) -> None:
        lines = []
        for word, vec in self.table.items():
            lines.append(word + " " + " ".join(repr(float(x)) for x in vec))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def __call__(self, word: str) -> np.ndarray:
        return self.table.get(word, self.table[UNK])


def align_word_vectors(text: str, provider, dim: int) -> np.ndarray:
    """(len(text), dim) matrix assigning each character its word's vector.

    text is normalized (single spaces). A space aligns to the word that
    follows it; a trailing space aligns to zeros.
    """
    out = np.zeros((len(text), dim))
    if not text:
        return out
    words = text.split(" ")
    starts: List[int] = []
    pos = 0
    for w in words:
        starts.append(pos)
        pos += len(w) + 1
    vecs = [provider(w) if w else np.zeros(dim) for w in words]
    wi = 0
    for i, ch in enumerate(text):
        while wi + 1 < len(words) and i >= starts[wi + 1]:
            wi += 1
        if ch == " ":
            # the separator belongs to the next word, if any
            out[i] = vecs[wi + 1] if wi + 1 < len(words) else 0.0
        else:
            out[i] = vecs[wi]
    return out
