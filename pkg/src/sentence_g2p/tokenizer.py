"""Subword tokenization of phoneme sequences by greedy pair merging.

Training repeatedly merges the most frequent adjacent token pair into a new
token until the vocabulary reaches the target size or no pair occurs at
least twice. Ties on count break lexicographically on the surface pair, so
training is deterministic. Protected ids (the space token, any specials)
never participate in merges.

Encoding replays the learned merges in training order; decoding expands
every token back to base ids, so encode/decode round-trips exactly and
never lengthens a sequence.

Vocabulary file: one token per line, ``id<TAB>surface<TAB>base ids...``
(space-separated ids). Base tokens expand to themselves; merged-token
expansions are re-encoded at load time to recover the merge pairs, so the
file is the single source of truth.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .inventory import SymbolTable

JOINER = "+"


class PhonemeTokenizer:
    """Merged-pair vocabulary over a base symbol table.

    Token ids 0..len(base)-1 are the base symbols; each learned merge
    appends one id. ``surfaces`` joins sub-symbol surfaces with '+'.
    """

    def __init__(
        self,
        base_size: int,
        surfaces: List[str],
        expansions: List[List[int]],
        merges: List[Tuple[int, int]],
    ):
        self.base_size = base_size
        self.surfaces = surfaces
        self.expansions = expansions
        self.merges = merges
        self._merge_rank: Dict[Tuple[int, int], int] = {
            pair: base_size + i for i, pair in enumerate(merges)
        }

    def __len__(self) -> int:
        return len(self.surfaces)

    # -- training -----------------------------------------------------------

    @classmethod
    def train(
        cls,
        corpus: Iterable[Sequence[int]],
        base: SymbolTable,
        target_size: int,
        protected: Optional[Set[int]] = None,
        min_count: int = 2,
    ) -> "PhonemeTokenizer":
        """Learn merges from base-id sequences until len(vocab)==target_size."""
        base_size = len(base)
        if target_size < base_size:
            raise ValueError(f"target size {target_size} below base inventory {base_size}")
        protected = protected or set()
        surfaces = list(base.symbols)
        expansions: List[List[int]] = [[i] for i in range(base_size)]
        merges: List[Tuple[int, int]] = []

        seqs: List[List[int]] = [list(s) for s in corpus]
        counts: Dict[Tuple[int, int], int] = defaultdict(int)
        where: Dict[Tuple[int, int], Set[int]] = defaultdict(set)

        def countable(a: int, b: int) -> bool:
            return a not in protected and b not in protected

        for si, seq in enumerate(seqs):
            for a, b in zip(seq, seq[1:]):
                if countable(a, b):
                    counts[(a, b)] += 1
                    where[(a, b)].add(si)

        while len(surfaces) < target_size:
            best = None
            best_key = None
            for pair, c in counts.items():
                if c < min_count:
                    continue
                key = (-c, surfaces[pair[0]], surfaces[pair[1]])
                if best_key is None or key < best_key:
                    best_key = key
                    best = pair
            if best is None:
                break
            a, b = best
            new_id = len(surfaces)
            surfaces.append(surfaces[a] + JOINER + surfaces[b])
            expansions.append(expansions[a] + expansions[b])
            merges.append(best)

            for si in sorted(where[best]):
                seq = seqs[si]
                out = _apply_merge(seq, a, b, new_id)
                if out is seq:
                    continue
                for x, y in zip(seq, seq[1:]):
                    if countable(x, y):
                        counts[(x, y)] -= 1
                        if counts[(x, y)] == 0:
                            del counts[(x, y)]
                        where[(x, y)].discard(si)
                for x, y in zip(out, out[1:]):
                    if countable(x, y):
                        counts[(x, y)] += 1
                        where[(x, y)].add(si)
                seqs[si] = out

        return cls(base_size, surfaces, expansions, merges)

    # -- encode / decode ------------------------------------------------------

    def encode(self, ids: Sequence[int]) -> List[int]:
        """Base ids -> token ids, replaying merges in training order."""
        out = list(ids)
        for i, (a, b) in enumerate(self.merges):
            out = _apply_merge(out, a, b, self.base_size + i)
        return out

    def decode(self, token_ids: Sequence[int]) -> List[int]:
        """Token ids -> base ids."""
        out: List[int] = []
        for t in token_ids:
            out.extend(self.expansions[t])
        return out

    def expansion_lengths(self, token_ids: Sequence[int]) -> List[int]:
        return [len(self.expansions[t]) for t in token_ids]

    def map_span(self, token_ids: Sequence[int], start: int, end: int) -> Tuple[int, int]:
        """Smallest token range covering base-id range [start, end)."""
        if start >= end:
            raise ValueError("empty span")
        tok_start = None
        pos = 0
        for i, t in enumerate(token_ids):
            nxt = pos + len(self.expansions[t])
            if tok_start is None and nxt > start:
                tok_start = i
            if pos < end:
                tok_end = i + 1
            pos = nxt
        if tok_start is None or pos < end:
            raise ValueError(f"span [{start}, {end}) outside sequence of {pos} base ids")
        return tok_start, tok_end

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        lines = []
        for i, (surf, exp) in enumerate(zip(self.surfaces, self.expansions)):
            lines.append(f"{i}\t{surf}\t{' '.join(str(e) for e in exp)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PhonemeTokenizer":
        surfaces: List[str] = []
        expansions: List[List[int]] = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            idx_s, surf, exp_s = line.split("\t")
            if int(idx_s) != len(surfaces):
                raise ValueError(f"non-contiguous token id {idx_s}")
            surfaces.append(surf)
            expansions.append([int(x) for x in exp_s.split()])
        base_size = 0
        for i, exp in enumerate(expansions):
            if exp == [i]:
                base_size = i + 1
            else:
                break
        # Recover each merge by encoding its expansion with the merges seen
        # so far; a valid file always reduces to exactly two tokens.
        tok = cls(base_size, surfaces[:base_size], expansions[:base_size], [])
        for i in range(base_size, len(surfaces)):
            pair = tok.encode(expansions[i])
            if len(pair) != 2:
                raise ValueError(f"token {i} does not reduce to a merge pair")
            tok.surfaces.append(surfaces[i])
            tok.expansions.append(expansions[i])
            tok.merges.append((pair[0], pair[1]))
            tok._merge_rank[(pair[0], pair[1])] = i
        return tok


def _apply_merge(seq: List[int], a: int, b: int, new_id: int) -> List[int]:
    """Replace non-overlapping (a, b) occurrences left to right.

    Returns the input list object unchanged when the pair never occurs.
    """
    n = len(seq)
    i = 0
    hit = False
    while i < n - 1:
        if seq[i] == a and seq[i + 1] == b:
            hit = True
            break
        i += 1
    if not hit:
        return seq
    out = seq[:i]
    while i < n:
        if i < n - 1 and seq[i] == a and seq[i + 1] == b:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out
