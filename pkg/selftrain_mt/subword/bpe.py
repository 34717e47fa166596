from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Set, Tuple

from selftrain_mt.common import ConfigError, ContractError, CorpusError, InputError, logger

END_OF_WORD = "</w>"
CONTINUATION = "@@"

Pair = Tuple[str, str]


@dataclass(slots=True, frozen=True)
class MergeTable:
    merges: Tuple[Pair, ...] = ()
    ranks: Dict[Pair, int] = field(init=False, repr=False, compare=False)
    _segment_cache: Dict[str, Tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ranks: Dict[Pair, int] = {}
        for rank, pair in enumerate(self.merges):
            if pair in ranks:
                raise ContractError(f"Duplicate merge {pair} at positions {ranks[pair]} and {rank}")
            ranks[pair] = rank
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "_segment_cache", {})

    @property
    def merge_count(self) -> int:
        return len(self.merges)

    def segment_word(self, word: str) -> Tuple[str, ...]:
        """Split one word into merged symbols; the last symbol carries the end-of-word marker."""
        cached = self._segment_cache.get(word)
        if cached is not None:
            return cached

        symbols = list(word) + [END_OF_WORD]
        while len(symbols) > 1:
            ranked = [(self.ranks[p], p) for p in zip(symbols, symbols[1:]) if p in self.ranks]
            if not ranked:
                break
            _, best = min(ranked)
            symbols = _merge_pair(symbols, best)

        result = tuple(symbols)
        self._segment_cache[word] = result
        return result

    def save(self, path: str | Path) -> None:
        text = "".join(f"{left} {right}\n" for left, right in self.merges)
        Path(path).write_text(text, encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> MergeTable:
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Merge table not found: {path}")
        merges: List[Pair] = []
        for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            parts = line.split(" ")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CorpusError(f"{path}:{line_number}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        return MergeTable(tuple(merges))


def _merge_pair(symbols: Sequence[str], pair: Pair) -> List[str]:
    merged: List[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def learn_bpe(corpus: Sequence[str], num_merges: int) -> MergeTable:
    """
    Greedy most-frequent-pair merges over whitespace words ending in an end-of-word symbol.
    Ties go to the lexicographically smallest (left, right); learning stops early once no pair
    occurs at least twice.
    """
    if num_merges < 0:
        raise ConfigError(f"num_merges must be >= 0, got {num_merges}")
    word_freqs = Counter(word for line in corpus for word in line.split())
    if not word_freqs:
        raise InputError("Cannot learn BPE merges from an empty corpus")

    words: List[List[str]] = []
    freqs: List[int] = []
    for word, freq in sorted(word_freqs.items()):
        words.append(list(word) + [END_OF_WORD])
        freqs.append(freq)

    pair_counts: Counter[Pair] = Counter()
    pair_words: Dict[Pair, Set[int]] = defaultdict(set)
    for idx, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += freqs[idx]
            pair_words[pair].add(idx)

    merges: List[Pair] = []
    while len(merges) < num_merges and pair_counts:
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        if pair_counts[best] < 2:
            break
        merges.append(best)

        for idx in sorted(pair_words.pop(best, set())):
            old = words[idx]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= freqs[idx]
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
            new = _merge_pair(old, best)
            words[idx] = new
            for pair in zip(new, new[1:]):
                pair_counts[pair] += freqs[idx]
                pair_words[pair].add(idx)
        pair_counts.pop(best, None)

    logger.info(f"Learned {len(merges)} BPE merges (requested {num_merges}) over {len(words)} word types")
    return MergeTable(tuple(merges))


def apply_bpe(sentence: str, merges: MergeTable) -> List[str]:
    """
    Subword tokens; every piece except the last of a word carries the '@@' continuation suffix.

    Words are split on runs of whitespace, so debpe(apply_bpe(s)) is s with its whitespace collapsed to single
    spaces and trimmed. BLEU splits on whitespace as well, so scores are unaffected.
    """
    tokens: List[str] = []
    for word in sentence.split():
        symbols = list(merges.segment_word(word))
        last = symbols[-1]
        if last == END_OF_WORD:
            symbols.pop()
        elif last.endswith(END_OF_WORD):
            symbols[-1] = last[: -len(END_OF_WORD)]
        tokens.extend(s + CONTINUATION for s in symbols[:-1])
        tokens.append(symbols[-1])
    return tokens


def debpe(tokens: Sequence[str] | str) -> str:
    text = tokens if isinstance(tokens, str) else " ".join(tokens)
    text = text.replace(CONTINUATION + " ", "")
    if text.endswith(CONTINUATION):
        text = text[: -len(CONTINUATION)]
    return text
