"""
Domain-aware selection of monolingual sentences by decaying n-gram features.

Every distinct n-gram (order 1..max_order) of the test source side is a feature with initial weight 1.
A sentence scores the summed current weight of its distinct features divided by its token count. Sentences
are picked greedily, best first, lowest index on ties; after each pick the weight of every feature of the
picked sentence is multiplied by the decay factor, so later picks favour n-grams not yet covered.
"""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from selftrain_mt.common import ConfigError, ContractError, CorpusError, InputError, logger
from selftrain_mt.formatter import TsvFormatter

DEFAULT_MAX_ORDER = 3
DEFAULT_DECAY = 0.5
RANKING_HEADER = ("rank", "sentence_index", "score")


def _check_decay(decay: float) -> None:
    if not 0.0 < decay < 1.0:
        raise ConfigError(f"Decay factor must be in (0, 1), got {decay}")


def sentence_ngrams(tokens: Sequence[str], max_order: int) -> FrozenSet[str]:
    """Distinct n-grams of orders 1..max_order, tokens joined by single spaces."""
    return frozenset(
        " ".join(tokens[i : i + n]) for n in range(1, max_order + 1) for i in range(len(tokens) - n + 1)
    )


@dataclass(slots=True)
class FeatureTable:
    initial: Dict[str, float]
    counts: Dict[str, int]
    max_order: int = DEFAULT_MAX_ORDER
    decay: float = DEFAULT_DECAY

    def __post_init__(self) -> None:
        if self.max_order < 1:
            raise ConfigError(f"N-gram order must be >= 1, got {self.max_order}")
        _check_decay(self.decay)

    def __len__(self) -> int:
        return len(self.initial)

    def __contains__(self, feature: object) -> bool:
        return feature in self.initial

    def weight(self, feature: str) -> float:
        return self.initial[feature] * self.decay ** self.counts[feature]

    def mark_selected(self, features: FrozenSet[str]) -> None:
        for feature in features:
            if feature in self.initial:
                self.counts[feature] += 1


def extract_features(
    test_sentences: Sequence[str], max_order: int = DEFAULT_MAX_ORDER, decay: float = DEFAULT_DECAY
) -> FeatureTable:
    if max_order < 1:
        raise ConfigError(f"N-gram order must be >= 1, got {max_order}")
    if not test_sentences:
        raise InputError("Cannot extract selection features from an empty test set")
    features: set[str] = set()
    for sentence in test_sentences:
        features |= sentence_ngrams(sentence.split(), max_order)
    ordered = sorted(features)
    return FeatureTable(
        initial={f: 1.0 for f in ordered}, counts={f: 0 for f in ordered}, max_order=max_order, decay=decay
    )


def _score(features: FrozenSet[str], length: int, table: FeatureTable) -> float:
    if length == 0:
        return 0.0
    return sum(table.weight(f) for f in sorted(features)) / length


def score_sentence(sentence: str | Sequence[str], table: FeatureTable) -> float:
    tokens = sentence.split() if isinstance(sentence, str) else list(sentence)
    features = frozenset(f for f in sentence_ngrams(tokens, table.max_order) if f in table)
    return _score(features, len(tokens), table)


@dataclass
class SelectionState:
    """Everything needed to continue a greedy selection exactly where it stopped."""

    table: FeatureTable
    features: List[FrozenSet[str]]  # per sentence, restricted to table features
    lengths: List[int]
    # entries are (-score when pushed, sentence index); scores only ever go down
    queue: List[Tuple[float, int]]
    selected: List[int] = field(default_factory=list)

    @property
    def remaining(self) -> int:
        return len(self.lengths) - len(self.selected)

    def current_score(self, index: int) -> float:
        return _score(self.features[index], self.lengths[index], self.table)

    def take(self, count: int) -> List[Tuple[int, float]]:
        """Pop `count` sentences, rescoring stale queue entries lazily."""
        picked: List[Tuple[int, float]] = []
        while len(picked) < count:
            neg_score, index = heapq.heappop(self.queue)
            score = self.current_score(index)
            if score != -neg_score:
                heapq.heappush(self.queue, (-score, index))
                continue
            picked.append((index, score))
            self.selected.append(index)
            self.table.mark_selected(self.features[index])
        return picked


@dataclass(eq=False)
class SelectionRanking:
    entries: List[Tuple[int, float]]  # (sentence index, score when picked), in selection order
    max_order: int
    decay: float
    state: Optional[SelectionState] = field(default=None, repr=False)

    @property
    def indices(self) -> List[int]:
        return [index for index, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_tsv(self, first_rank: int = 1) -> str:
        rows = [(first_rank + i, index, score) for i, (index, score) in enumerate(self.entries)]
        return TsvFormatter.to_tsv(RANKING_HEADER, rows)

    def write(self, path: str | Path, first_rank: int = 1) -> None:
        Path(path).write_text(self.to_tsv(first_rank), encoding="utf-8")

    @staticmethod
    def read(path: str | Path, max_order: int = DEFAULT_MAX_ORDER, decay: float = DEFAULT_DECAY) -> SelectionRanking:
        """Load a ranking file; the result carries no selection state and cannot be continued."""
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Ranking file not found: {path}")
        rows = TsvFormatter.parse_tsv(path.read_text(encoding="utf-8"))
        try:
            entries = [(int(row["sentence_index"]), float(row["score"])) for row in rows]
        except (KeyError, ValueError) as e:
            raise CorpusError(f"{path}: malformed ranking file ({e})") from e
        return SelectionRanking(entries, max_order, decay)


def _start_state(corpus: Sequence[str], table: FeatureTable) -> SelectionState:
    tokenized = [sentence.split() for sentence in corpus]
    features = [
        frozenset(f for f in sentence_ngrams(tokens, table.max_order) if f in table) for tokens in tokenized
    ]
    lengths = [len(tokens) for tokens in tokenized]
    state = SelectionState(table=table, features=features, lengths=lengths, queue=[])
    state.queue = [(-state.current_score(i), i) for i in range(len(corpus))]
    heapq.heapify(state.queue)
    return state


def select(
    corpus: Sequence[str], table: FeatureTable, n: int, decay: Optional[float] = None
) -> SelectionRanking:
    """The n sentences nearest to the test domain, nearest first. The given table is not modified."""
    if not 0 < n <= len(corpus):
        raise InputError(f"Cannot select {n} sentences from a corpus of {len(corpus)}")
    working = copy.deepcopy(table)
    if decay is not None:
        _check_decay(decay)
        working.decay = decay
    state = _start_state(corpus, working)
    entries = state.take(n)
    logger.info(f"Selected {n} of {len(corpus)} monolingual sentences ({len(working)} features, decay {working.decay})")
    return SelectionRanking(entries, working.max_order, working.decay, state)


def next_slice(previous: SelectionRanking, corpus: Sequence[str], k: int) -> SelectionRanking:
    """The next k sentences of the same greedy run; `previous` stays usable."""
    if previous.state is None:
        raise ContractError("Ranking carries no selection state (was it read from a file?)")
    if len(previous.state.lengths) != len(corpus):
        raise ContractError(f"Ranking was built on {len(previous.state.lengths)} sentences, corpus has {len(corpus)}")
    if k < 0 or k > previous.state.remaining:
        raise InputError(f"Cannot take {k} more sentences, {previous.state.remaining} remain")
    state = copy.deepcopy(previous.state)
    entries = state.take(k)
    return SelectionRanking(entries, previous.max_order, previous.decay, state)


def fraction_size(total: int, numerator: int, denominator: int) -> int:
    """ceil(total * numerator / denominator) in exact integer arithmetic."""
    if denominator <= 0 or numerator < 0 or total < 0:
        raise ConfigError(f"Invalid fraction {numerator}/{denominator} of {total}")
    return -(-total * numerator // denominator)


def cumulative_sizes(slices: Sequence[int]) -> List[int]:
    totals: List[int] = []
    running = 0
    for size in slices:
        running += size
        totals.append(running)
    return totals
