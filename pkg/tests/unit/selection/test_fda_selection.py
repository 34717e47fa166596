from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pytest

from selftrain_mt.common import ConfigError, ContractError, CorpusError, InputError
from selftrain_mt.selection.fda_selection import (
    SelectionRanking,
    cumulative_sizes,
    extract_features,
    fraction_size,
    next_slice,
    score_sentence,
    select,
    sentence_ngrams,
)


def brute_force(corpus: Sequence[str], test: Sequence[str], n: int, max_order: int, decay: float) -> List[int]:
    """Rescore every remaining sentence after each pick."""
    features = set()
    for sentence in test:
        features |= sentence_ngrams(sentence.split(), max_order)
    counts: Dict[str, int] = {f: 0 for f in features}
    per_sentence = [sorted(sentence_ngrams(s.split(), max_order) & features) for s in corpus]
    lengths = [len(s.split()) for s in corpus]
    chosen: List[int] = []
    for _ in range(n):
        best: Tuple[float, int] = (-1.0, -1)
        for i in range(len(corpus)):
            if i in chosen:
                continue
            score = sum(decay ** counts[f] for f in per_sentence[i]) / lengths[i] if lengths[i] else 0.0
            if score > best[0]:
                best = (score, i)
        chosen.append(best[1])
        for f in per_sentence[best[1]]:
            counts[f] += 1
    return chosen


WORDS = ("a", "b", "c", "d", "e", "f")


def random_corpus(rng: np.random.Generator, size: int, words: Sequence[str] = WORDS) -> List[str]:
    return [" ".join(rng.choice(words, size=int(rng.integers(1, 7)))) for _ in range(size)]


BRUTE_FORCE_VARIANTS = [(1, 0.5), (2, 0.5), (3, 0.5), (3, 0.1), (2, 0.9), (3, 0.99)]


class TestFeatures:
    def test_all_orders_up_to_three(self) -> None:
        table = extract_features(["a b c"])
        assert set(table.initial) == {"a", "b", "c", "a b", "b c", "a b c"}
        assert all(table.weight(f) == 1.0 for f in table.initial)

    def test_features_are_distinct_across_sentences(self) -> None:
        table = extract_features(["a b", "b a", "a b"], max_order=2)
        assert len(table) == 4

    def test_empty_test_set(self) -> None:
        with pytest.raises(InputError):
            extract_features([])

    def test_invalid_order(self) -> None:
        with pytest.raises(ConfigError):
            extract_features(["a"], max_order=0)

    def test_invalid_decay(self) -> None:
        with pytest.raises(ConfigError):
            extract_features(["a"], decay=1.0)


class TestScore:
    def test_normalized_by_length(self) -> None:
        table = extract_features(["a b"], max_order=1)
        assert score_sentence("a b", table) == 1.0
        assert score_sentence("a a", table) == 0.5
        assert score_sentence("c", table) == 0.0

    def test_repeated_ngrams_count_once(self) -> None:
        table = extract_features(["x"], max_order=1)
        assert score_sentence("x x x x", table) == 0.25

    def test_empty_sentence_scores_zero(self) -> None:
        assert score_sentence("", extract_features(["a"])) == 0.0


class TestSelect:
    def test_decay_changes_order(self) -> None:
        """After picking "a b" the shared feature "a" has decayed, so "a a" drops to 0.25."""
        # Arrange
        corpus = ["a b", "a a", "c"]
        table = extract_features(["a b"], max_order=1)

        # Act
        ranking = select(corpus, table, 3)

        # Assert
        assert ranking.indices == [0, 1, 2]
        assert [score for _, score in ranking.entries] == [1.0, 0.25, 0.0]

    def test_table_is_not_modified(self) -> None:
        table = extract_features(["a b"], max_order=1)
        select(["a b", "a"], table, 2)
        assert table.counts == {"a": 0, "b": 0}

    def test_ties_go_to_lowest_index(self) -> None:
        table = extract_features(["a"], max_order=1)
        assert select(["b", "a", "a"], table, 2).indices == [1, 2]

    def test_decay_override(self) -> None:
        table = extract_features(["a b"], max_order=1)
        ranking = select(["a b", "a a"], table, 2, decay=0.25)
        assert ranking.decay == 0.25
        assert ranking.entries[1][1] == 0.125

    @pytest.mark.parametrize("n", [0, 4])
    def test_n_out_of_range(self, n: int) -> None:
        with pytest.raises(InputError):
            select(["a", "b", "c"], extract_features(["a"]), n)

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force(self, seed: int) -> None:
        """Lazy-queue order equals full greedy recomputation, ties and decay variants included."""
        # Arrange
        rng = np.random.default_rng(1000 + seed)
        max_order, decay = BRUTE_FORCE_VARIANTS[seed % len(BRUTE_FORCE_VARIANTS)]
        words = WORDS[: 2 + seed % 5]  # small vocabularies force many ties
        corpus = random_corpus(rng, int(rng.integers(1, 51)), words)
        test = random_corpus(rng, int(rng.integers(1, 6)), words)
        n = int(rng.integers(1, len(corpus) + 1))

        # Act
        ranking = select(corpus, extract_features(test, max_order, decay), n)

        # Assert
        assert ranking.indices == brute_force(corpus, test, n, max_order, decay)
        if n < len(corpus):
            k = int(rng.integers(1, len(corpus) - n + 1))
            whole = select(corpus, extract_features(test, max_order, decay), n + k)
            assert ranking.indices + next_slice(ranking, corpus, k).indices == whole.indices

    def test_selection_is_deterministic(self) -> None:
        corpus = random_corpus(np.random.default_rng(3), 50)
        table = extract_features(corpus[:5])
        assert select(corpus, table, 30).entries == select(corpus, table, 30).entries


class TestNextSlice:
    def test_continues_the_same_greedy_run(self) -> None:
        rng = np.random.default_rng(23)
        corpus = random_corpus(rng, 60)
        table = extract_features(random_corpus(rng, 4))

        whole = select(corpus, table, 45)
        first = select(corpus, table, 20)
        second = next_slice(first, corpus, 15)
        third = next_slice(second, corpus, 10)

        assert first.indices + second.indices + third.indices == whole.indices
        assert first.entries + second.entries + third.entries == whole.entries
        assert not set(first.indices) & set(second.indices)

    def test_previous_ranking_stays_usable(self) -> None:
        corpus = random_corpus(np.random.default_rng(5), 20)
        first = select(corpus, extract_features(corpus[:3]), 5)
        assert next_slice(first, corpus, 4).indices == next_slice(first, corpus, 4).indices

    def test_zero_is_empty(self) -> None:
        corpus = ["a", "b"]
        first = select(corpus, extract_features(["a"]), 1)
        assert len(next_slice(first, corpus, 0)) == 0

    def test_too_many(self) -> None:
        corpus = ["a", "b"]
        first = select(corpus, extract_features(["a"]), 1)
        with pytest.raises(InputError, match="1 remain"):
            next_slice(first, corpus, 2)

    def test_corpus_mismatch(self) -> None:
        first = select(["a", "b"], extract_features(["a"]), 1)
        with pytest.raises(ContractError):
            next_slice(first, ["a", "b", "c"], 1)

    def test_ranking_from_file_cannot_continue(self, tmp_path: Path) -> None:
        ranking = select(["a b", "a a", "c"], extract_features(["a b"], max_order=1), 2)
        ranking.write(tmp_path / "ranking.tsv", first_rank=11)

        loaded = SelectionRanking.read(tmp_path / "ranking.tsv", max_order=1)

        assert loaded.entries == ranking.entries
        assert (tmp_path / "ranking.tsv").read_text(encoding="utf-8").splitlines()[1].startswith("11\t0\t")
        with pytest.raises(ContractError):
            next_slice(loaded, ["a b", "a a", "c"], 1)


class TestRankingFile:
    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(CorpusError):
            SelectionRanking.read(tmp_path / "absent.tsv")

    def test_malformed(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.tsv"
        path.write_text("rank\tsentence_index\tscore\n1\tx\t0.5\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="malformed"):
            SelectionRanking.read(path)


class TestSizes:
    def test_third_of_large_pool(self) -> None:
        assert fraction_size(399951, 1, 3) == 133317

    def test_rounds_up(self) -> None:
        assert fraction_size(10, 1, 3) == 4
        assert fraction_size(9, 1, 3) == 3

    def test_invalid(self) -> None:
        with pytest.raises(ConfigError):
            fraction_size(10, 1, 0)

    def test_cumulative(self) -> None:
        assert cumulative_sizes([100000, 100000, 100000]) == [100000, 200000, 300000]
        assert cumulative_sizes([]) == []
