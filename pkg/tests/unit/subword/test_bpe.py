from pathlib import Path

import pytest

from selftrain_mt.common import ConfigError, CorpusError, InputError
from selftrain_mt.pipeline.toy_task import ToyTaskSpec, generate_toy_task
from selftrain_mt.subword.bpe import MergeTable, apply_bpe, debpe, learn_bpe


class TestLearnBpe:
    def test_zero_merges(self) -> None:
        assert learn_bpe(["low low lower"], 0).merges == ()

    def test_first_merge_breaks_ties_lexicographically(self) -> None:
        # (l, o) and (o, w) both occur three times
        assert learn_bpe(["low low lower"], 1).merges == (("l", "o"),)

    def test_stops_when_no_pair_repeats(self) -> None:
        merges = learn_bpe(["low low lower"], 50)
        assert merges.merges == (("l", "o"), ("lo", "w"), ("low", "</w>"))

    def test_joint_learning_is_order_independent(self) -> None:
        source = ["das haus ist klein", "das haus ist gross"]
        target = ["the house is small", "the house is big"]
        assert learn_bpe(source + target, 20) == learn_bpe(target + source, 20)

    def test_empty_corpus(self) -> None:
        with pytest.raises(InputError):
            learn_bpe(["", "   "], 5)

    def test_negative_merges(self) -> None:
        with pytest.raises(ConfigError):
            learn_bpe(["a b"], -1)


class TestApplyBpe:
    def test_empty_table_splits_into_characters(self) -> None:
        assert apply_bpe("cat", MergeTable()) == ["c@@", "a@@", "t"]

    def test_training_word_becomes_one_token(self) -> None:
        merges = learn_bpe(["low low lower"], 10)
        assert apply_bpe("low", merges) == ["low"]
        assert apply_bpe("lower", merges) == ["low@@", "e@@", "r"]

    def test_unknown_characters_pass_through(self) -> None:
        merges = learn_bpe(["low low lower"], 10)
        assert apply_bpe("zlow", merges) == ["z@@", "low"]

    def test_deterministic(self) -> None:
        merges = learn_bpe(["the cat sat on the mat", "the hat"], 30)
        assert apply_bpe("the cat", merges) == apply_bpe("the cat", merges)


class TestDebpe:
    def test_joins_continuations(self) -> None:
        assert debpe("c@@ a@@ t") == "cat"

    def test_no_op(self) -> None:
        assert debpe("hello world") == "hello world"
        assert debpe(["hello", "world"]) == "hello world"

    def test_round_trip_on_toy_corpus(self) -> None:
        task = generate_toy_task(ToyTaskSpec(parallel_size=60, mono_size=30, dev_size=10, test_size=10))
        lines = [p.source for p in task.parallel] + [p.target for p in task.parallel]
        merges = learn_bpe(lines, 100)
        for line in lines + task.mono:
            assert debpe(apply_bpe(line, merges)) == line

    @pytest.mark.parametrize("line", ["a  b", " a b ", "a\tb", "a \u3000 b"])
    def test_round_trip_collapses_whitespace(self, line: str) -> None:
        merges = learn_bpe(["a b", "a b"], 5)
        assert debpe(apply_bpe(line, merges)) == "a b"


class TestMergeTableFile:
    def test_save_and_load(self, tmp_path: Path) -> None:
        merges = learn_bpe(["low low lower newer newest"], 20)
        path = tmp_path / "merges.txt"
        merges.save(path)
        assert MergeTable.load(path) == merges

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CorpusError, match="not found"):
            MergeTable.load(tmp_path / "absent.txt")

    def test_malformed_line(self, tmp_path: Path) -> None:
        path = tmp_path / "merges.txt"
        path.write_text("l o\nbroken\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=":2:"):
            MergeTable.load(path)
