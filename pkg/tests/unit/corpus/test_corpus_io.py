import hashlib
from pathlib import Path

import pytest

from selftrain_mt.common import CorpusError, InputError
from selftrain_mt.corpus.corpus_io import (
    CorpusFile,
    SentencePair,
    corpus_stats,
    file_sha256,
    load_corpus,
    load_parallel,
    stats_table,
    write_corpus,
)


class TestRead:
    def test_lines_without_terminators(self, tmp_path: Path) -> None:
        path = tmp_path / "a.txt"
        path.write_bytes(b"one two\r\nthree\n\nfour")
        corpus = CorpusFile.read(path)
        assert corpus.lines == ("one two", "three", "", "four")
        assert corpus.line_count == 4

    def test_empty_file(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.txt"
        path.write_bytes(b"")
        assert load_corpus(path) == []

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CorpusError, match="not found"):
            load_corpus(tmp_path / "absent.txt")

    def test_byte_order_mark_is_rejected(self, tmp_path: Path) -> None:
        path = tmp_path / "bom.txt"
        path.write_bytes(b"\xef\xbb\xbfhello\n")
        with pytest.raises(CorpusError, match="byte-order mark"):
            load_corpus(path)

    def test_invalid_utf8_names_the_line(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.txt"
        path.write_bytes(b"fine\nalso fine\nbroken \xff here\n")
        with pytest.raises(CorpusError, match=r"bad\.txt:3: invalid UTF-8"):
            load_corpus(path)


class TestParallel:
    def test_pairs_by_line(self, tmp_path: Path) -> None:
        write_corpus(tmp_path / "train.src", ["a b", "c"])
        write_corpus(tmp_path / "train.tgt", ["x", "y z"])
        assert load_parallel(tmp_path / "train.src", tmp_path / "train.tgt") == [
            SentencePair("a b", "x"),
            SentencePair("c", "y z"),
        ]

    def test_count_mismatch(self, tmp_path: Path) -> None:
        write_corpus(tmp_path / "train.src", ["a", "b", "c"])
        write_corpus(tmp_path / "train.tgt", ["x", "y"])
        with pytest.raises(CorpusError, match="3 lines"):
            load_parallel(tmp_path / "train.src", tmp_path / "train.tgt")


class TestWrite:
    def test_round_trip(self, tmp_path: Path) -> None:
        lines = ["ein satz", "", "ümlaut"]
        path = write_corpus(tmp_path / "nested" / "out.txt", lines)
        assert path.read_bytes() == "ein satz\n\nümlaut\n".encode("utf-8")
        assert load_corpus(path) == lines

    def test_line_break_inside_sentence(self, tmp_path: Path) -> None:
        with pytest.raises(InputError, match="Sentence 2"):
            write_corpus(tmp_path / "out.txt", ["ok", "not\nok"])

    def test_sha256(self, tmp_path: Path) -> None:
        path = write_corpus(tmp_path / "out.txt", ["a"])
        assert file_sha256(path) == hashlib.sha256(b"a\n").hexdigest()


class TestStats:
    def test_counts(self) -> None:
        stats = corpus_stats(["a b a", "c", ""])
        assert (stats.sentences, stats.tokens, stats.unique_tokens) == (3, 4, 3)

    def test_table(self) -> None:
        table = stats_table({"train": corpus_stats(["a b"] * 1500), "test": corpus_stats(["c"])})
        assert table.splitlines() == [
            "dataset\tsentences\ttokens (unique)",
            "train\t1,500\t3,000 (2)",
            "test\t1\t1 (1)",
        ]
