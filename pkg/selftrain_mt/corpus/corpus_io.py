from __future__ import annotations

import codecs
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence, Tuple

from selftrain_mt.common import CorpusError, InputError, logger
from selftrain_mt.formatter import TsvFormatter

STATS_HEADER = ("dataset", "sentences", "tokens (unique)")


@dataclass(slots=True, frozen=True)
class SentencePair:
    source: str
    target: str


@dataclass(slots=True, frozen=True)
class CorpusFile:
    """A UTF-8, one-sentence-per-line corpus file."""

    path: Path
    lines: Tuple[str, ...]

    @property
    def line_count(self) -> int:
        return len(self.lines)

    @staticmethod
    def read(path: str | Path) -> CorpusFile:
        path = Path(path)
        if not path.is_file():
            raise CorpusError(f"Corpus file not found: {path}")
        raw = path.read_bytes()
        if raw.startswith(codecs.BOM_UTF8):
            raise CorpusError(f"{path}: file starts with a UTF-8 byte-order mark")
        chunks = raw.split(b"\n")
        if chunks and chunks[-1] == b"":
            chunks.pop()
        lines: List[str] = []
        for line_number, chunk in enumerate(chunks, start=1):
            try:
                lines.append(chunk.decode("utf-8").rstrip("\r"))
            except UnicodeDecodeError as e:
                raise CorpusError(f"{path}:{line_number}: invalid UTF-8 ({e.reason})") from e
        return CorpusFile(path, tuple(lines))


def load_corpus(path: str | Path) -> List[str]:
    return list(CorpusFile.read(path).lines)


def load_parallel(source_path: str | Path, target_path: str | Path) -> List[SentencePair]:
    """Pairs aligned by line number; both files must have the same number of lines."""
    source = CorpusFile.read(source_path)
    target = CorpusFile.read(target_path)
    if source.line_count != target.line_count:
        raise CorpusError(
            f"Parallel files differ in length: {source.path} has {source.line_count} lines, "
            f"{target.path} has {target.line_count}"
        )
    return [SentencePair(s, t) for s, t in zip(source.lines, target.lines)]


def write_corpus(path: str | Path, lines: Iterable[str]) -> Path:
    """Newline-terminated UTF-8 without a byte-order mark."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    materialized = list(lines)
    for idx, line in enumerate(materialized, start=1):
        if "\n" in line or "\r" in line:
            raise InputError(f"Sentence {idx} for {path} contains a line break")
    path.write_text("".join(f"{line}\n" for line in materialized), encoding="utf-8")
    return path


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as stream:
        for block in iter(lambda: stream.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass(slots=True, frozen=True)
class CorpusStats:
    sentences: int
    tokens: int
    unique_tokens: int


def corpus_stats(lines: Sequence[str]) -> CorpusStats:
    tokens = [token for line in lines for token in line.split()]
    return CorpusStats(sentences=len(lines), tokens=len(tokens), unique_tokens=len(set(tokens)))


def stats_table(stats: Mapping[str, CorpusStats]) -> str:
    """Dataset statistics as TSV, tokens shown as 'total (unique)'."""
    rows = [(name, f"{s.sentences:,}", f"{s.tokens:,} ({s.unique_tokens:,})") for name, s in stats.items()]
    table = TsvFormatter.to_tsv(STATS_HEADER, rows)
    for line in table.splitlines():
        logger.info(line.replace("\t", " | "))
    return table
