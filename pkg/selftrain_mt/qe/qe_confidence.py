"""
Sentence-level quality estimation of synthetic pairs from the translating model's own confidence:
the mean per-token log-probability (EOS included) of the synthetic target under forced decoding.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Protocol, Sequence, Tuple

from selftrain_mt.common import CorpusError, InputError, ScoreError, logger
from selftrain_mt.formatter import TsvFormatter
from selftrain_mt.nmt.nmt_model import EncodedPair, ParameterSet, forced_log_probs

SCORES_HEADER = ("index", "confidence", "target")
DEFAULT_QE_CHUNK = 32


@dataclass(slots=True, frozen=True)
class ScoredTranslation:
    index: int
    source: str
    target: str
    token_log_probs: Tuple[float, ...]
    confidence: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.token_log_probs:
            raise ScoreError(f"No token log-probabilities for candidate {self.index}")
        object.__setattr__(self, "confidence", sum(self.token_log_probs) / len(self.token_log_probs))


class QualityEstimator(Protocol):
    def score(self, candidates: Sequence[Tuple[str, str, EncodedPair]]) -> List[ScoredTranslation]:
        """Score (source text, target text, encoded pair) candidates, in input order."""
        ...


def score_pair(
    source_ids: Sequence[int], target_ids: Sequence[int], params: ParameterSet, source: str = "", target: str = ""
) -> ScoredTranslation:
    if len(target_ids) == 0:
        raise ScoreError("Cannot score an empty synthetic target")
    log_probs = forced_log_probs(params, [(source_ids, target_ids)])[0]
    return ScoredTranslation(index=0, source=source, target=target, token_log_probs=tuple(log_probs))


class ConfidenceEstimator:
    """Scores candidates by forced-decode confidence under a fixed model."""

    def __init__(self, params: ParameterSet, workers: int = 1, chunk_size: int = DEFAULT_QE_CHUNK):
        self.params = params
        self.workers = max(1, workers)
        self.chunk_size = chunk_size

    def score(self, candidates: Sequence[Tuple[str, str, EncodedPair]]) -> List[ScoredTranslation]:
        for idx, (_, _, (_, target_ids)) in enumerate(candidates):
            if len(target_ids) == 0:
                raise ScoreError(f"Empty synthetic target at candidate {idx}")
        starts = list(range(0, len(candidates), self.chunk_size))

        def run(start: int) -> List[List[float]]:
            chunk = candidates[start : start + self.chunk_size]
            return forced_log_probs(self.params, [pair for _, _, pair in chunk])

        if self.workers <= 1:
            chunk_results = [run(start) for start in starts]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as executor:
                chunk_results = list(executor.map(run, starts))

        all_log_probs = [lp for chunk_result in chunk_results for lp in chunk_result]
        scored = [
            ScoredTranslation(index=i, source=src, target=tgt, token_log_probs=tuple(lp))
            for i, ((src, tgt, _), lp) in enumerate(zip(candidates, all_log_probs))
        ]
        logger.debug(f"Scored {len(scored)} synthetic pairs")
        return scored


def select_best(pairs: Sequence[ScoredTranslation], m: int) -> List[ScoredTranslation]:
    """The m most confident pairs (lower index wins ties), returned in their original order."""
    if not 0 < m <= len(pairs):
        raise InputError(f"Cannot keep {m} of {len(pairs)} scored translations")
    ranked = sorted(range(len(pairs)), key=lambda i: (-pairs[i].confidence, i))
    return [pairs[i] for i in sorted(ranked[:m])]


def write_scores(pairs: Sequence[ScoredTranslation], path: str | Path) -> None:
    rows = [(p.index, p.confidence, p.target) for p in pairs]
    Path(path).write_text(TsvFormatter.to_tsv(SCORES_HEADER, rows), encoding="utf-8")


def read_scores(path: str | Path) -> List[Tuple[int, float, str]]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"Scores file not found: {path}")
    try:
        return [
            (int(row["index"]), float(row["confidence"]), row["target"])
            for row in TsvFormatter.parse_tsv(path.read_text(encoding="utf-8"))
        ]
    except (KeyError, ValueError) as e:
        raise CorpusError(f"{path}: malformed scores file ({e})") from e
