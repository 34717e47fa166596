from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from selftrain_mt.common import InputError

MAX_ORDER = 4


@dataclass(slots=True, frozen=True)
class BleuReport:
    score: float
    precisions: Tuple[float, ...]
    matches: Tuple[int, ...]
    totals: Tuple[int, ...]
    brevity_penalty: float
    hypothesis_length: int
    reference_length: int
    # n-gram orders whose zero match count was add-one smoothed
    smoothed_orders: Tuple[int, ...] = ()

    def to_record(self, step: Optional[int] = None) -> str:
        """One-line JSON record: step, BLEU, precisions, brevity penalty."""
        record: Dict[str, object] = {
            "bleu": self.score,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hypothesis_length": self.hypothesis_length,
            "reference_length": self.reference_length,
            "smoothed_orders": list(self.smoothed_orders),
        }
        if step is not None:
            record["step"] = step
        return json.dumps(record, sort_keys=True)


def _ngrams(tokens: Sequence[str], order: int) -> Counter[Tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str], max_order: int = MAX_ORDER) -> BleuReport:
    """
    Corpus BLEU over case-sensitive whitespace tokens with one reference per hypothesis. Orders above 1
    with no matches are smoothed to 1 / (total + 1); no unigram match means a score of 0.
    """
    if len(hypotheses) != len(references):
        raise InputError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise InputError("BLEU needs at least one hypothesis/reference pair")

    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hypothesis, reference in zip(hypotheses, references):
        hyp_tokens = hypothesis.split()
        ref_tokens = reference.split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp_tokens, n)
            ref_counts = _ngrams(ref_tokens, n)
            matches[n - 1] += sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
            totals[n - 1] += max(len(hyp_tokens) - n + 1, 0)

    precisions: List[float] = []
    smoothed: List[int] = []
    for n in range(1, max_order + 1):
        if matches[n - 1] > 0:
            precisions.append(matches[n - 1] / totals[n - 1])
        elif n == 1:
            precisions.append(0.0)
        else:
            precisions.append(1.0 / (totals[n - 1] + 1))
            smoothed.append(n)

    if hyp_len >= ref_len:
        brevity_penalty = 1.0
    else:
        # an empty output counts as one token, keeping the penalty positive; its score is 0 regardless
        brevity_penalty = math.exp(1.0 - ref_len / max(hyp_len, 1))

    if precisions[0] == 0.0:
        score = 0.0
    else:
        score = 100.0 * brevity_penalty * math.exp(sum(math.log(p) for p in precisions) / max_order)

    return BleuReport(
        score=score,
        precisions=tuple(precisions),
        matches=tuple(matches),
        totals=tuple(totals),
        brevity_penalty=brevity_penalty,
        hypothesis_length=hyp_len,
        reference_length=ref_len,
        smoothed_orders=tuple(smoothed),
    )
