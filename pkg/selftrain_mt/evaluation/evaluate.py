from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

from selftrain_mt.common import InputError
from selftrain_mt.evaluation.bleu import BleuReport, corpus_bleu
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint
from selftrain_mt.nmt.nmt_decode import Hypothesis, translate_batch
from selftrain_mt.nmt.nmt_model import ParameterSet
from selftrain_mt.nmt.nmt_train import Evaluator
from selftrain_mt.subword.bpe import debpe
from selftrain_mt.subword.vocab import Vocabulary

TEST_BEAM = 5


@dataclass(eq=False)
class EvalSet:
    source_ids: List[List[int]]
    references: List[str]  # detokenized, before BPE
    target_vocab: Vocabulary

    def __post_init__(self) -> None:
        if not self.source_ids:
            raise InputError("Evaluation set is empty")
        if len(self.source_ids) != len(self.references):
            raise InputError(f"{len(self.source_ids)} sources but {len(self.references)} references")

    def __len__(self) -> int:
        return len(self.source_ids)


def detokenize(hypotheses: Sequence[Hypothesis], vocab: Vocabulary) -> List[str]:
    return [debpe(vocab.decode(h.content_ids)) for h in hypotheses]


def evaluate_checkpoint(
    model: Checkpoint | ParameterSet, eval_set: EvalSet, beam: Optional[int] = None, workers: int = 1
) -> BleuReport:
    """Translate every source (greedy unless a beam width is given), undo BPE and score corpus BLEU."""
    params = model.parameter_set() if isinstance(model, Checkpoint) else model
    hypotheses = translate_batch(eval_set.source_ids, params, beam=beam, workers=workers)
    return corpus_bleu(detokenize(hypotheses, eval_set.target_vocab), eval_set.references)


def dev_evaluator(eval_set: EvalSet, workers: int = 1) -> Evaluator:
    def evaluate(params: ParameterSet) -> float:
        return evaluate_checkpoint(params, eval_set, workers=workers).score

    return evaluate
