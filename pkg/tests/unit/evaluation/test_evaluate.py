from unittest.mock import patch

import pytest

from selftrain_mt.common import InputError
from selftrain_mt.evaluation.evaluate import EvalSet, dev_evaluator, detokenize, evaluate_checkpoint
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.nmt.nmt_decode import Hypothesis
from selftrain_mt.nmt.nmt_model import zero_parameters
from selftrain_mt.subword.vocab import EOS_ID, build_vocab


@pytest.fixture
def eval_set() -> EvalSet:
    vocab = build_vocab(["lo@@ w", "new@@ er", "w"], max_size=20)
    return EvalSet(
        source_ids=[vocab.encode(["lo@@", "w"]), vocab.encode(["new@@", "er"])],
        references=["low", "newer"],
        target_vocab=vocab,
    )


def test_detokenize_strips_eos_and_bpe(eval_set: EvalSet) -> None:
    vocab = eval_set.target_vocab
    hypotheses = [Hypothesis((*vocab.encode(["new@@", "er"]), EOS_ID), (-0.1, -0.1, -0.1))]
    assert detokenize(hypotheses, vocab) == ["newer"]


def test_evaluate_scores_detokenized_output(eval_set: EvalSet) -> None:
    """A model that reproduces the references scores 100."""
    # Arrange
    perfect = [Hypothesis((*ids, EOS_ID), tuple(-0.1 for _ in range(len(ids) + 1))) for ids in eval_set.source_ids]
    params = zero_parameters(ModelConfig(source_vocab_size=20, target_vocab_size=20, dropout=0.0))

    # Act
    with patch("selftrain_mt.evaluation.evaluate.translate_batch", return_value=perfect) as mock_translate:
        report = evaluate_checkpoint(params, eval_set, beam=5, workers=2)

    # Assert
    assert report.score == pytest.approx(100.0)
    mock_translate.assert_called_once_with(eval_set.source_ids, params, beam=5, workers=2)


def test_uniform_model_emits_nothing(eval_set: EvalSet) -> None:
    config = ModelConfig(source_vocab_size=20, target_vocab_size=20, embedding_size=4, hidden_size=4, dropout=0.0)
    report = evaluate_checkpoint(Checkpoint.from_parameters(zero_parameters(config), 0), eval_set)
    assert report.hypothesis_length == 0
    assert report.score == 0.0


def test_dev_evaluator_uses_greedy_decoding(eval_set: EvalSet) -> None:
    config = ModelConfig(source_vocab_size=20, target_vocab_size=20, embedding_size=4, hidden_size=4, dropout=0.0)
    params = zero_parameters(config)
    with patch("selftrain_mt.evaluation.evaluate.translate_batch") as mock_translate:
        mock_translate.return_value = [Hypothesis((EOS_ID,), (-1.0,))] * 2
        assert dev_evaluator(eval_set)(params) == 0.0
    assert mock_translate.call_args.kwargs["beam"] is None


def test_eval_set_must_align() -> None:
    vocab = build_vocab(["a"], max_size=10)
    with pytest.raises(InputError):
        EvalSet(source_ids=[[4]], references=["a", "b"], target_vocab=vocab)
    with pytest.raises(InputError):
        EvalSet(source_ids=[], references=[], target_vocab=vocab)
