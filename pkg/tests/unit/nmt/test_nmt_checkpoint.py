from pathlib import Path

import numpy as np
import pytest

from selftrain_mt.common import ContractError, CorpusError
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint, average_checkpoints, last_checkpoints
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.nmt.nmt_model import ParameterSet, parameter_shapes, zero_parameters

from .conftest import spread_params


def _constant(config: ModelConfig, value: float, step: int) -> Checkpoint:
    arrays = {name: np.full(shape, value) for name, shape in parameter_shapes(config).items()}
    return Checkpoint.from_parameters(ParameterSet.from_arrays(config, arrays), step)


class TestSaveLoad:
    def test_round_trip_is_exact(self, tiny_config: ModelConfig, tmp_path: Path) -> None:
        """Loading a saved checkpoint gives back the same config, step, metadata and bit-identical values."""
        # Arrange
        checkpoint = Checkpoint.from_parameters(spread_params(tiny_config, 1), 1200, {"phase": "pretrain"})
        path = tmp_path / "model" / "step.ckpt"

        # Act
        checkpoint.save(path)
        loaded = Checkpoint.load(path)

        # Assert
        assert loaded == checkpoint
        assert loaded.config == tiny_config
        assert loaded.step == 1200
        assert loaded.metadata == {"phase": "pretrain"}

    def test_saved_bytes_are_stable(self, tiny_config: ModelConfig, tmp_path: Path) -> None:
        checkpoint = Checkpoint.from_parameters(spread_params(tiny_config, 2), 5)
        checkpoint.save(tmp_path / "a.ckpt")
        Checkpoint.load(tmp_path / "a.ckpt").save(tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CorpusError, match="not found"):
            Checkpoint.load(tmp_path / "absent.ckpt")

    def test_wrong_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT")
        with pytest.raises(CorpusError, match="not a checkpoint"):
            Checkpoint.load(path)

    def test_truncated_file(self, tiny_config: ModelConfig, tmp_path: Path) -> None:
        path = tmp_path / "cut.ckpt"
        Checkpoint.from_parameters(zero_parameters(tiny_config), 1).save(path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CorpusError, match="truncated"):
            Checkpoint.load(path)

    def test_parameter_set_is_a_copy(self, tiny_config: ModelConfig) -> None:
        checkpoint = Checkpoint.from_parameters(zero_parameters(tiny_config), 1)
        params = checkpoint.parameter_set()
        params["att.v"].data[0] = 3.0
        assert checkpoint.params["att.v"][0] == 0.0


class TestAverage:
    def test_mean_of_two(self, tiny_config: ModelConfig) -> None:
        averaged = average_checkpoints([_constant(tiny_config, 0.0, 1), _constant(tiny_config, 2.0, 2)])
        for tensor in averaged.tensors.values():
            np.testing.assert_array_equal(tensor.data, 1.0)

    def test_identical_inputs_stay_bit_identical(self, tiny_config: ModelConfig) -> None:
        source = Checkpoint.from_parameters(spread_params(tiny_config, 3), 10)
        averaged = average_checkpoints([source] * 8)
        assert Checkpoint.from_parameters(averaged, 10) == source

    def test_matches_elementwise_mean(self, tiny_config: ModelConfig) -> None:
        checkpoints = [Checkpoint.from_parameters(spread_params(tiny_config, 10 + i), i) for i in range(8)]
        averaged = average_checkpoints(checkpoints)
        for name, tensor in averaged.tensors.items():
            expected = np.mean([c.params[name] for c in checkpoints], axis=0)
            np.testing.assert_allclose(tensor.data, expected, rtol=1e-14, atol=1e-14)

    def test_empty(self) -> None:
        with pytest.raises(ContractError):
            average_checkpoints([])

    def test_mismatched_configs(self, tiny_config: ModelConfig) -> None:
        other = ModelConfig(source_vocab_size=9, target_vocab_size=7, embedding_size=4, hidden_size=6, dropout=0.0)
        with pytest.raises(ContractError, match="step 2"):
            average_checkpoints([_constant(tiny_config, 0.0, 1), _constant(other, 0.0, 2)])


def test_last_checkpoints(tiny_config: ModelConfig) -> None:
    checkpoints = [_constant(tiny_config, 0.0, step) for step in (1, 2, 3, 4)]
    assert [c.step for c in last_checkpoints(checkpoints, 2)] == [3, 4]
    assert [c.step for c in last_checkpoints(checkpoints, 10)] == [1, 2, 3, 4]
