from pathlib import Path

import pytest

from selftrain_mt.common import ConfigError
from selftrain_mt.corpus.corpus_io import load_corpus
from selftrain_mt.pipeline.pipeline_config import ExperimentConfig
from selftrain_mt.pipeline.toy_task import TOY_FILES, ToyTaskSpec, generate_toy_task, map_sentence

SMALL = ToyTaskSpec(parallel_size=50, mono_size=40, dev_size=10, test_size=12, noise=0.0, seed=5)


def test_sizes() -> None:
    task = generate_toy_task(SMALL)
    assert (len(task.parallel), len(task.mono), len(task.dev), len(task.test)) == (50, 40, 10, 12)


def test_translation_is_lexicon_lookup_then_reversal() -> None:
    assert map_sentence("a b c", {"a": "x", "b": "y"}) == "c y x"


def test_noise_free_parallel_data_is_exact() -> None:
    task = generate_toy_task(SMALL)
    assert all(pair.target == task.reference(pair.source) for pair in task.parallel)
    assert all(pair.target == task.reference(pair.source) for pair in task.test)


def test_noise_changes_some_targets() -> None:
    task = generate_toy_task(ToyTaskSpec(parallel_size=200, mono_size=10, dev_size=5, test_size=5, noise=0.5))
    assert any(pair.target != task.reference(pair.source) for pair in task.parallel)


def test_test_set_is_mostly_in_domain() -> None:
    task = generate_toy_task(ToyTaskSpec(parallel_size=10, mono_size=10, dev_size=50, test_size=50))
    words = [w for pair in task.test for w in pair.source.split()]
    in_domain = set(task.in_domain)
    assert sum(w in in_domain for w in words) / len(words) > 0.75


def test_deterministic() -> None:
    first = generate_toy_task(SMALL)
    second = generate_toy_task(SMALL)
    assert first.parallel == second.parallel
    assert first.mono == second.mono


def test_write_produces_runnable_config(tmp_path: Path) -> None:
    """The written config points at the written corpora and accepts overrides."""
    # Act
    config_path = generate_toy_task(SMALL).write(tmp_path, max_steps=10)

    # Assert
    config = ExperimentConfig.from_file(config_path)
    assert config.max_steps == 10
    assert config.output_dir == str(tmp_path / "runs")
    assert len(load_corpus(config.mono_source)) == 40
    for name in TOY_FILES.values():
        assert (tmp_path / name).is_file()
    assert len(config.schedule_entries) == 2


def test_invalid_spec() -> None:
    with pytest.raises(ConfigError):
        ToyTaskSpec(lexicon_size=1)


def test_written_config_lets_training_leave_the_plateau(tmp_path: Path) -> None:
    """The stop rule only runs after a step floor, with a window wide enough to span the slow start."""
    config = ExperimentConfig.from_file(generate_toy_task(SMALL).write(tmp_path))
    settings = config.train_settings()
    assert settings.min_steps == 1500
    assert settings.stop_window == 10
    assert settings.max_steps == 3000
    assert settings.min_steps < settings.max_steps
