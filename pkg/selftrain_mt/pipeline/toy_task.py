"""
Synthetic two-language task for desk-scale experiments.

The target side is the source sentence mapped word by word through a fixed lexicon and then reversed.
The lexicon is split into an in-domain and an out-of-domain half: dev and test sentences are in-domain,
the authentic parallel data and the monolingual pool mix both domains. Authentic targets carry token noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from selftrain_mt.common import ConfigError, logger, named_rng
from selftrain_mt.corpus.corpus_io import SentencePair, write_corpus
from selftrain_mt.formatter import KeyValueFormatter

_SOURCE_ONSETS = "bdgklmnprst"
_SOURCE_VOWELS = "aeiou"
_TARGET_ONSETS = "fhjvwzcxq"
_TARGET_VOWELS = "aeiouy"
# share of words a sentence borrows from the other domain
_DOMAIN_LEAK = 0.1

TOY_FILES = {
    "parallel_source": "parallel.src",
    "parallel_target": "parallel.tgt",
    "mono_source": "mono.src",
    "dev_source": "dev.src",
    "dev_target": "dev.tgt",
    "test_source": "test.src",
    "test_target": "test.tgt",
}


@dataclass(slots=True, frozen=True)
class ToyTaskSpec:
    parallel_size: int = 2000
    mono_size: int = 16000
    dev_size: int = 200
    test_size: int = 200
    lexicon_size: int = 80
    parallel_in_domain: float = 0.2
    mono_in_domain: float = 0.25
    noise: float = 0.1
    min_length: int = 3
    max_length: int = 8
    seed: int = 1

    def __post_init__(self) -> None:
        if not 2 <= self.lexicon_size <= 100:
            raise ConfigError(f"Toy lexicon size must be in [2, 100], got {self.lexicon_size}")
        if not 1 <= self.min_length <= self.max_length:
            raise ConfigError(f"Invalid toy sentence lengths [{self.min_length}, {self.max_length}]")
        for name in ("parallel_in_domain", "mono_in_domain", "noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"ToyTaskSpec.{name} must be in [0, 1], got {getattr(self, name)}")
        for name in ("parallel_size", "mono_size", "dev_size", "test_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ToyTaskSpec.{name} must be positive, got {getattr(self, name)}")


@dataclass(eq=False)
class ToyTask:
    spec: ToyTaskSpec
    lexicon: Dict[str, str]
    in_domain: List[str]
    out_of_domain: List[str]
    parallel: List[SentencePair]
    mono: List[str]
    dev: List[SentencePair]
    test: List[SentencePair]

    def reference(self, source: str) -> str:
        return map_sentence(source, self.lexicon)

    def write(self, directory: str | Path, **config_overrides: object) -> Path:
        """Write the corpora plus a ready-to-run experiment config; returns the config path."""
        directory = Path(directory)
        sides = {
            "parallel_source": [p.source for p in self.parallel],
            "parallel_target": [p.target for p in self.parallel],
            "mono_source": self.mono,
            "dev_source": [p.source for p in self.dev],
            "dev_target": [p.target for p in self.dev],
            "test_source": [p.source for p in self.test],
            "test_target": [p.target for p in self.test],
        }
        for key, lines in sides.items():
            write_corpus(directory / TOY_FILES[key], lines)

        slice_n = max(2, self.spec.mono_size // 8)
        slice_m = max(1, self.spec.mono_size // 16)
        config: Dict[str, object] = dict(TOY_FILES)
        config.update(
            {
                "output_dir": "runs",
                "seed": self.spec.seed,
                "num_merges": 500,
                "vocab_size": 400,
                "embedding_size": 32,
                "hidden_size": 64,
                "dropout": 0.1,
                "batch_size": 64,
                "learning_rate": 0.002,
                "eval_interval": 100,
                "max_steps": 3000,
                "min_steps": 1500,
                "stop_window": 10,
                "schedule": f"{slice_n}:{slice_m},{slice_n}:{slice_m}",
            }
        )
        config.update(config_overrides)
        config_path = directory / "experiment.cfg"
        config_path.write_text(KeyValueFormatter.to_text(config), encoding="utf-8")
        logger.info(f"Wrote toy task to {directory}")
        return config_path


def _make_words(rng: np.random.Generator, count: int, onsets: str, vowels: str) -> List[str]:
    words: List[str] = []
    seen: set[str] = set()
    while len(words) < count:
        syllables = int(rng.integers(2, 4))
        word = "".join(
            onsets[int(rng.integers(len(onsets)))] + vowels[int(rng.integers(len(vowels)))] for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def map_sentence(source: str, lexicon: Dict[str, str]) -> str:
    """Noise-free translation: word-by-word lexicon lookup, then reversal."""
    return " ".join(reversed([lexicon.get(word, word) for word in source.split()]))


def _sentence(rng: np.random.Generator, spec: ToyTaskSpec, home: Sequence[str], away: Sequence[str]) -> str:
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    words = []
    for _ in range(length):
        pool = away if rng.random() < _DOMAIN_LEAK else home
        words.append(pool[int(rng.integers(len(pool)))])
    return " ".join(words)


def _noisy(target: str, rng: np.random.Generator, vocabulary: Sequence[str], rate: float) -> str:
    words = target.split()
    for i in range(len(words)):
        if rng.random() < rate:
            words[i] = vocabulary[int(rng.integers(len(vocabulary)))]
    return " ".join(words)


def generate_toy_task(spec: ToyTaskSpec = ToyTaskSpec()) -> ToyTask:
    lexicon_rng = named_rng(spec.seed, "toy.lexicon")
    source_words = _make_words(lexicon_rng, spec.lexicon_size, _SOURCE_ONSETS, _SOURCE_VOWELS)
    target_words = _make_words(lexicon_rng, spec.lexicon_size, _TARGET_ONSETS, _TARGET_VOWELS)
    lexicon = dict(zip(source_words, target_words))
    half = spec.lexicon_size // 2
    in_domain, out_of_domain = source_words[:half], source_words[half:]

    def draw(rng: np.random.Generator, count: int, in_share: float) -> List[str]:
        sentences = []
        for _ in range(count):
            if rng.random() < in_share:
                sentences.append(_sentence(rng, spec, in_domain, out_of_domain))
            else:
                sentences.append(_sentence(rng, spec, out_of_domain, in_domain))
        return sentences

    noise_rng = named_rng(spec.seed, "toy.noise")
    parallel_sources = draw(named_rng(spec.seed, "toy.parallel"), spec.parallel_size, spec.parallel_in_domain)
    parallel = [
        SentencePair(src, _noisy(map_sentence(src, lexicon), noise_rng, target_words, spec.noise))
        for src in parallel_sources
    ]
    mono = draw(named_rng(spec.seed, "toy.mono"), spec.mono_size, spec.mono_in_domain)
    dev = [SentencePair(s, map_sentence(s, lexicon)) for s in draw(named_rng(spec.seed, "toy.dev"), spec.dev_size, 1.0)]
    test = [
        SentencePair(s, map_sentence(s, lexicon)) for s in draw(named_rng(spec.seed, "toy.test"), spec.test_size, 1.0)
    ]
    return ToyTask(spec, lexicon, in_domain, out_of_domain, parallel, mono, dev, test)
