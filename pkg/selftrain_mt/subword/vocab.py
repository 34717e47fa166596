from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from selftrain_mt.common import ConfigError, ContractError, CorpusError

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED_TOKENS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
MIN_VOCAB_SIZE = 5


@dataclass(slots=True, frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]
    max_size: int
    token_to_id: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ContractError(f"Vocabulary must start with {RESERVED_TOKENS}, got {self.tokens[:4]}")
        if len(self.tokens) > self.max_size:
            raise ContractError(f"Vocabulary has {len(self.tokens)} tokens, more than max size {self.max_size}")
        token_to_id: Dict[str, int] = {}
        for idx, token in enumerate(self.tokens):
            if token in token_to_id:
                raise ContractError(f"Token {token!r} appears twice (ids {token_to_id[token]} and {idx})")
            token_to_id[token] = idx
        object.__setattr__(self, "token_to_id", token_to_id)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.token_to_id.get(token, UNK_ID) for token in tokens]

    def decode(self, ids: Sequence[int], strip_special: bool = True) -> List[str]:
        """Map ids back to tokens, stopping at EOS and dropping PAD/BOS when strip_special is set."""
        out: List[str] = []
        for idx in ids:
            if strip_special:
                if idx == EOS_ID:
                    break
                if idx in (PAD_ID, BOS_ID):
                    continue
            out.append(self.tokens[idx])
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{token}\n" for token in self.tokens), encoding="utf-8")

    @staticmethod
    def load(path: str | Path, max_size: int | None = None) -> Vocabulary:
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"Vocabulary file not found: {path}")
        tokens = tuple(path.read_text(encoding="utf-8").splitlines())
        return Vocabulary(tokens, max_size if max_size is not None else len(tokens))


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """Frequency-ranked tokens of an already BPE-applied corpus, ties broken lexicographically."""
    if max_size < MIN_VOCAB_SIZE:
        raise ConfigError(f"Vocabulary max size must be >= {MIN_VOCAB_SIZE}, got {max_size}")
    counts = Counter(token for line in corpus for token in line.split() if token not in RESERVED_TOKENS)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_size - len(RESERVED_TOKENS)]
    return Vocabulary(RESERVED_TOKENS + tuple(token for token, _ in ranked), max_size)
