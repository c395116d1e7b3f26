"""Sensorimotor vocabulary and compositional role embeddings.

A sensory channel or actuator is named by a *signature*: a short list of
vocabulary words such as ``["right", "soleus", "muscle", "length"]``. Its role
embedding is the sum of the word embeddings, so channels that share words
(the same muscle, the same modality) share parameters across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor

PADDING = "padding"
SIGNATURE_KINDS = ("sensor", "actuator", "value")
MAX_SIGNATURE_WORDS = 8


class UnknownWordError(KeyError):
    def __init__(self, word: str):
        super().__init__(word)
        self.word = word

    def __str__(self) -> str:
        return f"word {self.word!r} is not in the vocabulary"


class Vocabulary:
    """Ordered, append-only word list with ``padding`` at index 0."""

    def __init__(self, words: Iterable[str] = ()):
        self._words: list[str] = [PADDING]
        self._index: dict[str, int] = {PADDING: 0}
        for w in words:
            self.register(w)

    @property
    def padding_word(self) -> str:
        return PADDING

    @property
    def words(self) -> list[str]:
        return list(self._words)

    def register(self, word: str) -> int:
        """Return the index of ``word``, adding it if new."""
        if not isinstance(word, str) or not word:
            raise ValueError(f"vocabulary words must be non-empty strings, got {word!r}")
        idx = self._index.get(word)
        if idx is None:
            idx = len(self._words)
            self._words.append(word)
            self._index[word] = idx
        return idx

    def index(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise UnknownWordError(word) from None

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._words)

    def __iter__(self):
        return iter(self._words)

    def dump(self) -> str:
        return "".join(f"{i}\t{w}\n" for i, w in enumerate(self._words))

    @classmethod
    def from_words(cls, words: Sequence[str]) -> "Vocabulary":
        if not words or words[0] != PADDING:
            raise ValueError("serialized vocabulary must start with the padding word")
        if len(set(words)) != len(words):
            raise ValueError("serialized vocabulary has duplicate words")
        return cls(words[1:])


@dataclass(frozen=True, eq=False)
class Signature:
    """Word list naming one scalar channel, one actuator, or the value token.

    Equality and hashing use the word *set*: composition by summation is
    order-invariant, so ``["muscle", "length"]`` and ``["length", "muscle"]``
    denote the same channel.
    """

    words: tuple[str, ...]
    kind: str = "sensor"

    def __post_init__(self):
        words = tuple(self.words)
        object.__setattr__(self, "words", words)
        if not 1 <= len(words) <= MAX_SIGNATURE_WORDS:
            raise ValueError(f"signature needs 1..{MAX_SIGNATURE_WORDS} words, got {len(words)}")
        if self.kind not in SIGNATURE_KINDS:
            raise ValueError(f"signature kind must be one of {SIGNATURE_KINDS}, got {self.kind!r}")

    @property
    def wordset(self) -> frozenset[str]:
        return frozenset(self.words)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Signature):
            return NotImplemented
        return self.wordset == other.wordset

    def __hash__(self) -> int:
        return hash(self.wordset)

    def __repr__(self) -> str:
        return f"Signature({list(self.words)!r}, kind={self.kind!r})"

    def key(self) -> str:
        return signature_key(self)

    def indices(self, vocab: Vocabulary) -> list[int]:
        """Word indices in ascending order (the canonical summation order)."""
        return sorted({vocab.index(w) for w in self.words})


def sig(*words: str, kind: str = "sensor") -> Signature:
    return Signature(tuple(words), kind)


PADDING_SIGNATURE = Signature((PADDING,), "sensor")
VALUE_SIGNATURE = Signature(("value",), "value")


def signature_key(signature: Signature | Sequence[str]) -> str:
    """Canonical string key; identical for permutations of the same word set."""
    words = signature.words if isinstance(signature, Signature) else tuple(signature)
    return "+".join(sorted(set(words)))


def disjoint_signature(signature: Signature, task: str) -> Signature:
    """Task-qualified copy used by the disjoint-vocabulary ablation."""
    words = tuple(w if w == PADDING else f"{task}:{w}" for w in signature.words)
    return Signature(words, signature.kind)


class EmbeddingTable:
    """Learnable ``|words| x dim`` matrix; row 0 (padding) is pinned at zero."""

    def __init__(self, vocab: Vocabulary, dim: int, rng: np.random.Generator | None = None, init_std: float = 0.02):
        if dim <= 0:
            raise ValueError("embedding_dim must be positive")
        self.vocab = vocab
        self.dim = dim
        self.init_std = init_std
        self._rng = rng or np.random.default_rng(0)
        w = self._rng.normal(0.0, init_std, size=(len(vocab), dim))
        w[0] = 0.0
        self.weight = Tensor(w, requires_grad=True, name="vocab.embedding")

    def register(self, word: str) -> int:
        """Register ``word`` in the vocabulary and grow the table if needed."""
        idx = self.vocab.register(word)
        self.sync()
        return idx

    def sync(self) -> None:
        missing = len(self.vocab) - self.weight.shape[0]
        if missing > 0:
            rows = self._rng.normal(0.0, self.init_std, size=(missing, self.dim)).astype(self.weight.dtype)
            data = np.concatenate([self.weight.data, rows], axis=0)
            self.weight = Tensor(data, requires_grad=True, name=self.weight.name, dtype=data.dtype)

    @property
    def num_parameters(self) -> int:
        return self.weight.size

    def row(self, word: str) -> np.ndarray:
        return self.weight.data[self.vocab.index(word)]


def compose_role_embedding(table: EmbeddingTable, signature: Signature | Sequence[str]) -> np.ndarray:
    """Sum of the word rows of ``signature``, accumulated in ascending index order."""
    words = signature.words if isinstance(signature, Signature) else tuple(signature)
    idx = sorted({table.vocab.index(w) for w in words})
    acc = np.zeros(table.dim, dtype=table.weight.dtype)
    for i in idx:
        acc = acc + table.weight.data[i]
    return acc


class SignatureRegistry:
    """Dense numbering of signatures, with the padding signature at 0.

    The registry's composition matrix ``M`` (signatures x words) turns the
    embedding table into per-signature role embeddings with one matmul.
    Column 0 is always zero so the padding row never receives a gradient.
    """

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._sigs: list[Signature] = [PADDING_SIGNATURE]
        self._index: dict[Signature, int] = {PADDING_SIGNATURE: 0}
        self._matrix_cache: np.ndarray | None = None

    def register(self, signature: Signature, grow_vocab: bool = True) -> int:
        idx = self._index.get(signature)
        if idx is None:
            for w in signature.words:
                if grow_vocab:
                    self.vocab.register(w)
                else:
                    self.vocab.index(w)
            idx = len(self._sigs)
            self._sigs.append(signature)
            self._index[signature] = idx
            self._matrix_cache = None
        return idx

    def index(self, signature: Signature) -> int:
        try:
            return self._index[signature]
        except KeyError:
            raise KeyError(f"signature {list(signature.words)} is not registered") from None

    def __len__(self) -> int:
        return len(self._sigs)

    @property
    def signatures(self) -> list[Signature]:
        return list(self._sigs)

    def matrix(self, dtype=np.float32) -> np.ndarray:
        n_words = len(self.vocab)
        cached = self._matrix_cache
        if cached is None or cached.shape[1] != n_words or cached.dtype != dtype:
            m = np.zeros((len(self._sigs), n_words), dtype=dtype)
            for r, s in enumerate(self._sigs):
                for i in s.indices(self.vocab):
                    if i != 0:
                        m[r, i] = 1.0
            self._matrix_cache = m
        return self._matrix_cache
