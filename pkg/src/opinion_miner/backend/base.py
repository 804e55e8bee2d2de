"""Encoder backend contract and the value types it produces."""

from __future__ import annotations

import abc
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..corpus import POLARITIES, Span, TextCorpus
from ..errors import CapabilityError, InputError, NotRowStochasticError

ROW_SUM_TOL = 1e-4


@dataclass(frozen=True)
class TokenAlignment:
    """Word <-> subtoken mapping for one text.

    ``subtoken_spans[w]`` is the inclusive ``(first, last)`` subtoken range of
    word ``w``; specials (CLS/SEP and friends) belong to no word.
    """

    text: str
    words: tuple[str, ...]
    word_offsets: tuple[Span, ...]
    subtoken_spans: tuple[tuple[int, int], ...]
    special_token_indices: frozenset[int]
    n_subtokens: int

    def __post_init__(self):
        if len(self.words) != len(self.subtoken_spans) or len(self.words) != len(self.word_offsets):
            raise InputError("words, offsets and subtoken spans differ in length")
        covered = set(self.special_token_indices)
        prev_end = -1
        for first, last in self.subtoken_spans:
            if first > last:
                raise InputError("word maps to no subtokens")
            if first <= prev_end:
                raise InputError("subtoken spans overlap or are out of order")
            prev_end = last
            block = set(range(first, last + 1))
            if block & covered:
                raise InputError("subtoken assigned twice")
            covered |= block
        if covered != set(range(self.n_subtokens)):
            raise InputError("alignment does not partition the subtoken sequence")

    def subtokens(self, word: int) -> range:
        first, last = self.subtoken_spans[word]
        return range(first, last + 1)

    def words_in_interval(self, start: int, end: int) -> set[int]:
        """Indices of words overlapping the character interval ``[start, end)``."""
        return {w for w, (a, b) in enumerate(self.word_offsets) if a < end and start < b}

    def phrase_text(self, word_indices: Iterable[int]) -> str:
        idx = sorted(set(word_indices))
        if not idx:
            return ""
        if idx == list(range(idx[0], idx[-1] + 1)):
            return self.text[self.word_offsets[idx[0]][0]:self.word_offsets[idx[-1]][1]]
        return " ".join(self.words[i] for i in idx)


def check_row_stochastic(matrices: np.ndarray, layers: Sequence[int], tol: float = ROW_SUM_TOL) -> None:
    sums = matrices.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) >= tol)
    if len(bad):
        li, h, r = (int(x) for x in bad[0])
        raise NotRowStochasticError(layers[li], h, r, float(sums[li, h, r]))


@dataclass(frozen=True, eq=False)
class AttentionView:
    """Attention probabilities, shape ``(len(layers), n_heads, n, n)``; rows are queries."""

    layers: tuple[int, ...]
    matrices: np.ndarray
    d_k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        m = np.asarray(self.matrices, dtype=np.float64)
        if m.ndim != 4 or m.shape[0] != len(self.layers) or m.shape[2] != m.shape[3]:
            raise InputError(f"bad attention tensor shape {m.shape} for layers {self.layers}")
        check_row_stochastic(m, self.layers)
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def n_heads(self) -> int:
        return self.matrices.shape[1]

    @property
    def n_subtokens(self) -> int:
        return self.matrices.shape[2]

    def matrix(self, layer: int, head: int) -> np.ndarray:
        return self.matrices[self.layers.index(layer), head]


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    layer: int = -1
    pooling: str = "mean_subtokens"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise InputError("embedding must be a finite 1-d vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AdaptationConfig:
    batch_size: int = 16
    grad_accum_steps: int = 2
    learning_rate: float = 5e-5
    epochs: int = 5
    mask_probability: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.grad_accum_steps, self.epochs) <= 0 or self.learning_rate <= 0:
            raise InputError("adaptation settings must be positive")
        if not 0 < self.mask_probability < 1:
            raise InputError("mask_probability must lie in (0, 1)")
        if self.seed < 0:
            raise InputError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_digest(corpus: TextCorpus) -> str:
    h = hashlib.sha256()
    for doc in corpus.documents:
        h.update(doc.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def run_id(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


class Backend(abc.ABC):
    """A pretrained bidirectional encoder seen through five operations.

    Handles are immutable after construction: ``domain_adapt`` returns a new
    handle and never touches the receiver.
    """

    name = "abstract"
    n_layers: int
    max_length: int
    run_dir: Path | None = None

    def __init__(self, label_template: str | None = None):
        # "{label}" placeholder; None embeds the bare word
        self.label_template = label_template
        self._label_cache: dict[str, EmbeddingVector] = {}

    @abc.abstractmethod
    def tokenize_with_alignment(self, text: str) -> TokenAlignment: ...

    @abc.abstractmethod
    def _attention(self, text: str, layers: list[int]) -> tuple[np.ndarray, int]:
        """Attention ``(len(layers), H, n, n)`` for the given layers, and d_k."""

    @abc.abstractmethod
    def _final_hidden(self, text: str) -> np.ndarray:
        """Final-layer hidden states ``(n_subtokens, dim)``."""

    @abc.abstractmethod
    def fingerprint(self) -> str:
        """Stable identity of the model state, used for run ids."""

    def attention_maps(self, text: str, layers: Sequence[int]) -> AttentionView:
        layers = list(layers)
        if not layers:
            raise InputError("no layers requested")
        for layer in layers:
            if not 0 <= layer < self.n_layers:
                raise InputError(f"layer {layer} out of range for a {self.n_layers}-layer backend")
        matrices, d_k = self._attention(text, layers)
        return AttentionView(tuple(layers), matrices, d_k)

    def embed_span(self, text: str, word_indices: Iterable[int]) -> EmbeddingVector:
        """Mean over words of each word's mean final-layer subtoken vector."""
        idx = sorted(set(word_indices))
        if not idx:
            raise InputError("empty word index set")
        alignment = self.tokenize_with_alignment(text)
        if idx[0] < 0 or idx[-1] >= len(alignment.words):
            raise InputError(f"word indices {idx} out of range")
        hidden = self._final_hidden(text)
        word_means = [hidden[list(alignment.subtokens(w))].mean(axis=0) for w in idx]
        return EmbeddingVector(np.mean(word_means, axis=0), layer=self.n_layers - 1)

    def embed_label(self, label: str) -> EmbeddingVector:
        if label not in POLARITIES:
            raise InputError(f"unknown label {label!r}")
        if label not in self._label_cache:
            if self.label_template:
                text = self.label_template.format(label=label)
                start = text.index(label)
                alignment = self.tokenize_with_alignment(text)
                words = alignment.words_in_interval(start, start + len(label))
            else:
                text = label
                words = range(len(self.tokenize_with_alignment(text).words))
            self._label_cache[label] = self.embed_span(text, words)
        return self._label_cache[label]

    @property
    def supports_training(self) -> bool:
        return False

    def domain_adapt(self, corpus: TextCorpus, config: AdaptationConfig, run_root="runs") -> Backend:
        raise CapabilityError(f"backend {self.name!r} cannot be trained; run without domain adaptation")

    def train_classifier(self, texts: Sequence[tuple[str, str]], labels: Sequence[str],
                         seed: int, epochs: int = 1, batch_size: int = 16,
                         learning_rate: float = 5e-5):
        raise CapabilityError(f"backend {self.name!r} cannot fine-tune a classifier")


@dataclass
class AdaptationLog:
    """Contents of ``loss_log.json`` in an adaptation run directory."""

    epoch_losses: list[float] = field(default_factory=list)
    initial_loss: float | None = None
    final_loss: float | None = None
    note: str = ""

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def prepare_run_dir(run_root, rid: str, config: AdaptationConfig, extra: dict) -> Path:
    run_dir = Path(run_root) / rid
    (run_dir / "weights").mkdir(parents=True, exist_ok=True)
    payload = {"adaptation": config.to_dict(), **extra}
    (run_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return run_dir
