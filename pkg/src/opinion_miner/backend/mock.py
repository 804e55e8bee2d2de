"""Deterministic stand-in encoder.

Attention and hidden states are pseudo-random but fully determined by the
model seed and the input text. Numbers come from splitmix64 so they are
identical on every platform. Tests can "rig" the model: bias attention
towards a word, or pin the hidden vector of a word.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus import POLARITIES, TextCorpus, word_tokenize
from ..errors import InputError, SequenceTooLongError
from .base import (AdaptationConfig, AdaptationLog, Backend, TokenAlignment,
                   corpus_digest, prepare_run_dir, run_id)

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_scalar(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of splitmix64 started from ``seed`` (vectorized)."""
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(seed & MASK64) + k * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def uniform(seed: int, n: int) -> np.ndarray:
    """``n`` doubles in [0, 1) from the top 53 bits of each splitmix64 output."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def stream_key(seed: int, *parts) -> int:
    h = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(h, "little") ^ seed) & MASK64


class MockClassifier:
    """Nearest-centroid classifier over mock sentence embeddings."""

    def __init__(self, backend: MockBackend, centroids: dict[str, np.ndarray]):
        self.backend = backend
        self.centroids = centroids

    def predict(self, pairs: Sequence[tuple[str, str]]) -> list[str]:
        out = []
        for text, aspect in pairs:
            v = self.backend.pair_embedding(text, aspect)
            out.append(max(self.centroids, key=lambda lab: (float(v @ self.centroids[lab]),
                                                            -POLARITIES.index(lab))))
        return out


class MockBackend(Backend):
    name = "mock"

    def __init__(self, seed: int = 0, n_layers: int = 12, n_heads: int = 4, hidden: int = 32,
                 chars_per_subtoken: int = 5, max_length: int = 128, trainable: bool = False,
                 label_template: str | None = None):
        super().__init__(label_template)
        self.seed = int(seed) & MASK64
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.hidden = hidden
        self.chars_per_subtoken = chars_per_subtoken
        self.max_length = max_length
        self.trainable = trainable
        self.attention_bias: dict[str, dict[int, float]] = {}
        self.embedding_override: dict[tuple[str, int], np.ndarray] = {}

    # -- rigging -----------------------------------------------------------

    def rig_attention(self, text: str, word: int, weight: float) -> None:
        """Add ``weight`` to every query's raw score on ``word``'s subtokens."""
        self.attention_bias.setdefault(text, {})[word] = float(weight)

    def rig_embedding(self, text: str, word: int, vector) -> None:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.hidden,):
            raise InputError(f"rigged vector must have dimension {self.hidden}")
        self.embedding_override[(text, word)] = v

    # -- contract ----------------------------------------------------------

    def fingerprint(self) -> str:
        return f"mock:{self.seed}:{self.n_layers}x{self.n_heads}x{self.hidden}"

    @property
    def supports_training(self) -> bool:
        return self.trainable

    def tokenize_with_alignment(self, text: str) -> TokenAlignment:
        if not text:
            raise InputError("empty text")
        words = word_tokenize(text)
        spans, pos = [], 1
        for w, _, _ in words:
            n = max(1, math.ceil(len(w) / self.chars_per_subtoken))
            spans.append((pos, pos + n - 1))
            pos += n
        total = pos + 1
        if total > self.max_length:
            raise SequenceTooLongError(total, self.max_length)
        return TokenAlignment(
            text=text,
            words=tuple(w for w, _, _ in words),
            word_offsets=tuple((a, b) for _, a, b in words),
            subtoken_spans=tuple(spans),
            special_token_indices=frozenset({0, total - 1}),
            n_subtokens=total,
        )

    def _attention(self, text: str, layers):
        alignment = self.tokenize_with_alignment(text)
        n = alignment.n_subtokens
        bias = np.zeros(n)
        for word, weight in self.attention_bias.get(text, {}).items():
            bias[list(alignment.subtokens(word))] += weight
        out = np.empty((len(layers), self.n_heads, n, n))
        for li, layer in enumerate(layers):
            for head in range(self.n_heads):
                raw = uniform(stream_key(self.seed, "attn", text, layer, head), n * n).reshape(n, n)
                raw = raw + 1e-3 + bias
                out[li, head] = raw / raw.sum(axis=1, keepdims=True)
        return out, self.hidden // self.n_heads

    def _final_hidden(self, text: str) -> np.ndarray:
        alignment = self.tokenize_with_alignment(text)
        n = alignment.n_subtokens
        raw = uniform(stream_key(self.seed, "hidden", text), n * self.hidden).reshape(n, self.hidden)
        vecs = 2.0 * raw - 1.0
        for (t, word), v in self.embedding_override.items():
            if t == text:
                vecs[list(alignment.subtokens(word))] = v
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        return vecs / np.where(norms == 0, 1.0, norms)

    # -- training stand-ins --------------------------------------------------

    def _derived(self, seed: int) -> MockBackend:
        other = MockBackend(seed, self.n_layers, self.n_heads, self.hidden, self.chars_per_subtoken,
                            self.max_length, self.trainable, self.label_template)
        other.attention_bias = {k: dict(v) for k, v in self.attention_bias.items()}
        other.embedding_override = dict(self.embedding_override)
        return other

    def domain_adapt(self, corpus: TextCorpus, config: AdaptationConfig, run_root="runs") -> MockBackend:
        if not self.trainable:
            return super().domain_adapt(corpus, config, run_root)
        if not len(corpus):
            raise InputError("empty adaptation corpus")
        digest = corpus_digest(corpus)
        rid = run_id(self.fingerprint(), digest, config.to_dict())
        new_seed = stream_key(self.seed, "adapt", digest, config.seed)
        adapted = self._derived(new_seed)
        run_dir = prepare_run_dir(run_root, rid, config, {
            "backend": "mock", "base": self.fingerprint(), "corpus_sha256": digest,
            "n_documents": len(corpus), "provenance": list(corpus.provenance)})
        (run_dir / "weights" / "mock.json").write_text(json.dumps(adapted.state_dict(), sort_keys=True) + "\n")
        AdaptationLog(note="mock backend: no training objective, no losses").write(run_dir / "loss_log.json")
        adapted.run_dir = run_dir
        return adapted

    def pair_embedding(self, text: str, aspect: str) -> np.ndarray:
        joined = f"{text} | {aspect}"
        alignment = self.tokenize_with_alignment(joined)
        return self.embed_span(joined, range(len(alignment.words))).values

    def train_classifier(self, texts, labels, seed, epochs=1, batch_size=16, learning_rate=5e-5):
        if not self.trainable:
            return super().train_classifier(texts, labels, seed, epochs, batch_size, learning_rate)
        sums: dict[str, np.ndarray] = {}
        for (text, aspect), label in zip(texts, labels):
            v = self.pair_embedding(text, aspect)
            sums[label] = sums.get(label, 0) + v
        centroids = {lab: v / (np.linalg.norm(v) or 1.0) for lab, v in sums.items()}
        return MockClassifier(self, centroids)

    # -- persistence -------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "seed": self.seed, "n_layers": self.n_layers, "n_heads": self.n_heads,
            "hidden": self.hidden, "chars_per_subtoken": self.chars_per_subtoken,
            "max_length": self.max_length, "trainable": self.trainable,
        }

    @classmethod
    def from_weights(cls, path, **overrides) -> MockBackend:
        path = Path(path)
        if path.is_dir():
            path = path / "mock.json" if (path / "mock.json").exists() else path / "weights" / "mock.json"
        if not path.exists():
            raise InputError(f"no mock weights at {path}")
        state = json.loads(path.read_text())
        state.update(overrides)
        return cls(**state)
