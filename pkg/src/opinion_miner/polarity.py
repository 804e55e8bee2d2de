"""Zero-shot polarity by cosine similarity to label-word embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import OpinionPrediction
from .backend import Backend, EmbeddingVector
from .corpus import POLARITIES, RawSentence
from .errors import InputError


@dataclass(frozen=True, eq=False)
class PolarityLabelSet:
    labels: tuple[str, ...]
    vectors: tuple[EmbeddingVector, ...]

    def __post_init__(self):
        if tuple(self.labels) != POLARITIES:
            raise InputError(f"labels must be exactly {POLARITIES}")
        if len(self.vectors) != 3 or len({v.dim for v in self.vectors}) != 1:
            raise InputError("need three label vectors of equal dimension")
        if any(not np.any(v.values) for v in self.vectors):
            raise InputError("zero label vector")

    @classmethod
    def from_backend(cls, model: Backend) -> PolarityLabelSet:
        return cls(POLARITIES, tuple(model.embed_label(lab) for lab in POLARITIES))

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([v.values for v in self.vectors])


@dataclass(frozen=True)
class PolarityPrediction:
    label: str
    similarities: tuple[float, float, float]


def assign_polarity(opinion: EmbeddingVector | np.ndarray, labels: PolarityLabelSet,
                    neutral_margin: float | None = None) -> PolarityPrediction:
    """Label with the highest cosine; ties go to positive, then negative.

    With ``neutral_margin`` set, a positive/negative winner whose lead over
    the neutral similarity is below the margin becomes neutral.
    """
    h = opinion.values if isinstance(opinion, EmbeddingVector) else np.asarray(opinion, dtype=np.float64)
    m = labels.matrix
    if h.shape != (m.shape[1],):
        raise InputError(f"opinion dimension {h.shape} does not match labels {m.shape[1]}")
    h_norm = np.linalg.norm(h)
    if h_norm == 0:
        raise InputError("degenerate (zero) opinion embedding")
    # one dot product per label: a matrix product may round identical rows
    # differently, which would break exact ties
    sims = np.array([np.dot(row, h) / (np.linalg.norm(row) * h_norm) for row in m])
    sims = np.clip(sims, -1.0, 1.0)
    best = 0
    for k in (1, 2):
        if sims[k] > sims[best]:
            best = k
    label = POLARITIES[best]
    if neutral_margin is not None and label != "neutral" and sims[best] - sims[2] < neutral_margin:
        label = "neutral"
    return PolarityPrediction(label, tuple(float(x) for x in sims))


def classify_instance(prediction: OpinionPrediction, sentence: RawSentence, model: Backend,
                      labels: PolarityLabelSet, neutral_margin: float | None = None) -> PolarityPrediction:
    """Embed the predicted phrase in its sentence (the whole sentence on the
    sentence fallback) and assign the nearest label."""
    if prediction.fallback_used == "sentence_fallback" or not prediction.phrase:
        words = range(len(model.tokenize_with_alignment(sentence.text).words))
    else:
        words = prediction.phrase
    return assign_polarity(model.embed_span(sentence.text, words), labels, neutral_margin)
