"""Aspect-query attention scores and masked opinion selection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .backend import AttentionView, Backend, TokenAlignment
from .corpus import AspectInstance, RawSentence
from .errors import InputError
from .syntax import Annotator, CandidateSet, PatternRegistry, annotate, extract_candidates

DEFAULT_LAYERS = (0, 1, 2, 3)
AGGREGATION = {"heads": "mean", "layers": "mean", "query": "aspect-subtoken-mean", "key": "word-subtoken-sum"}


@dataclass(frozen=True, eq=False)
class AspectQueryScores:
    scores: np.ndarray
    layers_used: tuple[int, ...]
    per_layer: np.ndarray | None = None  # (n_layers, n_words), kept for voting
    aggregation: dict = field(default_factory=lambda: dict(AGGREGATION))

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 1 or not np.all(np.isfinite(s)) or np.any(s < 0):
            raise InputError("scores must be a finite non-negative vector")
        object.__setattr__(self, "scores", s)


@dataclass(frozen=True)
class OpinionPrediction:
    phrase: tuple[int, ...]
    head: int | None
    text: str
    score: float | None
    fallback_used: str = "none"  # none | pos_fallback | sentence_fallback


def word_key_matrix(alignment: TokenAlignment) -> np.ndarray:
    """``(n_subtokens, n_words)`` 0/1 matrix; column ``w`` selects word ``w``'s subtokens."""
    m = np.zeros((alignment.n_subtokens, len(alignment.words)))
    for w in range(len(alignment.words)):
        m[list(alignment.subtokens(w)), w] = 1.0
    return m


def aspect_scores(attn: AttentionView, alignment: TokenAlignment, aspect_words: Iterable[int]) -> AspectQueryScores:
    """Word scores for the aspect as query, averaged over heads then layers."""
    aspect_words = sorted(set(aspect_words))
    if not aspect_words:
        raise InputError("aspect has no words")
    if attn.n_subtokens != alignment.n_subtokens:
        raise InputError("attention and alignment disagree on the subtoken count")
    rows = [t for w in aspect_words for t in alignment.subtokens(w)]
    if not rows:
        raise InputError("aspect words map to no subtokens")
    query = attn.matrices[:, :, rows, :].mean(axis=2)          # (L, H, n)
    per_head = query @ word_key_matrix(alignment)              # (L, H, n_words)
    per_layer = per_head.mean(axis=1)                          # (L, n_words)
    return AspectQueryScores(per_layer.mean(axis=0), attn.layers, per_layer)


def _masked_argmax(scores: np.ndarray, allowed: Iterable[int]) -> int:
    allowed = sorted(allowed)
    best = allowed[0]
    for i in allowed[1:]:
        if scores[i] > scores[best]:
            best = i
    return best


def select_opinion(scores: AspectQueryScores, candidates: CandidateSet,
                   alignment: TokenAlignment | None = None, mode: str = "pool") -> OpinionPrediction:
    """Highest-scoring candidate head (lowest index on ties) and its phrase.

    ``mode="vote"`` takes the masked argmax of every layer separately and
    returns the most voted head, ties going to the lowest index.
    """
    def text_of(phrase):
        return alignment.phrase_text(phrase) if alignment is not None else ""

    mask = candidates.mask
    if mask:
        if mode == "pool":
            head = _masked_argmax(scores.scores, mask)
        elif mode == "vote":
            if scores.per_layer is None:
                raise InputError("voting needs per-layer scores")
            votes: dict[int, int] = {}
            for row in scores.per_layer:
                h = _masked_argmax(row, mask)
                votes[h] = votes.get(h, 0) + 1
            head = min(votes, key=lambda h: (-votes[h], h))
        else:
            raise InputError(f"unknown aggregation mode {mode!r}")
        phrase = candidates.by_head(head).phrase
        return OpinionPrediction(phrase, head, text_of(phrase), float(scores.scores[head]), "none")
    if candidates.fallback_words:
        head = _masked_argmax(scores.scores, candidates.fallback_words)
        return OpinionPrediction((head,), head, text_of((head,)), float(scores.scores[head]), "pos_fallback")
    return OpinionPrediction((), None, "", None, "sentence_fallback")


@dataclass
class PipelineResult:
    instance: AspectInstance
    alignment: TokenAlignment
    aspect_words: tuple[int, ...]
    scores: AspectQueryScores
    candidates: CandidateSet
    prediction: OpinionPrediction


def run_extraction(sentence: RawSentence, aspect: AspectInstance, model: Backend, annotator: Annotator,
                   registry: PatternRegistry | None = None, layers: Sequence[int] = DEFAULT_LAYERS,
                   mode: str = "pool", pos_fallback: bool = True) -> PipelineResult:
    """:func:`extract_opinion` keeping every intermediate for dumps and analysis."""
    if aspect.sentence_id != sentence.id:
        raise InputError(f"aspect belongs to {aspect.sentence_id!r}, not {sentence.id!r}")
    alignment = model.tokenize_with_alignment(sentence.text)
    aspect_words = tuple(sorted(alignment.words_in_interval(*aspect.aspect_span)))
    if not aspect_words:
        raise InputError(f"aspect {aspect.aspect_text!r} covers no words")
    annotation = annotate(sentence, annotator)
    candidates = extract_candidates(annotation, registry, exclude=aspect_words)
    if not pos_fallback:
        candidates = replace(candidates, fallback_words=())
    scores = aspect_scores(model.attention_maps(sentence.text, layers), alignment, aspect_words)
    prediction = select_opinion(scores, candidates, alignment, mode)
    return PipelineResult(aspect, alignment, aspect_words, scores, candidates, prediction)


def extract_opinion(sentence: RawSentence, aspect: AspectInstance, model: Backend, annotator: Annotator,
                    registry: PatternRegistry | None = None, layers: Sequence[int] = DEFAULT_LAYERS,
                    mode: str = "pool") -> OpinionPrediction:
    return run_extraction(sentence, aspect, model, annotator, registry, layers, mode).prediction
