"""Sentence + aspect -> (opinion phrase, polarity), instance by instance."""

from __future__ import annotations

from dataclasses import dataclass, field

from .attention import run_extraction
from .backend import Backend
from .config import RunConfig
from .corpus import AspectInstance, Dataset
from .polarity import PolarityLabelSet, classify_instance
from .syntax import Annotator


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class InstanceResult:
    sentence_id: str
    aspect_text: str
    aspect_span: tuple[int, int]
    predicted_opinion: str
    predicted_words: tuple[int, ...]
    head_index: int | None
    score: float | None
    fallback: str
    gold_opinions: tuple[str, ...]
    predicted_polarity: str | None
    gold_polarity: str | None
    similarities: tuple[float, float, float] | None = None
    attention: tuple[float, ...] | None = field(default=None, compare=False)

    @property
    def aooe_correct(self) -> bool | None:
        if not self.gold_opinions:
            return None
        pred = _norm(self.predicted_opinion)
        return bool(pred) and any(pred == _norm(g) for g in self.gold_opinions)

    @property
    def atsc_correct(self) -> bool | None:
        if self.gold_polarity is None:
            return None
        return self.predicted_polarity == self.gold_polarity

    @property
    def aoospe_correct(self) -> bool | None:
        a, b = self.aooe_correct, self.atsc_correct
        if a is None or b is None:
            return None
        return a and b

    def record(self) -> dict:
        rec = {
            "sentence_id": self.sentence_id,
            "aspect": self.aspect_text,
            "aspect_span": list(self.aspect_span),
            "predicted_opinion": self.predicted_opinion,
            "predicted_words": list(self.predicted_words),
            "head_index": self.head_index,
            "score": self.score,
            "fallback": self.fallback,
            "gold_opinions": list(self.gold_opinions),
            "gold_polarity": self.gold_polarity,
            "polarity": self.predicted_polarity,
        }
        if self.similarities is not None:
            rec["sim_pos"], rec["sim_neg"], rec["sim_neu"] = self.similarities
        if self.attention is not None:
            rec["attention"] = list(self.attention)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> InstanceResult:
        sims = None
        if "sim_pos" in rec:
            sims = (rec["sim_pos"], rec["sim_neg"], rec["sim_neu"])
        return cls(rec["sentence_id"], rec["aspect"], tuple(rec["aspect_span"]), rec["predicted_opinion"],
                   tuple(rec["predicted_words"]), rec["head_index"], rec["score"], rec["fallback"],
                   tuple(rec["gold_opinions"]), rec.get("polarity"), rec["gold_polarity"], sims,
                   tuple(rec["attention"]) if "attention" in rec else None)


class Pipeline:
    """Bundles a model, an annotator and the run settings."""

    def __init__(self, model: Backend, annotator: Annotator, config: RunConfig | None = None,
                 label_model: Backend | None = None):
        self.model = model
        self.annotator = annotator
        self.config = config or RunConfig()
        self.registry = self.config.build_registry()
        self.labels = PolarityLabelSet.from_backend(label_model or model)

    def predict_instance(self, sentence, instance: AspectInstance, dump_attention: bool = False) -> InstanceResult:
        cfg = self.config
        res = run_extraction(sentence, instance, self.model, self.annotator, self.registry,
                             cfg.layers, cfg.aggregation, cfg.pos_fallback)
        pol = classify_instance(res.prediction, sentence, self.model, self.labels, cfg.neutral_margin)
        gold = tuple(sentence.text[a:b] for a, b in instance.gold_opinions)
        return InstanceResult(
            instance.sentence_id, instance.aspect_text, instance.aspect_span,
            res.prediction.text, res.prediction.phrase, res.prediction.head, res.prediction.score,
            res.prediction.fallback_used, gold, pol.label, instance.gold_polarity, pol.similarities,
            tuple(float(x) for x in res.scores.scores) if dump_attention else None)

    def predict(self, dataset: Dataset, split: str | None = "test", dump_attention: bool = False) -> list[InstanceResult]:
        sentences = dataset.sentence_map()
        out = []
        for inst in dataset.instances:
            sentence = sentences[inst.sentence_id]
            if split is not None and sentence.split != split:
                continue
            out.append(self.predict_instance(sentence, inst, dump_attention))
        return out
