"""Datasets: SemEval XML ingestion, opinion annotations, JSONL persistence,
adaptation corpora and labeled-fraction sampling.

All spans are half-open character intervals ``(start, end)`` on the raw
sentence string.
"""

from __future__ import annotations

import json
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, XMLFormatError

log = logging.getLogger(__name__)

POLARITIES = ("positive", "negative", "neutral")
DOMAINS = ("laptop", "restaurant", "other")
SPLITS = ("train", "test")

Span = tuple[int, int]

_WORD_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]", re.UNICODE)


def word_tokenize(text: str) -> list[tuple[str, int, int]]:
    """Split ``text`` into words and punctuation marks with character offsets."""
    return [(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def domain_for(name: str) -> str:
    """Map a dataset name such as ``L14`` or ``R15`` onto its review domain."""
    head = name.strip().upper()[:1]
    if head == "L":
        return "laptop"
    if head == "R":
        return "restaurant"
    return "other"


@dataclass(frozen=True)
class RawSentence:
    id: str
    text: str
    domain: str = "other"
    split: str = "test"

    def __post_init__(self):
        if not self.text:
            raise InputError(f"sentence {self.id!r} has empty text")
        if self.domain not in DOMAINS:
            raise InputError(f"unknown domain {self.domain!r}")
        if self.split not in SPLITS:
            raise InputError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class AspectInstance:
    sentence_id: str
    aspect_span: Span
    aspect_text: str
    gold_opinions: tuple[Span, ...] = ()
    gold_polarity: str | None = None

    def __post_init__(self):
        if self.gold_polarity is not None and self.gold_polarity not in POLARITIES:
            raise InputError(f"unknown polarity {self.gold_polarity!r}")
        object.__setattr__(self, "aspect_span", tuple(self.aspect_span))
        object.__setattr__(self, "gold_opinions", tuple(tuple(s) for s in self.gold_opinions))

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.sentence_id, *self.aspect_span)

    def check_against(self, text: str) -> None:
        start, end = self.aspect_span
        if not 0 <= start < end <= len(text):
            raise InputError(f"aspect span {self.aspect_span} outside sentence {self.sentence_id!r}")
        if text[start:end] != self.aspect_text:
            raise InputError(
                f"aspect text {self.aspect_text!r} != {text[start:end]!r} in {self.sentence_id!r}"
            )
        for o_start, o_end in self.gold_opinions:
            if not 0 <= o_start < o_end <= len(text):
                raise InputError(f"opinion span {(o_start, o_end)} outside sentence {self.sentence_id!r}")
            if o_start < end and start < o_end:
                raise InputError(f"opinion span {(o_start, o_end)} overlaps the aspect in {self.sentence_id!r}")


@dataclass(frozen=True)
class Dataset:
    name: str
    sentences: tuple[RawSentence, ...] = ()
    instances: tuple[AspectInstance, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        by_id = {}
        for s in self.sentences:
            if s.id in by_id:
                raise InputError(f"duplicate sentence id {s.id!r} in {self.name}")
            by_id[s.id] = s
        for inst in self.instances:
            if inst.sentence_id not in by_id:
                raise InputError(f"instance references unknown sentence {inst.sentence_id!r}")
            inst.check_against(by_id[inst.sentence_id].text)

    @property
    def domain(self) -> str:
        return domain_for(self.name)

    def sentence(self, sentence_id: str) -> RawSentence:
        for s in self.sentences:
            if s.id == sentence_id:
                return s
        raise KeyError(sentence_id)

    def sentence_map(self) -> dict[str, RawSentence]:
        return {s.id: s for s in self.sentences}

    def split(self, which: str) -> Dataset:
        """Restrict to sentences (and their instances) of one split."""
        keep = [s for s in self.sentences if s.split == which]
        ids = {s.id for s in keep}
        return Dataset(self.name, keep, [i for i in self.instances if i.sentence_id in ids])

    def instances_in(self, which: str) -> list[AspectInstance]:
        ids = {s.id for s in self.sentences if s.split == which}
        return [i for i in self.instances if i.sentence_id in ids]

    def merge(self, other: Dataset) -> Dataset:
        return Dataset(
            self.name,
            self.sentences + other.sentences,
            self.instances + other.instances,
            self.warnings + other.warnings,
        )

    def aooe_eligible(self) -> list[AspectInstance]:
        return [i for i in self.instances if i.gold_opinions]


@dataclass(frozen=True)
class TextCorpus:
    documents: tuple[str, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if any(not d for d in self.documents):
            raise InputError("corpus contains a zero-length document")

    def __len__(self):
        return len(self.documents)


# ---------------------------------------------------------------------------
# SemEval XML


def _infer_split(path: Path) -> str:
    return "train" if "train" in path.name.lower() else "test"


def parse_semeval_xml(path, name: str, split: str | None = None) -> Dataset:
    """Load a SemEval 2014 (``aspectTerms``) or 2015/16 (``Opinions``) file.

    Implicit ``NULL`` targets and ``conflict`` polarities are dropped.
    Instances whose offsets do not reproduce the target text are dropped with
    a warning recorded on the returned dataset.
    """
    path = Path(path)
    split = split or _infer_split(path)
    domain = domain_for(name)
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else 0
        raise XMLFormatError(path, line, str(exc)) from exc

    sentences, instances, warnings = [], [], []
    for s_el in root.iter("sentence"):
        sid = s_el.get("id")
        text_el = s_el.find("text")
        if sid is None or text_el is None or not text_el.text:
            continue
        text = text_el.text
        sentences.append(RawSentence(sid, text, domain, split))

        seen: dict[Span, str | None] = {}
        terms = []
        for el in s_el.iter("aspectTerm"):
            terms.append((el.get("term"), el.get("from"), el.get("to"), el.get("polarity")))
        for el in s_el.iter("Opinion"):
            terms.append((el.get("target"), el.get("from"), el.get("to"), el.get("polarity")))

        for term, start, end, polarity in terms:
            if term is None or term == "NULL":
                continue
            if polarity == "conflict":
                continue
            try:
                span = (int(start), int(end))
            except (TypeError, ValueError):
                warnings.append(f"{sid}: missing offsets for {term!r}")
                continue
            if text[span[0]:span[1]] != term:
                warnings.append(f"{sid}: offsets {span} give {text[span[0]:span[1]]!r}, expected {term!r}")
                continue
            if polarity is not None and polarity not in POLARITIES:
                warnings.append(f"{sid}: unknown polarity {polarity!r}")
                continue
            if span in seen:
                # 2015/16 files repeat a target once per category
                if seen[span] != polarity:
                    seen[span] = "conflict"
                continue
            seen[span] = polarity

        for span, polarity in seen.items():
            if polarity == "conflict":
                continue
            instances.append(AspectInstance(sid, span, text[span[0]:span[1]], (), polarity))

    for w in warnings:
        log.warning("%s: %s", path.name, w)
    return Dataset(name, sentences, instances, warnings)


# ---------------------------------------------------------------------------
# opinion annotations


def _read_tsv_rows(path: Path) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if n == 0 and len(cols) >= 3 and not cols[2].strip().lstrip("-").isdigit():
                continue  # header
            rows.append(cols)
    return rows


def attach_opinion_annotations(dataset: Dataset, path) -> Dataset:
    """Attach gold opinion spans read from a five-column TSV file.

    Columns: ``sentence_id, aspect_text, aspect_from, opinion_text, opinion_from``.
    """
    path = Path(path)
    sentences = dataset.sentence_map()
    by_key = {inst.key: inst for inst in dataset.instances}
    opinions: dict[tuple, list[Span]] = {}
    warnings = list(dataset.warnings)

    for cols in _read_tsv_rows(path):
        if len(cols) < 5:
            warnings.append(f"malformed row {cols!r}")
            continue
        sid, a_text, a_from, o_text, o_from = cols[:5]
        if sid not in sentences:
            warnings.append(f"unknown sentence id {sid!r}")
            continue
        try:
            a_from, o_from = int(a_from), int(o_from)
        except ValueError:
            warnings.append(f"{sid}: non-integer offsets")
            continue
        key = (sid, a_from, a_from + len(a_text))
        inst = by_key.get(key)
        if inst is None or inst.aspect_text != a_text:
            warnings.append(f"{sid}: no aspect {a_text!r} at {a_from}")
            continue
        text = sentences[sid].text
        span = (o_from, o_from + len(o_text))
        if not o_text or text[span[0]:span[1]] != o_text:
            warnings.append(f"{sid}: opinion offset mismatch for {o_text!r} at {o_from}")
            continue
        if span[0] < key[2] and key[1] < span[1]:
            warnings.append(f"{sid}: opinion {o_text!r} overlaps aspect {a_text!r}")
            continue
        spans = opinions.setdefault(key, [])
        if span not in spans:
            spans.append(span)

    for w in warnings[len(dataset.warnings):]:
        log.warning("%s: %s", path.name, w)
    instances = [
        replace(inst, gold_opinions=tuple(inst.gold_opinions) + tuple(
            s for s in opinions.get(inst.key, ()) if s not in inst.gold_opinions))
        for inst in dataset.instances
    ]
    return Dataset(dataset.name, dataset.sentences, instances, warnings)


# ---------------------------------------------------------------------------
# JSONL persistence


def _sentence_record(name: str, s: RawSentence, instances: Iterable[AspectInstance]) -> dict:
    return {
        "dataset": name,
        "id": s.id,
        "text": s.text,
        "domain": s.domain,
        "split": s.split,
        "instances": [
            {
                "aspect": list(i.aspect_span),
                "aspect_text": i.aspect_text,
                "opinions": [list(o) for o in i.gold_opinions],
                "polarity": i.gold_polarity,
            }
            for i in instances
        ],
    }


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grouped: dict[str, list[AspectInstance]] = {s.id: [] for s in dataset.sentences}
    for inst in dataset.instances:
        grouped[inst.sentence_id].append(inst)
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.sentences:
            rec = _sentence_record(dataset.name, s, grouped[s.id])
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_dataset(path, name: str | None = None) -> Dataset:
    path = Path(path)
    sentences, instances = [], []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{n}: {exc}") from exc
            name = name or rec.get("dataset")
            sentences.append(RawSentence(rec["id"], rec["text"], rec["domain"], rec["split"]))
            for i in rec["instances"]:
                instances.append(AspectInstance(
                    rec["id"], tuple(i["aspect"]), i["aspect_text"],
                    tuple(tuple(o) for o in i["opinions"]), i["polarity"]))
    return Dataset(name or path.stem, sentences, instances)


# ---------------------------------------------------------------------------
# adaptation corpus and sampling


def build_adaptation_corpus(datasets: Sequence[Dataset], extra_paths: Sequence = ()) -> TextCorpus:
    """Concatenate train sentences of ``datasets`` followed by raw-text files
    (one document per line). Order is stable and duplicates are kept."""
    docs, provenance = [], []
    for ds in datasets:
        train = [s.text for s in ds.sentences if s.split == "train"]
        docs.extend(train)
        provenance.append(f"dataset:{ds.name}:train:{len(train)}")
    for p in extra_paths:
        p = Path(p)
        with open(p, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
        lines = [ln for ln in lines if ln]
        docs.extend(lines)
        provenance.append(f"file:{p}:{len(lines)}")
    if not docs:
        raise InputError("empty adaptation corpus")
    return TextCorpus(docs, provenance)


def labeled_order(dataset: Dataset, seed: int) -> list[AspectInstance]:
    """Seeded permutation of the polarity-labeled train instances."""
    pool = [i for i in dataset.instances_in("train") if i.gold_polarity is not None]
    perm = np.random.default_rng(seed).permutation(len(pool))
    return [pool[k] for k in perm]


def sample_labeled_fraction(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep a seeded ``ceil(fraction * N)`` prefix of the shuffled labeled
    train instances; test instances are untouched.

    Because the shuffle does not depend on ``fraction``, smaller fractions
    are prefixes of larger ones for the same seed.
    """
    if not 0 < fraction <= 1:
        raise InputError(f"fraction must be in (0, 1], got {fraction}")
    order = labeled_order(dataset, seed)
    if not order:
        raise InputError(f"{dataset.name} has no labeled train instances")
    # round() guards against 0.07 * 100 == 7.000000000000001
    k = math.ceil(round(fraction * len(order), 9))
    chosen = order[:k]
    test_ids = {s.id for s in dataset.sentences if s.split == "test"}
    test = [i for i in dataset.instances if i.sentence_id in test_ids]
    return Dataset(dataset.name, dataset.sentences, chosen + test)
