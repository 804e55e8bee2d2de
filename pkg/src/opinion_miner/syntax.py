"""POS/dependency annotation and opinion-relation pattern matching.

A pattern is a chain of one or two dependency arcs, each constrained by the
dependent's POS, the relation label and the head's POS.  The generic
modifier relation written ``mod`` in pattern strings expands to the
registry's modifier set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import RawSentence, word_tokenize
from .errors import AlignmentError, CapabilityError, InputError

COARSE_TAGS = ("NOUN", "PROPN", "ADJ", "ADV", "ADP", "VERB", "OTHER")
ROOT = -1
DEFAULT_MODIFIERS = frozenset({"amod", "advmod", "nmod", "compound", "case"})
NOMINAL = frozenset({"NOUN", "PROPN"})

_PENN = {
    "JJ": "ADJ", "JJR": "ADJ", "JJS": "ADJ",
    "RB": "ADV", "RBR": "ADV", "RBS": "ADV", "WRB": "ADV",
    "IN": "ADP",
    "NN": "NOUN", "NNS": "NOUN", "NNP": "PROPN", "NNPS": "PROPN",
    "VB": "VERB", "VBD": "VERB", "VBG": "VERB", "VBN": "VERB", "VBP": "VERB", "VBZ": "VERB",
}


def coarse_pos(tag: str) -> str:
    """Map a Universal or Penn Treebank tag onto the seven-tag set."""
    if tag in COARSE_TAGS:
        return tag
    return _PENN.get(tag, "OTHER")


@dataclass(frozen=True)
class SyntaxAnnotation:
    words: tuple[str, ...]
    pos: tuple[str, ...]
    heads: tuple[int, ...]
    deprels: tuple[str, ...]
    word_offsets: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        for name in ("words", "pos", "heads", "deprels", "word_offsets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.words)
        if not (len(self.pos) == len(self.heads) == len(self.deprels) == n):
            raise InputError("words, pos, heads and deprels differ in length")
        if self.word_offsets and len(self.word_offsets) != n:
            raise InputError("word offsets differ in length from words")
        for tag in self.pos:
            if tag not in COARSE_TAGS:
                raise InputError(f"unknown coarse tag {tag!r}")
        for i, h in enumerate(self.heads):
            if h != ROOT and not 0 <= h < n:
                raise InputError(f"head {h} of word {i} out of range")
        # acyclic: every chain of heads must reach ROOT
        for i in range(n):
            seen, j = set(), i
            while j != ROOT:
                if j in seen:
                    raise InputError(f"dependency cycle through word {i}")
                seen.add(j)
                j = self.heads[j]

    def __len__(self):
        return len(self.words)

    def relation(self, i: int) -> str:
        return self.deprels[i].split(":")[0].lower()

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in range(len(self))}
        for i, h in enumerate(self.heads):
            if h != ROOT:
                out[h].append(i)
        return out


@dataclass(frozen=True)
class Arc:
    """``dep_pos --relations--> head_pos``; ``relations=None`` means the modifier set."""

    dep_pos: frozenset[str]
    head_pos: frozenset[str]
    relations: frozenset[str] | None = None


@dataclass(frozen=True)
class OpinionRelationPattern:
    """A chained arc pattern.

    Matched words are numbered along the chain: node 0 is the first
    dependent, node 1 its head, node 2 the head's head.  ``emit`` lists the
    nodes forming the phrase and ``head_node`` the candidate's head.  With
    ``subtree=True`` the phrase is instead the contiguous dependent subtree
    of the head node, capped at ``max_words``.
    """

    name: str
    arcs: tuple[Arc, ...]
    emit: tuple[int, ...] = (0,)
    head_node: int = 0
    subtree: bool = False
    max_words: int = 4

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "emit", tuple(self.emit))
        if len(self.arcs) not in (1, 2):
            raise InputError(f"pattern {self.name}: chain length must be 1 or 2")
        if self.head_node not in self.emit:
            raise InputError(f"pattern {self.name}: head node must be emitted")
        if max(self.emit) > len(self.arcs) or min(self.emit) < 0:
            raise InputError(f"pattern {self.name}: emitted node out of range")

    def matches(self, ann: SyntaxAnnotation, modifiers: frozenset[str]) -> list[tuple[int, ...]]:
        """All node tuples satisfying the chain."""
        found = []
        for start in range(len(ann)):
            nodes = [start]
            for arc in self.arcs:
                dep = nodes[-1]
                head = ann.heads[dep]
                rels = modifiers if arc.relations is None else arc.relations
                if (head == ROOT or ann.pos[dep] not in arc.dep_pos
                        or ann.relation(dep) not in rels or ann.pos[head] not in arc.head_pos):
                    break
                nodes.append(head)
            else:
                found.append(tuple(nodes))
        return found

    def phrase(self, ann: SyntaxAnnotation, nodes: tuple[int, ...]) -> tuple[int, ...]:
        head = nodes[self.head_node]
        if not self.subtree:
            return tuple(sorted({nodes[k] for k in self.emit}))
        kids = ann.children()
        members, stack = {head}, [head]
        while stack:
            for c in kids[stack.pop()]:
                if c not in members:
                    members.add(c)
                    stack.append(c)
        lo = hi = head
        while lo - 1 in members:
            lo -= 1
        while hi + 1 in members:
            hi += 1
        start = max(lo, min(head, hi - self.max_words + 1))
        return tuple(range(start, min(hi, start + self.max_words - 1) + 1))


def _tags(spec: str) -> frozenset[str]:
    return frozenset(t.strip().upper() for t in spec.split("|") if t.strip())


def parse_pattern(name: str, chain: str, emit: str | None = None, head: str | None = None,
                  subtree: bool = False) -> OpinionRelationPattern:
    """Build a pattern from ``"ADJ>mod>NOUN|PROPN>compound>NOUN"``-style text.

    Relation ``mod`` stands for the registry's modifier set; several tags or
    relations may be joined with ``|``.
    """
    parts = [p.strip() for p in chain.split(">")]
    if len(parts) not in (3, 5):
        raise InputError(f"pattern {name}: expected POS>rel>POS[>rel>POS], got {chain!r}")
    arcs = []
    for k in range(0, len(parts) - 1, 2):
        rel = parts[k + 1]
        rels = None if rel.lower() == "mod" else frozenset(r.strip().lower() for r in rel.split("|"))
        arcs.append(Arc(_tags(parts[k]), _tags(parts[k + 2]), rels))
    emit_nodes = tuple(int(x) for x in emit.split(",")) if emit else (0,)
    head_node = int(head) if head is not None else emit_nodes[0]
    return OpinionRelationPattern(name, tuple(arcs), emit_nodes, head_node, subtree)


def builtin_patterns() -> list[OpinionRelationPattern]:
    adj, adv, adp = frozenset({"ADJ"}), frozenset({"ADV"}), frozenset({"ADP"})
    return [
        OpinionRelationPattern("P1", (Arc(adj, NOMINAL),), emit=(0,), head_node=0),
        OpinionRelationPattern("P2", (Arc(adv, adj),), emit=(0, 1), head_node=1),
        OpinionRelationPattern("P3", (Arc(adj, NOMINAL), Arc(NOMINAL, NOMINAL)), emit=(0,), head_node=0),
        OpinionRelationPattern("P4", (Arc(adp, NOMINAL),), emit=(0,), head_node=0, subtree=True),
    ]


class PatternRegistry:
    """Ordered, name-unique collection of patterns plus the modifier set."""

    def __init__(self, patterns: Iterable[OpinionRelationPattern] | None = None,
                 modifiers: Iterable[str] = DEFAULT_MODIFIERS):
        self.modifiers = frozenset(m.lower() for m in modifiers)
        self._patterns: list[OpinionRelationPattern] = []
        for p in builtin_patterns() if patterns is None else patterns:
            self.register(p)

    def register(self, pattern: OpinionRelationPattern) -> None:
        if any(p.name == pattern.name for p in self._patterns):
            raise InputError(f"duplicate pattern name {pattern.name!r}")
        self._patterns.append(pattern)

    def list_patterns(self) -> list[OpinionRelationPattern]:
        return list(self._patterns)

    def __len__(self):
        return len(self._patterns)


def list_patterns(registry: PatternRegistry | None = None) -> list[OpinionRelationPattern]:
    return (registry or PatternRegistry()).list_patterns()


@dataclass(frozen=True)
class Candidate:
    phrase: tuple[int, ...]
    head: int
    pattern: str


@dataclass(frozen=True)
class CandidateSet:
    n_words: int
    candidates: tuple[Candidate, ...] = ()
    # ADJ/ADV words outside the excluded set, for the empty-mask fallback
    fallback_words: tuple[int, ...] = field(default=())

    @property
    def mask(self) -> frozenset[int]:
        return frozenset(c.head for c in self.candidates)

    def by_head(self, head: int) -> Candidate:
        for c in self.candidates:
            if c.head == head:
                return c
        raise KeyError(head)


def extract_candidates(ann: SyntaxAnnotation, registry: PatternRegistry | None = None,
                       exclude: Iterable[int] = ()) -> CandidateSet:
    """Apply every registered pattern and merge candidates sharing a head.

    The longest phrase wins a merge (earlier registry entries win ties).
    Candidates headed by an ``exclude``d word (the aspect) are dropped, and
    excluded words are stripped from the remaining phrases.
    """
    registry = registry or PatternRegistry()
    excluded = set(exclude)
    best: dict[int, Candidate] = {}
    for pattern in registry.list_patterns():
        for nodes in pattern.matches(ann, registry.modifiers):
            head = nodes[pattern.head_node]
            if head in excluded:
                continue
            phrase = tuple(i for i in pattern.phrase(ann, nodes) if i not in excluded)
            current = best.get(head)
            if current is None or len(phrase) > len(current.phrase):
                best[head] = Candidate(phrase, head, pattern.name)
    fallback = tuple(i for i, tag in enumerate(ann.pos) if tag in ("ADJ", "ADV") and i not in excluded)
    return CandidateSet(len(ann), tuple(best[h] for h in sorted(best)), fallback)


# ---------------------------------------------------------------------------
# annotators


@dataclass(frozen=True)
class TokenRecord:
    """One annotator token: ``head`` is a token index, ``-1`` for the root."""

    text: str
    start: int
    pos: str
    head: int
    deprel: str

    @property
    def end(self) -> int:
        return self.start + len(self.text)


class Annotator(Protocol):
    def parse(self, text: str) -> list[TokenRecord]: ...


class PrecomputedAnnotator:
    """Serves parses stored in a JSONL file keyed by sentence text.

    Each line: ``{"text": ..., "tokens": [{"text", "start", "pos", "head", "deprel"}]}``.
    """

    def __init__(self, parses: dict[str, list[TokenRecord]] | None = None):
        self.parses = dict(parses or {})

    @classmethod
    def from_jsonl(cls, path) -> PrecomputedAnnotator:
        parses = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    parses[rec["text"]] = [
                        TokenRecord(t["text"], int(t["start"]), t["pos"],
                                    -1 if t["head"] is None else int(t["head"]), t["deprel"])
                        for t in rec["tokens"]]
        return cls(parses)

    def add(self, text: str, tokens: Sequence[TokenRecord]) -> None:
        self.parses[text] = list(tokens)

    def parse(self, text: str) -> list[TokenRecord]:
        try:
            return self.parses[text]
        except KeyError:
            raise InputError(f"no precomputed parse for {text!r}") from None


class SpacyAnnotator:
    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise CapabilityError("spaCy is not installed") from exc
        try:
            self.nlp = spacy.load(model)
        except OSError as exc:
            raise CapabilityError(f"spaCy model {model!r} is not available") from exc

    def parse(self, text: str) -> list[TokenRecord]:
        doc = self.nlp(text)
        return [TokenRecord(t.text, t.idx, t.pos_, -1 if t.head.i == t.i else t.head.i, t.dep_)
                for t in doc]


def write_parses(annotator: Annotator, texts: Iterable[str], path) -> None:
    """Freeze an annotator's output into a file :class:`PrecomputedAnnotator` reads."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for text in dict.fromkeys(texts):
            tokens = [{"text": t.text, "start": t.start, "pos": t.pos, "head": t.head, "deprel": t.deprel}
                      for t in annotator.parse(text)]
            fh.write(json.dumps({"text": text, "tokens": tokens}, ensure_ascii=False) + "\n")


def load_annotator(annotator_id: str, path: str | None = None, model: str | None = None) -> Annotator:
    if annotator_id == "precomputed":
        if not path:
            raise InputError("the precomputed annotator needs a parse file")
        return PrecomputedAnnotator.from_jsonl(path)
    if annotator_id == "spacy":
        return SpacyAnnotator(model or "en_core_web_sm")
    raise InputError(f"unknown annotator {annotator_id!r}")


def align_tokens(text: str, tokens: Sequence[TokenRecord]) -> SyntaxAnnotation:
    """Project annotator tokens onto :func:`word_tokenize` words.

    A word split into several tokens takes the POS and relation of its first
    token; its head is the first head pointing outside the word.
    """
    words = word_tokenize(text)
    tokens = list(tokens)
    tok_word: dict[int, int] = {}
    word_toks: list[list[int]] = [[] for _ in words]
    bad = []
    for k, tok in enumerate(tokens):
        if not tok.text.strip():
            continue
        if text[tok.start:tok.end] != tok.text:
            bad.append((tok.start, tok.end))
            continue
        hits = [w for w, (_, a, b) in enumerate(words) if tok.start < b and a < tok.end]
        if len(hits) != 1:
            bad.append((tok.start, tok.end))
            continue
        tok_word[k] = hits[0]
        word_toks[hits[0]].append(k)
    bad.extend((a, b) for (_, a, b), toks in zip(words, word_toks) if not toks)
    if bad:
        raise AlignmentError(sorted(set(bad)))

    pos, heads, rels = [], [], []
    for w, toks in enumerate(word_toks):
        first = tokens[toks[0]]
        pos.append(coarse_pos(first.pos))
        rels.append(first.deprel)
        head = ROOT
        for k in toks:
            h = tokens[k].head
            if h != ROOT and h in tok_word and tok_word[h] != w:
                head = tok_word[h]
                break
        heads.append(head)
    return SyntaxAnnotation(tuple(t for t, _, _ in words), pos, heads, rels,
                            tuple((a, b) for _, a, b in words))


def annotate(sentence: RawSentence | str, annotator: Annotator | None) -> SyntaxAnnotation:
    text = sentence.text if isinstance(sentence, RawSentence) else sentence
    if not text or not text.strip():
        raise InputError("cannot annotate an empty sentence")
    if annotator is None:
        raise CapabilityError("no annotator configured")
    return align_tokens(text, annotator.parse(text))
