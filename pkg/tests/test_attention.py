import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_scores, brute_force_select
from opinion_miner.attention import AspectQueryScores, aspect_scores, extract_opinion, run_extraction, select_opinion
from opinion_miner.backend import AttentionView, MockBackend, TokenAlignment
from opinion_miner.corpus import AspectInstance, RawSentence
from opinion_miner.errors import InputError
from opinion_miner.syntax import Candidate, CandidateSet, PrecomputedAnnotator, TokenRecord


def alignment_for(spans, n):
    words = tuple(f"w{i}" for i in range(len(spans)))
    offsets, pos = [], 0
    for w in words:
        offsets.append((pos, pos + len(w)))
        pos += len(w) + 1
    covered = {t for a, b in spans for t in range(a, b + 1)}
    return TokenAlignment(" ".join(words), words, tuple(offsets), tuple(spans),
                          frozenset(set(range(n)) - covered), n)


def test_head_mean_example():
    # one layer, two heads, aspect word 0 at subtoken 0; words 1 and 2 at subtokens 1 and 2
    h1 = np.array([[0.0, 0.8, 0.2], [1 / 3] * 3, [1 / 3] * 3])
    h2 = np.array([[0.0, 0.0, 1.0], [1 / 3] * 3, [1 / 3] * 3])
    view = AttentionView((0,), np.stack([h1, h2])[None])
    align = alignment_for([(0, 0), (1, 1), (2, 2)], 3)
    s = aspect_scores(view, align, [0])
    assert np.allclose(s.scores[1:], [0.4, 0.6], atol=1e-12)


def test_layer_mean_example():
    def layer(p):
        return np.array([[[0.0, p, 1 - p], [1 / 3] * 3, [1 / 3] * 3]])
    view = AttentionView((0, 1), np.stack([layer(0.8), layer(0.4)]))
    s = aspect_scores(view, alignment_for([(0, 0), (1, 1), (2, 2)], 3), [0])
    assert np.allclose(s.scores[1:], [0.6, 0.4], atol=1e-12)
    assert s.per_layer.shape == (2, 3)


def test_multi_subtoken_query_and_key():
    rng = np.random.default_rng(0)
    m = rng.random((2, 3, 7, 7))
    m /= m.sum(-1, keepdims=True)
    spans = [(1, 2), (3, 3), (4, 5)]
    s = aspect_scores(AttentionView((0, 1), m), alignment_for(spans, 7), [0, 1])
    assert np.allclose(s.scores, brute_force_scores(m.tolist(), spans, [0, 1]), atol=1e-12)


def test_aspect_validation():
    view = AttentionView((0,), np.full((1, 1, 3, 3), 1 / 3))
    with pytest.raises(InputError):
        aspect_scores(view, alignment_for([(1, 1)], 3), [])
    with pytest.raises(InputError):
        aspect_scores(view, alignment_for([(1, 1)], 4), [0])


@st.composite
def attention_cases(draw):
    n_layers = draw(st.integers(1, 4))
    n_heads = draw(st.integers(1, 4))
    n_words = draw(st.integers(1, 5))
    sizes = draw(st.lists(st.integers(1, 3), min_size=n_words, max_size=n_words))
    spans, pos = [], 1
    for k in sizes:
        spans.append((pos, pos + k - 1))
        pos += k
    n = pos + 1
    raw = draw(arrays(np.float64, (n_layers, n_heads, n, n), elements=st.floats(0.01, 1.0)))
    m = raw / raw.sum(-1, keepdims=True)
    aspect = draw(st.sets(st.integers(0, n_words - 1), min_size=1))
    return m, spans, n, aspect


@settings(max_examples=100, deadline=None)
@given(attention_cases())
def test_matches_brute_force(case):
    m, spans, n, aspect = case
    s = aspect_scores(AttentionView(tuple(range(len(m))), m), alignment_for(spans, n), aspect)
    assert np.allclose(s.scores, brute_force_scores(m.tolist(), spans, aspect), atol=1e-9, rtol=0)


@settings(max_examples=60, deadline=None)
@given(attention_cases(), st.data())
def test_head_permutation_invariance(case, data):
    m, spans, n, aspect = case
    perm = data.draw(st.permutations(range(m.shape[1])))
    align = alignment_for(spans, n)
    a = aspect_scores(AttentionView(tuple(range(len(m))), m), align, aspect).scores
    b = aspect_scores(AttentionView(tuple(range(len(m))), m[:, list(perm)]), align, aspect).scores
    assert np.allclose(a, b, atol=1e-12)


def cands(heads):
    return CandidateSet(10, tuple(Candidate((h,), h, "P1") for h in sorted(heads)))


def test_masked_selection_and_tie_break():
    s = AspectQueryScores(np.array([0.9, 0.2, 0.5, 0.5, 0.1]), (0,))
    assert select_opinion(s, cands({1, 2, 3})).head == 2
    assert select_opinion(s, cands({4})).head == 4


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=12).map(lambda v: np.array(v, float) / 5),
       st.data())
def test_selection_properties(scores, data):
    mask = data.draw(st.sets(st.integers(0, len(scores) - 1), min_size=1))
    c = st.floats(0.01, 100.0)
    s = AspectQueryScores(scores, (0,))
    pick = select_opinion(s, cands(mask)).head
    assert pick in mask
    assert pick == brute_force_select(scores, mask)
    scaled = AspectQueryScores(scores * data.draw(c), (0,))
    assert select_opinion(scaled, cands(mask)).head == pick


def test_vote_mode():
    per_layer = np.array([[0.1, 0.5, 0.4], [0.1, 0.2, 0.7], [0.1, 0.3, 0.6]])
    s = AspectQueryScores(per_layer.mean(0), (0, 1, 2), per_layer)
    assert select_opinion(s, cands({1, 2}), mode="vote").head == 2
    tie = np.array([[0.0, 0.6, 0.4], [0.0, 0.4, 0.6]])
    s = AspectQueryScores(tie.mean(0), (0, 1), tie)
    assert select_opinion(s, cands({1, 2}), mode="vote").head == 1
    with pytest.raises(InputError):
        select_opinion(s, cands({1}), mode="median")


def test_fallbacks():
    s = AspectQueryScores(np.array([0.1, 0.3, 0.2]), (0,))
    p = select_opinion(s, CandidateSet(3, (), (0, 2)))
    assert (p.head, p.fallback_used) == (2, "pos_fallback")
    p = select_opinion(s, CandidateSet(3))
    assert p.fallback_used == "sentence_fallback" and p.phrase == () and p.head is None


# -- end to end on the mock -----------------------------------------------------

TEXT = "The fajitas are great"


def fajitas_annotator():
    return PrecomputedAnnotator({TEXT: [
        TokenRecord("The", 0, "DET", 1, "det"), TokenRecord("fajitas", 4, "NOUN", 3, "nsubj"),
        TokenRecord("are", 12, "AUX", 3, "cop"), TokenRecord("great", 16, "ADJ", -1, "ROOT")]})


def test_rigged_end_to_end_predicts_great():
    m = MockBackend(seed=11)
    m.rig_attention(TEXT, 3, 20.0)
    sent = RawSentence("s1", TEXT, "restaurant", "test")
    aspect = AspectInstance("s1", (4, 11), "fajitas", ((16, 21),), "positive")
    res = run_extraction(sent, aspect, m, fajitas_annotator())
    assert res.aspect_words == (1,)
    assert res.candidates.candidates == ()
    assert res.prediction.text == "great"
    assert res.prediction.fallback_used == "pos_fallback"
    assert np.argmax(res.scores.scores) == 3


def test_sentence_fallback_without_adjectives():
    text = "We ate the pasta"
    ann = PrecomputedAnnotator({text: [
        TokenRecord("We", 0, "PRON", 1, "nsubj"), TokenRecord("ate", 3, "VERB", -1, "ROOT"),
        TokenRecord("the", 7, "DET", 3, "det"), TokenRecord("pasta", 11, "NOUN", 1, "obj")]})
    sent = RawSentence("s", text, "restaurant", "test")
    p = extract_opinion(sent, AspectInstance("s", (11, 16), "pasta"), MockBackend(), ann)
    assert p.fallback_used == "sentence_fallback" and p.text == ""


def test_aspect_word_never_selected_even_with_top_score():
    text = "delicious hot dog"
    ann = PrecomputedAnnotator({text: [
        TokenRecord("delicious", 0, "ADJ", 2, "amod"), TokenRecord("hot", 10, "ADJ", 2, "amod"),
        TokenRecord("dog", 14, "NOUN", -1, "ROOT")]})
    m = MockBackend(seed=2)
    m.rig_attention(text, 1, 40.0)  # "hot" gets nearly all the attention
    sent = RawSentence("s", text, "restaurant", "test")
    res = run_extraction(sent, AspectInstance("s", (10, 17), "hot dog"), m, ann)
    assert np.argmax(res.scores.scores) == 1
    assert res.prediction.head == 0 and res.prediction.text == "delicious"


def test_aspect_from_other_sentence_rejected():
    sent = RawSentence("s1", TEXT, "restaurant", "test")
    with pytest.raises(InputError):
        run_extraction(sent, AspectInstance("s2", (4, 11), "fajitas"), MockBackend(), fajitas_annotator())
