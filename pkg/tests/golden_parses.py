"""Twelve hand-parsed sentences with their expected candidate sets.

Each entry: words, tags, heads (None = root), relations, excluded aspect
words, expected candidates as (phrase, head, pattern) sorted by head, and
the expected fallback words.
"""

from opinion_miner.syntax import SyntaxAnnotation, coarse_pos

GOLDEN = [
    # plain adjectival modifier
    dict(words="great battery life", pos="ADJ NOUN NOUN", heads=[2, 2, None],
         rels="amod compound ROOT", exclude=(1, 2),
         expect=[((0,), 0, "P1")], fallback=(0,)),
    # adverb + adjective merges over the bare adjective
    dict(words="very good screen", pos="ADV ADJ NOUN", heads=[1, 2, None],
         rels="advmod amod ROOT", exclude=(2,),
         expect=[((0, 1), 1, "P2")], fallback=(0, 1)),
    # predicative adjective: no pattern fires
    dict(words="the food was bad", pos="DET NOUN AUX ADJ", heads=[1, 3, 3, None],
         rels="det nsubj cop ROOT", exclude=(1,),
         expect=[], fallback=(3,)),
    # adjective -> compound noun -> noun: ties with the plain pattern, which is earlier
    dict(words="excellent screen quality", pos="ADJ NOUN NOUN", heads=[1, 2, None],
         rels="amod compound ROOT", exclude=(2,),
         expect=[((0,), 0, "P1")], fallback=(0,)),
    # preposition marking a noun, plus an adjective on that noun
    dict(words="pizza with fresh toppings", pos="NOUN ADP ADJ NOUN", heads=[None, 3, 3, 0],
         rels="ROOT case amod nmod", exclude=(0,),
         expect=[((1,), 1, "P4"), ((2,), 2, "P1")], fallback=(2,)),
    # preposition whose subtree spans a whole phrase
    dict(words="service at the bar", pos="NOUN ADP DET NOUN", heads=[None, 0, 3, 1],
         rels="ROOT nmod det pobj", exclude=(0,),
         expect=[((1, 2, 3), 1, "P4")], fallback=()),
    # preposition subtree of five words is capped at four around the head
    dict(words="food from the very best kitchen", pos="NOUN ADP DET ADV ADJ NOUN",
         heads=[None, 0, 5, 4, 5, 1], rels="ROOT nmod det advmod amod pobj", exclude=(0,),
         expect=[((1, 2, 3, 4), 1, "P4"), ((3, 4), 4, "P2")], fallback=(3, 4)),
    # the only candidate is inside the aspect and is excluded
    dict(words="sweet potato fries were great", pos="ADJ NOUN NOUN AUX ADJ",
         heads=[1, 2, 4, 4, None], rels="amod compound nsubj cop ROOT", exclude=(0, 1, 2),
         expect=[], fallback=(4,)),
    # aspect word heads one candidate; the other survives
    dict(words="delicious hot dog", pos="ADJ ADJ NOUN", heads=[2, 2, None],
         rels="amod amod ROOT", exclude=(1, 2),
         expect=[((0,), 0, "P1")], fallback=(0,)),
    # relation subtypes count by their base label
    dict(words="screen of poor quality", pos="NOUN ADP ADJ NOUN", heads=[None, 3, 3, 0],
         rels="ROOT case amod nmod:of", exclude=(0,),
         expect=[((1,), 1, "P4"), ((2,), 2, "P1")], fallback=(2,)),
    # nothing adjectival at all
    dict(words="I love it", pos="PRON VERB PRON", heads=[1, None, 1],
         rels="nsubj ROOT obj", exclude=(2,),
         expect=[], fallback=()),
    # two adverb-adjective pairs on the same noun
    dict(words="really fast and very quiet fan", pos="ADV ADJ CCONJ ADV ADJ NOUN",
         heads=[1, 5, 4, 4, 5, None], rels="advmod amod cc advmod amod ROOT", exclude=(5,),
         expect=[((0, 1), 1, "P2"), ((3, 4), 4, "P2")], fallback=(0, 1, 3, 4)),
]


def annotation(entry) -> SyntaxAnnotation:
    return SyntaxAnnotation(tuple(entry["words"].split()), tuple(coarse_pos(t) for t in entry["pos"].split()),
                            tuple(-1 if h is None else h for h in entry["heads"]),
                            tuple(entry["rels"].split()))
