"""Unsupervised aspect-oriented opinion extraction and polarity assignment.

Candidate opinion words come from dependency patterns; the candidate the
aspect attends to most in the encoder's lower layers is selected, and its
contextual embedding is labeled by cosine similarity to the embeddings of
the words ``positive``, ``negative`` and ``neutral``.
"""

from .attention import aspect_scores, extract_opinion, select_opinion
from .backend import AdaptationConfig, MockBackend, load_backend
from .config import RunConfig
from .corpus import (AspectInstance, Dataset, RawSentence, TextCorpus, attach_opinion_annotations,
                     build_adaptation_corpus, load_dataset, parse_semeval_xml, sample_labeled_fraction,
                     save_dataset)
from .evaluation import ExperimentPlan, finetune_atsc, render_report, run_experiment, score
from .pipeline import Pipeline
from .polarity import PolarityLabelSet, assign_polarity, classify_instance
from .syntax import PatternRegistry, annotate, extract_candidates, list_patterns

__version__ = "0.1.0"
