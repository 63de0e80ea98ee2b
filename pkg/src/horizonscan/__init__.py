"""Bibliometric horizon scanning toolkit.

Discovers topics in a document corpus, models per-topic growth with
first-order rate kinetics, measures entity specialization with Location
Quotients, and serves an interactive analyst labeling workflow.
"""

from horizonscan.ingest import (
    RawDocument,
    VocabPrepConfig,
    TokenizedCorpus,
    load_corpus,
    normalize_text,
    prune_vocabulary,
)
from horizonscan.lda import (
    TopicModel,
    GibbsState,
    fit_lda,
    doc_topic_year_sums,
    doc_topic_group_sums,
    coherence,
)
from horizonscan.growth import (
    TopicTimeSeries,
    FitResult,
    build_time_series,
    fit_exponential,
    cagr_from_rate,
    cagr_two_point,
    calibrate_error_scale,
    screen_good_neighborhood,
    cagr_distribution_stats,
    rank_emerging,
    aggregate_supertopic_fit,
)
from horizonscan.lq import ActivityMatrix, LqTable, compute_lq, propagate_lq_error, quadrant_classify
from horizonscan.layout import TopicMapLayout, import_coordinates, pca_layout, knn_graph

__version__ = "0.1.0"
