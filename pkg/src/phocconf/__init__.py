"""Attribute-based word spotting with out-of-distribution confidence measures."""
from .confidence import (
    MEASURES, ConfidenceScore, MetaConfig, TdMetaClassifier, TiMetaClassifier, conf_activation,
    conf_td, conf_test_dropout, conf_ti, train_td_meta, train_ti_meta,
)
from .datagen import Corpus, CorpusConfig, generate_corpus, load_corpus
from .estimator import AttributeEstimator, EstimatorConfig, estimate, train_estimator
from .phoc import PhocConfig, build_phoc, phoc_dimension
from .retrieval import Lexicon, log_posterior, prune, quality, rank, recognize

__version__ = "0.1.0"

__all__ = [
    "MEASURES", "AttributeEstimator", "ConfidenceScore", "Corpus", "CorpusConfig", "EstimatorConfig",
    "Lexicon", "MetaConfig", "PhocConfig", "TdMetaClassifier", "TiMetaClassifier", "build_phoc",
    "conf_activation", "conf_td", "conf_test_dropout", "conf_ti", "estimate", "generate_corpus",
    "load_corpus", "log_posterior", "phoc_dimension", "prune", "quality", "rank", "recognize",
    "train_estimator", "train_td_meta", "train_ti_meta",
]
