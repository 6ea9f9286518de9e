"""Probabilistic retrieval model over attribute estimates."""
from dataclasses import dataclass

import numpy as np

from .nnet import CLAMP
from .phoc import build_phoc, build_phoc_matrix, normalize_transcription


@dataclass
class RetrievalList:
    query: str
    entries: list  # [(sample_id, log_score)], best first

    @property
    def ids(self):
        return [sid for sid, _ in self.entries]

    def __len__(self):
        return len(self.entries)


class Lexicon:
    """Sorted unique words with their PHOCs precomputed."""

    def __init__(self, words, phoc_config):
        normed = {normalize_transcription(w, phoc_config) for w in words}
        normed.discard("")
        self.words = sorted(normed)
        self.phoc_config = phoc_config
        self.phocs = build_phoc_matrix(self.words, phoc_config) if self.words else None

    def __len__(self):
        return len(self.words)


def log_posterior(query, estimate):
    """Bernoulli log-likelihood of the binary ``query`` under ``estimate``."""
    a = np.asarray(query, dtype=np.float64)
    p = np.clip(np.asarray(estimate, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    return float(np.sum(np.where(a > 0, np.log(p), np.log1p(-p))))


def log_posterior_matrix(queries, estimates):
    """(Q, N) log posteriors of every binary query row against every estimate row."""
    A = np.asarray(queries, dtype=np.float64)
    P = np.clip(np.asarray(estimates, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    if A.shape[1] != P.shape[1]:
        raise ValueError("query and estimate dimensions differ")
    log_p, log_q = np.log(P), np.log1p(-P)
    return A @ log_p.T + (1.0 - A) @ log_q.T


def ranking_order(scores, id_rank):
    """Indices sorting ``scores`` descending, ties by ascending ``id_rank``."""
    return np.lexsort((id_rank, -np.asarray(scores)))


def _id_ranks(ids):
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(len(ids))
    return ranks


def rank(query_word, estimates, phoc_config):
    """Rank every sample in ``estimates`` (id -> estimate) for a text query."""
    q = normalize_transcription(query_word, phoc_config)
    if not q:
        raise ValueError("empty query after normalization")
    ids = list(estimates)
    if not ids:
        return RetrievalList(q, [])
    P = np.stack([np.asarray(estimates[i], dtype=np.float64) for i in ids])
    scores = log_posterior_matrix(build_phoc(q, phoc_config)[None, :], P)[0]
    order = ranking_order(scores, _id_ranks(ids))
    return RetrievalList(q, [(ids[j], float(scores[j])) for j in order])


def rank_by_example(query_estimate, estimates, phoc_config, query_word=""):
    """Query-by-example: binarize the query estimate at 0.5 and rank with it."""
    a = (np.asarray(query_estimate) > 0.5).astype(np.float64)
    ids = list(estimates)
    P = np.stack([np.asarray(estimates[i], dtype=np.float64) for i in ids])
    scores = log_posterior_matrix(a[None, :], P)[0]
    order = ranking_order(scores, _id_ranks(ids))
    return RetrievalList(query_word, [(ids[j], float(scores[j])) for j in order])


def quality(transcription, estimate, phoc_config):
    """Log posterior of the ground-truth PHOC: how well ``estimate`` fits its word."""
    t = normalize_transcription(transcription, phoc_config)
    if not t:
        raise ValueError("empty transcription")
    return log_posterior(build_phoc(t, phoc_config), estimate)


def quality_batch(transcriptions, estimates, phoc_config):
    A = build_phoc_matrix([normalize_transcription(t, phoc_config) for t in transcriptions], phoc_config)
    P = np.clip(np.asarray(estimates, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    return np.sum(np.where(A > 0, np.log(P), np.log1p(-P)), axis=1)


def recognize(estimate, lexicon):
    """Lexicon word with the highest posterior; ties go to the smaller word."""
    return recognize_batch(np.asarray(estimate)[None, :], lexicon)[0]


def recognize_batch(estimates, lexicon):
    if len(lexicon) == 0:
        raise ValueError("empty lexicon")
    scores = log_posterior_matrix(lexicon.phocs, estimates)  # (W, N)
    # words are sorted, so argmax's first-hit rule picks the smallest on ties
    best = np.argmax(scores, axis=0)
    return [lexicon.words[i] for i in best]


def prune(retrieval_list, confidences, threshold):
    """Keep entries whose confidence >= ``threshold``, order preserved."""
    missing = [sid for sid, _ in retrieval_list.entries if sid not in confidences]
    if missing:
        raise KeyError(f"no confidence for samples {missing[:5]}")
    kept = [(sid, s) for sid, s in retrieval_list.entries if confidences[sid] >= threshold]
    return RetrievalList(retrieval_list.query, kept)
