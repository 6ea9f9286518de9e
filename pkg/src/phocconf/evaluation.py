"""Retrieval and confidence evaluation protocols.

Covers query-by-string mAP, confidence-threshold sweeps (mAP@T, mR@T,
coverage), the training-quantile threshold, cumulative WER over
confidence-sorted subsets, confidence histograms, AUROC and the
confidence/quality scatter.
"""
import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels
from ._jsonio import fmt_float
from .phoc import build_phoc_matrix
from .retrieval import _id_ranks, log_posterior_matrix, quality_batch, recognize_batch


@dataclass(frozen=True)
class ThresholdCurveRow:
    T: float
    map_at_t: float  # None when no query keeps a relevant sample
    mr_at_t: float
    coverage: float


@dataclass(frozen=True)
class WerCurvePoint:
    portion: int
    wer: float


@dataclass(frozen=True)
class HistogramRow:
    bin_center: float
    train_count: int
    id_count: int
    od_count: int


class DegenerateHistogramWarning(RuntimeWarning):
    """All confidences are equal, so every sample lands in the first bin."""


# ---------------------------------------------------------------------------
# AP / mAP
# ---------------------------------------------------------------------------

def average_precision(relevance_flags, total_relevant):
    """Uninterpolated AP: mean precision at each relevant rank, over ``total_relevant``."""
    if total_relevant < 1:
        raise ValueError("total_relevant must be >= 1")
    flags = np.asarray(relevance_flags, dtype=bool)
    if flags.sum() > total_relevant:
        raise ValueError("more relevant flags than total_relevant")
    hits = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    prec = hits[flags] / ranks[flags]
    if prec.size == 0:
        return 0.0
    # sequential summation, rank by rank
    return float(np.cumsum(prec)[-1] / total_relevant)


def ranked_relevance(scores, relevant, id_rank):
    """Per-query ranking order and the relevance flags in that order."""
    scores = np.atleast_2d(scores)
    orders = np.stack([np.lexsort((id_rank, -row)) for row in scores])
    rel_sorted = np.take_along_axis(np.atleast_2d(relevant), orders, axis=1)
    return orders, rel_sorted


def mean_average_precision(scores, relevant, id_rank):
    """mAP of (Q, N) ``scores`` against (Q, N) boolean relevance.

    Queries without any relevant sample are left out of the mean.
    """
    _, rel_sorted = ranked_relevance(scores, relevant, id_rank)
    totals = rel_sorted.sum(axis=1)
    aps = [average_precision(r, t) for r, t in zip(rel_sorted, totals) if t > 0]
    return float(np.mean(aps)) if aps else float("nan")


def _query_setup(query_words, estimates, transcriptions, phoc_config):
    queries = sorted(set(query_words))
    A = build_phoc_matrix(queries, phoc_config)
    scores = log_posterior_matrix(A, estimates)
    words = np.asarray(transcriptions, dtype=object)
    relevant = np.stack([words == q for q in queries]) if queries else np.zeros((0, len(words)), bool)
    return queries, scores, relevant


def qbs_map(query_words, estimates, transcriptions, phoc_config, ids=None):
    """Query-by-string mAP; relevance is transcription equality."""
    ids = ids if ids is not None else [f"{i:09d}" for i in range(len(transcriptions))]
    _, scores, relevant = _query_setup(query_words, estimates, transcriptions, phoc_config)
    return mean_average_precision(scores, relevant, _id_ranks(ids))


# ---------------------------------------------------------------------------
# thresholding
# ---------------------------------------------------------------------------

def threshold_sweep(ids, transcriptions, estimates, confidences, query_words, phoc_config, grid=None):
    """mAP@T, mR@T and coverage over a grid of confidence thresholds.

    The default grid is -inf plus every distinct confidence.  At threshold
    T the evaluated set is every sample with confidence >= T.  Recall is
    measured against each query's relevant count in the full set, so it
    can only fall as T rises.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    if len(conf) == 0:
        raise ValueError("empty composed set")
    if grid is None:
        grid = np.concatenate([[-np.inf], np.unique(conf)])
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    _, scores, relevant = _query_setup(query_words, estimates, transcriptions, phoc_config)
    total_rel = relevant.sum(axis=1)
    keep_q = total_rel > 0
    scores, relevant, total_rel = scores[keep_q], relevant[keep_q], total_rel[keep_q]
    orders, rel_sorted = ranked_relevance(scores, relevant, _id_ranks(ids))
    conf_sorted = conf[orders]
    ap, kept_rel = _kernels.sweep_ap(
        np.ascontiguousarray(rel_sorted, dtype=np.bool_),
        np.ascontiguousarray(conf_sorted), grid,
    )
    rows = []
    n = len(conf)
    for t, T in enumerate(grid):
        defined = ~np.isnan(ap[t])
        m = float(np.mean(ap[t][defined])) if defined.any() else None
        mr = float(np.mean(kept_rel[t] / total_rel)) if len(total_rel) else 0.0
        cov = float(np.count_nonzero(conf >= T) / n)
        rows.append(ThresholdCurveRow(float(T), m, mr, cov))
    return rows


def quantile_threshold(values, q=0.01):
    """Nearest-rank quantile: the ceil(q * N)-th smallest value (at least the first)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if len(v) == 0:
        raise ValueError("empty list")
    k = max(1, math.ceil(q * len(v)))
    return float(v[min(k, len(v)) - 1])


# ---------------------------------------------------------------------------
# recognition
# ---------------------------------------------------------------------------

def confidence_order(confidences, ids):
    """Most confident first; ties by ascending sample id."""
    return np.lexsort((_id_ranks(ids), -np.asarray(confidences, dtype=np.float64)))


def cumulative_wer(ids, transcriptions, estimates, confidences, lexicon, portions=range(10, 101)):
    """WER over the most confident p% of a set, for each portion p.

    ``estimates`` are the estimator's outputs for the set; recognition is
    the lexicon argmax.  Portion p covers the top ceil(p * N / 100) samples.
    """
    N = len(ids)
    if N == 0:
        raise ValueError("empty ID set")
    order = confidence_order(confidences, ids)
    predicted = recognize_batch(np.asarray(estimates)[order], lexicon)
    errors = np.cumsum([p != transcriptions[i] for p, i in zip(predicted, order)])
    out = []
    for p in portions:
        k = max(1, (int(p) * N + 99) // 100)
        out.append(WerCurvePoint(int(p), float(errors[k - 1] / k)))
    return out


def word_error_rate(transcriptions, estimates, lexicon):
    predicted = recognize_batch(estimates, lexicon)
    return float(np.mean([p != t for p, t in zip(predicted, transcriptions)]))


# ---------------------------------------------------------------------------
# distributions and separability
# ---------------------------------------------------------------------------

def histogram(confidences_by_split, bins=100):
    """Counts per split over ``bins`` equal bins of jointly min-max scaled confidences.

    Scaling maps the smallest confidence over all splits to 0 and the
    largest to 100; the maximum falls in the last bin.
    """
    splits = {k: np.asarray(v, dtype=np.float64) for k, v in confidences_by_split.items()}
    unknown = set(splits) - {"train", "id", "od"}
    if unknown:
        raise ValueError(f"unknown splits {sorted(unknown)}")
    nonempty = [v for v in splits.values() if len(v)]
    if not nonempty:
        raise ValueError("all splits are empty")
    allv = np.concatenate(nonempty)
    lo, hi = allv.min(), allv.max()
    counts = {}
    if hi == lo:
        warnings.warn("zero confidence range; all mass in bin 0", DegenerateHistogramWarning)
    for name in ("train", "id", "od"):
        v = splits.get(name, np.zeros(0))
        if hi == lo:
            idx = np.zeros(len(v), dtype=np.int64)
        else:
            scaled = (v - lo) / (hi - lo) * 100.0
            idx = np.minimum((scaled / (100.0 / bins)).astype(np.int64), bins - 1)
        counts[name] = np.bincount(idx, minlength=bins)
    width = 100.0 / bins
    return [
        HistogramRow((i + 0.5) * width, int(counts["train"][i]), int(counts["id"][i]), int(counts["od"][i]))
        for i in range(bins)
    ]


def auroc(pos_scores, neg_scores):
    """P(random positive > random negative), ties counted half (Mann-Whitney)."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both score lists must be nonempty")
    ranks = stats.rankdata(np.concatenate([pos, neg]))
    u = ranks[:len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def spearman(a, b):
    return float(stats.spearmanr(a, b).statistic)


@dataclass(frozen=True)
class ScatterRow:
    sample_id: str
    split: str
    confidence: float
    neg_log_quality: float


def quality_scatter(ids, splits, transcriptions, estimates, confidences, phoc_config):
    """One row per sample: oriented confidence against -log p(ground truth | x).

    Samples without a transcription are skipped; the second return value
    counts them.
    """
    keep = [i for i, t in enumerate(transcriptions) if t]
    skipped = len(ids) - len(keep)
    q = quality_batch([transcriptions[i] for i in keep], np.asarray(estimates)[keep], phoc_config)
    rows = [
        ScatterRow(ids[i], str(splits[i]), float(confidences[i]), float(-qv))
        for i, qv in zip(keep, q)
    ]
    return rows, skipped


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def histogram_csv(rows):
    return to_csv(["bin_center", "train_count", "id_count", "od_count"],
                  [(r.bin_center, r.train_count, r.id_count, r.od_count) for r in rows])


def threshold_curve_csv(rows):
    return to_csv(["T", "map_at_t", "mr_at_t", "coverage"],
                  [(r.T, r.map_at_t, r.mr_at_t, r.coverage) for r in rows])


def wer_curve_csv(points):
    return to_csv(["portion", "wer"], [(p.portion, p.wer) for p in points])


def quality_scatter_csv(rows):
    return to_csv(["sample_id", "split", "confidence", "neg_log_quality"],
                  [(r.sample_id, r.split, r.confidence, r.neg_log_quality) for r in rows])


SUMMARY_FIELDS = ["measure", "auroc", "map_id", "map_at_tq1", "coverage_at_tq1", "spearman_od"]


def summary_csv(rows):
    return to_csv(SUMMARY_FIELDS, [[r[k] for k in SUMMARY_FIELDS] for r in rows])
