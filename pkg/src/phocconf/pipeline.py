"""End-to-end stages: generate, train, fit metaclassifiers, score, evaluate."""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import evaluation as ev
from .confidence import (
    activation_raw, dropout_variance, orient, td_logits, ti_logits, train_td_meta, train_ti_meta,
)
from .config import STAGE_DROPOUT, STAGE_TD, STAGE_TI, stage_seed
from .datagen import generate_corpus
from .estimator import estimate, train_estimator
from .retrieval import Lexicon

logger = logging.getLogger(__name__)

EVAL_SPLITS = ("train", "id_test", "od_test")


def generate(run):
    return generate_corpus(run.corpus_config(), run.phoc_config())


def fit_estimator(corpus, run):
    train = corpus.subset("train")
    cfg = run.estimator_config(corpus.features.shape[1])
    logger.info("training estimator: %d samples, %d iterations", len(train), cfg.train.iterations)
    return train_estimator(train.features, train.transcriptions, run.phoc_config(), cfg)


def fit_meta(corpus, measure, run, estimator=None):
    X = corpus.subset("train").features
    O = corpus.subset("meta_od").features
    if measure == "ti":
        return train_ti_meta(X, O, run.meta_config(STAGE_TI))
    if measure == "td":
        if estimator is None:
            raise ValueError("task-dependent metaclassifier needs an estimator")
        return train_td_meta(estimator, X, O, run.meta_config(STAGE_TD))
    raise ValueError(f"unknown metaclassifier {measure!r}")


def score(corpus, estimator, measures, run, ti=None, td=None):
    """Oriented confidences of every sample in ``corpus`` for each measure."""
    X = corpus.features
    out = {}
    for m in measures:
        if m == "activation":
            raw = activation_raw(estimate(estimator, X))
        elif m == "test_dropout":
            rng = np.random.default_rng(stage_seed(run.seed, STAGE_DROPOUT))
            raw = dropout_variance(estimator, X, run.evaluation.dropout_passes, rng)
        elif m == "ti_meta":
            if ti is None:
                raise ValueError("ti_meta requested without a TI metaclassifier")
            raw = ti_logits(ti, X)
        elif m == "td_meta":
            if td is None:
                raise ValueError("td_meta requested without a TD metaclassifier")
            raw = td_logits(estimator, td, X)
        else:
            raise ValueError(f"unknown measure {m!r}")
        out[m] = orient(m, raw)
    return out


@dataclass
class EvalResult:
    files: dict = field(default_factory=dict)  # relative path -> CSV text
    summary: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def evaluate(corpus, estimator, confidences, run):
    """Every protocol for every measure in ``confidences``.

    ``corpus`` must hold the train, id_test and od_test splits and
    ``confidences`` maps measure -> oriented scores aligned with it.
    """
    phoc = run.phoc_config()
    idx = {s: np.flatnonzero(corpus.mask(s)) for s in EVAL_SPLITS}
    comp = np.concatenate([idx["id_test"], idx["od_test"]])
    est = estimate(estimator, corpus.features)
    ids = corpus.ids
    words = corpus.transcriptions

    def take(ix):
        return [ids[i] for i in ix], [words[i] for i in ix], est[ix]

    id_ids, id_words, id_est = take(idx["id_test"])
    comp_ids, comp_words, comp_est = take(comp)
    queries = sorted(set(id_words))
    lexicon = Lexicon([words[i] for s in EVAL_SPLITS for i in idx[s]], phoc)
    map_id = ev.qbs_map(queries, id_est, id_words, phoc, id_ids)
    map_all = ev.qbs_map(queries, comp_est, comp_words, phoc, comp_ids)
    wer_id = ev.word_error_rate(id_words, id_est, lexicon)
    result = EvalResult(metrics={"map_id": map_id, "map_composed": map_all, "wer_id": wer_id})
    logger.info("mAP_ID %.4f  mAP(composed) %.4f  WER_ID %.4f", map_id, map_all, wer_id)

    for measure, conf in confidences.items():
        conf = np.asarray(conf, dtype=np.float64)
        c_train, c_id, c_od = (conf[idx[s]] for s in EVAL_SPLITS)
        hist = ev.histogram({"train": c_train, "id": c_id, "od": c_od}, run.evaluation.bins)
        curve = ev.threshold_sweep(comp_ids, comp_words, comp_est, conf[comp], queries, phoc)
        t_q1 = ev.quantile_threshold(c_train, run.evaluation.quantile)
        at_q1 = ev.threshold_sweep(comp_ids, comp_words, comp_est, conf[comp], queries, phoc, grid=[t_q1])[0]
        wer = ev.cumulative_wer(id_ids, id_words, id_est, c_id, lexicon)
        scatter, _ = ev.quality_scatter(
            comp_ids, corpus.splits[comp], comp_words, comp_est, conf[comp], phoc)
        od_rows = [r for r in scatter if r.split == "od_test"]
        rho = ev.spearman([r.confidence for r in od_rows], [-r.neg_log_quality for r in od_rows])
        auc = ev.auroc(c_id, c_od)
        result.summary.append({
            "measure": measure, "auroc": auc, "map_id": map_id,
            "map_at_tq1": at_q1.map_at_t, "coverage_at_tq1": at_q1.coverage, "spearman_od": rho,
        })
        result.metrics[measure] = {
            "auroc": auc, "t_q1": t_q1, "map_at_tq1": at_q1.map_at_t,
            "coverage_at_tq1": at_q1.coverage, "spearman_od": rho,
            "od_below_tq1": float(np.mean(c_od < t_q1)),
            "id_below_tq1": float(np.mean(c_id < t_q1)),
            "wer_50": wer[40].wer, "wer_100": wer[-1].wer,
            "curve": curve, "wer_curve": wer,
        }
        result.files[f"{measure}/histogram.csv"] = ev.histogram_csv(hist)
        result.files[f"{measure}/threshold_curve.csv"] = ev.threshold_curve_csv(curve)
        result.files[f"{measure}/wer_curve.csv"] = ev.wer_curve_csv(wer)
        result.files[f"{measure}/quality_scatter.csv"] = ev.quality_scatter_csv(scatter)
        logger.info("%-12s AUROC %.4f  mAP@Tq1 %s  coverage %.3f  rho_OD %.3f",
                    measure, auc, at_q1.map_at_t, at_q1.coverage, rho)
    result.files["summary.csv"] = ev.summary_csv(result.summary)
    return result


def write_bundle(result, out_dir):
    for rel, text in sorted(result.files.items()):
        path = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
