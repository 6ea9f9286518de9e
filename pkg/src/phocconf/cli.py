"""Command-line driver: ``gen``, ``train``, ``meta`` and ``eval``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 model-compatibility error.  Every command writes the fully resolved run
configuration next to its output.
"""
import argparse
import logging
import os
import shutil
import sys

from . import config as cfgmod
from . import pipeline
from .confidence import EstimatorMismatch, TdMetaClassifier, TiMetaClassifier
from .datagen import CorpusError, load_corpus
from .estimator import AttributeEstimator

logger = logging.getLogger("phocconf")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read(path, what, code):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(code, f"cannot read {what} {path}: {exc.strerror}") from None


def _write(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _check_target(path, force):
    if os.path.exists(path) and not force:
        raise CliError(EXIT_CONFIG, f"{path} exists (use --force to overwrite)")


def _config_path(out):
    return os.path.join(out, "config.json") if os.path.isdir(out) else out + ".config.json"


def _load_run(args):
    data = cfgmod.read_json(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output"] = args.out
    if getattr(args, "iterations", None) is not None:
        if args.iterations < 0:
            raise cfgmod.ConfigError("--iterations must be nonnegative")
        section = "meta" if args.command == "meta" else "estimator"
        data[section] = {**data.get(section, {}), "iterations": args.iterations}
    if getattr(args, "measures", None):
        data["evaluation"] = {**data.get("evaluation", {}), "measures": list(args.measures)}
    return cfgmod.from_dict(data)


def _corpus(path, run, splits=None):
    try:
        corpus = load_corpus(path, run.phoc_config())
    except FileNotFoundError:
        raise CliError(EXIT_DATA, f"corpus file not found: {path}") from None
    except CorpusError as exc:
        raise CliError(EXIT_DATA, f"corrupted corpus {path}: {exc}") from None
    for s in splits or ():
        if not corpus.mask(s).any():
            raise CliError(EXIT_DATA, f"corpus {path} has no {s!r} samples")
    return corpus


def _estimator(path, run, corpus):
    try:
        est = AttributeEstimator.loads(_read(path, "estimator model", EXIT_MODEL))
    except ValueError as exc:
        raise CliError(EXIT_MODEL, f"incompatible estimator model {path}: {exc}") from None
    if est.phoc_config.digest() != run.phoc_config().digest():
        raise CliError(EXIT_MODEL, f"estimator {path} was trained with a different PHOC configuration")
    if est.input_dim != corpus.features.shape[1]:
        raise CliError(EXIT_MODEL, f"estimator {path} expects {est.input_dim} features, "
                                   f"corpus has {corpus.features.shape[1]}")
    return est


def _require_out(args, run):
    if not run.output:
        raise cfgmod.ConfigError("no output path (pass --out or set \"output\" in the config)")
    _check_target(run.output, args.force)
    return run.output


def _finish(run, out, text):
    _write(out, text)
    _write(_config_path(out), run.dumps())
    logger.info("wrote %s", out)


def cmd_gen(args):
    run = _load_run(args)
    out = _require_out(args, run)
    corpus = pipeline.generate(run)
    _finish(run, out, corpus.dumps())


def cmd_train(args):
    run = _load_run(args)
    out = _require_out(args, run)
    corpus = _corpus(args.corpus, run, ["train"])
    est = pipeline.fit_estimator(corpus, run)
    _finish(run, out, est.dumps())


def cmd_meta(args):
    run = _load_run(args)
    out = _require_out(args, run)
    corpus = _corpus(args.corpus, run, ["train", "meta_od"])
    if args.kind == "td":
        if not args.estimator:
            raise CliError(EXIT_MODEL, "td metaclassifier needs --estimator")
        est = _estimator(args.estimator, run, corpus)
        if args.expect_digest and args.expect_digest != est.digest():
            raise CliError(EXIT_MODEL, f"estimator digest {est.digest()} does not match "
                                       f"the expected {args.expect_digest}")
        meta = pipeline.fit_meta(corpus, "td", run, est)
    else:
        meta = pipeline.fit_meta(corpus, "ti", run)
    _finish(run, out, meta.dumps())


def cmd_eval(args):
    run = _load_run(args)
    out = _require_out(args, run)
    corpus = _corpus(args.corpus, run, pipeline.EVAL_SPLITS).subset(*pipeline.EVAL_SPLITS)
    est = _estimator(args.estimator, run, corpus)
    measures = run.evaluation.measures
    ti = td = None
    if "ti_meta" in measures:
        if not args.ti:
            raise CliError(EXIT_MODEL, "measure ti_meta requested without a --ti model")
        try:
            ti = TiMetaClassifier.loads(_read(args.ti, "ti model", EXIT_MODEL))
        except ValueError as exc:
            raise CliError(EXIT_MODEL, f"incompatible ti model {args.ti}: {exc}") from None
        if ti.network.input_dim != corpus.features.shape[1]:
            raise CliError(EXIT_MODEL, f"ti model {args.ti} does not match the corpus feature width")
    if "td_meta" in measures:
        if not args.td:
            raise CliError(EXIT_MODEL, "measure td_meta requested without a --td model")
        try:
            td = TdMetaClassifier.loads(_read(args.td, "td model", EXIT_MODEL))
        except ValueError as exc:
            raise CliError(EXIT_MODEL, f"incompatible td model {args.td}: {exc}") from None
        if td.estimator_digest != est.digest():
            raise CliError(EXIT_MODEL, f"td model {args.td} was trained against a different estimator")
    confidences = pipeline.score(corpus, est, measures, run, ti, td)
    result = pipeline.evaluate(corpus, est, confidences, run)
    if os.path.exists(out):
        if not os.path.isdir(out):
            raise CliError(EXIT_CONFIG, f"{out} exists and is not a directory")
        shutil.rmtree(out)
    pipeline.write_bundle(result, out)
    _write(os.path.join(out, "config.json"), run.dumps())
    logger.info("wrote %d files to %s", len(result.files) + 1, out)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output file (directory for eval)")
    common.add_argument("--force", action="store_true", help="overwrite existing output")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="phocconf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train the attribute estimator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--iterations", type=int, help="override the training length (0 saves the initialization)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("meta", parents=[common], help="train a metaclassifier")
    p.add_argument("kind", choices=["ti", "td"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--estimator", help="estimator model (td only)")
    p.add_argument("--expect-digest", help="refuse an estimator with any other digest")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("eval", parents=[common], help="score and evaluate, writing the CSV bundle")
    p.add_argument("--corpus", required=True)
    p.add_argument("--estimator", required=True)
    p.add_argument("--ti", help="task-independent metaclassifier model")
    p.add_argument("--td", help="task-dependent metaclassifier model")
    p.add_argument("--measures", nargs="+", choices=list(cfgmod.MEASURES))
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except CliError as exc:
        print(f"phocconf {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except cfgmod.ConfigError as exc:
        print(f"phocconf {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimatorMismatch as exc:
        print(f"phocconf {args.command}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
