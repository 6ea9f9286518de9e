"""Nested run configuration loadable from JSON, unknown keys rejected."""
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .confidence import MEASURES, MetaConfig
from .datagen import CorpusConfig
from .estimator import EstimatorConfig
from .nnet import TrainConfig, estimator_train_config, meta_train_config
from .phoc import PhocConfig

# sub-seed slots, one per pipeline stage
STAGE_ESTIMATOR = 1
STAGE_TI = 2
STAGE_TD = 3
STAGE_DROPOUT = 4


class ConfigError(ValueError):
    pass


def stage_seed(seed, stage):
    """Independent 32-bit seed for one pipeline stage."""
    return int(np.random.SeedSequence(seed, spawn_key=(stage,)).generate_state(1)[0])


@dataclass
class EstimatorSection:
    hidden: tuple = (512, 512)
    tap_layers: tuple = None
    iterations: int = 20000
    train: dict = field(default_factory=dict)  # TrainConfig overrides


@dataclass
class MetaSection:
    projection_width: int = 16
    leaky_slope: float = 0.01
    pool_levels: tuple = (1, 2, 4, 8)
    iterations: int = 25000
    train: dict = field(default_factory=dict)


@dataclass
class EvaluationSection:
    measures: tuple = MEASURES
    dropout_passes: int = 100
    bins: int = 100
    quantile: float = 0.01


@dataclass
class RunConfig:
    seed: int = 42
    phoc: dict = field(default_factory=dict)
    datagen: dict = field(default_factory=dict)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    meta: MetaSection = field(default_factory=MetaSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    output: str = None

    # resolved component configs -------------------------------------------
    def phoc_config(self):
        return PhocConfig.from_dict(self.phoc)

    def corpus_config(self):
        return CorpusConfig(**{**self.datagen, "seed": self.seed})

    def estimator_config(self, input_dim):
        e = self.estimator
        train = estimator_train_config(e.iterations, **e.train)
        train.seed = stage_seed(self.seed, STAGE_ESTIMATOR)
        return EstimatorConfig(input_dim, e.hidden, e.tap_layers, train)

    def meta_config(self, stage):
        m = self.meta
        train = meta_train_config(m.iterations, **m.train)
        train.seed = stage_seed(self.seed, stage)
        return MetaConfig(self.estimator.hidden, m.projection_width, m.leaky_slope, m.pool_levels, train)

    def to_dict(self):
        return {
            "seed": self.seed,
            "phoc": self.phoc_config().to_dict(),
            "datagen": {k: v for k, v in self.corpus_config().to_dict().items() if k != "seed"},
            "estimator": {
                "hidden": list(self.estimator.hidden),
                "tap_layers": None if self.estimator.tap_layers is None else list(self.estimator.tap_layers),
                "iterations": self.estimator.iterations,
                "train": _train_dict(estimator_train_config(self.estimator.iterations, **self.estimator.train)),
            },
            "meta": {
                "projection_width": self.meta.projection_width,
                "leaky_slope": self.meta.leaky_slope,
                "pool_levels": list(self.meta.pool_levels),
                "iterations": self.meta.iterations,
                "train": _train_dict(meta_train_config(self.meta.iterations, **self.meta.train)),
            },
            "evaluation": {
                "measures": list(self.evaluation.measures),
                "dropout_passes": self.evaluation.dropout_passes,
                "bins": self.evaluation.bins,
                "quantile": self.evaluation.quantile,
            },
            "output": self.output,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _train_dict(cfg):
    d = cfg.to_dict()
    d.pop("seed")  # derived from the run seed
    d.pop("iterations")  # lives one level up
    return d


def _section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed", "iterations"}


def from_dict(data):
    """Build a :class:`RunConfig`, rejecting unknown keys at every level."""
    data = dict(data)
    top = {f.name for f in fields(RunConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(
            seed=int(data.get("seed", 42)),
            phoc=_check_keys(data.get("phoc", {}), {"alphabet", "levels", "overlap_threshold"}, "phoc"),
            datagen=_check_keys(data.get("datagen", {}),
                                {f.name for f in fields(CorpusConfig)} - {"seed"}, "datagen"),
            estimator=_section(EstimatorSection, data.get("estimator", {}), "estimator"),
            meta=_section(MetaSection, data.get("meta", {}), "meta"),
            evaluation=_section(EvaluationSection, data.get("evaluation", {}), "evaluation"),
            output=data.get("output"),
        )
        _check_keys(cfg.estimator.train, _TRAIN_KEYS, "estimator.train")
        _check_keys(cfg.meta.train, _TRAIN_KEYS, "meta.train")
        bad = set(cfg.evaluation.measures) - set(MEASURES)
        if bad:
            raise ConfigError(f"unknown measures {sorted(bad)}")
        # build every component once so invalid values surface here
        cfg.phoc_config()
        cfg.corpus_config()
        cfg.estimator_config(1)
        cfg.meta_config(STAGE_TI)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return d


def load(path):
    return from_dict(read_json(path))


def read_json(path):
    """Raw configuration object from ``path``, before validation."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data
