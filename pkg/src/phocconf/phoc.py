"""Pyramidal Histogram of Characters embeddings."""
import hashlib
import json
import string
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_ALPHABET = tuple(string.ascii_lowercase + string.digits)
DEFAULT_LEVELS = (1, 2, 4, 8)


@dataclass(frozen=True)
class PhocConfig:
    alphabet: tuple = DEFAULT_ALPHABET
    levels: tuple = DEFAULT_LEVELS
    overlap_threshold: float = 0.5
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        levels = tuple(int(L) for L in self.levels)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "levels", levels)
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet symbols must be unique")
        if any(len(s) != 1 for s in alphabet):
            raise ValueError("alphabet symbols must be single characters")
        if not levels or any(L < 1 for L in levels):
            raise ValueError("levels must be positive region counts")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in (0, 1]")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(alphabet)})

    @property
    def dimension(self):
        return phoc_dimension(self)

    def index(self, symbol):
        return self._index[symbol]

    def to_dict(self):
        return {
            "alphabet": "".join(self.alphabet),
            "levels": list(self.levels),
            "overlap_threshold": self.overlap_threshold,
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        if "alphabet" in kwargs:
            kwargs["alphabet"] = tuple(kwargs["alphabet"])
        if "levels" in kwargs:
            kwargs["levels"] = tuple(kwargs["levels"])
        return cls(**kwargs)

    def digest(self):
        """Stable hash identifying the embedding layout."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def phoc_dimension(config):
    return len(config.alphabet) * sum(config.levels)


def normalize_transcription(raw, config):
    """Lowercase ``raw`` and drop every symbol outside the alphabet."""
    return "".join(ch for ch in raw.lower() if ch in config._index)


def build_phoc(word, config):
    """Binary PHOC of an already-normalized word.

    Layout is level by level, region left to right, one alphabet-ordered
    block per region.  A character marks a region when at least
    ``overlap_threshold`` of its occupancy interval falls inside it.
    """
    if not word:
        raise ValueError("empty transcription")
    try:
        idx = np.fromiter((config._index[c] for c in word), dtype=np.int64, count=len(word))
    except KeyError as exc:
        raise ValueError(f"symbol {exc.args[0]!r} not in alphabet; normalize first") from None
    return _kernels.phoc_bits(
        idx,
        np.asarray(config.levels, dtype=np.int64),
        len(config.alphabet),
        float(config.overlap_threshold),
    )


def build_phoc_matrix(words, config):
    """Stack PHOCs of several words into a (len(words), D) uint8 matrix."""
    out = np.zeros((len(words), phoc_dimension(config)), dtype=np.uint8)
    for i, w in enumerate(words):
        out[i] = build_phoc(w, config)
    return out
