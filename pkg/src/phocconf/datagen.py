"""Seeded synthetic corpus with in-distribution, shifted and surrogate splits.

Word "images" are feature vectors: a position-modulated sum of per-character
codebook vectors, pushed through a per-writer affine style and noise.  The
splits play fixed roles:

* ``train`` / ``id_test``  base codebook, the in-distribution writer(s)
* ``od_test``              base codebook, unseen writers of graded style distance
* ``meta_od``              surrogate codebook, fresh writers (metaclassifier negatives)

All splits draw words from one shared lexicon, so every OD word is
queryable from the ID strings.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._jsonio import array_text
from .phoc import PhocConfig, normalize_transcription

logger = logging.getLogger(__name__)

SPLITS = ("train", "id_test", "od_test", "meta_od")
CORPUS_FORMAT = "phocconf-corpus"
CORPUS_VERSION = 1

# spawn keys of the independent random streams hanging off the corpus seed
_KEY_CODEBOOK = 0
_KEY_LEXICON = 1
_KEY_WRITER = 2
_KEY_SPLIT = 3


@dataclass
class CorpusConfig:
    seed: int = 42
    feature_dim: int = 256
    lexicon_size: int = 50
    word_length: tuple = (2, 8)
    id_writers: int = 1
    od_writers: int = 50
    meta_writers: int = 200
    samples: dict = field(default_factory=lambda: {
        "train": 2000, "id_test": 500, "od_test": 500, "meta_od": 2000,
    })
    noise_sigma: float = 0.05
    style_strength: float = 0.5
    degradation: float = 0.2
    # per-writer style variance multiplier, ramped linearly over OD writers
    od_style_variance: tuple = (0.0, 16.0)
    # correlation of each surrogate codebook row with its base row
    codebook_correlation: float = 0.9
    shared_codebook: bool = False

    def __post_init__(self):
        self.word_length = tuple(int(v) for v in self.word_length)
        self.od_style_variance = tuple(float(v) for v in self.od_style_variance)
        lo, hi = self.word_length
        if not 1 <= lo <= hi:
            raise ValueError("word_length must be a range 1 <= lo <= hi")
        if set(self.samples) != set(SPLITS):
            raise ValueError(f"samples must give counts for exactly {SPLITS}")
        if any(int(n) < 1 for n in self.samples.values()):
            raise ValueError("split sizes must be positive")
        if min(self.feature_dim, self.lexicon_size, self.id_writers,
               self.od_writers, self.meta_writers) < 1:
            raise ValueError("counts must be positive")
        if self.noise_sigma < 0 or self.style_strength < 0:
            raise ValueError("noise_sigma and style_strength must be nonnegative")
        if not 0.0 <= self.degradation <= 1.0:
            raise ValueError("degradation must lie in [0, 1]")
        if not -1.0 <= self.codebook_correlation <= 1.0:
            raise ValueError("codebook_correlation must lie in [-1, 1]")
        if min(self.od_style_variance) < 0:
            raise ValueError("style variances must be nonnegative")

    def to_dict(self):
        d = asdict(self)
        d["word_length"] = list(self.word_length)
        d["od_style_variance"] = list(self.od_style_variance)
        return d


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# lexicon
# ---------------------------------------------------------------------------

def sample_lexicon(config, rng=None, phoc_config=None):
    """``lexicon_size`` distinct words over the alphabetic part of the PHOC alphabet."""
    phoc_config = phoc_config or PhocConfig()
    rng = rng if rng is not None else _stream(config.seed, _KEY_LEXICON)
    letters = [c for c in phoc_config.alphabet if c.isalpha()]
    lo, hi = config.word_length
    capacity = sum(len(letters) ** n for n in range(lo, hi + 1))
    if config.lexicon_size > capacity:
        raise ValueError("lexicon_size exceeds the number of possible words")
    words, seen = [], set()
    while len(words) < config.lexicon_size:
        n = int(rng.integers(lo, hi + 1))
        w = "".join(letters[i] for i in rng.integers(0, len(letters), size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

@dataclass
class WriterStyle:
    matrix: np.ndarray  # S_w = I + strength * scale * G_w
    bias: np.ndarray


def positional(k, n, dim):
    """Fixed sinusoidal modulation of character ``k`` in an ``n``-character word."""
    j = np.arange(dim)
    freq = j % 4
    phase = (j // 4) * 2.399963229728653  # golden angle spreads the phases
    return np.cos(np.pi * freq * (k + 0.5) / n + phase)


class Renderer:
    """Character codebooks of the base and surrogate writing processes."""

    def __init__(self, config, phoc_config=None):
        self.config = config
        self.phoc_config = phoc_config or PhocConfig()
        rng = _stream(config.seed, _KEY_CODEBOOK)
        n_sym, dim = len(self.phoc_config.alphabet), config.feature_dim
        base = rng.standard_normal((n_sym, dim))
        rho = config.codebook_correlation
        surrogate = rho * base + math.sqrt(1.0 - rho * rho) * rng.standard_normal((n_sym, dim))
        self.codebooks = {"base": base, "surrogate": base if config.shared_codebook else surrogate}
        self._pos = {}

    def content(self, word, process="base"):
        """Writer-free signal of ``word``: sum of position-modulated codebook rows."""
        if not word:
            raise ValueError("empty word")
        E = self.codebooks[process]
        n = len(word)
        out = np.zeros(self.config.feature_dim)
        for k, ch in enumerate(word):
            key = (k, n)
            if key not in self._pos:
                self._pos[key] = positional(k, n, self.config.feature_dim)
            out += self._pos[key] * E[self.phoc_config.index(ch)]
        return out


def make_writer(writer_id, config, scale=1.0):
    """Seeded style of one writer; ``scale`` multiplies its deviation from neutral."""
    rng = _stream(config.seed, _KEY_WRITER, writer_id)
    dim = config.feature_dim
    G = rng.standard_normal((dim, dim)) / math.sqrt(dim)
    beta = rng.standard_normal(dim)
    amount = config.style_strength * scale
    return WriterStyle(np.eye(dim) + amount * G, amount * beta)


def render(word, style, process, rng, config, renderer=None):
    """One feature vector for ``word`` written in ``style`` by ``process``."""
    renderer = renderer or Renderer(config)
    x = style.matrix @ renderer.content(word, process) + style.bias
    sigma = config.noise_sigma * (1.0 + config.degradation * rng.random())
    return x + sigma * rng.standard_normal(config.feature_dim)


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

class Corpus:
    """Column-oriented sample store: ids, splits, words, writers, features."""

    def __init__(self, ids, splits, transcriptions, writers, features, config=None):
        self.ids = list(ids)
        self.splits = np.asarray(splits, dtype=object)
        self.transcriptions = list(transcriptions)
        self.writers = np.asarray(writers, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        self.config = config
        n = len(self.ids)
        if not (len(self.splits) == len(self.transcriptions) == len(self.writers) == len(self.features) == n):
            raise ValueError("corpus columns differ in length")
        if len(set(self.ids)) != n:
            raise ValueError("duplicate sample ids")

    def __len__(self):
        return len(self.ids)

    def mask(self, *splits):
        return np.isin(self.splits, splits)

    def subset(self, *splits):
        m = self.mask(*splits)
        idx = np.flatnonzero(m)
        return Corpus(
            [self.ids[i] for i in idx], self.splits[idx],
            [self.transcriptions[i] for i in idx], self.writers[idx],
            self.features[idx], self.config,
        )

    def dumps(self):
        header = {"format": CORPUS_FORMAT, "version": CORPUS_VERSION,
                  "config": self.config.to_dict() if self.config else None}
        lines = [json.dumps(header, sort_keys=True)]
        for i in range(len(self)):
            head = json.dumps({
                "id": self.ids[i], "split": str(self.splits[i]),
                "transcription": self.transcriptions[i], "writer": int(self.writers[i]),
            })
            lines.append(head[:-1] + ', "features": ' + array_text(self.features[i]) + "}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())


class CorpusError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def load_corpus(path, phoc_config=None):
    """Read a corpus JSONL file.

    Transcriptions are normalized; train/test samples whose transcription
    normalizes to nothing are dropped and counted in a warning.  Raises
    :class:`CorpusError` naming the first malformed line.
    """
    phoc_config = phoc_config or PhocConfig()
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorpusError(1, "empty corpus file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusError(1, f"bad header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
        raise CorpusError(1, "missing corpus header")
    if header.get("version") != CORPUS_VERSION:
        raise CorpusError(1, f"unsupported corpus version {header.get('version')}")
    config = CorpusConfig(**header["config"]) if header.get("config") else None
    ids, splits, words, writers, feats = [], [], [], [], []
    dropped = 0
    dim = None
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sid, split, word = rec["id"], rec["split"], rec["transcription"]
            writer = int(rec["writer"])
            x = np.asarray(rec["features"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(no, f"malformed sample ({exc})") from None
        if split not in SPLITS:
            raise CorpusError(no, f"unknown split {split!r}")
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise CorpusError(no, "features must be a finite numeric array")
        if dim is None:
            dim = x.shape[0]
        elif x.shape[0] != dim:
            raise CorpusError(no, f"feature width {x.shape[0]} != {dim}")
        word = normalize_transcription(word, phoc_config)
        if not word and split != "meta_od":
            dropped += 1
            continue
        ids.append(sid)
        splits.append(split)
        words.append(word)
        writers.append(writer)
        feats.append(x)
    if dropped:
        logger.warning("dropped %d samples with empty normalized transcriptions", dropped)
    if len(set(ids)) != len(ids):
        raise CorpusError(0, "duplicate sample ids")
    features = np.vstack(feats) if feats else np.zeros((0, dim or 0))
    corpus = Corpus(ids, splits, words, writers, features, config)
    corpus.dropped = dropped
    return corpus


def od_scales(config, m=None):
    """Style multipliers of ``m`` graded writers; their variance ramps linearly."""
    lo, hi = config.od_style_variance
    m = config.od_writers if m is None else m
    var = np.full(m, lo) if m == 1 else lo + (hi - lo) * np.arange(m) / (m - 1)
    return np.sqrt(var)


def generate_corpus(config=None, phoc_config=None):
    """Build the four-split corpus deterministically from ``config.seed``."""
    config = config or CorpusConfig()
    phoc_config = phoc_config or PhocConfig()
    renderer = Renderer(config, phoc_config)
    lexicon = sample_lexicon(config, phoc_config=phoc_config)

    id_writers = list(range(config.id_writers))
    od_writers = list(range(config.id_writers, config.id_writers + config.od_writers))
    meta_start = config.id_writers + config.od_writers
    meta_writers = list(range(meta_start, meta_start + config.meta_writers))
    scales = dict(zip(od_writers, od_scales(config)))
    # surrogate writers span the same range of style distances
    scales.update(zip(meta_writers, od_scales(config, config.meta_writers)))
    styles = {}

    def style(w):
        if w not in styles:
            styles[w] = make_writer(w, config, scales.get(w, 1.0))
        return styles[w]

    roles = {
        "train": (id_writers, "base"),
        "id_test": (id_writers, "base"),
        "od_test": (od_writers, "base"),
        "meta_od": (meta_writers, "surrogate"),
    }
    ids, splits, words, writers, feats = [], [], [], [], []
    for s_idx, split in enumerate(SPLITS):
        rng = _stream(config.seed, _KEY_SPLIT, s_idx)
        pool, process = roles[split]
        for i in range(int(config.samples[split])):
            word = lexicon[int(rng.integers(len(lexicon)))]
            w = pool[int(rng.integers(len(pool)))]
            ids.append(f"{split}-{i:06d}")
            splits.append(split)
            words.append(word)
            writers.append(w)
            feats.append(render(word, style(w), process, rng, config, renderer))
    return Corpus(ids, splits, words, writers, np.vstack(feats), config)
