"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics.  The numba
path is used unless numba is missing or ``PHOCCONF_DISABLE_NUMBA`` is set
to a non-empty value other than ``0``.  Both paths are importable directly
(``*_numpy`` / ``*_numba``) so tests and benchmarks can compare them.
"""
import os

import numpy as np

_flag = os.environ.get("PHOCCONF_DISABLE_NUMBA", "").strip()
_DISABLED = _flag not in ("", "0")

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# PHOC bit construction
# ---------------------------------------------------------------------------

def phoc_bits_numpy(char_idx, levels, n_symbols, threshold):
    """Set PHOC bits for one word given as alphabet indices.

    Interval arithmetic is done in integers scaled by ``n * L`` so a 50%
    overlap is an exact tie rather than a rounding accident.
    """
    n = char_idx.shape[0]
    out = np.zeros(n_symbols * int(levels.sum()), dtype=np.uint8)
    k = np.arange(n, dtype=np.int64)
    offset = 0
    for L in levels:
        r = np.arange(L, dtype=np.int64)
        lo = np.maximum(k[:, None] * L, r[None, :] * n)
        hi = np.minimum((k[:, None] + 1) * L, (r[None, :] + 1) * n)
        overlap = np.maximum(hi - lo, 0)
        active = overlap >= threshold * L
        kk, rr = np.nonzero(active)
        out[offset + rr * n_symbols + char_idx[kk]] = 1
        offset += L * n_symbols
    return out


def _phoc_bits_loop(char_idx, levels, n_symbols, threshold):
    n = char_idx.shape[0]
    total = 0
    for L in levels:
        total += L
    out = np.zeros(n_symbols * total, dtype=np.uint8)
    offset = 0
    for L in levels:
        for k in range(n):
            c = char_idx[k]
            for r in range(L):
                lo = max(k * L, r * n)
                hi = min((k + 1) * L, (r + 1) * n)
                if hi - lo > 0 and hi - lo >= threshold * L:
                    out[offset + r * n_symbols + c] = 1
        offset += L * n_symbols
    return out


# ---------------------------------------------------------------------------
# Average precision under a threshold sweep
# ---------------------------------------------------------------------------

def sweep_ap_numpy(relevant, conf, thresholds):
    """AP per (threshold, query) over the samples whose confidence >= T.

    ``relevant`` and ``conf`` are (Q, N), each row already in the query's
    ranking order.  Returns ``(ap, kept_relevant)``, both (K, Q); ``ap`` is
    NaN where no relevant sample survives.  Sums run sequentially (cumsum)
    so results match the compiled loop bit for bit.
    """
    K = thresholds.shape[0]
    Q = relevant.shape[0]
    ap = np.full((K, Q), np.nan)
    kept_rel = np.zeros((K, Q), dtype=np.int64)
    if relevant.shape[1] == 0:
        return ap, kept_rel
    rel = relevant.astype(bool)
    for t in range(K):
        keep = conf >= thresholds[t]
        hit = rel & keep
        pos = np.cumsum(keep, axis=1)
        hits = np.cumsum(hit, axis=1)
        prec = np.where(hit, hits / np.maximum(pos, 1), 0.0)
        total = np.cumsum(prec, axis=1)[:, -1]
        n_hit = hits[:, -1]
        kept_rel[t] = n_hit
        ok = n_hit > 0
        ap[t, ok] = total[ok] / n_hit[ok]
    return ap, kept_rel


def _sweep_ap_loop(relevant, conf, thresholds):
    K = thresholds.shape[0]
    Q, N = relevant.shape
    ap = np.full((K, Q), np.nan)
    kept_rel = np.zeros((K, Q), dtype=np.int64)
    for t in range(K):
        T = thresholds[t]
        for q in range(Q):
            pos = 0
            hits = 0
            total = 0.0
            for j in range(N):
                if conf[q, j] >= T:
                    pos += 1
                    if relevant[q, j]:
                        hits += 1
                        total += hits / pos
            kept_rel[t, q] = hits
            if hits > 0:
                ap[t, q] = total / hits
    return ap, kept_rel


# ---------------------------------------------------------------------------
# Adam with coupled L2 weight decay, in place
# ---------------------------------------------------------------------------

def adam_update_numpy(param, grad, m, v, lr, beta1, beta2, bc1, bc2, eps, weight_decay):
    """One Adam step on a flat parameter array; mutates param, m and v."""
    g = grad + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    param -= (lr / bc1) * m / (np.sqrt(v * (1.0 / bc2)) + eps)


def _adam_update_loop(param, grad, m, v, lr, beta1, beta2, bc1, bc2, eps, weight_decay):
    step = lr / bc1
    inv_bc2 = 1.0 / bc2
    c1 = 1.0 - beta1
    c2 = 1.0 - beta2
    for i in range(param.shape[0]):
        g = grad[i] + weight_decay * param[i]
        mi = beta1 * m[i] + c1 * g
        vi = beta2 * v[i] + c2 * (g * g)
        m[i] = mi
        v[i] = vi
        param[i] -= step * mi / (np.sqrt(vi * inv_bc2) + eps)


if HAS_NUMBA:
    # numpy error model: no zero-division checks, so loops can vectorize
    _jit = numba.njit(cache=True, error_model="numpy")
    phoc_bits_numba = _jit(_phoc_bits_loop)
    sweep_ap_numba = _jit(_sweep_ap_loop)
    adam_update_numba = _jit(_adam_update_loop)
else:  # pragma: no cover
    phoc_bits_numba = phoc_bits_numpy
    sweep_ap_numba = sweep_ap_numpy
    adam_update_numba = adam_update_numpy

if USE_NUMBA:
    phoc_bits = phoc_bits_numba
    sweep_ap = sweep_ap_numba
    adam_update = adam_update_numba
else:
    phoc_bits = phoc_bits_numpy
    sweep_ap = sweep_ap_numpy
    adam_update = adam_update_numpy


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
