import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

from phocconf import _kernels


def test_backend_flag_selects_numpy():
    code = "from phocconf import _kernels as k; print(k.backend(), k.adam_update is k.adam_update_numpy)"
    env = {**os.environ, "PHOCCONF_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_flag_zero_keeps_numba():
    code = "from phocconf import _kernels as k; print(k.backend())"
    env = {**os.environ, "PHOCCONF_DISABLE_NUMBA": "0"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("numba" if _kernels.HAS_NUMBA else "numpy")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 6), n=st.integers(1, 40), k=st.integers(1, 12))
def test_sweep_parity(seed, q, n, k):
    rng = np.random.default_rng(seed)
    rel = rng.random((q, n)) < 0.3
    conf = rng.integers(0, 4, (q, n)).astype(float)
    grid = np.sort(rng.integers(-1, 5, k).astype(float))
    a, ka = _kernels.sweep_ap_numpy(rel, conf, grid)
    b, kb = _kernels.sweep_ap_numba(rel, conf, grid)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ka, kb)


def test_sweep_nan_when_nothing_relevant_kept():
    rel = np.array([[True, False]])
    conf = np.array([[0.0, 1.0]])
    ap, kept = _kernels.sweep_ap(rel, conf, np.array([0.5]))
    assert np.isnan(ap[0, 0]) and kept[0, 0] == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), wd=st.sampled_from([0.0, 5e-4]))
def test_adam_parity(seed, wd):
    rng = np.random.default_rng(seed)
    p0, g = rng.standard_normal(257), rng.standard_normal(257)
    states = [[p0.copy(), np.zeros(257), np.zeros(257)] for _ in range(2)]
    for t in range(1, 4):
        bc1, bc2 = 1 - 0.9 ** t, 1 - 0.999 ** t
        for fn, (p, m, v) in zip((_kernels.adam_update_numpy, _kernels.adam_update_numba), states):
            fn(p, g * t, m, v, 1e-2, 0.9, 0.999, bc1, bc2, 1e-8, wd)
    for x, y in zip(*states):
        np.testing.assert_array_equal(x, y)
