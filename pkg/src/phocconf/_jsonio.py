"""Fixed-precision float encoding shared by model files and CSV output."""
import json
import math

import numpy as np


def fmt_float(x):
    """17 significant digits: enough for an exact float64 round trip."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def array_text(a):
    flat = np.asarray(a, dtype=np.float64).ravel()
    return "[" + ",".join(format(float(v), ".17g") for v in flat) + "]"


def dumps_with_arrays(obj):
    """Serialize ``obj`` to JSON, writing numpy arrays as 17-digit lists.

    Arrays are flattened row-major; shapes must be recorded separately by
    the caller.
    """
    arrays = []

    def swap(o):
        if isinstance(o, np.ndarray):
            arrays.append(o)
            return f"\x00ARR{len(arrays) - 1}\x00"
        if isinstance(o, dict):
            return {k: swap(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [swap(v) for v in o]
        return o

    text = json.dumps(swap(obj), sort_keys=True)
    for i, a in enumerate(arrays):
        text = text.replace(json.dumps(f"\x00ARR{i}\x00"), array_text(a), 1)
    return text
