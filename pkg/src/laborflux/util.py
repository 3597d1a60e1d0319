"""Shared plumbing: canonical float text, deterministic parallelism, RNG spawning."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DataError

THREADS_ENV = "LABORFLUX_THREADS"


def canonical_float(x: float) -> str:
    """Render a float with exactly 10 significant digits.

    Positional for ordinary magnitudes, scientific outside [1e-4, 1e16).
    The mapping is a fixpoint under parse-then-format, so canonical files
    rewrite byte-identically.
    """
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise DataError("non-finite value cannot be written to a table")
    if x == 0.0:
        return "0.0000000000"  # covers -0.0
    a = abs(x)
    if not 1e-4 <= a < 1e16:
        return np.format_float_scientific(x, precision=9, unique=False)
    s = np.format_float_positional(x, precision=10, unique=False, fractional=False)
    # numpy under-pads exactly representable short values; enforce 10 digits
    significant = "".join(c for c in s if c.isdigit()).lstrip("0")
    if len(significant) < 10 and "." in s:
        s += "0" * (10 - len(significant))
    return s


def thread_count() -> int:
    """Parallelism degree from LABORFLUX_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def pmap(fn, items):
    """Ordered map over independent work units.

    Uses a thread pool of `thread_count()` workers; results are collected in
    input order, so output is identical at any parallelism degree.
    """
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent generators derived from one seed (order-insensitive use)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def stable_json(payload) -> str:
    """Deterministic JSON text: sorted keys, shortest-repr floats, '\\n' at EOF."""
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"
