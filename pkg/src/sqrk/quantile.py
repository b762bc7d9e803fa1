"""Order-statistic quantile of a residual sample and the acceptance threshold."""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyAcceptedSetError, EmptySampleError, QuantileIndexZeroError

STRICT = "strict"
INCLUSIVE = "inclusive"
THRESHOLD_MODES = (STRICT, INCLUSIVE)


def quantile_rank(size, q) -> int:
    """1-based rank ``floor(q * size)`` of the q-quantile in a sample of ``size``."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return math.floor(q * size)


def q_quantile(values, q) -> float:
    """The ``floor(q * len(values))``-th smallest element of ``values``.

    With distinct values this is the unique ``s`` with exactly ``floor(q|S|)``
    sample points ``<= s``.  With repeated values the count condition may have no
    solution, and the order statistic is returned instead.  Selection runs through
    ``numpy.partition`` (introselect), so no full sort is performed.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptySampleError("cannot take a quantile of an empty sample")
    k = quantile_rank(v.size, q)
    if k < 1:
        raise QuantileIndexZeroError(f"floor({q} * {v.size}) = 0")
    return float(np.partition(v, k - 1)[k - 1])


def threshold_mask(magnitudes, gamma, mode=INCLUSIVE) -> np.ndarray:
    if mode == INCLUSIVE:
        return magnitudes <= gamma
    if mode == STRICT:
        return magnitudes < gamma
    raise ValueError(f"unknown threshold mode {mode!r}")


def threshold_set(indices, magnitudes, gamma, mode=INCLUSIVE) -> np.ndarray:
    """Indices whose residual magnitude passes the threshold ``gamma``.

    ``inclusive`` keeps ``|r| <= gamma`` and is never empty when ``gamma`` is a
    sample quantile; ``strict`` keeps ``|r| < gamma`` and raises
    :class:`EmptyAcceptedSetError` when nothing passes.
    """
    if not math.isfinite(gamma):
        raise ValueError("gamma must be finite")
    indices = np.asarray(indices, dtype=np.int64)
    mask = threshold_mask(np.asarray(magnitudes, dtype=np.float64), gamma, mode)
    accepted = indices[mask]
    if accepted.size == 0:
        raise EmptyAcceptedSetError(f"no residual passes gamma={gamma} ({mode})")
    return accepted
