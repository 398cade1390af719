"""Log-domain helpers and compensated summation.

Every reduction here runs sequentially over the last axis with Neumaier
compensation, so a row of a batched array reduces to exactly the same bits
as the same row reduced on its own.
"""

from __future__ import annotations

import math

import numpy as np

LOG_TINY = math.log(1e-300)


def compensated_sum(a, axis=-1):
    """Neumaier-compensated sum of ``a`` along ``axis``."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    n = a.shape[-1]
    if n == 0:
        return np.zeros(a.shape[:-1])
    total = a[..., 0].copy()
    comp = np.zeros_like(total)
    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(1, n):
            v = a[..., i]
            t = total + v
            big = np.abs(total) >= np.abs(v)
            # error-free transformation of the addition
            comp += np.where(big, (total - t) + v, (v - t) + total)
            total = t
        out = total + comp
    # inf - inf in the compensation term must not turn an infinite total into nan
    return np.where(np.isfinite(total), out, total)


def logsumexp(a, axis=-1):
    """log(sum(exp(a))) with the largest term factored out.

    Returns -inf when every term is -inf, +inf if any term is +inf.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    m = np.max(a, axis=-1)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        s = compensated_sum(np.exp(a - safe_m[..., None]))
        with np.errstate(divide="ignore"):
            out = safe_m + np.log(s)
    out = np.where(np.isneginf(m), -np.inf, out)
    out = np.where(np.isposinf(m), np.inf, out)
    return out[()] if out.ndim == 0 else out


def logmeanexp(a, axis=-1):
    """log(mean(exp(a))) along ``axis``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[axis]
    return logsumexp(a, axis=axis) - math.log(n)


def log_abs_diff_exp(a, b):
    """log|exp(a) - exp(b)|, -inf when the two are equal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hi + np.log1p(-np.exp(lo - hi))
    return np.where(hi == lo, -np.inf, out)


def trial_seed(root_seed, *keys):
    """Child seed sequence for a (cell, trial, ...) index tuple.

    Built from the root entropy plus a spawn key, so any trial can be
    regenerated on its own regardless of execution order.
    """
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(k) for k in keys))


def as_generator(seed):
    """Accept an int, SeedSequence or Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
