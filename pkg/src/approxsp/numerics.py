"""Log-domain soft-max primitives.

``soft_max(a, s) = s * ln sum_i exp(a_i / s)`` interpolates between the
log-partition function (``s = 1``) and the max function (``s = 0``).  The
``scaled_*`` variants are the vectorized kernels used by the solvers: the
scale may vary per reduced slice, may be zero (explicit max branch) and may be
negative (soft-min, used by non-concave entropy weights).  Entries equal to
``-inf`` are treated as absent labels whatever the sign of the scale.
"""

from __future__ import annotations

import numpy as np

# ties at scale zero: entries within this distance of the max count as maximizers
TIE_RTOL = 1e-12


def _as_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _shifted(a, se, axes, masked):
    """``(a - ref) / se`` with ``ref`` the entry maximizing ``a / se`` (the max
    for positive scales, the smallest finite entry for negative ones), so the
    exponent never overflows however small the scale; also returns ``ref``."""
    top = np.max(a, axis=axes, keepdims=True)
    if np.any(se < 0):
        low = np.where(np.isneginf(a), np.inf, a) if masked else a
        ref = np.where(se > 0, top, np.min(low, axis=axes, keepdims=True))
    else:
        ref = top
    ref = np.where(np.isfinite(ref), ref, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        z = (a - ref) / se
    if masked:
        z = np.where(np.isneginf(a), -np.inf, z)
    return z, ref


def _expand(s, ndim, axes):
    """Reshape a scale broadcastable to the reduced shape into a keepdims shape."""
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        return s
    kept = ndim - len(axes)
    s = s.reshape((1,) * (kept - s.ndim) + s.shape)
    for a in axes:
        s = np.expand_dims(s, a)
    return s


def _tie_mask(a, axes):
    m = np.max(a, axis=axes, keepdims=True)
    tol = TIE_RTOL * (1.0 + np.abs(np.where(np.isfinite(m), m, 0.0)))
    return a >= m - tol


def scaled_lse(a, s, axis=-1, masked: bool | None = None):
    """``s * ln sum exp(a / s)`` over ``axis``; ``max`` where ``s == 0``.

    ``s`` broadcasts against the reduced shape.  ``masked`` forces (or skips)
    the handling of ``-inf`` entries under negative scales; by default it is
    enabled only when some scale is negative.
    """
    a = np.asarray(a, dtype=float)
    axes = _as_axes(axis, a.ndim)
    if not axes:
        return a.copy()
    s_arr = np.asarray(s, dtype=float)
    zero = s_arr == 0
    if np.all(zero):
        return np.max(a, axis=axes)
    se = _expand(np.where(zero, 1.0, s_arr), a.ndim, axes)
    if masked is None:
        masked = bool(np.any(s_arr < 0))
    z, ref = _shifted(a, se, axes, masked)
    with np.errstate(divide="ignore"):
        out = np.squeeze(ref + se * np.log(np.sum(np.exp(z), axis=axes, keepdims=True)), axis=axes)
    if np.any(zero):
        out = np.where(zero, np.max(a, axis=axes), out)
    return out


def scaled_softmax(a, s, axis=-1, masked: bool | None = None):
    """Distribution proportional to ``exp(a / s)`` over ``axis``.

    Where ``s == 0`` the result is uniform over the maximizing entries, the
    tie-set-uniform subgradient choice.
    """
    a = np.asarray(a, dtype=float)
    axes = _as_axes(axis, a.ndim)
    s_arr = np.asarray(s, dtype=float)
    zero = s_arr == 0
    if np.all(zero):
        ties = _tie_mask(a, axes).astype(float)
        return ties / np.sum(ties, axis=axes, keepdims=True)
    se = _expand(np.where(zero, 1.0, s_arr), a.ndim, axes)
    if masked is None:
        masked = bool(np.any(s_arr < 0))
    z, _ = _shifted(a, se, axes, masked)
    w = np.exp(z)
    p = w / np.sum(w, axis=axes, keepdims=True)
    if np.any(zero):
        ties = _tie_mask(a, axes).astype(float)
        ties /= np.sum(ties, axis=axes, keepdims=True)
        p = np.where(_expand(zero, a.ndim, axes), ties, p)
    return p


def _check(a, s):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ValueError("soft-max of an empty vector")
    if s < 0:
        raise ValueError(f"scale must be non-negative, got {s}")
    return a


def soft_max(a, s: float = 1.0) -> float:
    """Scaled log-sum-exp of a 1-d score vector; ``s = 0`` returns ``max(a)``."""
    a = _check(a, s).ravel()
    return float(scaled_lse(a, s, axis=0))


def soft_max_distribution(a, s: float = 1.0) -> np.ndarray:
    """``p_i ∝ exp(a_i / s)``; uniform over the argmax set when ``s = 0``."""
    a = _check(a, s).ravel()
    return scaled_softmax(a, s, axis=0)


def entropy(p, axis=-1):
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(t, axis=axis)
