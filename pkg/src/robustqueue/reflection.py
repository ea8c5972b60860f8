"""One-dimensional Skorohod reflection at the origin.

Paths are stored only at their sample (jump) times and are constant in
between, so the running supremum of the negative part can be taken over
the samples alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SampledPath:
    """Right-continuous piecewise-constant path known at ``times``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("path must have at least one sample")
        if values.shape != times.shape:
            raise ValueError("times and values must have the same length")
        if times[0] != 0.0:
            raise ValueError("path must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class ReflectedPair:
    phi: SampledPath
    eta: SampledPath


def skorohod_map(psi: SampledPath) -> ReflectedPair:
    """Return ``(phi, eta)`` with ``eta(t) = sup_{s<=t} psi(s)^-`` and
    ``phi = psi + eta``, evaluated at ``psi.times``."""
    if not isinstance(psi, SampledPath):
        psi = SampledPath(*psi)
    eta = np.maximum.accumulate(np.maximum(-psi.values, 0.0))
    # eta >= -psi elementwise, and rounding is monotone, so phi >= 0 exactly
    phi = psi.values + eta
    return ReflectedPair(SampledPath(psi.times, phi), SampledPath(psi.times, eta))


def lindley_step(w: float, increment: float) -> tuple[float, float]:
    """One step of the reflected recursion.

    Returns ``(w_next, delta_r)`` where ``w_next = max(w + increment, 0)``
    and ``delta_r`` is the amount pushed by the barrier.
    """
    if w < 0:
        raise ValueError(f"workload must be nonnegative, got {w}")
    x = w + increment
    if x >= 0.0:
        return x, 0.0
    return 0.0, -x


def lindley_path(increments, w0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Iterate :func:`lindley_step` and return the reflected path and the
    cumulative regulator, both including the initial point."""
    increments = np.asarray(increments, dtype=float)
    w = np.empty(increments.size + 1)
    r = np.empty(increments.size + 1)
    w[0], r[0] = w0, 0.0
    for k, dx in enumerate(increments):
        w[k + 1], dr = lindley_step(w[k], dx)
        r[k + 1] = r[k] + dr
    return w, r
