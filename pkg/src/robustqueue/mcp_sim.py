"""Projected Euler scheme for the optimally controlled reflected diffusion

    dW = b(W) dt + sigma(W) dZ + dR,   W >= 0,

whose coefficients come from the HJB argmax and may jump in ``w``.
Coefficients are tabulated on a uniform grid and looked up at the node
nearest to the left endpoint of each step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .hjb import HJBSolution
from .queue_sim import Estimate, mean_ci, replication_rng


@dataclass(frozen=True)
class DiffusionSpec:
    drift: np.ndarray       # b at grid nodes k * grid_step
    vol: np.ndarray         # sigma at the same nodes
    grid_step: float = 1.0
    w0: float = 0.0
    h: float = 1e-3
    T: float = 25.0

    def __post_init__(self):
        drift = np.atleast_1d(np.asarray(self.drift, dtype=float))
        vol = np.atleast_1d(np.asarray(self.vol, dtype=float))
        if drift.shape != vol.shape:
            raise ValueError("drift and vol tables must have the same length")
        if np.any(vol < 0) or not np.all(np.isfinite(drift)):
            raise ValueError("vol must be nonnegative and drift finite")
        if self.w0 < 0 or not self.h > 0 or not self.T > 0:
            raise ValueError("need w0 >= 0, h > 0, T > 0")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "vol", vol)

    @classmethod
    def constant(cls, b, sigma, **kw):
        return cls(np.array([b], float), np.array([sigma], float), 1.0, **kw)

    @classmethod
    def from_hjb(cls, sol: HJBSolution, **kw):
        """Aggregated coefficients ``b = sum_l b_l(w)``, ``sigma = (sum_l 2 q_l(w))^{1/2}``."""
        b, q = sol.total_coefficients()
        return cls(b, np.sqrt(2.0 * q), sol.step, **kw)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def coefficients(self, w):
        i = np.minimum(np.rint(np.asarray(w) / self.grid_step).astype(int), self.drift.size - 1)
        return self.drift[i], self.vol[i]


@njit(cache=True)
def _euler_paths(z, w0, h, drift, vol, grid_step, keep_path):
    R, S = z.shape
    G = drift.size
    sqh = math.sqrt(h)
    integrals = np.zeros(R)
    paths = np.zeros((R if keep_path else 0, S + 1))
    for r in range(R):
        w = w0
        t = 0.0
        disc = math.exp(-t) * w
        acc = 0.0
        if keep_path:
            paths[r, 0] = w
        for s in range(S):
            i = int(w / grid_step + 0.5)
            if i > G - 1:
                i = G - 1
            w = w + drift[i] * h + vol[i] * sqh * z[r, s]
            if w < 0.0:
                w = 0.0
            t = (s + 1) * h
            nd = math.exp(-t) * w
            acc += 0.5 * h * (disc + nd)
            disc = nd
            if keep_path:
                paths[r, s + 1] = w
        integrals[r] = acc
    return integrals, paths


def euler_reflected(spec: DiffusionSpec, rng: np.random.Generator | None = None):
    """One path on ``t = 0, h, ..., T`` and its trapezoidal ``int e^{-t} W dt``."""
    rng = np.random.default_rng() if rng is None else rng
    z = rng.standard_normal((1, spec.steps))
    integ, paths = _euler_paths(z, float(spec.w0), spec.h, spec.drift, spec.vol,
                                spec.grid_step, True)
    return paths[0], float(integ[0])


def discounted_integrals(spec: DiffusionSpec, replications: int, seed: int = 0,
                         chunk: int = 256) -> np.ndarray:
    """Discounted integrals of independent paths; path ``r`` draws its
    normals from the stream derived from ``(seed, r)``."""
    out = np.empty(replications)
    S = spec.steps
    for lo in range(0, replications, chunk):
        hi = min(lo + chunk, replications)
        z = np.stack([replication_rng(seed, r).standard_normal(S) for r in range(lo, hi)])
        out[lo:hi], _ = _euler_paths(z, float(spec.w0), spec.h, spec.drift, spec.vol,
                                     spec.grid_step, False)
    return out


def estimate_mcp_value(hjb: HJBSolution, classes=None, w0: float = 0.0,
                       replications: int = 10_000, seed: int = 0, h: float = 1e-3,
                       T: float = 25.0) -> Estimate:
    """Monte Carlo value of the reflected diffusion driven by the HJB argmax
    coefficients, started at ``w0``; compare with ``u(w0)``."""
    if classes is not None and len(list(classes)) != len(hjb.candidates):
        raise ValueError("classes do not match the HJB solution")
    spec = DiffusionSpec.from_hjb(hjb, w0=w0, h=h, T=T)
    return mean_ci(discounted_integrals(spec, replications, seed))
