"""Discrete-event simulation of the n-th prelimit multitype queue.

Time is the scaled time of the model: one job of every type arrives at
each epoch ``k/n`` and the server processes work at rate ``n``, so a job
of size ``J`` occupies it for ``J/n``.  Job sizes are unscaled; reported
workloads, queue lengths and idleness carry the ``n^{-1/2}`` factor.

The adversary picks, per epoch and type, one of a finite list of
candidate laws.  All candidates are drawn up front for every epoch and the
kernel only reads the one selected, which makes it impossible for a
selection to depend on the draw it selects.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .hjb import HJBSolution
from .uncertainty import DriftVarPoint, UncertaintyClass

log = logging.getLogger(__name__)

SCHEDULERS = ("cmu", "fifo_global")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    n: int
    classes: tuple
    h: tuple
    horizon_T: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        classes = tuple(self.classes)
        h = tuple(float(x) for x in self.h)
        if not classes or len(classes) != len(h):
            raise ValueError("need one holding cost per class")
        if any(x <= 0 for x in h):
            raise ValueError("holding costs must be positive")
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        load = sum(1.0 / c.mu for c in classes)
        if abs(load - 1.0) > 1e-12:
            raise ValueError(f"heavy traffic requires sum 1/mu = 1, got {load!r}")
        idx = [hh * c.mu for hh, c in zip(h, classes)]
        if any(a > b for a, b in zip(idx, idx[1:])):
            raise ValueError("types must be labeled so that h*mu is nondecreasing")
        if abs(idx[0] - 1.0) > 1e-12:
            raise ValueError("holding costs must be normalized so that h1*mu1 = 1")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "n", int(self.n))

    @property
    def L(self) -> int:
        return len(self.classes)

    @property
    def mu(self) -> np.ndarray:
        return np.array([c.mu for c in self.classes])

    def with_n(self, n: int) -> "SystemConfig":
        return SystemConfig(n, self.classes, self.h, self.horizon_T, self.seed)


def normalize_costs(classes: Sequence[UncertaintyClass], h: Sequence[float]):
    """Relabel types by increasing ``h*mu`` and rescale ``h`` so the lowest
    index equals one.  Returns ``(classes, h, order, scale)``; costs in the
    normalized system times ``scale`` give costs in the original one."""
    order = sorted(range(len(classes)), key=lambda i: (h[i] * classes[i].mu, i))
    scale = h[order[0]] * classes[order[0]].mu
    return (tuple(classes[i] for i in order), tuple(h[i] / scale for i in order),
            tuple(order), scale)


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------

class AdversaryPolicy:
    """Selection rule over per-type candidate points."""

    def candidates(self, config: SystemConfig) -> list[list[DriftVarPoint]]:
        raise NotImplementedError

    def _check(self, config, cands):
        if len(cands) != config.L:
            raise ValueError("adversary must provide candidates for every type")
        for l, (cls, pts) in enumerate(zip(config.classes, cands)):
            for p in pts:
                if p not in cls:
                    raise ValueError(f"point {tuple(p)} is not in the class of type {l + 1}")


@dataclass
class Static(AdversaryPolicy):
    points: Sequence

    def candidates(self, config):
        cands = [[DriftVarPoint(*map(float, p))] for p in self.points]
        self._check(config, cands)
        return cands


@dataclass
class IIDRandom(AdversaryPolicy):
    """Independent choice at each epoch: type ``l`` picks ``points[l][m]``
    with probability ``weights[l][m]``."""

    points: Sequence
    weights: Sequence

    def candidates(self, config):
        cands = [[DriftVarPoint(*map(float, p)) for p in pts] for pts in self.points]
        self._check(config, cands)
        return cands


@dataclass
class Feedback(AdversaryPolicy):
    """Per-type argmax of ``b u'(w) + q u''(w)`` at the last observed total
    workload ``w``, read off a solved HJB at the nearest grid node."""

    hjb: HJBSolution
    classes: Sequence = field(default=None)

    def candidates(self, config):
        if len(self.hjb.candidates) != config.L:
            raise ValueError("HJB solution was computed for a different number of types")
        cands = [[DriftVarPoint(*map(float, row)) for row in c] for c in self.hjb.candidates]
        self._check(config, cands)
        return cands


def feedback_adversary(hjb: HJBSolution, classes, n: int | None = None) -> Feedback:
    """Feedback adversary for the given solution; ``n`` is accepted for
    symmetry with the construction but laws are realized per config."""
    return Feedback(hjb, list(classes))


# ---------------------------------------------------------------------------
# Event kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pick(head, tail, cmu):
    """Type to serve next: highest index with a waiting job (cmu) or the
    earliest arrival, ties to the lowest type index (fifo_global)."""
    L = head.size
    if cmu:
        for l in range(L - 1, -1, -1):
            if head[l] < tail[l]:
                return l
        return -1
    best = -1
    for l in range(L):
        if head[l] < tail[l] and (best < 0 or head[l] < head[best]):
            best = l
    return best


@njit(cache=True)
def _simulate_kernel(n, T, h, sizes, fixed_choice, feedback, table, grid_step, cmu):
    N, L = fixed_choice.shape
    sqn = math.sqrt(n)
    head = np.zeros(L, np.int64)
    tail = np.zeros(L, np.int64)
    wsum = np.zeros(L)
    qcount = np.zeros(L, np.int64)
    jobs = np.zeros((N, L))
    choices = np.zeros((N, L), np.int64)
    W = np.zeros((N + 1, L))
    Qh = np.zeros((N + 1, L))
    R = np.zeros(N + 1)
    Wminus = np.zeros(N + 1)
    G = table.shape[1]

    busy = False
    stype = -1
    finish = 0.0
    idle_total = 0.0
    idle_since = 0.0
    rate = 0.0          # sum_l h_l Q_l, unscaled
    cost = 0.0
    last_t = 0.0
    w_obs = 0.0         # scaled total workload right after the previous epoch
    clamps = 0
    node = 0

    for k in range(1, N + 1):
        tk = k / n
        # completions strictly before the epoch
        while busy and finish < tk:
            cost += rate * (math.exp(-last_t) - math.exp(-finish))
            last_t = finish
            qcount[stype] -= 1
            rate -= h[stype]
            busy = False
            s = _pick(head, tail, cmu)
            if s >= 0:
                J = jobs[head[s], s]
                head[s] += 1
                wsum[s] = wsum[s] - J if head[s] < tail[s] else 0.0
                busy = True
                stype = s
                finish = last_t + J / n
            else:
                idle_since = last_t
        wt = 0.0
        for l in range(L):
            wt += wsum[l]
        if busy:
            wt += (finish - tk) * n
        Wminus[k] = wt / sqn

        # adversary: sees only the workload observed after epoch k-1
        if feedback:
            node = int(w_obs / grid_step + 0.5)
            if node > G - 1:
                node = G - 1
                clamps += 1
        for l in range(L):
            c = table[l, node] if feedback else fixed_choice[k - 1, l]
            choices[k - 1, l] = c
            jobs[k - 1, l] = sizes[k - 1, l, c]

        cost += rate * (math.exp(-last_t) - math.exp(-tk))
        last_t = tk
        for l in range(L):
            tail[l] += 1
            wsum[l] += jobs[k - 1, l]
            qcount[l] += 1
            rate += h[l]

        if not busy:
            s = _pick(head, tail, cmu)
            idle_total += tk - idle_since
            J = jobs[head[s], s]
            head[s] += 1
            wsum[s] = wsum[s] - J if head[s] < tail[s] else 0.0
            busy = True
            stype = s
            finish = tk + J / n
        # zero-size jobs leave as soon as they enter service
        while busy and finish <= tk:
            qcount[stype] -= 1
            rate -= h[stype]
            busy = False
            s = _pick(head, tail, cmu)
            if s >= 0:
                J = jobs[head[s], s]
                head[s] += 1
                wsum[s] = wsum[s] - J if head[s] < tail[s] else 0.0
                busy = True
                stype = s
                finish = tk + J / n
            else:
                idle_since = tk

        tot = 0.0
        for l in range(L):
            wl = wsum[l]
            if busy and stype == l:
                wl += (finish - tk) * n
            W[k, l] = wl / sqn
            Qh[k, l] = qcount[l] / sqn
            tot += wl
        R[k] = sqn * (idle_total if busy else idle_total + tk - idle_since)
        w_obs = tot / sqn

    # drain to the horizon
    while busy and finish < T:
        cost += rate * (math.exp(-last_t) - math.exp(-finish))
        last_t = finish
        qcount[stype] -= 1
        rate -= h[stype]
        busy = False
        s = _pick(head, tail, cmu)
        if s >= 0:
            J = jobs[head[s], s]
            head[s] += 1
            wsum[s] = wsum[s] - J if head[s] < tail[s] else 0.0
            busy = True
            stype = s
            finish = last_t + J / n
    if T > last_t:
        cost += rate * (math.exp(-last_t) - math.exp(-T))
    return W, Qh, R, Wminus, jobs, choices, cost / sqn, clamps


# ---------------------------------------------------------------------------
# Paths and statistics
# ---------------------------------------------------------------------------

@dataclass
class PathStats:
    n: int
    mu: np.ndarray
    t: np.ndarray
    W_hat: np.ndarray          # (N+1, L) per-type scaled workload after epoch k
    Q_hat: np.ndarray          # (N+1, L) per-type scaled queue length
    R_hat: np.ndarray          # (N+1,) scaled cumulative idleness
    W_minus: np.ndarray        # (N+1,) scaled total workload just before epoch k
    jobs: np.ndarray           # (N, L) realized job sizes
    choices: np.ndarray        # (N, L) indices into candidates[l]
    candidates: list
    discounted_cost: float
    clamp_count: int = 0

    @property
    def W_hat_tot(self) -> np.ndarray:
        return self.W_hat.sum(axis=1)

    @property
    def rsp_gap(self) -> np.ndarray:
        return rsp_gap(self)

    @property
    def high_priority_sup(self) -> float:
        return high_priority_workload(self)

    def selected_points(self, l: int) -> np.ndarray:
        return np.asarray(self.candidates[l])[self.choices[:, l]]

    def to_csv(self, path) -> None:
        L = self.W_hat.shape[1]
        cols = [self.t, self.W_hat_tot, self.R_hat]
        names = ["t", "W_hat_tot", "R_hat"]
        for l in range(L):
            cols += [self.W_hat[:, l], self.Q_hat[:, l]]
            names += [f"W_hat_{l + 1}", f"Q_hat_{l + 1}"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.17g",
                   header=",".join(names), comments="")


def rsp_gap(stats: PathStats) -> np.ndarray:
    """Per-type ``sup_k |Q_hat - mu W_hat|`` over the epochs."""
    return np.max(np.abs(stats.Q_hat - stats.mu * stats.W_hat), axis=0)


def high_priority_workload(stats: PathStats) -> float:
    """``sup_k`` of the scaled workload of types 2..L (0 when L = 1)."""
    if stats.W_hat.shape[1] < 2:
        return 0.0
    return float(np.max(stats.W_hat[:, 1:].sum(axis=1)))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),)))


def _epochs(n, T):
    # arrivals at k/n for k = 1..floor(nT); guard against nT landing at x.9999
    return int(math.floor(n * T + 1e-9))


def simulate(config: SystemConfig, adversary: AdversaryPolicy, scheduler: str = "cmu",
             rng: np.random.Generator | None = None, warn: bool = True) -> PathStats:
    """Run one replication of the n-th system up to ``config.horizon_T``.

    A feedback adversary that observes a workload beyond the HJB grid uses
    the last grid node; such epochs are counted in ``clamp_count``.
    """
    if scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler {scheduler!r}")
    if rng is None:
        rng = replication_rng(config.seed, 0)
    n, T, L = config.n, config.horizon_T, config.L
    N = _epochs(n, T)
    cands = adversary.candidates(config)
    mmax = max(len(c) for c in cands)

    fixed = np.zeros((N, L), np.int64)
    if isinstance(adversary, IIDRandom):
        for l in range(L):
            w = np.asarray(adversary.weights[l], dtype=float)
            fixed[:, l] = rng.choice(len(cands[l]), size=N, p=w / w.sum())

    sizes = np.zeros((N, L, mmax))
    for l, (cls, pts) in enumerate(zip(config.classes, cands)):
        for m, p in enumerate(pts):
            sizes[:, l, m] = cls.member(p, n).sample(rng, N)

    if isinstance(adversary, Feedback):
        table = np.stack([np.asarray(p, np.int64) for p in adversary.hjb.policy_index])
        step, feedback = adversary.hjb.step, True
    else:
        table, step, feedback = np.zeros((L, 1), np.int64), 1.0, False

    h = np.asarray(config.h, dtype=float)
    W, Qh, R, Wm, jobs, choices, cost, clamps = _simulate_kernel(
        n, float(T), h, sizes, fixed, feedback, table, step, scheduler == "cmu")
    if clamps and warn:
        log.warning("feedback workload beyond x_max at %d epochs (clamped)", clamps)
    return PathStats(n, config.mu, np.arange(N + 1) / n, W, Qh, R, Wm, jobs, choices,
                     cands, float(cost), int(clamps))


class ReplicationSummary(NamedTuple):
    cost: float
    rsp_gap: np.ndarray
    high_priority_sup: float
    clamp_count: int


def _summarize(config, adversary, scheduler, rep):
    stats = simulate(config, adversary, scheduler, replication_rng(config.seed, rep), warn=False)
    return ReplicationSummary(stats.discounted_cost, rsp_gap(stats),
                              high_priority_workload(stats), stats.clamp_count)


def run_replications(config, adversary, scheduler="cmu", replications=100, jobs=1):
    """Independent replications ``0..replications-1``; each uses its own
    stream derived from ``(config.seed, index)`` so results do not depend
    on execution order or on ``jobs``."""
    if jobs == 1:
        runs = [_summarize(config, adversary, scheduler, r) for r in range(replications)]
    else:
        from joblib import Parallel, delayed
        runs = Parallel(n_jobs=jobs)(
            delayed(_summarize)(config, adversary, scheduler, r) for r in range(replications))
    clamps = sum(r.clamp_count for r in runs)
    if clamps:
        log.warning("n=%d: feedback workload beyond x_max at %d epochs over %d replications "
                    "(clamped)", config.n, clamps, replications)
    return runs


class Estimate(NamedTuple):
    mean: float
    ci95: float


def mean_ci(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two replications")
    return Estimate(float(x.mean()), float(1.959963984540054 * x.std(ddof=1) / math.sqrt(x.size)))


def estimate_cost(config, adversary, scheduler="cmu", replications=100, jobs=1) -> Estimate:
    """Monte Carlo mean and normal 95% half-width of the discounted cost."""
    if replications < 2:
        raise ValueError("need at least two replications")
    runs = run_replications(config, adversary, scheduler, replications, jobs)
    return mean_ci([r.cost for r in runs])
