"""Policy-iteration solver for the workload HJB equation.

    sum_l max_{(b,q) in K_l} (b u'(w) + q u''(w)) - u(w) + w = 0,   w >= 0,

with ``u'(0) = 0`` and linear growth.  The growth condition is imposed on
a truncated domain ``[0, x_max]`` as ``u'(x_max) = 1``: for large ``w``
the solution approaches ``w + sum_l max b`` so ``u'' -> 0`` and
``u' -> 1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .uncertainty import DriftVarPoint, UncertaintyClass, argmax_indices

log = logging.getLogger(__name__)


class HJBConvergenceError(RuntimeError):
    def __init__(self, msg, residual=math.nan, iterations=0):
        super().__init__(f"{msg} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class StructureError(RuntimeError):
    """The solved policy does not have the expected threshold structure."""


@dataclass(frozen=True)
class HJBSolution:
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    # policy_index[l][i] indexes classes[l].extreme_dominating at grid node i
    policy_index: tuple
    candidates: tuple
    residual: float
    iterations: int

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    @property
    def u0(self) -> float:
        return float(self.u[0])

    def policy(self, l: int) -> np.ndarray:
        """Per-node argmax points of class ``l`` as an ``(M+1, 2)`` array."""
        return self.candidates[l][self.policy_index[l]]

    def total_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Summed drift and half-variance of the argmax points per node."""
        b = sum(self.policy(l)[:, 0] for l in range(len(self.candidates)))
        q = sum(self.policy(l)[:, 1] for l in range(len(self.candidates)))
        return b, q

    def value(self, w):
        return np.interp(w, self.grid, self.u)

    def to_csv(self, path) -> None:
        cols = [self.grid, self.u, self.du, self.ddu]
        names = ["w", "u", "du", "ddu"]
        for l in range(len(self.candidates)):
            p = self.policy(l)
            cols += [p[:, 0], p[:, 1]]
            names += [f"argmax_b_{l + 1}", f"argmax_q_{l + 1}"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.17g",
                   header=",".join(names), comments="")


@dataclass(frozen=True)
class AnalyticSolution:
    """Sublinear solution of ``q u'' + b u' - u + w = 0``, ``u'(0) = 0``:
    ``u(w) = w + b - exp(lam w) / lam`` with ``lam`` the negative root of
    ``q lam^2 + b lam - 1``."""

    b: float
    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")

    @property
    def lam(self) -> float:
        return (-self.b - math.sqrt(self.b**2 + 4 * self.q)) / (2 * self.q)

    def u(self, w):
        lam = self.lam
        return np.asarray(w) + self.b - np.exp(lam * np.asarray(w)) / lam

    def du(self, w):
        return 1.0 - np.exp(self.lam * np.asarray(w))

    def ddu(self, w):
        lam = self.lam
        return -lam * np.exp(lam * np.asarray(w))

    __call__ = u


def analytic_singleton(b: float, q: float) -> AnalyticSolution:
    return AnalyticSolution(float(b), float(q))


def _derivatives(u, h):
    du = np.empty_like(u)
    ddu = np.empty_like(u)
    du[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    du[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    du[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    ddu[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    ddu[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h**2
    ddu[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h**2
    return du, ddu


def _solve_linear(w, B, Q, h):
    """Solve ``Q u'' + B u' - u + w = 0`` on the grid with u'(0)=0, u'(end)=1.

    Central differences in the interior, falling back to upwinding of the
    drift where central differencing would lose the M-matrix sign pattern.
    The second-order one-sided boundary rows are folded into the adjacent
    interior row so the system stays tridiagonal.
    """
    M = w.size - 1
    lo = np.zeros(M + 1)
    di = np.zeros(M + 1)
    up = np.zeros(M + 1)
    # interior rows are multiplied through by h^2 to keep entries O(1)
    rhs = -w * h**2
    Qi, Bi = Q[1:-1], B[1:-1]
    central = 2 * Qi >= np.abs(Bi) * h
    lo[1:-1] = np.where(central, Qi - Bi * h / 2, Qi + np.maximum(-Bi, 0) * h)
    up[1:-1] = np.where(central, Qi + Bi * h / 2, Qi + np.maximum(Bi, 0) * h)
    di[1:-1] = np.where(central, -2 * Qi, -2 * Qi - np.abs(Bi) * h) - h**2

    # row 0: -3u0 + 4u1 - u2 = 0, plus row 1 / up[1] to cancel u2
    c = 1.0 / up[1]
    di[0] = -3.0 + lo[1] * c
    up[0] = 4.0 + di[1] * c
    rhs[0] = rhs[1] * c
    # row M: u_{M-2} - 4u_{M-1} + 3u_M = 2h, minus row M-1 / lo[M-1]
    c = 1.0 / lo[M - 1]
    lo[M] = -4.0 - di[M - 1] * c
    di[M] = 3.0 - up[M - 1] * c
    rhs[M] = 2 * h - rhs[M - 1] * c

    ab = np.zeros((3, M + 1))
    ab[0, 1:] = up[:-1]
    ab[1] = di
    ab[2, :-1] = lo[1:]
    return solve_banded((1, 1), ab, rhs)


def _improve(cands, du, ddu, current):
    """Greedy policy update; keeps the current choice unless beaten by more
    than a rounding-level margin, so exact ties cannot make it cycle."""
    new = argmax_indices(cands, du, ddu)
    vals_new = cands[new, 0] * du + cands[new, 1] * ddu
    vals_cur = cands[current, 0] * du + cands[current, 1] * ddu
    margin = 1e-12 * (1.0 + np.abs(vals_new))
    return np.where(vals_new > vals_cur + margin, new, current)


def solve_hjb(classes, x_max: float = 20.0, step: float = 1e-3, tol: float = 1e-6,
              max_iter: int = 200) -> HJBSolution:
    """Howard policy iteration on a uniform grid over ``[0, x_max]``.

    Maximization per class runs over its extreme dominating points only.
    Raises :class:`HJBConvergenceError` if the policy does not settle
    within ``max_iter`` sweeps or the final residual exceeds ``tol``.
    """
    classes = list(classes)
    if not classes:
        raise ValueError("need at least one uncertainty class")
    if not all(isinstance(c, UncertaintyClass) for c in classes):
        raise TypeError("classes must be UncertaintyClass instances")
    if step > x_max / 100:
        raise ValueError(f"step {step} too coarse for x_max {x_max} (need <= x_max/100)")
    M = int(round(x_max / step))
    grid = np.linspace(0.0, x_max, M + 1)
    h = grid[1] - grid[0]
    cands = tuple(np.asarray(c.extreme_dominating, dtype=float) for c in classes)
    if any(np.any(c[:, 1] <= 0) for c in cands):
        raise ValueError("all half-variances must be positive")

    # start from the drift-maximizing policy (u' = 1, u'' = 0)
    ones, zeros = np.ones(M + 1), np.zeros(M + 1)
    policy = [argmax_indices(c, ones, zeros) for c in cands]

    for it in range(1, max_iter + 1):
        B = sum(c[p, 0] for c, p in zip(cands, policy))
        Q = sum(c[p, 1] for c, p in zip(cands, policy))
        u = _solve_linear(grid, B, Q, h)
        du, ddu = _derivatives(u, h)
        new_policy = [_improve(c, du, ddu, p) for c, p in zip(cands, policy)]
        stable = all(np.array_equal(a, b) for a, b in zip(new_policy, policy))
        policy = new_policy
        if stable:
            break
    else:
        raise HJBConvergenceError("policy iteration did not settle",
                                  _residual(grid, u, du, ddu, cands), max_iter)

    res = _residual(grid, u, du, ddu, cands)
    log.debug("HJB solved in %d iterations, residual %.3e", it, res)
    if not res <= tol:
        raise HJBConvergenceError("residual above tolerance", res, it)
    return HJBSolution(grid, u, du, ddu, tuple(policy), cands, res, it)


def _residual(grid, u, du, ddu, cands):
    H = sum(np.max(np.outer(du, c[:, 0]) + np.outer(ddu, c[:, 1]), axis=1) for c in cands)
    r = H - u + grid
    return float(np.max(np.abs(r[1:-1])))


def hjb_residual(sol: HJBSolution, frozen: bool = False) -> np.ndarray:
    """Interior residual of the equation, either with a fresh argmax or with
    the solution's stored policy."""
    if frozen:
        B, Q = sol.total_coefficients()
        r = B * sol.du + Q * sol.ddu - sol.u + sol.grid
    else:
        H = sum(np.max(np.outer(sol.du, c[:, 0]) + np.outer(sol.ddu, c[:, 1]), axis=1)
                for c in sol.candidates)
        r = H - sol.u + sol.grid
    return r[1:-1]


class FeedbackPolicy:
    """Workload-to-point map read off a solved HJB (nearest grid node)."""

    def __init__(self, sol: HJBSolution, classes):
        self.sol = sol
        self.classes = list(classes)
        if len(self.classes) != len(sol.candidates):
            raise ValueError("solution and classes disagree on the number of types")
        self.clamped = 0

    def node(self, w: float) -> int:
        if w < 0:
            raise ValueError(f"workload must be nonnegative, got {w}")
        if w > self.sol.x_max:
            self.clamped += 1
            log.warning("workload %.4g beyond x_max=%.4g; clamping", w, self.sol.x_max)
            w = self.sol.x_max
        return int(round(w / self.sol.step))

    def points(self, w: float) -> list[DriftVarPoint]:
        i = self.node(w)
        return [DriftVarPoint(*map(float, self.sol.candidates[l][self.sol.policy_index[l][i]]))
                for l in range(len(self.classes))]

    def distributions(self, w: float, n: int):
        return [c.member(p, n) for c, p in zip(self.classes, self.points(w))]

    __call__ = points


def extract_policy(sol: HJBSolution, classes) -> FeedbackPolicy:
    return FeedbackPolicy(sol, classes)


def two_mode_threshold(sol: HJBSolution, cls: UncertaintyClass, l: int = 0):
    """Switch point of a two-point class's solved policy.

    Returns the first grid node using the high-drift mode, or ``None`` when
    that mode is used everywhere on ``w > 0``.  Raises
    :class:`StructureError` if the policy switches more than once.
    """
    if len(cls.points) != 2:
        raise ValueError("threshold structure needs exactly two modes")
    (b2, q2), (b1, q1) = sorted(cls.points)
    if b1 == b2:
        raise ValueError("the two modes must differ in drift")
    high = np.asarray(sol.policy(l)[:, 0] == b1)
    if high[1:].all():
        return None
    if not (q1 < q2):
        raise StructureError("dominant high-drift mode was not selected everywhere")
    flips = np.flatnonzero(high[1:] != high[:-1])
    if flips.size != 1 or high[0]:
        raise StructureError(f"expected one switch from low to high drift, found {flips.size}")
    return float(sol.grid[flips[0] + 1])
