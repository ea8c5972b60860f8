"""Job-size laws, uncertainty classes and their drift/variance geometry.

A job-size law ``pi`` at scaling level ``n`` for a type with service rate
``mu`` is summarized by its prelimit drift ``b = sqrt(n) (mean - 1/mu)``
and half-variance ``q = var / 2``.  Uncertainty classes are kept as finite
point clouds in the ``(b, q)`` plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist


class DriftVarPoint(NamedTuple):
    b: float
    q: float


def _point(p) -> DriftVarPoint:
    b, q = float(p[0]), float(p[1])
    if not (math.isfinite(b) and math.isfinite(q)):
        raise ValueError(f"non-finite point ({b}, {q})")
    if q <= 0:
        raise ValueError(f"half-variance must be positive, got q={q}")
    return DriftVarPoint(b, q)


# ---------------------------------------------------------------------------
# Job-size laws
# ---------------------------------------------------------------------------

class JobDistribution:
    """Nonnegative job-size law with exact first two moments."""

    mean: float
    variance: float

    @property
    def half_variance(self) -> float:
        return 0.5 * self.variance

    def fourth_moment(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError


@dataclass(frozen=True)
class GammaLaw(JobDistribution):
    """Gamma law with shape ``alpha`` and rate ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Gamma parameters must be positive")

    @property
    def mean(self):
        return self.alpha / self.beta

    @property
    def variance(self):
        return self.alpha / self.beta**2

    def fourth_moment(self):
        a = self.alpha
        return a * (a + 1) * (a + 2) * (a + 3) / self.beta**4

    def sample(self, rng, size=None):
        return rng.gamma(self.alpha, 1.0 / self.beta, size)


@dataclass(frozen=True)
class TwoPointLaw(JobDistribution):
    """Law putting mass ``xi / a`` at ``a = (v + xi^2) / xi`` and the rest at 0.

    Its mean is ``xi`` and its variance is ``v``.
    """

    xi: float
    v: float

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"two-point mean must be positive, got {self.xi}")
        if self.v < 0:
            raise ValueError(f"variance must be nonnegative, got {self.v}")

    @property
    def atom(self) -> float:
        return (self.v + self.xi**2) / self.xi

    @property
    def prob(self) -> float:
        return self.xi / self.atom

    @property
    def mean(self):
        return self.xi

    @property
    def variance(self):
        return self.v

    def fourth_moment(self):
        return self.prob * self.atom**4

    def sample(self, rng, size=None):
        u = rng.random(size)
        return np.where(u < self.prob, self.atom, 0.0) if size is not None else (
            self.atom if u < self.prob else 0.0)


def prelimit_coeffs(pi: JobDistribution, mu: float, n: int) -> DriftVarPoint:
    if n < 1:
        raise ValueError("n must be a positive integer")
    return DriftVarPoint(math.sqrt(n) * (pi.mean - 1.0 / mu), 0.5 * pi.variance)


def make_two_point(b: float, q: float, mu: float, n: int) -> TwoPointLaw:
    """Two-point law whose prelimit coefficients at level ``n`` are ``(b, q)``."""
    xi = 1.0 / mu + b / math.sqrt(n)
    if xi <= 0:
        raise ValueError(f"drift b={b} is infeasible at n={n}: mean would be {xi}")
    return TwoPointLaw(xi, 2.0 * q)


def make_gamma(b: float, q: float, mu: float, n: int) -> GammaLaw:
    """Gamma law with mean ``1/mu + b/sqrt(n)`` and variance ``2q``."""
    xi = 1.0 / mu + b / math.sqrt(n)
    if xi <= 0:
        raise ValueError(f"drift b={b} is infeasible at n={n}: mean would be {xi}")
    var = 2.0 * q
    return GammaLaw(xi * xi / var, xi / var)


def sample(pi: JobDistribution, rng: np.random.Generator, size=None):
    return pi.sample(rng, size)


# ---------------------------------------------------------------------------
# Planar geometry on finite point sets
# ---------------------------------------------------------------------------

def _as_array(points) -> np.ndarray:
    arr = np.asarray([tuple(p) for p in points], dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("point set must be nonempty")
    return arr


def _unique_sorted(points) -> list[DriftVarPoint]:
    return sorted({DriftVarPoint(float(b), float(q)) for b, q in points})


def convex_hull(points) -> list[DriftVarPoint]:
    """Counterclockwise hull vertices (monotone chain), starting from the
    lexicographically smallest point.  Collinear points are dropped."""
    pts = _unique_sorted(points)
    if not pts:
        raise ValueError("point set must be nonempty")
    if len(pts) <= 2:
        return pts

    def cross(o, a, c):
        return (a[0] - o[0]) * (c[1] - o[1]) - (a[1] - o[1]) * (c[0] - o[0])

    lower: list[DriftVarPoint] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[DriftVarPoint] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        return hull[:1]
    return hull


def dominating_set(points) -> list[DriftVarPoint]:
    """Pareto-maximal points w.r.t. the componentwise order, sorted by b.

    One sweep after sorting by ``b`` (then ``q``) descending: a point
    survives iff its ``q`` beats every ``q`` already seen.
    """
    pts = sorted(_unique_sorted(points), key=lambda p: (-p.b, -p.q))
    out = []
    best_q = -math.inf
    for p in pts:
        if p.q > best_q:
            out.append(p)
            best_q = p.q
    return sorted(out)


def dominating_set_bruteforce(points) -> list[DriftVarPoint]:
    pts = _unique_sorted(points)
    return [p for p in pts
            if not any(o != p and o.b >= p.b and o.q >= p.q for o in pts)]


def extreme_dominating(points) -> list[DriftVarPoint]:
    dom = set(dominating_set(points))
    return sorted(p for p in convex_hull(points) if p in dom)


def hausdorff_distance(a, b) -> float:
    d = cdist(_as_array(a), _as_array(b))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------------------------------------------------------
# Uncertainty classes
# ---------------------------------------------------------------------------

_FACTORIES = {"two_point": make_two_point, "gamma": make_gamma}


@dataclass(frozen=True)
class UncertaintyClass:
    """Finite ``(b, q)`` image of a type's admissible job-size laws.

    ``family`` selects how a point is realized as a concrete law at level n
    (``"two_point"`` or ``"gamma"``).
    """

    mu: float
    points: tuple[DriftVarPoint, ...]
    family: str = "two_point"
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"service rate mu must be positive, got {self.mu}")
        pts = tuple(_unique_sorted(_point(p) for p in self.points))
        if not pts:
            raise ValueError("uncertainty class must contain at least one point")
        if self.family not in _FACTORIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "points", pts)

    @cached_property
    def hull_vertices(self) -> tuple[DriftVarPoint, ...]:
        return tuple(convex_hull(self.points))

    @cached_property
    def dominating(self) -> tuple[DriftVarPoint, ...]:
        return tuple(dominating_set(self.points))

    @cached_property
    def extreme_dominating(self) -> tuple[DriftVarPoint, ...]:
        dom = set(self.dominating)
        return tuple(sorted(p for p in self.hull_vertices if p in dom))

    def member(self, point, n: int) -> JobDistribution:
        """A law of this class's family realizing ``point`` at level ``n``."""
        point = DriftVarPoint(*point)
        return _FACTORIES[self.family](point.b, point.q, self.mu, n)

    def __contains__(self, point) -> bool:
        return DriftVarPoint(*map(float, point)) in set(self.points)

    def __len__(self):
        return len(self.points)


def finite_class(mu: float, points: Sequence, family: str = "two_point") -> UncertaintyClass:
    return UncertaintyClass(float(mu), tuple(_point(p) for p in points), family)


def gamma_limit_class(mu, beta1, beta2, alpha1, alpha2, resolution, b_range="printed"):
    """Grid discretization of the Hausdorff limit of a Gamma uncertainty class.

    ``mu`` is the service rate, so the limiting job mean is ``1/mu`` and the
    half-variance ranges over ``[1/(2 mu beta2), 1/(2 mu beta1)]``.  For
    each ``q`` the drift ranges over ``[-2 alpha1 / q, 2 alpha2 / q]``
    (``b_range="printed"``) or, with ``b_range="derived"``, over
    ``[-2 q mu alpha1, 2 q mu alpha2]`` which is what the limit of the
    prelimit drift interval gives when ``1/beta`` is rewritten via ``q``.
    """
    if not (0 < beta1 <= beta2):
        raise ValueError(f"need 0 < beta1 <= beta2, got {beta1}, {beta2}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if b_range not in ("printed", "derived"):
        raise ValueError(f"unknown b_range {b_range!r}")
    mean = 1.0 / mu
    qs = np.linspace(mean / (2 * beta2), mean / (2 * beta1), resolution)
    pts = []
    for q in qs:
        if b_range == "printed":
            lo, hi = -2 * alpha1 / q, 2 * alpha2 / q
        else:
            lo, hi = -2 * q * alpha1 / mean, 2 * q * alpha2 / mean
        if lo > hi:
            raise ValueError(f"empty drift interval [{lo}, {hi}] at q={q}")
        pts.extend(DriftVarPoint(float(b), float(q)) for b in np.linspace(lo, hi, resolution))
    meta = dict(beta1=beta1, beta2=beta2, alpha1=alpha1, alpha2=alpha2,
                resolution=resolution, b_range=b_range)
    return UncertaintyClass(float(mu), tuple(pts), "gamma", meta)


def class_from_config(cfg: dict) -> UncertaintyClass:
    """Build a class from ``{mu, points: [[b, q], ...]}`` or
    ``{mu, gamma: {beta1, beta2, alpha1, alpha2, resolution}}``."""
    if "mu" not in cfg:
        raise KeyError("mu")
    if "points" in cfg:
        return finite_class(cfg["mu"], cfg["points"], cfg.get("family", "two_point"))
    if "gamma" in cfg:
        g = dict(cfg["gamma"])
        return gamma_limit_class(
            cfg["mu"], g["beta1"], g["beta2"], g.get("alpha1", 0.0),
            g.get("alpha2", 0.0), g.get("resolution", 8), g.get("b_range", "printed"))
    raise KeyError("points|gamma")


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

def _candidates(cls, v1, v2, reduced):
    if reduced and v1 >= 0 and v2 >= 0:
        return cls.extreme_dominating
    return cls.points if not reduced else cls.hull_vertices


def hamiltonian(v1: float, v2: float, cls, reduced: bool = False):
    """``max b*v1 + q*v2`` over the class, with the maximizer.

    Ties go to the lexicographically smallest ``(b, q)``.  With
    ``reduced=True`` and ``v`` in the nonnegative quadrant only extreme
    dominating points are scanned; elsewhere the hull vertices are.
    """
    if not isinstance(cls, UncertaintyClass):
        cls = finite_class(1.0, cls)
    cands = _candidates(cls, v1, v2, reduced)
    arr = np.asarray(cands)
    vals = arr[:, 0] * v1 + arr[:, 1] * v2
    i = int(np.argmax(vals))
    return float(vals[i]), cands[i]


def argmax_indices(cands: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Vectorized argmax over rows of ``cands`` (lexicographically sorted)
    for each pair ``(v1[i], v2[i])``; first maximizer wins."""
    vals = np.outer(v1, cands[:, 0]) + np.outer(v2, cands[:, 1])
    return np.argmax(vals, axis=1)


def decision_regions(cls: UncertaintyClass, v_samples) -> np.ndarray:
    """Label each sample ``v`` in the nonnegative quadrant by the index (into
    ``cls.extreme_dominating``) of the point maximizing ``(b, q) . v``."""
    v = np.asarray(v_samples, dtype=float).reshape(-1, 2)
    if np.any(v < 0):
        raise ValueError("decision regions are defined on the nonnegative quadrant")
    cands = np.asarray(cls.extreme_dominating)
    return argmax_indices(cands, v[:, 0], v[:, 1])
