import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from robustqueue.uncertainty import (DriftVarPoint, GammaLaw, TwoPointLaw, UncertaintyClass,
                                     class_from_config, convex_hull, decision_regions,
                                     dominating_set, dominating_set_bruteforce,
                                     extreme_dominating, finite_class, gamma_limit_class,
                                     hamiltonian, hausdorff_distance, make_gamma,
                                     make_two_point, prelimit_coeffs, sample)

TH = finite_class(1.0, [(1, 0.25), (0, 0.5)])

coord = st.floats(-3, 3, allow_nan=False).map(lambda x: round(x, 3))
qcoord = st.floats(0.01, 3, allow_nan=False).map(lambda x: round(x, 3))
clouds = st.lists(st.tuples(coord, qcoord), min_size=1, max_size=12)


# --- laws and prelimit coefficients -----------------------------------------

def test_gamma_coefficients():
    b, q = prelimit_coeffs(GammaLaw(2, 2), 1.0, 100)
    assert b == 0.0 and q == 0.25


@pytest.mark.parametrize("n", [1, 7, 100, 10_000])
def test_centered_law_has_zero_drift(n):
    assert prelimit_coeffs(TwoPointLaw(0.5, 1.0), 2.0, n).b == 0.0


def test_two_point_matched_law():
    pi = make_two_point(0.5, 0.5, 1.0, 100)
    assert pi.xi == pytest.approx(1.05) and pi.v == 1.0
    assert pi.atom == pytest.approx(2.002381, abs=1e-6)
    assert pi.prob == pytest.approx(0.524376, abs=1e-6)
    b, q = prelimit_coeffs(pi, 1.0, 100)
    assert b == pytest.approx(0.5, abs=1e-12) and q == 0.5


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 3), st.sampled_from([1.0, 2.0, 4.0]),
       st.sampled_from([16, 100, 1600]))
def test_two_point_round_trip(b, q, mu, n):
    assume(1 / mu + b / math.sqrt(n) > 1e-3)
    pi = make_two_point(b, q, mu, n)
    bb, qq = prelimit_coeffs(pi, mu, n)
    assert abs(bb - b) <= 1e-12 * max(1.0, math.sqrt(n))
    assert abs(qq - q) <= 1e-15 * max(1.0, q)
    assert pi.atom > 0 and 0 < pi.prob <= 1


def test_zero_drift_mean_is_one_over_mu():
    for n in (1, 50, 5000):
        assert make_two_point(0.0, 0.3, 4.0, n).xi == 0.25


@pytest.mark.parametrize("factory", [make_two_point, make_gamma])
def test_infeasible_drift_rejected(factory):
    with pytest.raises(ValueError):
        factory(-10, 0.5, 1, 4)


def test_gamma_factory_moments():
    pi = make_gamma(0.3, 0.4, 2.0, 100)
    assert pi.mean == pytest.approx(0.53)
    assert pi.variance == pytest.approx(0.8)


def test_fourth_moments_finite():
    assert math.isfinite(TwoPointLaw(1.05, 1.0).fourth_moment())
    assert GammaLaw(2, 2).fourth_moment() == pytest.approx(2 * 3 * 4 * 5 / 16)


def test_degenerate_two_point_sample():
    x = sample(TwoPointLaw(1.0, 0.0), np.random.default_rng(0), 1000)
    np.testing.assert_array_equal(x, 1.0)


@pytest.mark.parametrize("pi", [TwoPointLaw(1.05, 1.0), GammaLaw(2, 2)], ids=["two_point", "gamma"])
def test_sample_moments(pi):
    N = 10**6
    x = sample(pi, np.random.default_rng(12345), N)
    assert np.all(x >= 0)
    assert abs(x.mean() - pi.mean) <= 4 * math.sqrt(pi.variance / N)
    d2 = (x - x.mean()) ** 2
    assert abs(d2.mean() - pi.variance) <= 4 * d2.std() / math.sqrt(N)


# --- geometry ----------------------------------------------------------------

def test_hull_examples():
    assert convex_hull([(0, 1)]) == [(0, 1)]
    assert convex_hull([(0, 0.1), (1, 0.1), (0, 1), (0.25, 0.25)]) == [(0, 0.1), (1, 0.1), (0, 1)]
    assert convex_hull([(0, 1), (1, 2), (2, 3)]) == [(0, 1), (2, 3)]


def test_dominating_examples():
    assert dominating_set([(1, 1)]) == [(1, 1)]
    assert dominating_set([(0, 1), (1, 0), (1, 1)]) == [(1, 1)]
    assert set(dominating_set([(0, 1), (1, 0), (0.4, 0.4)])) == {(0, 1), (1, 0), (0.4, 0.4)}


def test_extreme_dominating_examples():
    assert extreme_dominating([(1, 1)]) == [(1, 1)]
    assert extreme_dominating([(0, 1), (1, 0), (1, 1)]) == [(1, 1)]


def test_extreme_dominating_eight_points():
    pts = [(-1.0, 2.1), (-0.3, 1.9), (0.2, 1.6), (0.5, 0.7), (0.9, 1.0),
           (1.4, 0.55), (1.2, 0.2), (0.1, 0.9)]
    # oracle: every point that is the unique maximizer for some direction
    # strictly inside the nonnegative quadrant
    th = np.linspace(0, np.pi / 2, 20001)[1:-1]
    arr = np.array(pts)
    vals = np.outer(np.cos(th), arr[:, 0]) + np.outer(np.sin(th), arr[:, 1])
    srt = np.sort(vals, axis=1)
    unique = srt[:, -1] - srt[:, -2] > 1e-9
    oracle = {pts[i] for i in np.argmax(vals, axis=1)[unique]}
    assert set(extreme_dominating(pts)) == oracle
    assert 2 <= len(oracle) < len(pts)


@settings(max_examples=300, deadline=None)
@given(clouds)
def test_dominating_matches_bruteforce(pts):
    dom = dominating_set(pts)
    assert dom == dominating_set_bruteforce(pts)
    # coverage and minimality
    for p in pts:
        assert any(d[0] >= p[0] and d[1] >= p[1] for d in dom)
    for d in dom:
        rest = [e for e in dom if e != d]
        assert not any(e[0] >= d[0] and e[1] >= d[1] for e in rest)


@settings(max_examples=300, deadline=None)
@given(clouds, st.floats(-3, 3), st.floats(-3, 3))
def test_hull_argmax_equals_set_argmax(pts, v1, v2):
    cls = finite_class(1.0, pts)
    full, _ = hamiltonian(v1, v2, cls)
    assert hamiltonian(v1, v2, cls, reduced=True)[0] == pytest.approx(full, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(clouds, st.floats(0, 3), st.floats(0, 3))
def test_reduction_sound_on_quadrant(pts, v1, v2):
    cls = finite_class(1.0, pts)
    assert set(cls.extreme_dominating) <= set(cls.hull_vertices) <= set(cls.points)
    assert hamiltonian(v1, v2, cls, reduced=True)[0] == hamiltonian(v1, v2, cls)[0]


def test_hamiltonian_examples():
    assert hamiltonian(0.3, 2.0, finite_class(1, [(0.5, 0.7)])) == (0.5 * 0.3 + 0.7 * 2.0, (0.5, 0.7))
    val, arg = hamiltonian(1, 1, TH)
    assert val == 1.25 and arg == (1, 0.25)
    val, arg = hamiltonian(0.2, 1, TH)
    assert val == 0.5 and arg == (0, 0.5)


def test_hamiltonian_tie_break_lexicographic():
    # (1,0.25) and (0,0.5) tie on the ray v1 = 0.25 v2
    assert hamiltonian(0.25, 1.0, TH)[1] == (0, 0.5)


def test_decision_regions_tortoise_hare():
    ed = TH.extreme_dominating
    lab = decision_regions(TH, [(1, 1), (0.2, 1)])
    assert ed[lab[0]] == (1, 0.25) and ed[lab[1]] == (0, 0.5)
    # the boundary is the ray v1 = 0.25 v2
    s = np.linspace(0.1, 5, 50)
    above = decision_regions(TH, np.column_stack([0.26 * s, s]))
    below = decision_regions(TH, np.column_stack([0.24 * s, s]))
    assert {ed[i] for i in above} == {(1, 0.25)}
    assert {ed[i] for i in below} == {(0, 0.5)}


def test_decision_regions_are_cones():
    cls = finite_class(1.0, [(1, 0.2), (0.6, 0.6), (0, 1), (0.2, 0.3)])
    th = np.linspace(0.013, np.pi / 2 - 0.02, 37)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    base = decision_regions(cls, dirs)
    for scale in (0.01, 0.7, 30.0):
        np.testing.assert_array_equal(decision_regions(cls, scale * dirs), base)
    assert len(set(base.tolist())) <= len(cls.extreme_dominating)


def test_decision_regions_singleton_and_errors():
    cls = finite_class(1.0, [(0.3, 0.4)])
    v = np.random.default_rng(0).random((100, 2))
    assert set(decision_regions(cls, v).tolist()) == {0}
    with pytest.raises(ValueError):
        decision_regions(cls, [(-1, 0)])


# --- classes -----------------------------------------------------------------

def test_gamma_class_degenerate():
    cls = gamma_limit_class(1, 1, 1, 0, 0, 5)
    assert cls.points == (DriftVarPoint(0.0, 0.5),)
    assert cls.family == "gamma"


def test_gamma_class_ranges():
    cls = gamma_limit_class(1, 0.5, 1, 0, 1, 9)
    qs = sorted({p.q for p in cls.points})
    assert qs[0] == 0.5 and qs[-1] == 1.0
    bs = [p.b for p in cls.points if p.q == 0.5]
    assert min(bs) == 0.0 and max(bs) == 4.0
    for b, q in cls.points:
        assert -1e-12 <= b <= 2 / q + 1e-12


def test_gamma_class_derived_ranges():
    cls = gamma_limit_class(1, 0.5, 1, 1, 1, 5, b_range="derived")
    bs = [p.b for p in cls.points if p.q == 1.0]
    assert min(bs) == -2.0 and max(bs) == 2.0


@pytest.mark.parametrize("args", [(1, 2, 1, 0, 0, 4), (1, 1, 1, 0, 0, 1)])
def test_gamma_class_errors(args):
    with pytest.raises(ValueError):
        gamma_limit_class(*args)


def test_gamma_member_laws_match_points():
    cls = gamma_limit_class(1, 0.5, 1, 0.2, 0.2, 4)
    for p in cls.points:
        b, q = prelimit_coeffs(cls.member(p, 400), cls.mu, 400)
        assert b == pytest.approx(p.b, abs=1e-9) and q == pytest.approx(p.q)


def test_hausdorff_refinement_decreases():
    d = [hausdorff_distance(gamma_limit_class(1, 0.5, 1, 0.3, 0.3, r).points,
                            gamma_limit_class(1, 0.5, 1, 0.3, 0.3, 2 * r).points)
         for r in (2, 4, 8, 16)]
    assert all(a > b for a, b in zip(d, d[1:]))
    assert hausdorff_distance([(0, 1)], [(0, 1)]) == 0.0


def test_class_validation():
    with pytest.raises(ValueError):
        finite_class(1.0, [(0, 0.0)])
    with pytest.raises(ValueError):
        finite_class(0.0, [(0, 1)])
    with pytest.raises(ValueError):
        finite_class(1.0, [])
    cls = finite_class(2.0, [(0, 1), (0, 1), (1, 0.5)])
    assert len(cls) == 2 and (1, 0.5) in cls and (1, 0.6) not in cls


def test_class_from_config():
    c = class_from_config({"mu": 2, "points": [[1, 0.25], [0, 0.5]]})
    assert isinstance(c, UncertaintyClass) and c.mu == 2 and len(c) == 2
    g = class_from_config({"mu": 1, "gamma": {"beta1": 0.5, "beta2": 1, "alpha1": 0,
                                              "alpha2": 1, "resolution": 3}})
    assert g.family == "gamma" and len(g) == 9
    with pytest.raises(KeyError):
        class_from_config({"points": [[0, 1]]})
    with pytest.raises(KeyError):
        class_from_config({"mu": 1})
