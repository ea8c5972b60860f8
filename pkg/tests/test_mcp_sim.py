import math

import numpy as np
import pytest

from robustqueue.hjb import analytic_singleton, solve_hjb
from robustqueue.mcp_sim import (DiffusionSpec, discounted_integrals, estimate_mcp_value,
                                 euler_reflected)
from robustqueue.queue_sim import mean_ci
from robustqueue.uncertainty import finite_class

TH = finite_class(1.0, [(1, 0.25), (0, 0.5)])
SINGLE = finite_class(1.0, [(0, 0.5)])


def test_deterministic_drain():
    spec = DiffusionSpec.constant(-1.0, 0.0, w0=1.0, h=1e-3, T=2.0)
    path, _ = euler_reflected(spec, np.random.default_rng(0))
    t = np.arange(path.size) * spec.h
    np.testing.assert_allclose(path, np.maximum(1 - t, 0), atol=1e-9)


def test_constant_path_integral():
    spec = DiffusionSpec.constant(0.0, 0.0, w0=2.0, h=1e-3, T=25.0)
    path, integ = euler_reflected(spec)
    assert np.all(path == 2.0)
    # trapezoid error is O(h^2)
    assert integ == pytest.approx(2 * (1 - math.exp(-25)), abs=1e-6)


def test_reflected_brownian_mean():
    spec = DiffusionSpec.constant(0.0, 1.0, h=1e-4, T=1.0)
    rng = np.random.default_rng(2024)
    ends = np.array([euler_reflected(spec, rng)[0][-1] for _ in range(10_000)])
    se = ends.std(ddof=1) / math.sqrt(ends.size)
    assert abs(ends.mean() - math.sqrt(2 / math.pi)) <= 3 * se


def test_paths_nonnegative():
    spec = DiffusionSpec.constant(-2.0, 1.5, h=1e-2, T=5.0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert np.all(euler_reflected(spec, rng)[0] >= 0)


def test_discontinuous_coefficient_lookup():
    sol = solve_hjb([TH])
    spec = DiffusionSpec.from_hjb(sol)
    b, s = spec.coefficients([0.0, 0.1, 5.0, 100.0])
    np.testing.assert_allclose(b, [0, 0, 1, 1])
    np.testing.assert_allclose(s, [1, 1, math.sqrt(0.5), math.sqrt(0.5)])


def test_integrals_reproducible():
    spec = DiffusionSpec.constant(0.2, 1.0, h=1e-2, T=5.0)
    a = discounted_integrals(spec, 300, seed=9, chunk=64)
    b = discounted_integrals(spec, 300, seed=9, chunk=1000)
    np.testing.assert_array_equal(a, b)


@pytest.fixture(scope="module")
def single_sol():
    return solve_hjb([SINGLE])


def test_singleton_value(single_sol):
    est = estimate_mcp_value(single_sol, [SINGLE], replications=3000, seed=1, h=1e-3, T=15)
    u0 = analytic_singleton(0, 0.5)(0.0)
    assert abs(est.mean - u0) <= est.ci95 + 0.03 * u0


def test_step_halving(single_sol):
    a = estimate_mcp_value(single_sol, replications=2000, seed=3, h=4e-3, T=12)
    b = estimate_mcp_value(single_sol, replications=2000, seed=4, h=2e-3, T=12)
    assert abs(a.mean - b.mean) <= a.ci95 + b.ci95


def test_monotone_convex_in_start(single_sol):
    w0s = [0.0, 1.0, 2.0, 3.0]
    est = [estimate_mcp_value(single_sol, w0=w, replications=1000, seed=8, h=2e-3, T=12)
           for w in w0s]
    m = np.array([e.mean for e in est])
    slack = max(e.ci95 for e in est)
    assert np.all(np.diff(m) >= -slack)
    assert np.all(np.diff(m, 2) >= -2 * slack)


def test_far_field_asymptote():
    sol = solve_hjb([TH])
    est = estimate_mcp_value(sol, w0=10.0, replications=500, seed=2, h=2e-3, T=15)
    assert est.mean == pytest.approx(10.0 + 1.0, rel=0.05)


def test_diffusion_spec_validation(single_sol):
    with pytest.raises(ValueError):
        DiffusionSpec([0.0, 1.0], [1.0], 1.0)
    with pytest.raises(ValueError):
        DiffusionSpec.constant(0.0, -1.0)
    with pytest.raises(ValueError):
        DiffusionSpec.constant(0.0, 1.0, w0=-1.0)
    with pytest.raises(ValueError):
        estimate_mcp_value(single_sol, [SINGLE, SINGLE], replications=2)
    assert mean_ci(discounted_integrals(DiffusionSpec.constant(0, 0, w0=1.0, T=1.0), 2)).ci95 == 0.0
