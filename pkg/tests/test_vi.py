import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gwfunctor.steps import Constant, Harmonic
from gwfunctor.vi import (CONVERGED, Box, CappedOrthant, DivergenceError, Simplex,
                          StepSchedule, StochasticVIProblem, VIProblem, certify_monotone,
                          distance_reduction_eta, gap_residual, project, projection_iterates,
                          solve_projection, solve_two_step_stochastic)

UNIT = Box([0.0], [2.0])


def affine(M, b):
    M, b = np.atleast_2d(np.asarray(M, float)), np.asarray(b, float)
    return lambda X: X @ M.T + b


def simplex_oracle(y, mass=1.0):
    # bisection on the KKT multiplier: x = max(y - t, 0), sum x = mass
    lo, hi = y.min() - mass, y.max()
    for _ in range(200):
        t = (lo + hi) / 2
        if np.maximum(y - t, 0).sum() > mass:
            lo = t
        else:
            hi = t
    return np.maximum(y - (lo + hi) / 2, 0)


def test_box_projection_examples():
    assert project(UNIT, [3.0]).tolist() == [2.0]
    assert project(UNIT, [1.0]).tolist() == [1.0]
    assert project(CappedOrthant(2, 5.0), [-1.0, 7.0]).tolist() == [0.0, 5.0]


def test_simplex_projection_example():
    assert np.allclose(project(Simplex(2), [0.8, 0.8]), [0.5, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(0.1, 5))
def test_simplex_matches_kkt_oracle(y, mass):
    y = np.array(y)
    p = Simplex(len(y), mass).project(y)
    assert np.allclose(p, simplex_oracle(y, mass), atol=1e-9)
    assert abs(p.sum() - mass) < 1e-9 and np.all(p >= 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_projections_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    for fac in (Box([-1.0, 0.0, 2.0], [1.0, 3.0, 2.5]), Simplex(3, 2.0)):
        x, y = rng.normal(scale=4, size=(2, 3))
        px, py = fac.project(x), fac.project(y)
        assert np.allclose(fac.project(px), px, atol=1e-12)
        # exact inequality for the clamp; the simplex carries rounding in its threshold
        slack = 0.0 if isinstance(fac, Box) else 1e-12
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + slack


def test_solve_projection_examples():
    r = solve_projection(VIProblem(affine(1, -1), [UNIT]), 0.5, tol=1e-12)
    assert r.status == CONVERGED and abs(r.x[0] - 1) < 1e-12
    vi = VIProblem(affine(1, 1), [UNIT])
    r = solve_projection(vi, 0.5, tol=1e-12)
    assert r.x[0] == 0.0
    Fx = vi.evaluate(r.x)
    assert all(Fx[0] * (y - r.x[0]) >= 0 for y in np.linspace(0, 2, 101))
    zero = VIProblem(lambda X: np.zeros_like(X), [Box([0, 0], [1, 1])])
    r = solve_projection(zero, 1.0, x0=[0.3, 0.7])
    assert r.x.tolist() == [0.3, 0.7] and r.iterations == 0


def test_solve_projection_errors():
    with pytest.raises(ValueError):
        solve_projection(VIProblem(affine(1, -1), [UNIT]), 0.0)
    # anti-monotone map drives the iterate out of an enormous box
    vi = VIProblem(affine(-2, 0), [Box([-1e20], [1e20])])
    with pytest.raises(DivergenceError):
        solve_projection(vi, 1.0, x0=[1.0], max_iter=1000)


def test_gap_residual_examples():
    vi = VIProblem(affine(1, -1), [UNIT])
    assert gap_residual(vi, [1.0]) == 0.0
    assert gap_residual(vi, [0.0]) == 1.0
    zero = VIProblem(lambda X: np.zeros_like(X), [UNIT])
    assert gap_residual(zero, [1.7]) == 0.0
    assert gap_residual(zero, [3.0]) == 1.0


def test_solution_certificate():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    M = A @ A.T / 4 + np.eye(4) + (A - A.T) / 3
    vi = VIProblem(affine(M, rng.normal(size=4) * 3), [Box(np.zeros(2), np.ones(2)), Simplex(2)])
    tol = 1e-9
    rep = certify_monotone(vi, 500)
    r = solve_projection(vi, rep.mu / rep.L ** 2, tol=tol, max_iter=200_000)
    assert r.gap <= tol
    Fx = vi.evaluate(r.x)
    Y = vi.sample(rng, 1000)
    assert np.all((Y - r.x) @ Fx >= -10 * tol)


def test_certify_monotone_examples():
    box = [Box(-np.ones(2), np.ones(2))]
    rep = certify_monotone(VIProblem(lambda X: 2 * X, box), 200)
    assert rep.monotone and abs(rep.mu - 2) < 1e-12 and abs(rep.L - 2) < 1e-12
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    rep = certify_monotone(VIProblem(affine(R, [0, 0]), box), 200)
    assert rep.monotone and abs(rep.mu) < 1e-12 and abs(rep.L - 1) < 1e-12
    rep = certify_monotone(VIProblem(lambda X: -X, box), 200)
    assert not rep.monotone and abs(rep.mu + 1) < 1e-12
    with pytest.raises(ValueError):
        certify_monotone(VIProblem(lambda X: X, box), 1)


def test_distance_reduction_on_boxes():
    vi = VIProblem(lambda X: X, [Box([0, 0], [1, 1]), CappedOrthant(3, 2.0)])
    assert abs(distance_reduction_eta(vi) - 1.0) < 1e-12


def test_step_schedule_assumptions():
    assert StepSchedule(Harmonic(1, 1), Constant(1.0)).satisfies_assumptions
    assert StepSchedule(Harmonic(), Constant(0.5)).gamma(3) == 0.75
    assert not StepSchedule(Constant(0.1), Constant(1.0)).satisfies_assumptions
    assert not StepSchedule(Harmonic(), Harmonic(1.0, 1.0)).satisfies_assumptions
    with pytest.raises(ValueError):
        StepSchedule(Harmonic(), Constant(2.0))


def test_noiseless_two_step_is_projection_method():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    vi = VIProblem(affine(M, rng.normal(size=3)), [Box(-np.ones(3), np.ones(3))])
    x0 = rng.uniform(-1, 1, 3)
    for steps in (1, 7, 50):
        res = solve_two_step_stochastic(StochasticVIProblem.noiseless(vi),
                                        StepSchedule(Constant(0.1), Constant(1.0)), steps, x0=x0)
        assert np.array_equal(res.x, projection_iterates(vi, 0.1, steps, x0)[-1])


def test_noisy_one_dimensional():
    svi = StochasticVIProblem.additive_uniform(VIProblem(affine(1, -1), [UNIT]), 0.5)
    res = solve_two_step_stochastic(svi, StepSchedule(Harmonic(1, 1), Constant(1.0)), 100_000,
                                    seed=list(range(20)))
    assert np.median(np.abs(res.x[:, 0] - 1)) <= 1e-2


def test_batch_is_deterministic_and_seeded():
    svi = StochasticVIProblem.additive_uniform(VIProblem(affine(1, -1), [UNIT]), 0.5)
    sched = StepSchedule()
    a = solve_two_step_stochastic(svi, sched, 5000, seed=[1, 2])
    b = solve_two_step_stochastic(svi, sched, 5000, seed=[1, 2])
    assert np.array_equal(a.x, b.x) and a.to_csv() == b.to_csv()
    one = solve_two_step_stochastic(svi, sched, 5000, seed=2)
    assert np.allclose(one.x, a.x[1], rtol=0, atol=1e-12)
    assert a.x[0, 0] != a.x[1, 0]


def test_trace_columns_and_leaving_k():
    # large early steps push raw iterates outside K on unprojected factors
    vi = VIProblem(affine(np.eye(2), [-3.0, 3.0]), [Box([0], [2]), Box([0], [2])])
    svi = StochasticVIProblem.additive_uniform(vi, 0.1)
    res = solve_two_step_stochastic(svi, StepSchedule(Harmonic(1, 1), Constant(0.5)), 2000,
                                    seed=4, record_every=1)
    rows = res.rows
    assert res.to_csv().splitlines()[0] == "k,alpha,beta,raw_gap,projected_gap"
    assert len(rows) == 2000 and rows[0][0] == 1 and rows[0][1] == 1.0 and rows[0][2] == 0.5
    assert any(r[3] > r[4] for r in rows)
    assert np.allclose(res.projected, [2.0, 0.0], atol=0.05)


def test_simplex_factor_stochastic():
    vi = VIProblem(affine(np.eye(3), [-0.5, 0.0, 0.2]), [Simplex(3)])
    det = solve_projection(vi, 0.5, tol=1e-12)
    svi = StochasticVIProblem.additive_uniform(vi, 0.2)
    res = solve_two_step_stochastic(svi, StepSchedule(Harmonic(2, 2), Constant(1.0)), 20_000, seed=0)
    assert np.allclose(res.projected, det.x, atol=2e-2)


def test_factor_probabilities_validated():
    vi = VIProblem(affine(1, -1), [UNIT])
    with pytest.raises(ValueError):
        StochasticVIProblem(vi, lambda X, V: vi.F(X), lambda r, n: np.zeros((n, 0)), [0.5])
    assert StochasticVIProblem.noiseless(vi).rho == 1.0
