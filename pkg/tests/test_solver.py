import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chebdp.basis import MomentIndexSet
from chebdp.grid import Grid
from chebdp.mechanism import MomentVector, empirical_moments, grid_moments
from chebdp.solver import (
    DesignOperator,
    GridDistribution,
    SolverOptions,
    kkt_gap,
    objective,
    project_simplex,
    solve,
)

from . import oracles


def _grid_moment_vector(q, grid, I):
    return grid_moments(np.asarray(q).reshape(grid.shape), grid.axis_points(), I)


def test_project_simplex_fixed_point():
    v = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)


def test_project_simplex_two_coordinates():
    np.testing.assert_allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])


@given(arrays(float, st.integers(1, 6), elements=st.floats(-5, 5)))
def test_project_simplex_matches_active_set_oracle(v):
    p = project_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, oracles.project_simplex(v), atol=1e-9)


@given(st.integers(1, 2), st.integers(2, 5), st.integers(1, 4), st.integers(1, 2), st.data())
def test_adjoint_identity(d, r, m, k, data):
    g = Grid(d, r)
    op = DesignOperator(g, MomentIndexSet(d, m), k)
    z = data.draw(arrays(float, g.size, elements=st.floats(-1, 1)))
    y = data.draw(arrays(float, len(op.index_set), elements=st.floats(-1, 1)))
    assert op.apply(z) @ y == pytest.approx(z @ op.adjoint(y), abs=1e-10)
    dense = op.columns(np.arange(g.size))
    np.testing.assert_allclose(dense @ z, op.apply(z), atol=1e-12)


def test_objective_single_index():
    g = Grid(1, 4)
    I = MomentIndexSet(1, 1)
    q = np.array([0.1, 0.2, 0.3, 0.4])
    mhat = MomentVector(I, [0.37])
    direct = (0.37 - sum(qj * oracles.cheb(1, x) for qj, x in zip(q, g.axis_points()))) ** 2
    assert objective(q, mhat, DesignOperator(g, I, 1)) == pytest.approx(direct, abs=1e-15)


def test_objective_zero_when_reproduced(rng):
    g = Grid(2, 3)
    I = MomentIndexSet(2, 3)
    q = rng.dirichlet(np.ones(9))
    mhat = _grid_moment_vector(q, g, I)
    assert objective(q, mhat, DesignOperator(g, I, 2)) == pytest.approx(0.0, abs=1e-28)


@given(st.integers(1, 2), st.integers(1, 2), st.data())
def test_objective_matches_double_loop(d, k, data):
    g = Grid(d, 3)
    I = MomentIndexSet(d, 2)
    q = data.draw(arrays(float, g.size, elements=st.floats(0, 1)))
    mh = data.draw(arrays(float, len(I), elements=st.floats(-1.5, 1.5)))
    pts = g.points()
    direct = 0.0
    for K, target in zip(oracles.index_list(d, 2), mh):
        val = sum(qj * oracles.cheb_point(K, x) for qj, x in zip(q, pts))
        direct += (target - val) ** 2 / np.sqrt(sum(t * t for t in K)) ** (2 * k)
    got = objective(q, MomentVector(I, mh), DesignOperator(g, I, k))
    assert got == pytest.approx(direct, rel=1e-10, abs=1e-14)


def test_grid_distribution_normalizes():
    g = Grid(1, 3)
    q = GridDistribution(g, [1.0, 1.0, 2.0])
    np.testing.assert_allclose(q.q, [0.25, 0.25, 0.5])
    with pytest.raises(ValueError):
        GridDistribution(g, [1.0, -0.5, 0.0])
    with pytest.raises(ValueError):
        GridDistribution(g, [0.0, 0.0, 0.0])


def test_point_mass_recovered():
    g = Grid(2, 4)
    I = MomentIndexSet(2, 4)
    e = np.zeros(16)
    e[6] = 1.0
    res = solve(_grid_moment_vector(e, g, I), g, 1)
    assert res.converged
    np.testing.assert_allclose(res.distribution.q.ravel(), e, atol=1e-8)
    assert res.objective < 1e-16


@pytest.mark.parametrize("d,m", [(1, 6), (2, 3)])
def test_uniform_recovered(d, m):
    g = Grid(d, m)
    I = MomentIndexSet(d, m)
    # uniform moments by direct summation over grid points
    mhat = MomentVector(I, oracles.moments(g.points(), np.full(g.size, 1 / g.size), d, m))
    res = solve(mhat, g, 1)
    np.testing.assert_allclose(res.distribution.q.ravel(), 1 / g.size, atol=1e-7)


def _oracle_problem(mhat, g, k):
    op = DesignOperator(g, mhat.index_set, k)
    return oracles.simplex_lsq(op.columns(np.arange(g.size)), op.weights * mhat.values)


def test_tiny_instance_matches_exhaustive_solver(rng):
    g = Grid(1, 3)
    I = MomentIndexSet(1, 2)
    for _ in range(10):
        mhat = MomentVector(I, rng.normal(scale=0.8, size=2))
        res = solve(mhat, g, 1)
        z, best = _oracle_problem(mhat, g, 1)
        assert res.objective == pytest.approx(best, abs=1e-9)
        np.testing.assert_allclose(res.distribution.q.ravel(), z, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_solver_matches_oracle_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    d, m, k = [(1, 4, 1), (1, 5, 1), (1, 2, 2), (2, 2, 1)][seed % 4]
    g = Grid(d, m**k)
    I = MomentIndexSet(d, m)
    truth = _grid_moment_vector(rng.dirichlet(np.ones(g.size)), g, I)
    mhat = MomentVector(I, truth.values + rng.normal(scale=0.3, size=len(I)))
    res = solve(mhat, g, k)
    _, best = _oracle_problem(mhat, g, k)
    assert res.objective <= best + 1e-8
    assert res.kkt_gap <= 1e-8


def test_fista_only_path_gets_close(rng):
    g = Grid(1, 8)
    I = MomentIndexSet(1, 8)
    mhat = MomentVector(I, rng.normal(scale=0.3, size=8))
    exact = solve(mhat, g, 1)
    fista = solve(mhat, g, 1, SolverOptions(method="fista", max_iters=20000, tol=1e-9))
    assert fista.objective == pytest.approx(exact.objective, abs=1e-6)
    assert fista.stop_reason in {"kkt", "stalled", "max_iters"}


def test_restricted_finish_when_dense_matrix_is_too_big(rng):
    g = Grid(2, 12)
    I = MomentIndexSet(2, 12)
    X = 2 * rng.beta(2, 5, size=(300, 2)) - 1
    mhat = empirical_moments(X, I)
    mhat = MomentVector(I, mhat.values + rng.normal(scale=0.01, size=len(I)))
    full = solve(mhat, g, 1)
    restricted = solve(mhat, g, 1, SolverOptions(dense_max_entries=10))
    assert restricted.objective == pytest.approx(full.objective, rel=1e-4, abs=1e-9)


def test_kkt_gap_definition():
    grad = np.array([3.0, 1.0, 2.0])
    assert kkt_gap(grad, np.array([0.0, 1.0, 0.0])) == 0.0
    assert kkt_gap(grad, np.array([0.5, 0.5, 0.0])) == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1))
def test_simplex_active_set_matches_oracle(seed):
    from chebdp.solver import simplex_active_set

    rng = np.random.default_rng(seed)
    rows, cols = int(rng.integers(1, 6)), int(rng.integers(2, 7))
    A, b = rng.normal(size=(rows, cols)), rng.normal(size=rows)
    z = simplex_active_set(A, b, np.full(cols, 1 / cols), tol=1e-12)
    _, best = oracles.simplex_lsq(A, b)
    assert z.min() >= 0 and z.sum() == pytest.approx(1.0)
    assert np.sum((A @ z - b) ** 2) == pytest.approx(best, abs=1e-9)
