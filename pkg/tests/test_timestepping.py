import numpy as np
import pytest
import scipy.sparse as sp

from hestondg.timestepping import (
    Factorization,
    Scheme,
    SingularSystemError,
    TimeGrid,
    first_step_size,
    march,
    step_plan,
)


def scalar(a):
    return sp.csr_matrix([[1.0]]), sp.csr_matrix([[a]])


def test_time_grid():
    g = TimeGrid(1.0, 0.01)
    assert g.n_steps == 100
    assert abs(g.n_steps * g.dt - g.T) < 1e-12
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.0)
    assert TimeGrid(1.0, 0.3, allow_partial=True).n_steps == 3


def test_step_plan_rannacher():
    plan = step_plan(TimeGrid(1.0, 0.1), Scheme.RANNACHER)
    assert [k for k, _ in plan[:4]] == ["be"] * 4
    assert all(h == pytest.approx(0.05) for _, h in plan[:4])
    assert all(k == "cn" and h == pytest.approx(0.1) for k, h in plan[4:])
    assert sum(h for _, h in plan) == pytest.approx(1.0, abs=1e-12)
    assert len(plan) == 4 + 8
    assert first_step_size(TimeGrid(1.0, 0.1), "rannacher") == pytest.approx(0.05)


def test_step_plan_partial_last_step():
    plan = step_plan(TimeGrid(1.0, 0.3, allow_partial=True), Scheme.CN)
    assert [h for _, h in plan] == pytest.approx([0.3, 0.3, 0.3, 0.1])


@pytest.mark.parametrize("scheme", list(Scheme))
def test_zero_operator_keeps_data(scheme):
    M = sp.diags([1.0, 2.0, 3.0])
    A = sp.csr_matrix((3, 3))
    u0 = np.array([1.0, -2.0, 0.5])
    u, _ = march(M, A, None, u0, TimeGrid(1.0, 0.1), scheme)
    np.testing.assert_array_equal(u, u0)


def test_rannacher_scalar_recurrence():
    a, dt, T = 3.0, 0.1, 1.0
    M, A = scalar(a)
    u, _ = march(M, A, None, np.array([1.0]), TimeGrid(T, dt), Scheme.RANNACHER)
    r = (1 - a * dt / 2) / (1 + a * dt / 2)
    expected = (1 + a * dt / 2) ** -4 * r ** (round(T / dt) - 2)
    assert u[0] == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_cn_and_be_scalar_recurrence():
    a, dt = 2.0, 0.05
    M, A = scalar(a)
    u, _ = march(M, A, None, np.array([1.0]), TimeGrid(1.0, dt), Scheme.CN)
    assert u[0] == pytest.approx(((1 - a * dt / 2) / (1 + a * dt / 2)) ** 20, rel=1e-13)
    u, _ = march(M, A, None, np.array([1.0]), TimeGrid(1.0, dt), Scheme.BACKWARD_EULER)
    assert u[0] == pytest.approx((1 + a * dt) ** -20, rel=1e-13)


def test_steady_state():
    M, A = scalar(1.0)
    u, _ = march(M, A, lambda t: np.array([1.0]), np.array([0.0]), TimeGrid(10.0, 0.1), Scheme.RANNACHER)
    assert abs(u[0] - 1.0) < 1e-3


def test_factorization_reuse_matches_refactorization():
    rng = np.random.default_rng(0)
    n = 30
    B = sp.random(n, n, density=0.2, random_state=1)
    A = B @ B.T + sp.eye(n)
    M = sp.diags(rng.random(n) + 1.0)
    u0 = rng.standard_normal(n)
    load = lambda t: np.full(n, np.sin(t))
    g = TimeGrid(1.0, 0.05)
    u1, _ = march(M, A, load, u0, g, Scheme.RANNACHER, reuse=True)
    u2, _ = march(M, A, load, u0, g, Scheme.RANNACHER, reuse=False)
    np.testing.assert_allclose(u1, u2, rtol=1e-13, atol=1e-13)


def _richardson_order(scheme):
    a = 1.5
    M, A = scalar(a)
    # u' + a u = cos t, exact solution for u(0) = 0
    exact = lambda t: (a * np.cos(t) + np.sin(t) - a * np.exp(-a * t)) / (1 + a * a)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        u, _ = march(M, A, lambda t: np.array([np.cos(t)]), np.array([0.0]), TimeGrid(1.0, dt), scheme)
        errs.append(abs(u[0] - exact(1.0)))
    return np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])


def test_convergence_orders():
    assert min(_richardson_order(Scheme.CN)) > 1.9
    assert min(_richardson_order(Scheme.RANNACHER)) > 1.9
    o = _richardson_order(Scheme.BACKWARD_EULER)
    assert 0.9 < min(o) and max(o) < 1.1


def test_snapshots():
    M, A = scalar(1.0)
    u, snaps = march(M, A, None, np.array([1.0]), TimeGrid(1.0, 0.1), Scheme.RANNACHER, snapshot_every=2)
    assert snaps[0][0] == 0.0
    assert snaps[-1][0] == pytest.approx(1.0)
    assert snaps[-1][1][0] == u[0]
    assert len(snaps) == 1 + 12 // 2


def test_n_steps_truncates():
    M, A = scalar(1.0)
    u, _ = march(M, A, None, np.array([1.0]), TimeGrid(1.0, 0.1), Scheme.RANNACHER, n_steps=1)
    assert u[0] == pytest.approx(1 / 1.05)


def test_dimension_mismatch():
    M, A = scalar(1.0)
    with pytest.raises(ValueError):
        march(M, A, None, np.zeros(2), TimeGrid(1.0, 0.1))


def test_singular_system():
    M = sp.csr_matrix((2, 2))
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularSystemError):
        march(M, A, None, np.ones(2), TimeGrid(1.0, 0.1))
    with pytest.raises(SingularSystemError):
        Factorization(sp.csr_matrix((3, 3)))
