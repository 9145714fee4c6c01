import numpy as np
import pytest

from mfc0.core import (
    ErrorNorm, FactorState, NonFinite, SolverConfig, SubspaceSpec, YUpdateRule, validate_problem,
)
from mfc0.operators import prox_l21
from mfc0.solver import (
    augmented_lagrangian, fit, init_state, objective, update_E, update_P, update_V,
    update_X, update_Y,
)

from conftest import exact_factorization, random_orthonormal
from oracles import nonneg_l0_bruteforce


def _state(rng, m, d, n, beta=1.0, mu=1e-3):
    return FactorState(
        X=random_orthonormal(rng, m, d), Y=rng.standard_normal((d, n)),
        V=np.abs(rng.standard_normal((d, n))), E=rng.standard_normal((m, n)) * 0.1,
        P=rng.standard_normal((d, n)), mu=mu, beta=beta,
    )


def _problem(Z, K, d0, **cfg):
    return validate_problem(Z, SubspaceSpec(K, d0), SolverConfig(**cfg), allow_negative=True)


# -- init ---------------------------------------------------------------------

def test_init_deterministic_and_orthonormal(rng):
    prob = _problem(rng.random((100, 200)), 5, 10)
    s1, s2 = init_state(prob, seed=4), init_state(prob, seed=4)
    np.testing.assert_array_equal(s1.X, s2.X)
    assert s1.X.shape == (100, 50)
    assert np.max(np.abs(s1.X.T @ s1.X - np.eye(50))) <= 1e-10
    np.testing.assert_allclose(s1.Y, s1.X.T @ prob.Z.values)
    for M in (s1.E, s1.V, s1.P):
        assert not np.any(M)
    assert s1.mu == 1e-3 and s1.beta == 1e-3


def test_init_seed_changes_basis(rng):
    prob = _problem(rng.random((10, 20)), 2, 2)
    assert not np.allclose(init_state(prob, 0).X, init_state(prob, 1).X)


def test_init_fixed_beta(rng):
    prob = _problem(rng.random((10, 20)), 2, 2, beta=3.0)
    assert init_state(prob).beta == 3.0


# -- X ------------------------------------------------------------------------

def test_update_X_polar_factor(rng):
    m = 5
    Z = rng.standard_normal((m, m))
    st = _state(rng, m, m, m)
    st.Y, st.E = np.eye(m), np.zeros((m, m))
    U, _, Wt = np.linalg.svd(Z)
    np.testing.assert_allclose(update_X(st, Z), U @ Wt, atol=1e-10)


def test_update_X_recovers_column_space(rng):
    X_true, Y_true, _ = exact_factorization(rng, 12, 2, 2, 10)
    Z = X_true @ Y_true
    st = _state(rng, 12, 4, 20)
    st.Y, st.E = Y_true, np.zeros_like(Z)
    X = update_X(st, Z)
    assert np.max(np.abs(X @ X.T - X_true @ X_true.T)) <= 1e-8


def test_update_X_does_not_increase_fit(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30)
    before = objective(Z, st.X, st.Y, st.E, 1.0, "none").fit_term
    after = objective(Z, update_X(st, Z), st.Y, st.E, 1.0, "none").fit_term
    assert after <= before + 1e-12


# -- Y ------------------------------------------------------------------------

def test_update_Y_penalty_limit(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30, beta=1e9)
    np.testing.assert_allclose(update_Y(st, Z), st.V, atol=1e-6)


def test_update_Y_zero_gradient(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30, beta=0.7)
    Y = update_Y(st, Z)
    # gradient of ||Z - XY - E||^2 + <P, Y - V> + beta/2 ||Y - V||^2, without assuming X^T X = I
    grad = -2 * st.X.T @ (Z - st.X @ Y - st.E) + st.P + st.beta * (Y - st.V)
    assert np.max(np.abs(grad)) <= 1e-8


def test_update_Y_least_squares(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30, beta=0.0)
    st.E, st.P = np.zeros_like(Z), np.zeros((4, 30))
    st.V = st.Y.copy()
    expected = np.linalg.lstsq(st.X, Z, rcond=None)[0]
    np.testing.assert_allclose(update_Y(st, Z), expected, atol=1e-12)
    np.testing.assert_allclose(update_Y(st, Z, YUpdateRule.PAPER), st.X.T @ Z, atol=1e-12)


def test_update_Y_paper_rule_differs(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30, beta=0.5)
    b = st.beta
    expected = (st.X.T @ (Z - st.E) + b * st.V - st.P) / (1 + b)
    np.testing.assert_allclose(update_Y(st, Z, "paper"), expected)
    assert not np.allclose(update_Y(st, Z, "paper"), update_Y(st, Z, "exact"))


# -- E ------------------------------------------------------------------------

def test_update_E_full_shrinkage(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30)
    G = Z - st.X @ st.Y
    lam = 2 * np.max(np.linalg.norm(G, axis=0))
    cfg = SolverConfig(lam=lam, error_norm=ErrorNorm.L21)
    assert not np.any(update_E(st, Z, cfg))


def test_update_E_small_lambda(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30)
    cfg = SolverConfig(lam=1e-12, error_norm="l1")
    np.testing.assert_allclose(update_E(st, Z, cfg), Z - st.X @ st.Y, atol=1e-11)


def test_update_E_l21_matches_prox(rng):
    Z = rng.random((8, 30))
    st = _state(rng, 8, 4, 30)
    E = update_E(st, Z, SolverConfig(lam=1.0, error_norm="l21"))
    G = Z - st.X @ st.Y
    for j in range(G.shape[1]):
        np.testing.assert_allclose(E[:, j], prox_l21(G[:, [j]], 0.5)[:, 0])


def test_update_E_none(rng):
    Z = rng.random((8, 30))
    assert not np.any(update_E(_state(rng, 8, 4, 30), Z, SolverConfig()))


# -- V ------------------------------------------------------------------------

def test_update_V_fixed_point(rng):
    st = _state(rng, 8, 4, 30)
    Y = np.zeros((4, 30))
    Y[:2, :15] = rng.random((2, 15)) + 0.1
    Y[2:, 15:] = rng.random((2, 15)) + 0.1
    st.Y, st.P = Y, np.zeros_like(Y)
    np.testing.assert_array_equal(update_V(st, 2), Y)


def test_update_V_matches_enumeration(rng):
    st = _state(rng, 8, 4, 25, beta=0.8)
    V = update_V(st, 2)
    assert np.all(V >= 0) and np.all(np.count_nonzero(V, axis=0) <= 2)
    U = st.Y + st.P / st.beta
    for j in range(U.shape[1]):
        np.testing.assert_array_equal(V[:, j], nonneg_l0_bruteforce(U[:, j], 2)[0])


def test_update_V_requires_positive_beta(rng):
    with pytest.raises(ValueError):
        update_V(_state(rng, 4, 2, 5, beta=0.0), 1)


# -- P ------------------------------------------------------------------------

def test_update_P_zero_residual(rng):
    st = _state(rng, 8, 4, 30)
    st.V = st.Y.copy()
    P, _, _ = update_P(st, SolverConfig())
    np.testing.assert_array_equal(P, st.P)


def test_update_P_dual_step(rng):
    st = _state(rng, 8, 4, 30, mu=0.3)
    P, mu, beta = update_P(st, SolverConfig())
    np.testing.assert_allclose(P, st.P + 0.3 * (st.Y - st.V))
    assert mu == pytest.approx(0.36) and beta == mu


def test_mu_schedule():
    cfg = SolverConfig()
    st = FactorState(*(np.zeros((1, 1)),) * 5, mu=cfg.mu0, beta=cfg.mu0)
    for _ in range(3):
        st.P, st.mu, st.beta = update_P(st, cfg)
    assert st.mu == pytest.approx(1.728e-3, rel=1e-12)
    assert st.beta == st.mu


def test_mu_cap():
    cfg = SolverConfig()
    st = FactorState(*(np.zeros((1, 1)),) * 5, mu=cfg.mu_max, beta=cfg.mu_max)
    _, mu, _ = update_P(st, cfg)
    assert mu == cfg.mu_max


def test_fixed_beta_not_tied():
    cfg = SolverConfig(beta=2.0)
    st = FactorState(*(np.zeros((1, 1)),) * 5, mu=cfg.mu0, beta=2.0)
    _, mu, beta = update_P(st, cfg)
    assert beta == 2.0 and mu == pytest.approx(1.2e-3)


# -- augmented Lagrangian descent -------------------------------------------

@pytest.mark.parametrize("norm", ["l1", "l21", "none"])
def test_each_primal_step_decreases_lagrangian(norm, rng):
    Z = rng.random((10, 40))
    cfg = SolverConfig(lam=0.5, error_norm=norm)
    st = _state(rng, 10, 4, 40, beta=0.9)
    if norm == "none":
        st.E[:] = 0.0  # E is pinned to zero in this mode

    def L():
        return augmented_lagrangian(Z, st, cfg.lam, cfg.error_norm)

    for _ in range(5):
        before = L()
        st.X = update_X(st, Z)
        assert L() <= before + 1e-9
        before = L()
        st.Y = update_Y(st, Z)
        assert L() <= before + 1e-9
        before = L()
        st.E = update_E(st, Z, cfg)
        assert L() <= before + 1e-9
        before = L()
        st.V = update_V(st, 2)
        assert L() <= before + 1e-9
        st.P, st.mu, st.beta = update_P(st, cfg)


# -- fit ------------------------------------------------------------------------

def test_fit_iteration_cap(rng):
    res = fit(rng.random((10, 20)), SubspaceSpec(2, 2), SolverConfig(max_iters=1))
    assert res.iterations == 1 and len(res.objective_trace) == 1
    assert not res.converged


def test_fit_state_invariants(rng):
    X_true, Y_true, _ = exact_factorization(rng, 20, 3, 2, 15)
    res = fit(X_true @ Y_true, SubspaceSpec(3, 2), SolverConfig(max_iters=25))
    assert np.max(np.abs(res.X.T @ res.X - np.eye(6))) <= 1e-8
    assert np.all(res.V >= 0)
    assert np.all(np.count_nonzero(res.V, axis=0) <= 2)
    for o in res.objective_trace:
        assert o.total == o.fit_term + o.reg_term and o.fit_term >= 0


@pytest.mark.parametrize("seed", range(4))
def test_fit_exact_recovery(seed):
    rng = np.random.default_rng(seed)
    X_true, Y_true, _ = exact_factorization(rng, 6, 3, 1, 10)
    Z = X_true @ Y_true
    res = fit(Z, SubspaceSpec(3, 1), SolverConfig(rho=1.05, seed=seed))
    assert res.converged
    assert res.final_objective.fit_term <= 1e-6 * np.sum(Z ** 2)


def test_fit_warm_start_at_solution(rng):
    X_true, Y_true, _ = exact_factorization(rng, 30, 5, 2, 20)
    Z = X_true @ Y_true
    st = FactorState(X=X_true.copy(), Y=Y_true.copy(), V=Y_true.copy(), E=np.zeros_like(Z),
                     P=np.zeros_like(Y_true), mu=1e-3, beta=1e-3)
    res = fit(Z, SubspaceSpec(5, 2), SolverConfig(), state=st)
    assert res.converged and res.iterations == 2
    assert res.final_objective.fit_term <= 1e-20


def test_fit_is_deterministic(rng):
    Z = rng.random((12, 30))
    a = fit(Z, SubspaceSpec(2, 2), SolverConfig(max_iters=20, seed=3))
    b = fit(Z, SubspaceSpec(2, 2), SolverConfig(max_iters=20, seed=3))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.totals, b.totals)


def test_fit_accepts_problem(rng):
    prob = _problem(rng.random((8, 16)), 2, 2, max_iters=3)
    assert fit(prob).iterations == 3


def test_fit_nonfinite_raises(rng):
    Z = rng.random((8, 16))
    st = init_state(_problem(Z, 2, 2))
    st.P[0, 0] = np.nan
    with pytest.raises(NonFinite) as info:
        fit(Z, SubspaceSpec(2, 2), SolverConfig(max_iters=5), state=st)
    assert info.value.iteration == 1
    assert info.value.trace == []


def test_fit_max_iters_warns(rng, caplog):
    with caplog.at_level("WARNING", logger="mfc0"):
        fit(rng.random((8, 16)), SubspaceSpec(2, 2), SolverConfig(max_iters=2))
    assert any("max_iters" in r.getMessage() for r in caplog.records)


def test_fit_rejects_negative(rng):
    with pytest.raises(ValueError):
        fit(-rng.random((8, 16)), SubspaceSpec(2, 2))
