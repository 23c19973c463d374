import math

import numpy as np
import pytest

from ris_aging import build_estimation_model, build_statistics, de_sinr_at, de_solution_at, de_sum_se
from ris_aging.de_engine import de_tables, solve_T, solve_Ttilde
from ris_aging.errors import DomainError
from ris_aging.fading import AgingProfile

from conftest import random_psd, small_config


def test_scalar_golden_ratio():
    T, delta = solve_T(np.ones((1, 1, 1)), [1.0], 1.0)
    assert delta[0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-12)
    assert T[0, 0].real == pytest.approx(delta[0], abs=1e-12)


def _plain_iteration(Phi, a, reg, iters=5000):
    K, M = Phi.shape[0], Phi.shape[-1]
    delta = np.zeros(K)
    for _ in range(iters):
        Y = reg * np.eye(M) + sum(a[i] ** 2 * Phi[i] / (1 + a[i] ** 2 * delta[i]) for i in range(K)) / M
        T = np.linalg.inv(Y)
        delta = np.array([np.trace(Phi[k] @ T).real / M for k in range(K)])
    return T, delta


def test_against_plain_iteration(rng):
    K, M = 3, 6
    Phi = np.stack([random_psd(rng, M, 3) for _ in range(K)])
    a = np.array([1.0, 0.8, 0.5])
    T, delta = solve_T(Phi, a, 0.3)
    T_ref, d_ref = _plain_iteration(Phi, a, 0.3)
    np.testing.assert_allclose(delta, d_ref, rtol=1e-10)
    np.testing.assert_allclose(T, T_ref, atol=1e-10 * np.abs(T_ref).max())


def test_ttilde_is_the_derivative(rng):
    # T~(B) = d/dx T with B subtracted from the resolvent argument
    K, M = 3, 5
    Phi = np.stack([random_psd(rng, M, 2) for _ in range(K)])
    a = np.array([0.9, 1.0, 0.6])
    B = random_psd(rng, M)
    T, delta = solve_T(Phi, a, 0.5)
    Tt, x = solve_Ttilde(T, Phi, a, B, delta)
    h = 1e-5
    Tp, dp = solve_T(Phi, a, 0.5, Z=-h * M * B)
    Tm, dm = solve_T(Phi, a, 0.5, Z=h * M * B)
    np.testing.assert_allclose(Tt, (Tp - Tm) / (2 * h), atol=1e-7 * np.abs(Tt).max())
    np.testing.assert_allclose(x, (dp - dm) / (2 * h), rtol=1e-6)


def test_solve_T_errors():
    with pytest.raises(DomainError):
        solve_T(np.ones((1, 1, 1)), [1.0], 0.0)


def test_power_homogeneity(small):
    cfg, stats, est, p = small
    tab = de_tables(stats, est, cfg)
    g = tab.gamma(p)
    for t in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(tab.gamma(t * p), g, rtol=1e-12)


def test_sum_matches_pointwise(small):
    cfg, stats, est, p = small
    se, table = de_sum_se(p, stats, est, cfg)
    assert table.shape == (cfg.K, cfg.tau_c - cfg.K)
    total = sum(np.log2(1 + de_sinr_at(n, p, stats, est, cfg)).sum()
                for n in range(cfg.K + 1, cfg.tau_c + 1))
    assert se == pytest.approx(total / cfg.tau_c, rel=1e-12)


def test_zero_power_user(small):
    cfg, stats, est, p = small
    p = p.copy()
    p[1] = 0.0
    g = de_sinr_at(cfg.K + 2, p, stats, est, cfg)
    assert g[1] == 0.0 and np.all(g[[0, 2, 3]] > 0)
    assert de_sum_se(np.zeros(cfg.K), stats, est, cfg)[0] == 0.0


def test_static_frame_is_time_invariant(small):
    cfg, stats, _, p = small
    est = build_estimation_model(stats, cfg, AgingProfile.static(cfg.K, cfg.tau_c))
    tab = de_tables(stats, est, cfg)
    assert tab.row_delta.shape[0] == 1
    np.testing.assert_allclose(tab.gamma(p), np.broadcast_to(tab.gamma(p)[0], (cfg.tau_c - cfg.K, cfg.K)))


def test_aging_lowers_sinr(small):
    cfg, stats, est, p = small
    g = de_tables(stats, est, cfg).gamma(p)
    assert np.all(g[-1] < g[0])


def test_reading_and_time_checks(small):
    cfg, stats, est, p = small
    with pytest.raises(DomainError):
        de_tables(stats, est, cfg, reading="other")
    with pytest.raises(DomainError):
        de_sinr_at(cfg.K, p, stats, est, cfg)
    with pytest.raises(DomainError):
        de_sinr_at(cfg.tau_c + 1, p, stats, est, cfg)


def test_readings_differ_only_when_alphas_differ(small):
    cfg, stats, est, p = small
    n = cfg.K + 5
    a = de_sinr_at(n, p, stats, est, cfg, reading="per-user")
    b = de_sinr_at(n, p, stats, est, cfg, reading="receiver")
    np.testing.assert_allclose(a, b, rtol=1e-10)   # one Doppler for all UEs


def test_solution_fields(small):
    cfg, stats, est, p = small
    n = cfg.K + 3
    sol = de_solution_at(n, p, stats, est, cfg)
    np.testing.assert_allclose(sol.gamma_bar, de_sinr_at(n, p, stats, est, cfg), rtol=1e-12)
    assert sol.T.shape == (cfg.M, cfg.M)
    assert sol.Q.shape == (cfg.K, cfg.K)
    assert set(sol.Ttilde_of) == {"I", *range(cfg.K)}
    assert sol.lambda_bar > 0 and math.isfinite(sol.lambda_bar)
    # delta_lambda is the normalised trace of T~(I)
    np.testing.assert_allclose(
        sol.delta_lambda,
        [np.trace(est.Phi[k] @ sol.Ttilde_of["I"]).real / cfg.M for k in range(cfg.K)], rtol=1e-9)


def test_warm_start_agrees(small):
    cfg, stats, est, p = small
    cold = de_tables(stats, est, cfg)
    warm = de_tables(stats, est, cfg, delta0=cold.row_delta * 1.01)
    np.testing.assert_allclose(warm.gamma(p), cold.gamma(p), rtol=1e-10)
    assert warm.iterations <= cold.iterations
