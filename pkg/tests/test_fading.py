import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from ris_aging import AgingProfile, build_statistics
from ris_aging.errors import DomainError
from ris_aging.fading import (age_channel, bs_correlation, jakes_alpha, los_channel, psd_sqrt,
                              ris_correlation, ris_grid, sample_initial_channel)

from conftest import small_config


def test_jakes():
    assert jakes_alpha(0.0, 5) == 1.0
    assert jakes_alpha(0.1, 0) == 1.0
    assert jakes_alpha(0.01, 3) == pytest.approx(scipy.special.j0(2 * math.pi * 0.03), abs=1e-14)
    with pytest.raises(DomainError):
        jakes_alpha(-0.1, 1)


def test_bs_correlation_against_quadrature():
    M, phi0, spread = 6, 0.3, math.radians(10)
    R = bs_correlation(M, phi0, spread)
    for a, b in [(0, 1), (0, 5), (2, 4)]:
        def f(phi, part):
            z = np.exp(2j * math.pi * 0.5 * (a - b) * math.sin(phi)) / (2 * spread)
            return z.real if part == 0 else z.imag
        re = scipy.integrate.quad(f, phi0 - spread, phi0 + spread, args=(0,), epsabs=1e-13)[0]
        im = scipy.integrate.quad(f, phi0 - spread, phi0 + spread, args=(1,), epsabs=1e-13)[0]
        assert R[a, b] == pytest.approx(re + 1j * im, abs=1e-12)
    np.testing.assert_allclose(np.diag(R), 1.0)
    np.testing.assert_allclose(R, R.conj().T)
    assert np.linalg.eigvalsh(R).min() > -1e-12


def test_bs_correlation_errors():
    with pytest.raises(DomainError):
        bs_correlation(4, 0.0, 0.0)


def test_ris_grid_and_correlation():
    pos = ris_grid(12, 0.1, 0.2)
    assert pos.shape == (12, 2)
    assert len(np.unique(pos[:, 0])) == 4 and len(np.unique(pos[:, 1])) == 3
    lam = 0.15
    R = ris_correlation(pos, lam)
    d = np.linalg.norm(pos[0] - pos[5])
    assert R[0, 5].real == pytest.approx(np.sin(2 * math.pi * d / lam) / (2 * math.pi * d / lam))
    np.testing.assert_allclose(np.diag(R), 1.0)
    with pytest.raises(DomainError):
        ris_correlation(pos, 0.0)


def test_los_channel_modulus():
    cfg = small_config()
    H = los_channel(cfg)
    assert H.shape == (cfg.M, cfg.L)
    np.testing.assert_allclose(np.abs(H), math.sqrt(cfg.beta_1))
    with pytest.raises(DomainError):
        los_channel(cfg, (np.zeros(3), np.zeros(3), np.zeros(cfg.M), np.zeros(cfg.M)))


def test_psd_sqrt(rng):
    A = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    R = A @ A.conj().T
    S = psd_sqrt(R)
    np.testing.assert_allclose(S @ S.conj().T, R, atol=1e-12)


def test_profiles():
    prof = AgingProfile.from_doppler([0.01, 0.02], 10, "per-index")
    assert prof.alpha.shape == (2, 10)
    assert prof.alpha[1, 3] == pytest.approx(scipy.special.j0(2 * math.pi * 0.06), abs=1e-14)
    sym = AgingProfile.from_doppler(0.05, 10, "per-symbol")
    assert sym.alpha[0, 0] == 1.0
    np.testing.assert_allclose(sym.alpha[0, 1:], scipy.special.j0(2 * math.pi * 0.05), atol=1e-14)
    np.testing.assert_allclose(prof.alpha**2 + prof.alpha_bar**2, 1.0)
    st = AgingProfile.static(3, 7)
    assert np.all(st.alpha == 1.0) and np.all(st.alpha_bar == 0.0)
    assert prof.data_alpha(np.array([4, 5]), 3).shape == (2, 2)
    with pytest.raises(DomainError):
        AgingProfile.from_doppler(0.1, 5, "nope")
    with pytest.raises(DomainError):
        AgingProfile.from_alpha(np.full((1, 3), 1.5))


def test_sampled_covariance_and_aging(rng):
    cfg = small_config(M=4, L=4, K=2)
    stats = build_statistics(cfg)
    n = 20000
    H = np.stack([sample_initial_channel(stats, rng).h for _ in range(n)])   # (n, M, K)
    emp = np.einsum("tak,tbk->kab", H, H.conj()) / n
    scale = np.abs(stats.R).max()
    np.testing.assert_allclose(emp, stats.R, atol=0.05 * scale)
    # correlation between h_0 and h_n equals alpha R
    h0 = sample_initial_channel(stats, rng)
    aged = age_channel(h0, stats, 0.6, rng, n=3)
    assert aged.n == 3 and aged.h.shape == h0.h.shape
    cross = np.zeros_like(stats.R)
    for _ in range(4000):
        h = sample_initial_channel(stats, rng)
        a = age_channel(h, stats, 0.6, rng)
        cross += np.einsum("ak,bk->kab", a.h, h.h.conj())
    np.testing.assert_allclose(cross / 4000, 0.6 * stats.R, atol=0.08 * scale)
    with pytest.raises(DomainError):
        age_channel(h0, stats, 1.2, rng)
