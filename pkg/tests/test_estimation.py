from dataclasses import replace

import numpy as np
import pytest

from ris_aging import build_estimation_model, build_statistics
from ris_aging.errors import DomainError
from ris_aging.estimation import despread_pilots, mmse_estimate, nmse, pilot_matrix
from ris_aging.fading import AgingProfile, psd_sqrt

from conftest import random_psd, small_config


@pytest.mark.parametrize("tau_p,K", [(4, 4), (8, 5), (6, 6), (7, 3)])
def test_pilots_orthonormal(tau_p, K):
    P = pilot_matrix(tau_p, K)
    assert P.shape == (tau_p, K)
    np.testing.assert_allclose(P.conj().T @ P, np.eye(K), atol=1e-12)


def test_pilot_errors():
    with pytest.raises(DomainError):
        pilot_matrix(3, 4)
    with pytest.raises(DomainError):
        despread_pilots(np.zeros((2, 3)), np.ones((3, 2)), 0, 1.0)


def _stacked_oracle(est, Y, k):
    """Joint LMMSE of h_k at the reference time from the whole vectorised block."""
    M, K = est.M, est.K
    pp, s2 = est.p_pilot, est.noise_var
    A = [np.sqrt(pp) * np.kron(est.pilots[:, i].conj()[:, None], np.eye(M)) for i in range(K)]
    Cyy = sum(A[i] @ est.R[i] @ A[i].conj().T for i in range(K)) + s2 * np.eye(M * est.pilots.shape[0])
    Cxy = est.alpha_train[k] * est.R[k] @ A[k].conj().T
    G = Cxy @ np.linalg.inv(Cyy)
    return G @ Y.reshape(-1, order="F"), G @ Cxy.conj().T


def test_mmse_matches_stacked_oracle(rng):
    cfg = small_config(M=4, K=3, L=4, tau_c=10, fD_Ts=0.05, p_pilot=1e-3)
    stats = build_statistics(cfg)
    # replace the geometry with generic covariances so the test is not structure specific
    R = np.stack([random_psd(rng, 4, 2) * 1e-10 for _ in range(3)])
    est = replace(build_estimation_model(stats, cfg), R=R)
    est.Q = np.linalg.inv(R + est.noise_var / est.p_pilot * np.eye(4))
    roots = [psd_sqrt(R[i]) for i in range(3)]
    worst = 0.0
    for _ in range(100):
        H = np.stack([roots[i] @
                      (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(2)
                      for i in range(3)], axis=1)
        W = np.sqrt(est.noise_var / 2) * (rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)))
        Y = np.sqrt(est.p_pilot) * H @ est.pilots.conj().T + W
        for k in range(3):
            ours = mmse_estimate(despread_pilots(Y, est.pilots, k, est.p_pilot), est, k)
            ref, _ = _stacked_oracle(est, Y, k)
            worst = max(worst, np.linalg.norm(ours - ref) / max(np.linalg.norm(ref), 1e-300))
    assert worst < 1e-10


def test_phi_psi_match_oracle_covariances():
    cfg = small_config(M=4, K=3, L=4, tau_c=10, fD_Ts=0.05)
    stats = build_statistics(cfg)
    est = build_estimation_model(stats, cfg)
    for k in range(3):
        _, Phi = _stacked_oracle(est, np.zeros((4, 3)), k)
        scale = np.abs(est.R[k]).max()
        np.testing.assert_allclose(est.Phi[k], Phi, atol=1e-10 * scale)
        np.testing.assert_allclose(est.Psi[k], est.R[k] - Phi, atol=1e-10 * scale)
        assert np.linalg.eigvalsh(est.Psi[k]).min() > -1e-12 * scale


def test_nmse_floor_high_snr():
    # with clean pilots the error is the aging floor 1 - alpha^2
    cfg = small_config(p_pilot=1e3)
    stats = build_statistics(cfg)
    for a in (1.0, 0.99, 0.9, 0.7):
        prof = AgingProfile.from_alpha(np.full((cfg.K, cfg.tau_c + 1), a))
        est = build_estimation_model(stats, cfg, prof)
        for k in range(cfg.K):
            assert nmse(est, k) == pytest.approx(1 - a * a, abs=1e-6)


def test_nmse_decreases_with_pilot_power():
    values = []
    for pp in (1e-6, 1e-4, 1e-2):
        cfg = small_config(p_pilot=pp, fD_Ts=0.0)
        est = build_estimation_model(build_statistics(cfg), cfg)
        values.append(nmse(est, 0))
    assert values[0] > values[1] > values[2]


def test_estimate_shape_check(small):
    cfg, stats, est, p = small
    with pytest.raises(DomainError):
        mmse_estimate(np.zeros(cfg.M + 1), est, 0)
