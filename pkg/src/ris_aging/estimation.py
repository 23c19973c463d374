"""MMSE estimation of the aggregate channel from aged uplink pilots."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .errors import DomainError
from .fading import AgingProfile


def pilot_matrix(tau_p, K):
    """Orthonormal pilot book (tau_p x K), one unit-norm column per UE.

    Walsh-Hadamard columns when tau_p is a power of two, DFT columns otherwise.
    A UE sends ``sqrt(p_p) * psi_k^H`` so that p_p is its total pilot energy.
    """
    if K > tau_p:
        raise DomainError("need tau_p >= K for orthogonal pilots")
    if tau_p & (tau_p - 1) == 0:
        book = hadamard(tau_p).astype(complex)
    else:
        idx = np.arange(tau_p)
        book = np.exp(-2j * np.pi * np.outer(idx, idx) / tau_p)
    return book[:, :K] / np.sqrt(tau_p)


def despread_pilots(Y, pilots, k, p_pilot):
    """Correlate the received block with UE k's pilot.

    Parameters
    ----------
    Y : ndarray (M, tau_p)
        Received training block ``sqrt(p_p) sum_i h_i psi_i^H + W``.
    pilots : ndarray (tau_p, K)
        Pilot book; must satisfy ``pilots^H pilots = I``.
    k : int
        UE index (0-based).
    p_pilot : float
        Pilot energy.

    Returns
    -------
    ndarray (M,)
        ``h_k + w_k / sqrt(p_p)`` with ``w_k ~ CN(0, sigma^2 I)``.
    """
    pilots = np.asarray(pilots)
    gram = pilots.conj().T @ pilots
    if not np.allclose(gram, np.eye(gram.shape[0]), atol=1e-10):
        raise DomainError("pilot set is not orthonormal")
    return Y @ pilots[:, k] / np.sqrt(p_pilot)


@dataclass
class EstimationModel:
    """Per-UE MMSE quantities, stacked over UEs on the leading axis."""

    R: np.ndarray            # (K, M, M) channel covariance
    Q: np.ndarray            # (K, M, M) (R + sigma^2/p_p I)^{-1}
    Phi: np.ndarray          # (K, M, M) estimate covariance
    Psi: np.ndarray          # (K, M, M) error covariance
    alpha_train: np.ndarray  # (K,) aging from pilot slot to the reference time K+1
    profile: AgingProfile
    pilots: np.ndarray       # (tau_p, K)
    p_pilot: float
    noise_var: float

    @property
    def K(self):
        return self.R.shape[0]

    @property
    def M(self):
        return self.R.shape[1]

    @property
    def gain(self):
        """Estimator matrices alpha_train R Q, shape (K, M, M)."""
        return self.alpha_train[:, None, None] * (self.R @ self.Q)


def build_estimation_model(stats, cfg, profile=None):
    """MMSE model for the statistics in ``stats``.

    UE k pilots in channel use ``cfg.slots[k]`` and the estimate refers to
    channel use K+1, so the training correlation is alpha_{k, K+1-slot}.
    """
    if profile is None:
        profile = AgingProfile.for_config(cfg)
    K, M = stats.K, stats.M
    lags = cfg.K + 1 - cfg.slots
    alpha_train = profile.alpha[np.arange(K), lags]
    shift = cfg.noise_var_ul / cfg.p_pilot
    R = stats.R
    # spectral form keeps R Q R accurate when the shift is tiny against R
    lam, U = np.linalg.eigh(0.5 * (R + R.conj().transpose(0, 2, 1)))
    lam = np.clip(lam, 0.0, None)
    Uh = U.conj().transpose(0, 2, 1)
    Q = (U / (lam + shift)[:, None, :]) @ Uh
    RQR = (U * (lam**2 / (lam + shift))[:, None, :]) @ Uh
    Phi = alpha_train[:, None, None] ** 2 * RQR
    Psi = (U * (lam - alpha_train[:, None] ** 2 * lam**2 / (lam + shift))[:, None, :]) @ Uh
    return EstimationModel(R=R, Q=Q, Phi=Phi, Psi=Psi, alpha_train=alpha_train,
                           profile=profile, pilots=pilot_matrix(cfg.pilot_length, K),
                           p_pilot=cfg.p_pilot, noise_var=cfg.noise_var_ul)


def mmse_estimate(y_tilde, model, k):
    """MMSE estimate alpha_train R_k Q_k y_tilde of the channel at time K+1."""
    y_tilde = np.asarray(y_tilde)
    if y_tilde.shape[0] != model.M:
        raise DomainError(f"observation must have length M={model.M}")
    return model.alpha_train[k] * (model.R[k] @ (model.Q[k] @ y_tilde))


def nmse(model, k):
    """tr(Psi_k) / tr(R_k)."""
    return float(np.trace(model.Psi[k]).real / np.trace(model.R[k]).real)
