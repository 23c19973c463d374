"""Sample-based SINR/SE evaluation used as an oracle for the DE engine.

Per trial the simulator draws h_zeta ~ CN(0, R_k), runs the pilot phase with
aged channels and receiver noise, forms MMSE estimates, and evaluates the
four expectations of the achievable SINR

    gamma = a^2 p |E{h^H f_k}|^2 / (a^2 p Var{h^H f_k}
            + sum_{i != k} p_i E{|h_n^H f_i|^2} + abar^2 p E{|e^H f_k|^2} + sigma^2)

with h_n = a h_zeta + abar e and precoders built from a * h_hat.

Trial t uses ``SeedSequence(seed, spawn_key=(t,))``; sweeps that reuse the
seed therefore share random numbers. One innovation draw per trial serves all
data times: each per-time expectation stays unbiased, and the shared draw only
correlates the estimates across time.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .de_engine import data_times
from .estimation import pilot_matrix

Z95 = 1.959963984540054


@dataclass
class McEstimate:
    """Monte Carlo estimate with a 95% normal-approximation half-width."""

    mean: float
    half_width_95: float
    trials: int
    per_term: dict = field(default_factory=dict)


def _precoder_scale(U, a, p, P_max):
    """Columns a_k sqrt(lambda) U_k with tr(P F^H F) = P_max."""
    norms = np.sum(np.abs(U) ** 2, axis=-2)
    denom = np.sum(p * a**2 * norms, axis=-1)
    lam = np.where(denom > 0, P_max / np.where(denom > 0, denom, 1.0), 0.0)
    return a * np.sqrt(lam)[..., None]


def rzf_precoder(H_hat, alpha_data, p, cfg):
    """RZF precoder F (M x K) for estimates H_hat (M x K).

    ``f_k = a_k sqrt(lambda) Sigma h_k`` with
    ``Sigma = (H diag(a^2) H^H + Z + M alpha I)^{-1}``.
    """
    H_hat = np.asarray(H_hat, dtype=complex)
    a = np.asarray(alpha_data, dtype=float)
    p = np.asarray(p, dtype=float)
    M = H_hat.shape[0]
    S_inv = (H_hat * a**2) @ H_hat.conj().T + cfg.Z + M * cfg.alpha_reg * np.eye(M)
    U = np.linalg.solve(S_inv, H_hat)
    return U * _precoder_scale(U, a, p, cfg.P_max)


def mrt_precoder(H_hat, alpha_data, p, cfg):
    """MRT precoder ``f_k = a_k sqrt(lambda) h_k`` under the same power contract."""
    H_hat = np.asarray(H_hat, dtype=complex)
    a = np.asarray(alpha_data, dtype=float)
    return H_hat * _precoder_scale(H_hat, a, np.asarray(p, dtype=float), cfg.P_max)


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _trial_rng(seed, t):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(t),)))


def _pilot_phase(rng, sqrtR, est):
    """Channels at the reference time K+1 (K x M) and their MMSE estimates (M x K)."""
    K, M = est.K, est.M
    hz = np.einsum("kab,kb->ka", sqrtR, _cn(rng, (K, M)))
    e_tr = np.einsum("kab,kb->ka", sqrtR, _cn(rng, (K, M)))
    at = est.alpha_train
    h_train = at[:, None] * hz + np.sqrt(1.0 - at**2)[:, None] * e_tr
    pilots = est.pilots
    W = math.sqrt(est.noise_var) * _cn(rng, (M, pilots.shape[0]))
    Y = math.sqrt(est.p_pilot) * h_train.T @ pilots.conj().T + W
    y_tilde = (Y @ pilots) / math.sqrt(est.p_pilot)                # (M, K)
    return hz, np.einsum("kab,bk->ak", est.gain, y_tilde)


def _trial(t, seed, sqrtR, est, cfg, a, abar, p, precoder, woodbury=True):
    """Per-(n, k) samples of one trial; a, abar have shape (N, K).

    With Z = 0 the RZF products go through the K x K form
    Sigma H = H (diag(a^2) H^H H + M alpha I)^{-1}.
    """
    rng = _trial_rng(seed, t)
    K, M = est.K, est.M
    hz, Hh = _pilot_phase(rng, sqrtR, est)
    innov = np.einsum("kab,kb->ka", sqrtR, _cn(rng, (K, M))).T      # (M, K)
    Hz = hz.T

    if precoder == "rzf" and woodbury and not cfg.has_Z:
        gram = Hh.conj().T @ Hh
        X = np.linalg.inv(a[:, :, None] ** 2 * gram[None] + M * cfg.alpha_reg * np.eye(K)[None])
        norms = np.einsum("nik,ij,njk->nk", X.conj(), gram, X).real
        denom = np.sum(p * a**2 * norms, axis=1)
        lam = np.where(denom > 0, cfg.P_max / np.where(denom > 0, denom, 1.0), 0.0)
        scale = a * np.sqrt(lam)[:, None]
        S0 = (Hz.conj().T @ Hh)[None] @ X * scale[:, None, :]     # h_zeta,k^H f_i
        Se = (innov.conj().T @ Hh)[None] @ X * scale[:, None, :]  # e_k^H f_i
    else:
        if precoder == "rzf":
            F = np.stack([rzf_precoder(Hh, a[n], p, cfg) for n in range(a.shape[0])])
        else:
            F = np.stack([mrt_precoder(Hh, a[n], p, cfg) for n in range(a.shape[0])])
        S0 = Hz.conj().T[None] @ F
        Se = innov.conj().T[None] @ F
    s = np.diagonal(S0, axis1=1, axis2=2)
    ee = np.abs(np.diagonal(Se, axis1=1, axis2=2)) ** 2
    X_all = a[:, :, None] * S0 + abar[:, :, None] * Se                # h_{k,n}^H f_i
    pw = np.abs(X_all) ** 2 * p[None, None, :]
    interf = pw.sum(axis=2) - np.diagonal(pw, axis1=1, axis2=2)
    return s, interf, ee


def _simulate(p, stats, est, cfg, trials, seed, times, precoder):
    p = np.asarray(p, dtype=float)
    times = np.asarray(times)
    a = est.profile.data_alpha(times, cfg.K).reshape(len(times), -1)
    abar = est.profile.data_alpha_bar(times, cfg.K).reshape(len(times), -1)
    sqrtR = stats.sqrt_R
    N, K = a.shape
    s = np.empty((trials, N, K), dtype=complex)
    interf = np.empty((trials, N, K))
    ee = np.empty((trials, N, K))
    for t in range(trials):
        s[t], interf[t], ee[t] = _trial(t, seed, sqrtR, est, cfg, a, abar, p, precoder)
    return a, abar, s, interf, ee


def _sinr_and_influence(a, abar, p, s, interf, ee, noise):
    """Plug-in SINR per (n, k) and its per-trial influence values."""
    ms = s.mean(axis=0)
    s2 = np.abs(s) ** 2
    m2 = s2.mean(axis=0)
    mi = interf.mean(axis=0)
    me = ee.mean(axis=0)
    ap = a**2 * p[None, :]
    bp = abar**2 * p[None, :]
    var = m2 - np.abs(ms) ** 2
    num = ap * np.abs(ms) ** 2
    den = ap * var + mi + bp * me + noise
    gamma = np.where(num > 0, num / den, 0.0)
    ds = 2.0 * np.real(np.conj(ms)[None] * (s - ms[None]))
    dnum = ap[None] * ds
    dden = ap[None] * ((s2 - m2[None]) - ds) + (interf - mi[None]) + bp[None] * (ee - me[None])
    infl = np.where(num[None] > 0, (dnum * den[None] - num[None] * dden) / den[None] ** 2, 0.0)
    terms = dict(signal=np.abs(ms) ** 2, variance=var, interference=mi, innovation=me)
    return gamma, infl, terms


def _half_width(samples):
    T = samples.shape[0]
    if T < 2:
        return math.inf
    return float(Z95 * np.std(samples, ddof=1) / math.sqrt(T))


def mc_sinr(n, p, stats, est, cfg, trials=500, seed=0, precoder="rzf"):
    """Per-UE achievable SINR at data time n, one :class:`McEstimate` per UE."""
    p = np.asarray(p, dtype=float)
    a, abar, s, interf, ee = _simulate(p, stats, est, cfg, trials, seed, [n], precoder)
    gamma, infl, terms = _sinr_and_influence(a, abar, p, s, interf, ee, cfg.noise_var_dl)
    out = []
    for k in range(est.K):
        out.append(McEstimate(float(gamma[0, k]), _half_width(infl[:, 0, k]), trials,
                              {name: float(v[0, k]) for name, v in terms.items()}))
    return out


def mc_sum_se(p, stats, est, cfg, trials=500, seed=0, precoder="rzf", times=None,
              max_lag=None):
    """Achievable sum SE estimated by Monte Carlo.

    ``max_lag`` truncates the frame to the first ``max_lag`` data symbols
    (used by the high-overhead estimation baseline).
    """
    p = np.asarray(p, dtype=float)
    times = data_times(cfg) if times is None else np.asarray(times)
    if max_lag is not None:
        times = times[: max(0, int(max_lag))]
    if times.size == 0:
        return McEstimate(0.0, 0.0, trials, {})
    a, abar, s, interf, ee = _simulate(p, stats, est, cfg, trials, seed, times, precoder)
    gamma, infl, terms = _sinr_and_influence(a, abar, p, s, interf, ee, cfg.noise_var_dl)
    se = float(np.log2(1.0 + gamma).sum() / cfg.tau_c)
    infl_nk = infl / ((1.0 + gamma)[None] * math.log(2.0))
    infl_se = infl_nk.sum(axis=(1, 2)) / cfg.tau_c
    per_term = {name: float(v.mean()) for name, v in terms.items()}
    per_term["gamma"] = gamma.T
    per_term["times"] = times
    # per-time sum SE sum_k log2(1 + gamma_{k,n}) and its half-width
    per_term["se_per_time"] = np.log2(1.0 + gamma).sum(axis=1)
    per_term["se_per_time_hw"] = np.array([_half_width(infl_nk[:, i].sum(axis=1))
                                           for i in range(len(times))])
    return McEstimate(se, _half_width(infl_se), trials, per_term)


def mrt_baseline(p, stats, est, cfg, trials=500, seed=0):
    """Sum SE with MRT precoding (Monte Carlo only)."""
    return mc_sum_se(p, stats, est, cfg, trials, seed, precoder="mrt")


def mc_nmse(stats, est, cfg, trials=500, seed=0):
    """Empirical ||h_k - h_hat_k||^2 / tr(R_k) at the reference time, one estimate per UE."""
    sqrtR = stats.sqrt_R
    err = np.empty((trials, est.K))
    for t in range(trials):
        hz, Hh = _pilot_phase(_trial_rng(seed, t), sqrtR, est)
        err[t] = np.sum(np.abs(hz.T - Hh) ** 2, axis=0)
    scale = np.trace(est.R, axis1=1, axis2=2).real
    out = []
    for k in range(est.K):
        x = err[:, k] / scale[k]
        out.append(McEstimate(float(x.mean()), _half_width(x), trials))
    return out
