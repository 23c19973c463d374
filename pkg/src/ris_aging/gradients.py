"""Gradient of the DE SINR / sum SE with respect to the conjugate RIS phases.

The derivative is computed in reverse mode. Objective weights on gamma are
pulled back through the scalar tables (mu, zeta, delta_lambda, ...) to the
trace tables G, P, s, then to the matrices T, Phi_k, R_k. The fixed point
delta = phi(delta, Phi) is handled by the implicit function theorem: one
K x K solve with (I - F)^T per data time. Finally each R_k sensitivity
``Rbar_k`` (defined by dJ = tr(Rbar_k dR_k)) maps to the phases through

    dtr(A R_k)/dc* = beta_h2,k diag(H1^H A H1 Theta R_RIS,k).

Results are Wirtinger derivatives ``g = dJ/dc*`` projected on the tangent
space of the unit circle (the radial part is invisible to any unit-modulus
design); the derivative along c_l -> c_l e^{j t} is ``2 Re(conj(g_l) j c_l)``.
``backward`` exposes the unprojected vector.
"""

import math
from dataclasses import dataclass

import numpy as np

from .de_engine import _alpha_rows, _combine, _herm, _pair_traces, _tr, iter_chunks, sinr_from_tables


@dataclass
class GradientWorkspace:
    """Matrix sensitivities accumulated during the reverse sweep."""

    R_bar: np.ndarray      # (K, M, M), dJ = sum_k tr(R_bar_k dR_k)
    Phi_bar: np.ndarray    # (K, M, M), dJ = sum_k tr(Phi_bar_k dPhi_k) at fixed R
    grad: np.ndarray       # (L,) dJ/dc*
    value: float = float("nan")
    row_delta: np.ndarray = None


def trace_dR(A, stats, k):
    """d tr(A R_k) / dc* for a Theta-independent matrix A; length-L vector."""
    B = stats.H1.conj().T @ A @ stats.H1
    return stats.beta_h2[k] * np.einsum("ml,l,lm->m", B, stats.theta, stats.R_RIS[k])


def _phase_gradient(R_bar, stats):
    R_bar = _herm(R_bar)
    shared = stats.R_RIS.strides[0] == 0
    if shared:
        A = np.einsum("k,kab->ab", stats.beta_h2, R_bar)
        B = stats.H1.conj().T @ A @ stats.H1
        return np.einsum("ml,l,lm->m", B, stats.theta, stats.R_RIS[0])
    return sum(trace_dR(R_bar[k], stats, k) for k in range(stats.K))


def tangent_component(g, c):
    """Project a Wirtinger gradient onto the tangent space of the unit circle."""
    return g - np.real(g * np.conj(c)) * c


def phase_derivative(g, c):
    """df/dtheta_l for c_l = exp(j theta_l)."""
    return 2.0 * np.real(np.conj(g) * 1j * c)


def _scalar_backward(sc, omega, p, M, rho):
    """Pull dJ/dgamma back to (Gbar, Pbar, sbar, dbar)."""
    nb, K = sc.delta.shape
    gamma, D, ok = sinr_from_tables(p, sc.q, sc.C)
    om = np.where(ok, omega, 0.0)
    Dsafe = np.where(ok, D, 1.0)
    qbar = om * p[None, :] / Dsafe
    nu = -om * gamma / Dsafe
    Cbar = nu[:, :, None] * p[None, None, :]

    eye = np.eye(K, dtype=bool)
    Cb_off = np.where(eye[None], 0.0, Cbar)
    Cb_diag = np.diagonal(Cbar, axis1=1, axis2=2)
    a2, a4, e, c, h, g = sc.a2, sc.a4, sc.e, sc.c, sc.h, sc.g
    b_diag = np.diagonal(sc.b, axis1=1, axis2=2)

    gbar = np.sum(Cb_off * h[:, None, :] * sc.E, axis=2)
    hbar = np.sum(Cb_off * g[:, :, None] * sc.E, axis=1)
    Ebar = Cb_off * g[:, :, None] * h[:, None, :]
    dtbar = Cb_diag
    debar = Cb_diag * sc.r
    dlbar = Cb_diag * sc.inv_a4 * b_diag / (M * rho) + np.sum(Ebar * sc.b, axis=1) / (M * rho)
    Qxbar = Ebar * a2[:, None, :]

    dbar = np.where(sc.valid, 2.0 * sc.delta * qbar, 0.0)
    dbar += gbar * 2.0 * (1.0 + e) * a2 * sc.inv_a4
    dbar += hbar * (-2.0 * a2 / (1.0 + e) ** 3)

    zbar = Qxbar.copy()
    mubar = -(a4 * sc.qt)[:, :, None] * Qxbar
    qtbar = -a4 * np.sum(Qxbar * sc.mu, axis=2)
    dbar += qtbar * 2.0 / (1.0 + e) ** 3
    idx = np.arange(K)
    zbar[:, idx, idx] += dtbar + debar
    mubar[:, idx, idx] -= dtbar

    P, G, mu, A = sc.P, sc.G, sc.mu, sc.Amat
    cmu = c[:, :, None] * mu
    Pbar = zbar + zbar @ np.swapaxes(cmu, 1, 2)
    PtZ = np.swapaxes(P, 1, 2) @ zbar
    mubar = mubar + c[:, :, None] * PtZ
    cbar = np.einsum("nij,nij->ni", PtZ, mu)            # diag(P^T zbar mu^T)

    At = np.swapaxes(A, 1, 2)
    sbar = np.einsum("nlk,nl->nk", A, dlbar)
    Abar = dlbar[:, :, None] * sc.s[:, None, :]
    Gbar = At @ mubar
    Abar = Abar + mubar @ np.swapaxes(G, 1, 2)
    Gbar = Gbar + (At @ Abar @ At) * c[:, None, :]
    cbar = cbar + np.einsum("nii->ni", A @ np.swapaxes(Abar, 1, 2) @ A @ G)
    dbar += cbar * (-2.0 * a4 * a2 / (1.0 + e) ** 3)
    return Gbar, Pbar, sbar, dbar


def _matrix_backward(ch, est, Gbar, Pbar, sbar, dbar):
    """Matrix sensitivities of one chunk; returns (Phi_bar, R_bar) summed over rows."""
    Phi, R = est.Phi, est.R
    K, M = Phi.shape[0], Phi.shape[-1]
    T, TPhi, Nm, sc = ch.T, ch.TPhi, ch.Nm, ch.sc
    eye = np.eye(M)
    X = (_combine(np.swapaxes(Gbar, 1, 2), Phi) + _combine(np.swapaxes(Pbar, 1, 2), R)) / M**2
    X = X + (sbar / M)[:, :, None, None] * eye
    W = X @ TPhi
    Tbar = np.sum(W + np.conj(np.swapaxes(W, -1, -2)), axis=1)
    Phi_bar = T[:, None] @ X @ T[:, None]
    Phi_bar = Phi_bar + _combine(Gbar, Nm) / M**2
    R_bar = _combine(Pbar, Nm).sum(axis=0) / M**2

    # implicit differentiation of delta = phi(delta, Phi)
    c = sc.c
    d = dbar + c / M * _pair_traces(Tbar[:, None], Nm)[:, 0, :]
    lam = np.linalg.solve(np.eye(K)[None] - c[:, :, None] * sc.G, d[..., None])[..., 0]
    Tbar_tot = Tbar + _combine(lam[:, None, :], Phi)[:, 0] / M
    Ybar = -T @ Tbar_tot @ T
    w = sc.a2 / (M * (1.0 + sc.e))
    Phi_bar = Phi_bar + w[:, :, None, None] * Ybar[:, None] + (lam / M)[:, :, None, None] * T[:, None]
    return Phi_bar.sum(axis=0), R_bar


def _phi_to_R(Phi_bar, est):
    """Pull Phi_bar back through Phi_k = t_k R_k Q_k R_k with Q_k = (R_k + s I)^{-1}."""
    t = est.alpha_train**2
    Pb = _herm(Phi_bar)
    RQ = est.R @ est.Q
    QR = np.conj(np.swapaxes(RQ, -1, -2))
    out = QR @ Pb + Pb @ RQ - QR @ Pb @ RQ
    return t[:, None, None] * out


def backward(stats, est, cfg, p, weight_fn, times=None, reading="per-user", delta0=None):
    """Generic reverse sweep.

    ``weight_fn(gamma_rows, mult_rows)`` returns dJ/dgamma for a block of
    distinct alpha rows, where ``mult_rows`` counts how many data times share
    each row.
    """
    p = np.asarray(p, dtype=float)
    times, a_rows, ab2_rows, inv = _alpha_rows(est, cfg, times)
    mult = np.bincount(inv, minlength=a_rows.shape[0]).astype(float)
    if delta0 is not None and np.shape(delta0) != a_rows.shape:
        delta0 = None
    row_delta = np.empty(a_rows.shape)
    K, M = est.K, est.M
    Phi_bar = np.zeros((K, M, M), dtype=complex)
    R_bar = np.zeros((K, M, M), dtype=complex)
    value = 0.0
    for ch in iter_chunks(est, cfg, a_rows, ab2_rows, reading=reading, delta0=delta0):
        row_delta[ch.rows] = ch.delta
        gamma = sinr_from_tables(p, ch.sc.q, ch.sc.C)[0]
        omega, val = weight_fn(gamma, mult[ch.rows], ch.rows)
        value += val
        if not np.any(omega):
            continue
        Gb, Pb, sb, db = _scalar_backward(ch.sc, omega, p, M, cfg.rho)
        dPhi, dR = _matrix_backward(ch, est, Gb, Pb, sb, db)
        Phi_bar += dPhi
        R_bar += dR
    R_bar = _herm(R_bar + _phi_to_R(Phi_bar, est))
    return GradientWorkspace(R_bar=R_bar, Phi_bar=_herm(Phi_bar),
                             grad=_phase_gradient(R_bar, stats), value=value,
                             row_delta=row_delta)


def value_and_grad_sum_se(p, stats, est, cfg, reading="per-user", delta0=None,
                          workspace=False):
    """DE sum SE and its Wirtinger gradient dSE/dc*.

    With ``workspace=True`` the third return value is the full
    :class:`GradientWorkspace`.
    """
    scale = 1.0 / (cfg.tau_c * math.log(2.0))

    def weights(gamma, mult, rows):
        val = float(np.sum(mult[:, None] * np.log2(1.0 + gamma)) / cfg.tau_c)
        return mult[:, None] * scale / (1.0 + gamma), val

    ws = backward(stats, est, cfg, p, weights, reading=reading, delta0=delta0)
    g = tangent_component(ws.grad, stats.theta)
    return (ws.value, g, ws) if workspace else (ws.value, g)


def grad_sum_se(p, stats, est, cfg, reading="per-user"):
    """sum_{k,n} grad gamma_{k,n} / (tau_c ln2 (1 + gamma_{k,n})) as dSE/dc*."""
    return value_and_grad_sum_se(p, stats, est, cfg, reading)[1]


def grad_de_sinr(k, n, p, stats, est, cfg, reading="per-user"):
    """d gamma_{k,n} / dc* for one UE and one data time."""
    def weights(gamma, mult, rows):
        om = np.zeros_like(gamma)
        om[:, k] = 1.0
        return om, float(gamma[0, k])

    ws = backward(stats, est, cfg, p, weights, times=[n], reading=reading)
    return tangent_component(ws.grad, stats.theta)


# -- forward-mode check of the fixed point --------------------------------------------

def directional_fixed_point(Phi, alpha_data, reg_alpha, dPhi, Z=None):
    """Directional derivatives (d delta, dT, d(T^{-1})) along a perturbation dPhi.

    d(T^{-1}) = (1/M) sum_i [a_i^2/(1+e_i) dPhi_i - c_i d delta_i Phi_i], and
    dT = -T d(T^{-1}) T.
    """
    from .de_engine import _fixed_point

    Phi = np.asarray(Phi, dtype=complex)
    a2 = np.asarray(alpha_data, dtype=float) ** 2
    K, M = Phi.shape[0], Phi.shape[-1]
    T, TPhi, delta, G, _, _ = _fixed_point(Phi, a2[None], reg_alpha, Z)
    T, delta, G = T[0], delta[0], G[0]
    e = a2 * delta
    w = a2 / (1.0 + e)
    c = a2**2 / (1.0 + e) ** 2
    dY_phi = np.einsum("i,iab->ab", w, dPhi) / M
    rhs = (_tr(dPhi @ T[None]).real - _tr(Phi @ (T @ dY_phi @ T)[None]).real) / M
    ddelta = np.linalg.solve(np.eye(K) - G * c[None, :], rhs)
    dY = dY_phi - np.einsum("i,iab->ab", c * ddelta, Phi) / M
    dT = -T @ dY @ T
    return ddelta, dT, dY, T, delta
