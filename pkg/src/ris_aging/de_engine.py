"""Deterministic-equivalent SINR and sum SE with RZF precoding under aging.

Notation (per data time n, with a_i = alpha_{i,n-K} and e_i = a_i^2 delta_i):

* T = ((1/M) sum_i a_i^2 Phi_i / (1 + e_i) + Z/M + alpha I)^{-1},
  delta_k = (1/M) tr(Phi_k T).
* c_i = a_i^4 / (1 + e_i)^2 and G_kl = tr(Phi_k T Phi_l T) / M^2; the
  Jacobian of the fixed point map is F = G diag(c).
* T~(B) = T B T + (1/M) sum_i c_i x_i T Phi_i T with (I - F) x = f,
  f_k = (1/M) tr(Phi_k T B T).

Every trace of T~ that enters the SINR reduces to three small tables,
G, P_kl = tr(R_k T Phi_l T)/M^2 and s_l = tr(Phi_l T^2)/M:

    mu = (I - G C)^{-1} G,  zeta = P (I + C mu),  delta_lambda = (I - G C)^{-1} s.

The SINR is written as gamma_k = p_k delta_k^2 / (C_coef p)_k, so the power
block only needs the (q, C_coef) tables and gamma is degree-0 homogeneous in p.
"""

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .errors import ConditioningError, ConvergenceError, DomainError

ALPHA_FLOOR = 1e-9
_WORKSPACE = 3_000_000   # complex entries allowed in one (n, K, M, M) workspace


def _herm(X):
    return 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))


def _tr(X):
    return np.einsum("...ii->...", X)


def _combine(W, S):
    """sum_k W[..., j, k] S[..., k, :, :] as one matmul; returns (..., J, M, M)."""
    M = S.shape[-1]
    flat = S.reshape(S.shape[:-2] + (M * M,))
    out = W.astype(flat.dtype) @ flat
    return out.reshape(out.shape[:-1] + (M, M))


def _pair_traces(A, B):
    """Re tr(A_k B_l) for stacks A (..., K, M, M) and Hermitian B (..., L, M, M)."""
    K, M = A.shape[-3], A.shape[-1]
    a = A.reshape(A.shape[:-2] + (M * M,))
    b = np.conj(B).reshape(B.shape[:-2] + (M * M,))
    return (a @ np.swapaxes(b, -1, -2)).real


def _pair_traces_T(A, B):
    """Re tr(A_k B_l) for general (non-Hermitian) stacks: sum A_k[a,b] B_l[b,a]."""
    M = A.shape[-1]
    a = A.reshape(A.shape[:-2] + (M * M,))
    b = np.swapaxes(B, -1, -2).reshape(B.shape[:-2] + (M * M,))
    return (a @ np.swapaxes(b, -1, -2)).real


# -- fixed point ----------------------------------------------------------------

def _fixed_point(Phi, a2, reg_alpha, Z=None, tol=1e-12, max_iter=10000, delta0=None):
    """Solve delta = phi(delta) for a batch of alpha vectors.

    Newton steps (I - F) d = phi(delta) - delta with a fallback to the plain
    update. Starting from tr(Phi)/(M alpha), an upper bound of the solution.

    Returns T (n, M, M), TPhi (n, K, M, M), delta (n, K), G (n, K, K),
    iterations and the final relative residual.
    """
    K, M = Phi.shape[0], Phi.shape[-1]
    nb = a2.shape[0]
    trphi = _tr(Phi).real
    active = trphi > 0
    if delta0 is None:
        delta = np.broadcast_to(trphi / (M * reg_alpha), (nb, K)).copy()
    else:
        delta = np.array(np.broadcast_to(delta0, (nb, K)), dtype=float)
    base = reg_alpha * np.eye(M, dtype=complex)
    if Z is not None:
        base = base + Z / M
    eye_k = np.eye(K)
    prev = math.inf
    for it in range(1, max_iter + 1):
        e = a2 * delta
        w = a2 / (1.0 + e)
        Y = base[None] + _combine(w[:, None, :], Phi)[:, 0] / M
        T = _herm(np.linalg.inv(Y))
        TPhi = T[:, None] @ Phi[None]
        phi = _tr(TPhi).real / M
        G = _pair_traces_T(TPhi, TPhi) / M**2
        diff = phi - delta
        scale = np.maximum(np.abs(delta), 1e-300)
        resid = float(np.max(np.where(active[None], np.abs(diff) / scale, np.abs(diff)), initial=0.0))
        if not np.isfinite(resid):
            raise ConvergenceError("fixed point diverged", resid, it)
        if resid < tol and (resid == 0.0 or resid > 0.25 * prev or resid < 1e-15):
            return T, TPhi, delta, G, it, resid
        prev = resid
        c = a2**2 / (1.0 + e) ** 2
        F = G * c[:, None, :]
        try:
            step = np.linalg.solve(eye_k[None] - F, diff[..., None])[..., 0]
            new = delta + step
        except np.linalg.LinAlgError:
            new = phi
        bad = ~np.all(np.isfinite(new) & (new >= 0), axis=1)
        new[bad] = phi[bad]
        delta = np.where(active[None], new, 0.0)
    raise ConvergenceError(f"fixed point not converged after {max_iter} iterations",
                           resid, max_iter)


def solve_T(Phi, alpha_data, reg_alpha, Z=None, tol=1e-12, max_iter=10000):
    """Fixed point T and delta for one data time.

    Parameters
    ----------
    Phi : ndarray (K, M, M)
        Estimate covariances.
    alpha_data : ndarray (K,)
        Data-phase correlations alpha_{i,n-K}.
    reg_alpha : float
        RZF regulariser alpha > 0.
    Z : ndarray (M, M), optional
        RZF shift matrix.

    Returns
    -------
    T : ndarray (M, M)
    delta : ndarray (K,)
    """
    if not reg_alpha > 0:
        raise DomainError("reg_alpha must be strictly positive")
    Phi = np.asarray(Phi, dtype=complex)
    a2 = np.asarray(alpha_data, dtype=float)[None, :] ** 2
    T, _, delta, _, _, _ = _fixed_point(Phi, a2, reg_alpha, Z, tol, max_iter)
    return T[0], delta[0]


def solve_Ttilde(T, Phi, alpha_data, arg_L, delta=None):
    """T~(L) and its coefficient vector x for one data time.

    Solves (I - F) x = f with F_ki = c_i tr(Phi_k T Phi_i T)/M^2 and
    f_k = tr(Phi_k T L T)/M, then T~ = T L T + (1/M) sum_i c_i x_i T Phi_i T.
    """
    Phi = np.asarray(Phi, dtype=complex)
    K, M = Phi.shape[0], Phi.shape[-1]
    a2 = np.asarray(alpha_data, dtype=float) ** 2
    if delta is None:
        delta = _tr(T[None] @ Phi).real / M
    c = a2**2 / (1.0 + a2 * delta) ** 2
    N = T[None] @ Phi @ T[None]
    F = _pair_traces(Phi, N) / M**2 * c[None, :]
    rad = np.max(np.abs(np.linalg.eigvals(F))) if K else 0.0
    if not rad < 1.0:
        raise ConditioningError(f"spectral radius of F is {rad:.3g} >= 1")
    TLT = T @ arg_L @ T
    f = _pair_traces(Phi, TLT[None])[:, 0] / M
    x = np.linalg.solve(np.eye(K) - F, f)
    Tt = TLT + np.einsum("i,iab->ab", c * x, N) / M
    return _herm(Tt), x


# -- scalar stage -----------------------------------------------------------------

def _scalar_stage(G, P, s, delta, a, abar2, M, rho, reading="per-user"):
    """All K x K quantities and the SINR for a batch of data times."""
    nb, K = delta.shape
    a2 = a**2
    a4 = a2**2
    e = a2 * delta
    c = a4 / (1.0 + e) ** 2
    valid = np.abs(a) >= ALPHA_FLOOR
    inv_a4 = np.where(valid, 1.0 / np.where(valid, a4, 1.0), 0.0)
    r = np.where(valid, abar2 / np.where(valid, a2, 1.0), 0.0)
    eye_k = np.eye(K)
    Amat = np.linalg.inv(eye_k[None] - G * c[:, None, :])
    if not np.all(np.isfinite(Amat)):
        raise ConditioningError("I - F is singular")
    mu = Amat @ G
    zeta = P + P @ (c[:, :, None] * mu)
    dl = np.einsum("nkl,nl->nk", Amat, s)
    zd = np.diagonal(zeta, axis1=1, axis2=2)
    md = np.diagonal(mu, axis1=1, axis2=2)
    dt = zd - md
    de = zd.copy()
    qt = (2.0 * delta + a2 * delta**2) / (1.0 + e) ** 2
    Qx = zeta - (a4 * qt)[:, :, None] * mu          # Qx[k, i] = Q_{ik}
    g = (1.0 + e) ** 2 * inv_a4
    h = 1.0 / (1.0 + e) ** 2
    if reading == "per-user":
        b = np.broadcast_to(a2[:, None, :], (nb, K, K))
    elif reading == "receiver":
        b = np.broadcast_to(a2[:, :, None], (nb, K, K))
    else:
        raise DomainError(f"unknown lambda reading {reading!r}")
    E = a2[:, None, :] * Qx + b * dl[:, None, :] / (M * rho)
    C = g[:, :, None] * h[:, None, :] * E
    diag = dt + r * de + inv_a4 * np.diagonal(b, axis1=1, axis2=2) * dl / (M * rho)
    idx = np.arange(K)
    C[:, idx, idx] = diag
    C[~valid] = 0.0
    q = np.where(valid, delta**2, 0.0)
    return SimpleNamespace(a=a, a2=a2, a4=a4, e=e, c=c, valid=valid, inv_a4=inv_a4, r=r,
                           Amat=Amat, mu=mu, zeta=zeta, dl=dl, dt=dt, de=de, qt=qt, Qx=Qx,
                           g=g, h=h, b=b, E=E, C=C, q=q, delta=delta, G=G, P=P, s=s)


def sinr_from_tables(p, q, C):
    """gamma = p q / (C p) with zero where the denominator vanishes."""
    p = np.asarray(p, dtype=float)
    D = C @ p
    num = p * q
    ok = (D > 0) & (num > 0)
    gamma = np.where(ok, num / np.where(ok, D, 1.0), 0.0)
    return gamma, D, ok


# -- batched evaluation over data times ---------------------------------------------

@dataclass
class Chunk:
    """Forward state of one block of distinct alpha vectors."""

    rows: np.ndarray
    a: np.ndarray
    abar2: np.ndarray
    T: np.ndarray
    TPhi: np.ndarray
    Nm: np.ndarray
    delta: np.ndarray
    iterations: int
    residual: float
    sc: SimpleNamespace = field(repr=False)


def data_times(cfg):
    return np.arange(cfg.K + 1, cfg.tau_c + 1)


def _alpha_rows(est, cfg, times=None, stride=1):
    """Distinct (alpha, alpha_bar) rows over the data times and their inverse map."""
    times = data_times(cfg) if times is None else np.asarray(times)
    if np.any(times < cfg.K + 1) or np.any(times > cfg.tau_c):
        raise DomainError("data times must lie in K+1..tau_c")
    a = est.profile.data_alpha(times, cfg.K).reshape(len(times), -1)
    ab = est.profile.data_alpha_bar(times, cfg.K).reshape(len(times), -1)
    if stride > 1:
        anchor = (np.arange(len(times)) // stride) * stride
        a, ab = a[anchor], ab[anchor]
    key = np.concatenate([a, ab], axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    K = a.shape[1]
    return times, uniq[:, :K], uniq[:, K:] ** 2, inverse.reshape(-1)


def iter_chunks(est, cfg, a_rows, abar2_rows, tol=1e-12, reading="per-user", delta0=None):
    """Yield :class:`Chunk` objects covering ``a_rows`` block by block."""
    Phi, R = est.Phi, est.R
    K, M = Phi.shape[0], Phi.shape[-1]
    size = max(1, _WORKSPACE // max(1, K * M * M))
    Z = cfg.Z if cfg.has_Z else None
    for start in range(0, a_rows.shape[0], size):
        rows = np.arange(start, min(start + size, a_rows.shape[0]))
        a = a_rows[rows]
        d0 = None if delta0 is None else delta0[rows]
        T, TPhi, delta, G, it, res = _fixed_point(Phi, a**2, cfg.alpha_reg, Z, tol,
                                                  delta0=d0)
        Nm = TPhi @ T[:, None]
        P = _pair_traces(R[None], Nm) / M**2
        s = _tr(Nm).real / M
        sc = _scalar_stage(G, P, s, delta, a, abar2_rows[rows], M, cfg.rho, reading)
        yield Chunk(rows, a, abar2_rows[rows], T, TPhi, Nm, delta, it, res, sc)


@dataclass
class DeTables:
    """SINR tables over the data times (rows follow ``times``)."""

    times: np.ndarray
    q: np.ndarray        # (N, K)
    C: np.ndarray        # (N, K, K)
    delta: np.ndarray    # (N, K)
    residual: float
    iterations: int
    row_delta: np.ndarray = None   # delta per distinct alpha row (warm-start data)

    def gamma(self, p):
        return sinr_from_tables(p, self.q, self.C)[0]


def de_tables(stats, est, cfg, times=None, stride=1, tol=1e-12, reading="per-user",
              delta0=None):
    """Power-independent (q, C) tables for every data time.

    ``delta0`` (one row per distinct alpha row, e.g. a previous ``row_delta``)
    warm-starts the fixed point. ``reading`` selects the power normalisation:
    "per-user" weights UE i by a_i^2, "receiver" by the receiving UE's a_k^2.
    """
    times, a_rows, ab2_rows, inv = _alpha_rows(est, cfg, times, stride)
    if delta0 is not None and np.shape(delta0) != a_rows.shape:
        delta0 = None
    nu, K = a_rows.shape
    q = np.empty((nu, K))
    C = np.empty((nu, K, K))
    delta = np.empty((nu, K))
    res, its = 0.0, 0
    for ch in iter_chunks(est, cfg, a_rows, ab2_rows, tol, reading, delta0):
        q[ch.rows], C[ch.rows], delta[ch.rows] = ch.sc.q, ch.sc.C, ch.delta
        res, its = max(res, ch.residual), max(its, ch.iterations)
    return DeTables(times, q[inv], C[inv], delta[inv], res, its, delta)


def de_sum_se(p, stats, est, cfg, stride=1, reading="per-user"):
    """Deterministic-equivalent sum SE.

    Returns
    -------
    se : float
        sum_k (1/tau_c) sum_{n=K+1}^{tau_c} log2(1 + gamma_{k,n}) [bit/s/Hz].
    table : ndarray (K, tau_c - K)
        gamma_{k,n}.
    """
    tab = de_tables(stats, est, cfg, stride=stride, reading=reading)
    gamma = tab.gamma(p)
    se = float(np.log2(1.0 + gamma).sum() / cfg.tau_c)
    return se, gamma.T


def de_sinr_at(n, p, stats, est, cfg, reading="per-user"):
    """gamma_{k,n} for every UE at data time n (K+1 <= n <= tau_c)."""
    tab = de_tables(stats, est, cfg, times=[n], reading=reading)
    return tab.gamma(p)[0]


@dataclass
class DeSolution:
    """Full set of deterministic-equivalent quantities at one data time."""

    n: int
    T: np.ndarray
    delta: np.ndarray
    Ttilde_of: dict
    delta_tilde: np.ndarray
    delta_e: np.ndarray
    delta_lambda: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    Q: np.ndarray          # Q[i, k] = Q_{ik}
    C: np.ndarray          # SINR denominator coefficients
    gamma_bar: np.ndarray
    lambda_bar: float
    residual: float
    iterations: int


def de_solution_at(n, p, stats, est, cfg, reading="per-user", with_ttilde=True):
    """Solve the DE at data time n and expose every intermediate quantity.

    ``Ttilde_of`` maps ``"I"`` and each UE index i to T~(I) and T~(Phi_i).
    """
    times, a_rows, ab2_rows, _ = _alpha_rows(est, cfg, [n])
    ch = next(iter_chunks(est, cfg, a_rows, ab2_rows, reading=reading))
    sc = ch.sc
    p = np.asarray(p, dtype=float)
    gamma, _, _ = sinr_from_tables(p, sc.q[0], sc.C[0])
    Tt = {}
    if with_ttilde:
        a = ch.a[0]
        Tt["I"] = solve_Ttilde(ch.T[0], est.Phi, a, np.eye(est.M), ch.delta[0])[0]
        for i in range(est.K):
            Tt[i] = solve_Ttilde(ch.T[0], est.Phi, a, est.Phi[i], ch.delta[0])[0]
    w = sc.a2[0] * sc.dl[0] / (1.0 + sc.e[0]) ** 2
    denom = float(np.dot(p, w)) / est.M
    lam = cfg.P_max / denom if denom > 0 else math.inf
    return DeSolution(n=int(n), T=ch.T[0], delta=ch.delta[0], Ttilde_of=Tt,
                      delta_tilde=sc.dt[0], delta_e=sc.de[0], delta_lambda=sc.dl[0],
                      zeta=sc.zeta[0], mu=sc.mu[0], Q=sc.Qx[0].T, C=sc.C[0],
                      gamma_bar=gamma, lambda_bar=lam, residual=ch.residual,
                      iterations=ch.iterations)
