"""RIS phase design by projected gradient ascent, WMMSE power allocation and
the alternating driver that combines them.

The power block works on power-independent SINR tables: with
gamma_{k,n} = p_k q_{k,n} / (C_n p)_k the WMMSE updates are closed form.
Over a frame the weighted MSE sum runs over every data time n, so the power
update pools the n-terms before the per-user cap.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .de_engine import de_tables
from .errors import DomainError
from .estimation import build_estimation_model
from .gradients import value_and_grad_sum_se

ARMIJO = 1e-4
SHRINK = 0.5
MAX_HALVINGS = 30


@dataclass
class OptState:
    """Current design and its objective trace."""

    c: np.ndarray
    p: np.ndarray
    objective: float
    trace: list = field(default_factory=list)    # (iteration, objective)
    converged: bool = False
    inner: list = field(default_factory=list)    # per-outer-iteration diagnostics

    def check(self, P_max):
        if np.max(np.abs(np.abs(self.c) - 1.0), initial=0.0) > 1e-12:
            raise DomainError("phase vector left the unit circle")
        if np.any(self.p < 0) or self.p.sum() > P_max + 1e-9:
            raise DomainError("power vector violates the budget")


def project_unit_modulus(x):
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    tiny = mag < 1e-300
    return np.where(tiny, 1.0 + 0j, x / np.where(tiny, 1.0, mag))


def backtracking_search(f, c, q, mu0=1.0, f0=None):
    """Armijo step along q followed by projection.

    Returns (step, value at the accepted point); the step is 0 when no
    trial satisfies f(P(c + mu q)) >= f(c) + 1e-4 mu ||q||^2.
    """
    f0 = f(c) if f0 is None else f0
    qn2 = float(np.vdot(q, q).real)
    if qn2 == 0.0:
        return mu0, f0
    mu = mu0
    for _ in range(MAX_HALVINGS + 1):
        val = f(project_unit_modulus(c + mu * q))
        if np.isfinite(val) and val >= f0 + ARMIJO * mu * qn2:
            return mu, val
        mu *= SHRINK
    return 0.0, f0


class _Objective:
    """DE sum SE as a function of the phase vector, with a one-entry cache."""

    def __init__(self, stats, est, p, cfg, reading):
        self.stats, self.est, self.p, self.cfg, self.reading = stats, est, p, cfg, reading
        self.evaluations = 0
        self._key = None
        self._val = None
        self.row_delta = None     # warm start for the next fixed point

    def models(self, c):
        stats_c = self.stats.with_theta(c)
        return stats_c, build_estimation_model(stats_c, self.cfg, self.est.profile)

    def __call__(self, c):
        key = np.asarray(c).tobytes()
        if key != self._key:
            stats_c, est_c = self.models(c)
            tab = de_tables(stats_c, est_c, self.cfg, reading=self.reading,
                            delta0=self.row_delta)
            self._val = float(np.log2(1.0 + tab.gamma(self.p)).sum() / self.cfg.tau_c)
            self._key = key
            self.evaluations += 1
        return self._val

    def value_and_grad(self, c):
        stats_c, est_c = self.models(c)
        val, g, ws = value_and_grad_sum_se(self.p, stats_c, est_c, self.cfg, self.reading,
                                           delta0=self.row_delta, workspace=True)
        self._key, self._val = np.asarray(c).tobytes(), val
        self.row_delta = ws.row_delta
        return val, g


def pga_rbm(stats, est, p, cfg, eps=1e-6, max_iter=100, c0=None, reading="per-user"):
    """Projected gradient ascent of the DE sum SE over the RIS phases.

    Starts at ``c0`` (default j * 1_L) and stops once the objective gains
    less than ``eps`` in one iteration. The first line search starts at
    max(1, 1/max|q|), so its first trial moves some phase by an O(1) amount;
    later searches start at twice the previous accepted step.
    """
    if not eps > 0:
        raise DomainError("eps must be strictly positive")
    p = np.asarray(p, dtype=float)
    c = project_unit_modulus(np.full(stats.L, 1j) if c0 is None else c0)
    obj = _Objective(stats, est, p, cfg, reading)
    val, q = obj.value_and_grad(c)
    trace = [(0, val)]
    converged = False
    last = None
    for it in range(1, max_iter + 1):
        qmax = float(np.max(np.abs(q), initial=0.0))
        if qmax == 0.0:
            converged = True
            break
        mu0 = max(1.0, 1.0 / qmax) if last is None else 2.0 * last
        step, new_val = backtracking_search(obj, c, q, mu0, f0=val)
        if step == 0.0:
            converged = True
            break
        last = step
        c = project_unit_modulus(c + step * q)
        gain = new_val - val
        val = new_val
        trace.append((it, val))
        if gain < eps:
            converged = True
            break
        val, q = obj.value_and_grad(c)
    return OptState(c=c, p=p.copy(), objective=val, trace=trace, converged=converged,
                    inner=[{"evaluations": obj.evaluations}])


# -- WMMSE power block -----------------------------------------------------------------

def wmmse_v(p, q_coeffs, c_coeffs):
    """Receive coefficients v_k = sqrt(p_k q_k) / (p_k q_k + (C p)_k).

    Accepts a single time (q: (K,), C: (K, K)) or a stack over times.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q_coeffs, dtype=float)
    C = np.asarray(c_coeffs, dtype=float)
    num = np.sqrt(p * q)
    den = p * q + C @ p
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def wmmse_mse(p, v, q_coeffs, c_coeffs):
    """e_k = 1 - 2 v_k sqrt(p_k q_k) + v_k^2 (p_k q_k + (C p)_k)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q_coeffs, dtype=float)
    C = np.asarray(c_coeffs, dtype=float)
    return 1.0 - 2.0 * v * np.sqrt(p * q) + v**2 * (p * q + C @ p)


def wmmse_d(e):
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0):
        raise DomainError("MSE weights need e_k > 0")
    return 1.0 / e


def wmmse_p(v, d, q_coeffs, c_coeffs, P_max, rescale=True):
    """Closed-form power update.

    p_k = min(P_max, (sum_n d_k v_k sqrt(q_k))^2
                     / (sum_n [d_k v_k^2 q_k + sum_i d_i v_i^2 C_ik])^2),
    the sums over n collapsing for single-time input. With ``rescale`` the
    result is scaled down uniformly when sum_k p_k exceeds P_max.
    """
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    q = np.asarray(q_coeffs, dtype=float)
    C = np.asarray(c_coeffs, dtype=float)
    if v.ndim == 1:
        v, d, q, C = v[None], d[None], q[None], C[None]
    w = d * v**2
    num = np.sum(d * v * np.sqrt(q), axis=0)
    den = np.sum(w * q, axis=0) + np.einsum("ni,nik->k", w, C)
    p = np.where(den > 0, np.minimum(P_max, (num / np.where(den > 0, den, 1.0)) ** 2), P_max)
    total = p.sum()
    if rescale and total > P_max:
        p = p * (P_max / total)
    return p


def wmmse_power(q_coeffs, c_coeffs, p0, P_max, tol=1e-9, max_iter=20000):
    """Iterate the v, d, p blocks until p settles; returns (p, weighted-MSE trace).

    Per-user caps are applied inside the loop; the sum-power rescale is
    applied once at the end, which leaves every SINR unchanged.
    """
    p = np.asarray(p0, dtype=float).copy()
    trace = []
    for _ in range(max_iter):
        v = wmmse_v(p, q_coeffs, c_coeffs)
        e = wmmse_mse(p, v, q_coeffs, c_coeffs)
        good = e > 0
        d = np.where(good, 1.0 / np.where(good, e, 1.0), 1.0)
        trace.append(float(np.sum(d * e - np.log(d))))
        new = wmmse_p(v, d, q_coeffs, c_coeffs, P_max, rescale=False)
        change = np.max(np.abs(new - p)) / max(np.max(np.abs(p)), 1e-300)
        p = new
        if change < tol:
            break
    total = p.sum()
    if total > P_max:
        p = p * (P_max / total)
    return p, trace


def alternating_optimize(stats, est, cfg, eps=1e-4, max_outer=50, c0=None, pga_rtol=1e-5,
                         pga_max_iter=10, reading="per-user"):
    """Alternate the phase block and the power block until the DE sum SE settles.

    Each phase block starts from the previous phases and stops on a gain
    below ``pga_rtol`` times the objective, so the objective trace cannot
    decrease. Returns the best iterate.
    """
    p = np.full(stats.K, cfg.P_max / stats.K)
    c = project_unit_modulus(np.full(stats.L, 1j) if c0 is None else c0)
    trace = []
    inner = []
    best = None
    prev = None
    converged = False
    scale = 1.0
    for it in range(1, max_outer + 1):
        st = pga_rbm(stats, est, p, cfg, eps=pga_rtol * scale, max_iter=pga_max_iter, c0=c,
                     reading=reading)
        scale = max(abs(st.objective), 1e-12)
        c = st.c
        stats_c = stats.with_theta(c)
        est_c = build_estimation_model(stats_c, cfg, est.profile)
        tab = de_tables(stats_c, est_c, cfg, reading=reading)
        p_new, mse_trace = wmmse_power(tab.q, tab.C, p, cfg.P_max)
        val_new = float(np.log2(1.0 + tab.gamma(p_new)).sum() / cfg.tau_c)
        if val_new >= st.objective:
            p, val = p_new, val_new
        else:
            val = st.objective      # power step did not help; keep the old powers
        trace.append((it, val))
        inner.append({"pga_iterations": len(st.trace) - 1, "pga_objective": st.objective,
                      "wmmse_iterations": len(mse_trace)})
        if best is None or val >= best[0]:
            best = (val, c.copy(), p.copy())
        if prev is not None and abs(val - prev) <= eps * max(abs(prev), 1e-300):
            converged = True
            break
        prev = val
    val, c, p = best
    return OptState(c=c, p=p, objective=val, trace=trace, converged=converged, inner=inner)
