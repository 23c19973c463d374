"""Spatial correlation, LoS BS-RIS channel, Jakes aging and channel sampling."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import DomainError
from .special import j0


def jakes_alpha(fD_Ts, n):
    """Temporal correlation J0(2*pi*fD_Ts*n).

    Broadcasts over both arguments. ``fD_Ts`` must be nonnegative.
    """
    if np.any(np.asarray(fD_Ts) < 0):
        raise DomainError("fD_Ts must be nonnegative")
    return j0(2.0 * math.pi * np.asarray(fD_Ts, dtype=float) * np.asarray(n, dtype=float))


def bs_correlation(M, nominal_angle, spread, spacing=0.5, n_nodes=None):
    """Local-scattering covariance of a ULA.

    ``[R]_{a,b} = (1/(2*spread)) * int exp(j 2pi spacing (a-b) sin(phi)) dphi``
    over ``phi in [nominal_angle - spread, nominal_angle + spread]``.

    Parameters
    ----------
    M : int
        Number of antennas.
    nominal_angle, spread : float
        Centre and half-width of the angular support [rad].
    spacing : float
        Antenna spacing in wavelengths.
    n_nodes : int, optional
        Gauss-Legendre nodes; defaults to a count that resolves the
        fastest oscillation of the integrand.
    """
    if not spread > 0:
        raise DomainError("angular spread must be strictly positive")
    if M < 1:
        raise DomainError("M must be positive")
    if n_nodes is None:
        cycles = spacing * (M - 1) * min(2.0 * spread, 2.0 * math.pi)
        n_nodes = int(max(64, 4 * cycles + 64))
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    phi = nominal_angle + spread * x
    lag = np.arange(M)
    col = (w[None, :] * np.exp(2j * math.pi * spacing * lag[:, None] * np.sin(phi)[None, :])).sum(1) / 2.0
    col[0] = 1.0
    return toeplitz(col, col.conj())


def ris_grid(L, d_H, d_V):
    """Element centres of the most-square rectangular grid holding L elements.

    Returns an (L, 2) array of (horizontal, vertical) coordinates.
    """
    rows = max(r for r in range(1, int(math.isqrt(L)) + 1) if L % r == 0)
    cols = L // rows
    i = np.arange(L)
    return np.column_stack([(i % cols) * d_H, (i // cols) * d_V]).astype(float)


def ris_correlation(positions, wavelength):
    """Isotropic-scattering RIS correlation sinc(2||u_m - u_n||/lambda)."""
    if not wavelength > 0:
        raise DomainError("wavelength must be strictly positive")
    pos = np.asarray(positions, dtype=float)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return np.sinc(2.0 * dist / wavelength).astype(complex)


def geometry_angles(cfg):
    """Angles implied by a fixed BS/RIS placement.

    The BS ULA lies on the y axis starting at the origin; the RIS centre sits
    at distance r1 and azimuth ``cfg.ris_azimuth`` in the horizontal plane with
    its aperture facing the BS. Returns (theta1, phi1, theta2, phi2): the
    elevation/azimuth of every RIS element seen from the BS (length L) and of
    every BS antenna seen from the RIS centre (length M).
    """
    d_h, d_v = cfg.element_size
    grid = ris_grid(cfg.L, d_h, d_v)
    grid = grid - grid.mean(axis=0)
    az = cfg.ris_azimuth
    centre = cfg.r1 * np.array([math.cos(az), math.sin(az), 0.0])
    tangent = np.array([-math.sin(az), math.cos(az), 0.0])
    elements = centre[None] + grid[:, :1] * tangent[None] + grid[:, 1:] * np.array([0.0, 0.0, 1.0])
    antennas = np.column_stack([np.zeros(cfg.M), np.arange(cfg.M) * cfg.bs_spacing, np.zeros(cfg.M)])

    def polar(v):
        r = np.linalg.norm(v, axis=-1)
        return np.arccos(np.clip(v[:, 2] / r, -1.0, 1.0)), np.arctan2(v[:, 1], v[:, 0])

    theta1, phi1 = polar(elements - antennas[0][None])
    theta2, phi2 = polar(antennas - centre[None])
    return theta1, phi1, theta2, phi2


def los_channel(cfg, angles=None):
    """Deterministic LoS BS-RIS channel H1 (M x L).

    ``[H1]_{m,l} = sqrt(beta_1) exp(j 2pi/lambda [(m-1) d_BS sin(theta1_l) sin(phi1_l)
    + (l-1) d_H sin(theta2_m) sin(phi2_m)])``.
    """
    theta1, phi1, theta2, phi2 = geometry_angles(cfg) if angles is None else angles
    theta1, phi1 = np.asarray(theta1, float), np.asarray(phi1, float)
    theta2, phi2 = np.asarray(theta2, float), np.asarray(phi2, float)
    if theta1.shape != (cfg.L,) or phi1.shape != (cfg.L,):
        raise DomainError("AoD arrays must have length L")
    if theta2.shape != (cfg.M,) or phi2.shape != (cfg.M,):
        raise DomainError("AoA arrays must have length M")
    k = 2.0 * math.pi / cfg.wavelength
    m = np.arange(cfg.M)[:, None]
    l = np.arange(cfg.L)[None, :]
    d_h, _ = cfg.element_size
    phase = k * (m * cfg.bs_spacing * (np.sin(theta1) * np.sin(phi1))[None, :]
                 + l * d_h * (np.sin(theta2) * np.sin(phi2))[:, None])
    return math.sqrt(cfg.beta_1) * np.exp(1j * phase)


def psd_sqrt(R):
    """Hermitian square root with eigenvalues below -1e-12*lambda_max clipped to zero.

    Small positive eigenvalues are kept, so ``S @ S.conj().T`` reproduces R.
    """
    R = 0.5 * (R + np.conj(R).T)
    w, V = np.linalg.eigh(R)
    w = np.where(w > 0, w, 0.0)
    return (V * np.sqrt(w)[None, :]) @ V.conj().T


@dataclass
class AgingProfile:
    """Temporal correlation alpha[k, m] between channel uses m apart.

    Column m holds lag m, for m = 0..tau_c-1; column 0 is 1.
    """

    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(np.abs(self.alpha) > 1.0 + 1e-15):
            raise DomainError("|alpha| must not exceed 1")
        if self.alpha_bar is None:
            self.alpha_bar = np.sqrt(np.clip(1.0 - self.alpha**2, 0.0, None))
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=float)

    @classmethod
    def from_alpha(cls, alpha):
        return cls(alpha, None)

    @classmethod
    def from_doppler(cls, fd_ts, tau_c, convention="per-index"):
        """Jakes profile for per-UE normalised Doppler ``fd_ts``.

        ``per-index``: lag m gets J0(2 pi fd_ts m).
        ``per-symbol``: every nonzero lag gets J0(2 pi fd_ts), i.e. the
        Doppler axis is read as already normalised by the lag.
        """
        fd_ts = np.atleast_1d(np.asarray(fd_ts, dtype=float))
        lags = np.arange(tau_c, dtype=float)
        if convention == "per-index":
            alpha = jakes_alpha(fd_ts[:, None], lags[None, :])
        elif convention == "per-symbol":
            alpha = np.repeat(jakes_alpha(fd_ts, 1.0)[:, None], tau_c, axis=1)
            alpha[:, 0] = 1.0
        else:
            raise DomainError(f"unknown Doppler convention {convention!r}")
        return cls.from_alpha(alpha)

    @classmethod
    def static(cls, K, tau_c):
        return cls.from_alpha(np.ones((K, tau_c)))

    @classmethod
    def for_config(cls, cfg):
        return cls.from_doppler(cfg.fd_ts, cfg.tau_c, cfg.doppler_convention)

    @property
    def K(self):
        return self.alpha.shape[0]

    @property
    def tau_c(self):
        return self.alpha.shape[1]

    def data_alpha(self, n, K_train):
        """alpha_{k, n-K} for data time(s) n; shape (K,) or (len(n), K)."""
        lag = np.asarray(n) - K_train
        return self.alpha[:, lag].T

    def data_alpha_bar(self, n, K_train):
        lag = np.asarray(n) - K_train
        return self.alpha_bar[:, lag].T


@dataclass
class ChannelRealization:
    """Aggregate channels of all UEs at one channel use n; h has shape (M, K)."""

    h: np.ndarray
    n: int = 0


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _structured_draw(stats, rng):
    K, M, L = stats.K, stats.M, stats.L
    q = _cn(rng, (K, M))
    q2 = _cn(rng, (K, L))
    g = np.sqrt(stats.beta_g)[:, None] * np.einsum("kab,kb->ka", stats.sqrt_R_BS, q)
    h2 = np.sqrt(stats.beta_h2)[:, None] * np.einsum("kab,kb->ka", stats.sqrt_R_RIS, q2)
    cascade = (stats.H1 * stats.theta[None, :]) @ h2.T
    return g.T + cascade


def sample_initial_channel(stats, rng):
    """Draw h_k = g_k + H1 Theta h_2k for all UEs."""
    return ChannelRealization(_structured_draw(stats, rng), 0)


def age_channel(h0, stats, alpha_n, rng, n=None):
    """h_n = alpha_n h_0 + sqrt(1 - alpha_n^2) e_n with fresh innovation e_n ~ CN(0, R_k).

    ``alpha_n`` may be a scalar or a length-K vector.
    """
    alpha_n = np.asarray(alpha_n, dtype=float)
    if np.any(np.abs(alpha_n) > 1.0):
        raise DomainError("|alpha_n| must not exceed 1")
    innov = _structured_draw(stats, rng)
    a = np.broadcast_to(alpha_n, (stats.K,))
    h = a[None, :] * h0.h + np.sqrt(1.0 - a**2)[None, :] * innov
    return ChannelRealization(h, h0.n if n is None else n)
