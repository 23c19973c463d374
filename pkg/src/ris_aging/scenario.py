"""System configuration, JSON ingestion and large-scale channel statistics."""

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from . import fading
from .errors import DomainError, SchemaError, ValidationError

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass
class SystemConfig:
    """Scalar parameters of the single-cell scenario.

    Powers and variances are in Watts, distances in metres, angles in
    radians. Path-loss constants are stored as linear gains (< 1).
    Optional fields left as ``None`` are resolved by the properties below.
    """

    M: int = 100                      # BS antennas
    L: int = 100                      # RIS elements
    K: int = 20                       # UEs
    tau_c: int = 200                  # channel uses per coherence block (Tc * Bc)
    tau_p: int | None = None          # pilot length, K when None
    p_pilot: float = float(dbm_to_watt(6.0))
    P_max: float = float(dbm_to_watt(20.0))
    noise_var_ul: float = float(dbm_to_watt(-174.0 + 10.0 * math.log10(100e3)))
    noise_var_dl: float = float(dbm_to_watt(-174.0 + 10.0 * math.log10(100e3)))
    fD: object = 250.0                # max Doppler [Hz], scalar or length-K
    Ts: float = 1.0 / 100e3           # duration of one channel use [s]
    fD_Ts: object = None              # direct override of fD*Ts (scalar or length-K)
    doppler_convention: str = "per-index"
    carrier_freq: float = 2e9
    reg_alpha: float | None = None    # RZF regulariser, K/(M rho) when None
    Z_matrix: object = None           # RZF shift, zero when None
    r1: float = 8.0                   # BS-RIS distance
    r2: object = 60.0                 # RIS-UE distance, scalar or length-K
    alpha1: float = 2.2
    alpha2: float = 3.67
    C1: float = float(db_to_linear(-26.0))
    C2: float = float(db_to_linear(-28.0))
    penetration_loss: float = float(db_to_linear(-15.0))
    d_H: float | None = None          # RIS element width, lambda/4 when None
    d_V: float | None = None          # RIS element height, lambda/4 when None
    d_BS: float | None = None         # BS antenna spacing, lambda/2 when None
    angular_spread: float = math.radians(10.0)
    ris_azimuth: float = math.radians(30.0)
    ue_angles: object = None          # nominal UE angles at the BS, drawn from seed when None
    ris_correlation: str = "sinc"     # "sinc" or "identity"
    pilot_slots: object = None        # pilot channel use of each UE, 1..K when None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived quantities -------------------------------------------------
    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def pilot_length(self):
        return self.K if self.tau_p is None else int(self.tau_p)

    @property
    def rho(self):
        """Downlink SNR P_max / sigma^2."""
        return self.P_max / self.noise_var_dl

    @property
    def alpha_reg(self):
        if self.reg_alpha is not None:
            return float(self.reg_alpha)
        return self.K / (self.M * self.rho)

    @property
    def Z(self):
        if self.Z_matrix is None:
            return np.zeros((self.M, self.M), dtype=complex)
        return np.asarray(self.Z_matrix, dtype=complex)

    @property
    def has_Z(self):
        return self.Z_matrix is not None and np.any(np.asarray(self.Z_matrix) != 0)

    @property
    def element_size(self):
        lam = self.wavelength
        d_h = lam / 4.0 if self.d_H is None else self.d_H
        d_v = lam / 4.0 if self.d_V is None else self.d_V
        return d_h, d_v

    @property
    def bs_spacing(self):
        return self.wavelength / 2.0 if self.d_BS is None else self.d_BS

    @property
    def fd_ts(self):
        """Normalised Doppler f_D*T_s per UE, shape (K,)."""
        if self.fD_Ts is not None:
            return _per_ue(self.fD_Ts, self.K, "fD_Ts")
        return _per_ue(self.fD, self.K, "fD") * self.Ts

    @property
    def r2_vec(self):
        return _per_ue(self.r2, self.K, "r2")

    @property
    def slots(self):
        if self.pilot_slots is None:
            return np.arange(1, self.K + 1)
        return np.asarray(self.pilot_slots, dtype=int)

    @property
    def beta_1(self):
        return self.C1 / self.r1**self.alpha1

    @property
    def beta_2(self):
        return self.C2 / self.r2_vec**self.alpha2

    def nominal_angles(self):
        if self.ue_angles is not None:
            return _per_ue(self.ue_angles, self.K, "ue_angles")
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-math.pi / 3.0, math.pi / 3.0, size=self.K)

    def desk_scale(self):
        """Reduced problem size used by the experiments and acceptance suite."""
        return replace(self, M=64, K=8, L=32, tau_c=100, tau_p=None,
                       pilot_slots=None, ue_angles=None,
                       fD=_shrink(self.fD, 8), fD_Ts=_shrink(self.fD_Ts, 8),
                       r2=_shrink(self.r2, 8), Z_matrix=None)

    def validate(self):
        for name in ("M", "L", "K", "tau_c"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.pilot_length < self.K:
            raise ValidationError(f"tau_p={self.pilot_length} is shorter than K={self.K}")
        if self.tau_c <= self.pilot_length:
            raise ValidationError("tau_c must exceed the pilot length")
        for name in ("p_pilot", "P_max", "noise_var_ul", "noise_var_dl", "Ts",
                     "carrier_freq", "r1", "C1", "C2", "penetration_loss",
                     "angular_spread"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")
        if np.any(self.r2_vec <= 0):
            raise ValidationError("r2 must be strictly positive")
        if np.any(self.fd_ts < 0):
            raise ValidationError("Doppler must be nonnegative")
        if self.reg_alpha is not None and not self.reg_alpha > 0:
            raise ValidationError("reg_alpha must be strictly positive")
        if self.Z_matrix is not None:
            Z = np.asarray(self.Z_matrix, dtype=complex)
            if Z.shape != (self.M, self.M):
                raise ValidationError("Z_matrix must be M x M")
            if not np.allclose(Z, Z.conj().T, atol=1e-12 * max(1.0, np.abs(Z).max())):
                raise ValidationError("Z_matrix must be Hermitian")
            if np.linalg.eigvalsh(Z).min() < -1e-12 * max(1.0, np.abs(Z).max()):
                raise ValidationError("Z_matrix must be nonnegative definite")
        if self.ris_correlation not in ("sinc", "identity"):
            raise ValidationError("ris_correlation must be 'sinc' or 'identity'")
        if self.doppler_convention not in ("per-index", "per-symbol"):
            raise ValidationError("doppler_convention must be 'per-index' or 'per-symbol'")
        slots = self.slots
        if slots.shape != (self.K,) or np.any(slots < 1) or np.any(slots > self.K):
            raise ValidationError("pilot_slots must hold K entries in 1..K")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        """JSON-friendly snapshot (used by the run sidecar)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist() if not np.iscomplexobj(v) else [[str(z) for z in row] for row in v]
            out[f.name] = v
        return out


def _per_ue(value, K, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(K, float(arr))
    if arr.shape != (K,):
        raise ValidationError(f"{name} must be a scalar or have length K={K}")
    return arr.copy()


def _shrink(value, K):
    if value is None or np.ndim(value) == 0:
        return value
    return list(np.asarray(value, dtype=float)[:K])


# -- JSON ingestion ------------------------------------------------------------

def _num(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"key '{key}' must be a number", key)
    return float(v)


def _int(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise SchemaError(f"key '{key}' must be an integer", key)
    return int(v)


def _num_or_list(key, v):
    if isinstance(v, list):
        return [_num(key, x) for x in v]
    return _num(key, v)


def _int_list(key, v):
    if not isinstance(v, list):
        raise SchemaError(f"key '{key}' must be a list", key)
    return [_int(key, x) for x in v]


def _str(key, v):
    if not isinstance(v, str):
        raise SchemaError(f"key '{key}' must be a string", key)
    return v


# json key -> (field name, converter)
_SCHEMA = {
    "M": ("M", _int),
    "L": ("L", _int),
    "K": ("K", _int),
    "tau_c": ("tau_c", _int),
    "tau_p": ("tau_p", _int),
    "p_pilot_dbm": ("p_pilot", lambda k, v: float(dbm_to_watt(_num(k, v)))),
    "P_max_dbm": ("P_max", lambda k, v: float(dbm_to_watt(_num(k, v)))),
    "noise_ul_dbm": ("noise_var_ul", lambda k, v: float(dbm_to_watt(_num(k, v)))),
    "noise_dl_dbm": ("noise_var_dl", lambda k, v: float(dbm_to_watt(_num(k, v)))),
    "fD_hz": ("fD", _num_or_list),
    "Ts_s": ("Ts", _num),
    "fD_Ts": ("fD_Ts", _num_or_list),
    "doppler_convention": ("doppler_convention", _str),
    "carrier_freq_hz": ("carrier_freq", _num),
    "reg_alpha": ("reg_alpha", _num),
    "r1_m": ("r1", _num),
    "r2_m": ("r2", _num_or_list),
    "alpha1": ("alpha1", _num),
    "alpha2": ("alpha2", _num),
    "C1_db": ("C1", lambda k, v: float(db_to_linear(-_num(k, v)))),
    "C2_db": ("C2", lambda k, v: float(db_to_linear(-_num(k, v)))),
    "penetration_loss_db": ("penetration_loss", lambda k, v: float(db_to_linear(-_num(k, v)))),
    "d_H_m": ("d_H", _num),
    "d_V_m": ("d_V", _num),
    "d_BS_m": ("d_BS", _num),
    "angular_spread_rad": ("angular_spread", _num),
    "ris_azimuth_rad": ("ris_azimuth", _num),
    "ue_angles_rad": ("ue_angles", _num_or_list),
    "ris_correlation": ("ris_correlation", _str),
    "pilot_slots": ("pilot_slots", _int_list),
    "seed": ("seed", _int),
}
_EXTRA_KEYS = {"velocity_kmh", "Z_diag"}


def config_from_dict(data):
    """Build a :class:`SystemConfig` from the flat JSON schema."""
    if not isinstance(data, dict):
        raise SchemaError("top-level JSON value must be an object")
    kwargs = {}
    for key, value in data.items():
        if key in _SCHEMA:
            name, conv = _SCHEMA[key]
            kwargs[name] = conv(key, value)
        elif key not in _EXTRA_KEYS:
            raise SchemaError(f"unknown configuration key '{key}'", key)
    if "velocity_kmh" in data:
        if "fD_hz" in data:
            raise SchemaError("give either 'fD_hz' or 'velocity_kmh', not both", "velocity_kmh")
        v = np.asarray(_num_or_list("velocity_kmh", data["velocity_kmh"]))
        fc = kwargs.get("carrier_freq", SystemConfig.carrier_freq)
        fd = v / 3.6 * fc / SPEED_OF_LIGHT
        kwargs["fD"] = float(fd) if fd.ndim == 0 else list(fd)
    if "Z_diag" in data:
        z = np.asarray(_num_or_list("Z_diag", data["Z_diag"]))
        M = kwargs.get("M", SystemConfig.M)
        kwargs["Z_matrix"] = np.diag(np.broadcast_to(z, (M,))).astype(complex)
    return SystemConfig(**kwargs)


def load_config(path):
    """Read a JSON configuration file; absent keys take the defaults.

    Raises
    ------
    SchemaError
        On malformed JSON or an unknown/ill-typed key.
    ValidationError
        When the resulting configuration violates an invariant.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)


# -- large-scale statistics ------------------------------------------------------

@dataclass
class ChannelStatistics:
    """Per-UE covariances and path losses for one RIS configuration ``theta``.

    Arrays are stacked over UEs on the leading axis.
    """

    R_BS: np.ndarray        # (K, M, M), trace M
    R_RIS: np.ndarray       # (K, L, L), trace L
    beta_g: np.ndarray      # (K,) direct-link gain
    beta_h2: np.ndarray     # (K,) RIS-UE gain
    beta_1: float           # BS-RIS gain (folded into H1)
    H1: np.ndarray          # (M, L) LoS BS-RIS channel
    theta: np.ndarray       # (L,) unit-modulus phases
    R: np.ndarray = field(default=None)  # (K, M, M) aggregate covariance

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=complex)
        if np.any(np.abs(np.abs(self.theta) - 1.0) > 1e-9):
            raise DomainError("RIS phase vector must be unit modulus")
        if self.R is None:
            self.R = aggregate_covariance(self)

    @property
    def K(self):
        return self.R.shape[0]

    @property
    def M(self):
        return self.R.shape[1]

    @property
    def L(self):
        return self.H1.shape[1]

    def with_theta(self, theta):
        return ChannelStatistics(self.R_BS, self.R_RIS, self.beta_g, self.beta_h2,
                                 self.beta_1, self.H1, theta)

    def without_ris(self):
        """Direct link only (beta_h2 = 0)."""
        return ChannelStatistics(self.R_BS, self.R_RIS, self.beta_g,
                                 np.zeros_like(self.beta_h2), self.beta_1, self.H1, self.theta)

    @cached_property
    def sqrt_R(self):
        return np.stack([fading.psd_sqrt(Rk) for Rk in self.R])

    @cached_property
    def sqrt_R_BS(self):
        return np.stack([fading.psd_sqrt(Rk) for Rk in self.R_BS])

    @cached_property
    def sqrt_R_RIS(self):
        return np.stack([fading.psd_sqrt(Rk) for Rk in self.R_RIS])


def aggregate_covariance(stats, theta=None):
    """R_k = beta_g R_BS + beta_h2 H1 Theta R_RIS Theta^H H1^H for every k."""
    theta = stats.theta if theta is None else theta
    G = stats.H1 * theta[None, :]
    K = stats.R_BS.shape[0]
    out = stats.beta_g[:, None, None] * stats.R_BS.astype(complex)
    shared = stats.R_RIS.strides[0] == 0 or np.array_equal(stats.R_RIS, np.broadcast_to(
        stats.R_RIS[0], stats.R_RIS.shape))
    if shared:
        casc = G @ stats.R_RIS[0] @ G.conj().T
        out = out + stats.beta_h2[:, None, None] * casc[None]
    else:
        casc = G[None] @ stats.R_RIS @ G.conj().T[None]
        out = out + stats.beta_h2[:, None, None] * casc
    return 0.5 * (out + out.conj().transpose(0, 2, 1))


def build_statistics(cfg, theta=None):
    """Assemble :class:`ChannelStatistics` for configuration ``cfg``.

    Parameters
    ----------
    cfg : SystemConfig
    theta : array_like, optional
        Unit-modulus RIS phases; all ones when omitted.
    """
    theta = np.ones(cfg.L, dtype=complex) if theta is None else np.asarray(theta, dtype=complex)
    if theta.shape != (cfg.L,):
        raise DomainError(f"theta must have length L={cfg.L}")
    if np.any(np.abs(np.abs(theta) - 1.0) > 1e-9):
        raise DomainError("RIS phase vector must be unit modulus")
    angles = cfg.nominal_angles()
    spacing = cfg.bs_spacing / cfg.wavelength
    R_BS = np.stack([fading.bs_correlation(cfg.M, a, cfg.angular_spread, spacing)
                     for a in angles])
    if cfg.ris_correlation == "identity":
        R1 = np.eye(cfg.L, dtype=complex)
    else:
        d_h, d_v = cfg.element_size
        R1 = fading.ris_correlation(fading.ris_grid(cfg.L, d_h, d_v), cfg.wavelength)
    R_RIS = np.broadcast_to(R1, (cfg.K, cfg.L, cfg.L))
    beta_2 = cfg.beta_2
    H1 = fading.los_channel(cfg)
    return ChannelStatistics(R_BS=R_BS, R_RIS=R_RIS, beta_g=beta_2 * cfg.penetration_loss,
                             beta_h2=beta_2, beta_1=cfg.beta_1, H1=H1, theta=theta)
