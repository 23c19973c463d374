import dataclasses
import json
import math

import numpy as np
import pytest

from ris_aging import ChannelStatistics, SystemConfig, build_statistics, load_config
from ris_aging.errors import DomainError, SchemaError, ValidationError
from ris_aging.scenario import config_from_dict, dbm_to_watt

from conftest import small_config


def test_defaults():
    cfg = SystemConfig()
    assert (cfg.M, cfg.L, cfg.K, cfg.tau_c) == (100, 100, 20, 200)
    assert cfg.pilot_length == cfg.K
    assert cfg.P_max == pytest.approx(0.1)
    assert 10 * math.log10(cfg.noise_var_dl * 1e3) == pytest.approx(-124.0)
    assert cfg.alpha_reg == pytest.approx(cfg.K / (cfg.M * cfg.rho))
    assert not cfg.has_Z
    np.testing.assert_array_equal(cfg.slots, np.arange(1, 21))


def test_desk_scale():
    cfg = SystemConfig().desk_scale()
    assert (cfg.M, cfg.K, cfg.L, cfg.tau_c) == (64, 8, 32, 100)


def test_dbm():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("")
    assert load_config(path) == SystemConfig()


def test_load_full(tmp_path):
    data = {"M": 32, "K": 4, "L": 16, "tau_c": 50, "P_max_dbm": 30, "C1_db": 30,
            "velocity_kmh": 36.0, "pilot_slots": [1, 2, 3, 4], "seed": 7}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    assert cfg.M == 32 and cfg.P_max == pytest.approx(1.0)
    assert cfg.C1 == pytest.approx(1e-3)
    assert cfg.fD == pytest.approx(10.0 * 2e9 / 299_792_458.0)
    assert cfg.seed == 7


@pytest.mark.parametrize("data,key", [
    ({"M": "64"}, "M"),
    ({"M": 6.5}, "M"),
    ({"bogus": 1}, "bogus"),
    ({"doppler_convention": 3}, "doppler_convention"),
    ({"fD_hz": 10, "velocity_kmh": 3}, "velocity_kmh"),
])
def test_schema_errors(data, key):
    with pytest.raises(SchemaError) as info:
        config_from_dict(data)
    assert info.value.key == key


def test_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(SchemaError):
        load_config(path)


@pytest.mark.parametrize("kw", [
    dict(M=0), dict(K=5, tau_p=4), dict(tau_c=20, K=20), dict(P_max=-1.0),
    dict(doppler_convention="weird"), dict(pilot_slots=[1, 1, 9]), dict(fD_Ts=-0.1),
    dict(reg_alpha=0.0),
])
def test_validation(kw):
    with pytest.raises(ValidationError):
        SystemConfig(**kw)


def test_statistics_shapes_and_structure():
    cfg = small_config()
    st = build_statistics(cfg)
    assert st.R.shape == (cfg.K, cfg.M, cfg.M)
    assert st.H1.shape == (cfg.M, cfg.L)
    np.testing.assert_allclose(st.R, st.R.conj().transpose(0, 2, 1), atol=0)
    assert np.linalg.eigvalsh(st.R).min() > -1e-12 * np.abs(st.R).max()
    # direct link only when the RIS is removed
    np.testing.assert_allclose(st.without_ris().R, st.beta_g[:, None, None] * st.R_BS, rtol=1e-12)


def test_cascade_formula(rng):
    cfg = small_config()
    theta = np.exp(2j * np.pi * rng.random(cfg.L))
    st = build_statistics(cfg, theta)
    k = 2
    G = st.H1 @ np.diag(theta)
    ref = st.beta_g[k] * st.R_BS[k] + st.beta_h2[k] * G @ st.R_RIS[k] @ G.conj().T
    np.testing.assert_allclose(st.R[k], ref, rtol=1e-12, atol=1e-30)


def test_identity_ris_makes_R_phase_free(rng):
    cfg = small_config(ris_correlation="identity")
    st = build_statistics(cfg)
    other = st.with_theta(np.exp(2j * np.pi * rng.random(cfg.L)))
    np.testing.assert_allclose(other.R, st.R, rtol=1e-12, atol=1e-14 * np.abs(st.R).max())


def test_phase_checks():
    cfg = small_config()
    with pytest.raises(DomainError):
        build_statistics(cfg, np.full(cfg.L, 2.0))
    with pytest.raises(DomainError):
        build_statistics(cfg, np.ones(cfg.L + 1))
    st = build_statistics(cfg)
    with pytest.raises(DomainError):
        st.with_theta(np.full(cfg.L, 0.5))


def test_seed_controls_angles():
    a = SystemConfig(seed=1).nominal_angles()
    b = SystemConfig(seed=2).nominal_angles()
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, SystemConfig(seed=1).nominal_angles())
    assert np.all(np.abs(a) <= math.pi / 3)


def test_to_dict_is_json():
    json.dumps(SystemConfig().to_dict())
