import dataclasses

import numpy as np
import pytest

from ris_aging import SystemConfig, build_estimation_model, build_statistics


def small_config(**kw):
    """A scenario small enough for finite-difference sweeps."""
    base = dict(M=16, K=4, L=8, tau_c=12, fD_Ts=0.02)
    base.update(kw)
    return dataclasses.replace(SystemConfig().desk_scale(), **base)


@pytest.fixture
def small():
    cfg = small_config()
    stats = build_statistics(cfg)
    est = build_estimation_model(stats, cfg)
    p = np.full(cfg.K, cfg.P_max / cfg.K)
    return cfg, stats, est, p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, M, rank=None):
    r = M if rank is None else rank
    A = rng.standard_normal((M, r)) + 1j * rng.standard_normal((M, r))
    return A @ A.conj().T / r


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
