from pathlib import Path

import numpy as np
import pytest

from dfrc.config import SystemConfig, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sumrate_config(snr_db: float = 10.0) -> SystemConfig:
    """Scenario used for the sum-rate figures, at the given ``p_tot / sigma^2``."""
    cfg, _ = load_config(CONFIGS / "sumrate.yaml")
    return cfg.with_snr_db(snr_db)


def sample_drop(seed: int, snr_db: float = 10.0, K: int = 4, candidates: int = 30):
    from dfrc.scenario import draw
    return draw(sumrate_config(snr_db), np.random.default_rng(seed), K, candidates, 0.1)
