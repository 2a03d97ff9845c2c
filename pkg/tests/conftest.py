from datetime import date, datetime, timezone

import numpy as np
import pytest

from app.schemas.experiment import ExperimentConfig, SynthEvent, SynthSpec
from app.schemas.flows import FlowSeries


@pytest.fixture(scope="session")
def anyio_backend():
    return "asyncio"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_series():
    def _make(n: int = 3, d: int = 2, t: int = 48, start: datetime | None = None, seed: int = 0) -> FlowSeries:
        values = np.random.default_rng(seed).poisson(4.0, size=(n, d, t)).astype(np.float64)
        return FlowSeries(values=values, start_time=start or datetime(2023, 6, 1, tzinfo=timezone.utc))

    return _make


@pytest.fixture
def small_synth_config(tmp_path) -> ExperimentConfig:
    """Benchmark sintetico ridotto (3x3, 21 giorni) per i test veloci della pipeline."""
    synth = SynthSpec(
        n_rows=3, n_cols=3, days=21, start_date=date(2023, 6, 1),
        events=[SynthEvent(day=k, target_grid=4, multiplier=2.5) for k in (2, 5, 9, 12, 16, 19)],
        split_days=(14, 3, 4), noise_level=0.05, seed=3,
    )
    config = ExperimentConfig.model_validate({
        "seed": 7,
        "model": {"architecture": "gcrnn", "hidden": 8},
        "augmentation": {"scopes": ["city", "node"]},
        "context": {"backend": "offline", "embed_dim": 16, "cache_dir": str(tmp_path / "cache")},
        "optimizer": {"max_epochs": 3, "patience": 2, "batch_size": 64, "learning_rate": 0.01},
    })
    return config.model_copy(update={"synth": synth}).for_synth()
