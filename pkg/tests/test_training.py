import math

import numpy as np
import orjson
import pytest
import torch

from app.core.exceptions import TrainingDivergedError
from app.models.forecaster import ForecastModel, build_forecaster
from app.schemas.context import Scope
from app.services.experiment import load_source, prepare_data
from app.services.training import aux_specs_for, predict, set_seed, train


@pytest.fixture
def prepared(small_synth_config):
    return prepare_data(small_synth_config, load_source(small_synth_config, synth=True))


def _with(config, **optimizer):
    return config.model_copy(update={"optimizer": config.optimizer.model_copy(update=optimizer)})


def test_naive_models_are_not_trained(small_synth_config, prepared):
    for architecture in ("persistence", "historical_average"):
        cfg = small_synth_config.model_copy(update={
            "model": small_synth_config.model.model_copy(update={"architecture": architecture})})
        result = train(cfg, prepared)
        assert result.history == [] and result.best_epoch is None
        assert predict(result.model, prepared.test).shape == prepared.test.y.shape


def test_training_loss_decreases(small_synth_config, prepared):
    result = train(_with(small_synth_config, max_epochs=6, patience=6), prepared)
    losses = [r.train_loss for r in result.history]
    assert len(losses) == 6
    assert losses[-1] < losses[0]
    assert all(math.isfinite(r.val_mae) for r in result.history)


def test_same_seed_same_run(small_synth_config, prepared):
    first = train(small_synth_config, prepared, scopes=[Scope.CITY, Scope.NODE])
    second = train(small_synth_config, prepared, scopes=[Scope.CITY, Scope.NODE])
    assert [r.val_mae for r in first.history] == [r.val_mae for r in second.history]
    for key, value in first.model.state_dict().items():
        assert torch.equal(value, second.model.state_dict()[key])


def test_variants_share_the_core_initialisation(small_synth_config, prepared):
    cores = []
    for scopes in ([], [Scope.CITY, Scope.NODE]):
        set_seed(small_synth_config.seed)
        model = build_forecaster(small_synth_config.model, prepared.adjacency, prepared.d, prepared.t1,
                                 prepared.t2, prepared.feature_mean, prepared.feature_std,
                                 aux_specs=aux_specs_for(scopes, prepared.node_grid),
                                 context_dims=prepared.context_dims)
        cores.append(model.core.state_dict())
    for key, value in cores[0].items():
        assert torch.equal(value, cores[1][key])


def test_best_epoch_is_restored(small_synth_config, prepared, tmp_path):
    log = tmp_path / "train-log.jsonl"
    result = train(_with(small_synth_config, max_epochs=4, patience=4), prepared, log_path=log)
    val = [r.val_mae for r in result.history]
    assert result.best_epoch == int(np.argmin(val)) + 1
    restored = predict(result.model, prepared.val)
    assert np.mean(np.abs(restored - prepared.val.y)) == pytest.approx(min(val), rel=1e-6)

    lines = [orjson.loads(line) for line in log.read_bytes().splitlines()]
    assert [line["epoch"] for line in lines] == list(range(1, len(val) + 1))
    assert all(line["elapsed_s"] >= 0 for line in lines)


def test_non_finite_loss_aborts(small_synth_config, prepared, monkeypatch):
    def diverging(self, x, contexts=None, hour_of_week=None):
        return torch.full(x.shape[:-1] + (self.t2,), float("nan"), dtype=x.dtype)

    monkeypatch.setattr(ForecastModel, "forward", diverging)
    with pytest.raises(TrainingDivergedError) as exc:
        train(small_synth_config, prepared)
    assert exc.value.details["epoch"] == 1
