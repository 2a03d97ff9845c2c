from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.core.config import load_experiment_config
from app.core.exceptions import ConfigError, ContextError, EvaluationError
from app.schemas.context import Scope
from app.schemas.report import REPORT_COLUMNS
from app.services.evaluation import score
from app.services.experiment import config_hash, load_source, prepare_data, run_comparison
from app.services.report import load_report, merge_reports, write_report

SYNTH_TOML = Path(__file__).resolve().parent.parent / "configs" / "synth.toml"


def _metrics(row) -> dict:
    return row.model_dump(exclude={"variant", "scopes"})


def test_prepare_data_fits_on_train_only(small_synth_config):
    source = load_source(small_synth_config, synth=True)
    data = prepare_data(small_synth_config, source)
    train_values = data.train_series.values
    assert np.allclose(data.feature_mean, train_values.mean(axis=(0, 2)))
    assert data.provenance["normalization_fit"] == "train"
    assert data.provenance["pca_fit"] == "train"
    assert data.provenance["samples"] == {"train": data.train.size, "val": data.val.size, "test": data.test.size}
    assert set(data.context_dims) == {Scope.CITY, Scope.NODE}
    for ws in (data.train, data.val, data.test):
        for scope, dim in data.context_dims.items():
            assert ws.contexts[scope.value].shape == (ws.size, dim)
    # train e val non si sovrappongono: i loro istanti sono separati
    assert max(data.train.anchors) < min(data.val.anchors) < min(data.test.anchors)
    assert data.test.event_day.any() and not data.test.event_day.all()


def test_prepare_data_validation(small_synth_config):
    source = load_source(small_synth_config, synth=True)
    bad = small_synth_config.model_copy(update={
        "evaluation": small_synth_config.evaluation.model_copy(update={"designated_grid": 9})})
    with pytest.raises(ConfigError):
        prepare_data(bad, source)
    with pytest.raises(ContextError):
        prepare_data(small_synth_config, source.model_copy(update={"catalog": None}))


def test_disabled_augmentation_gives_identical_rows(small_synth_config):
    cfg = small_synth_config.model_copy(update={
        "augmentation": small_synth_config.augmentation.model_copy(update={"enabled": False})})
    report = run_comparison(cfg, load_source(cfg, synth=True))
    original, augmented = report.row("gcrnn", "original"), report.row("gcrnn", "augmented")
    assert _metrics(original) == _metrics(augmented)
    assert augmented.scopes == ""


def test_comparison_report(small_synth_config, tmp_path):
    source = load_source(small_synth_config, synth=True)
    report = run_comparison(small_synth_config, source, models=["persistence", "gcrnn"], log_dir=tmp_path / "logs")
    assert [(r.model, r.variant) for r in report.rows] == [
        ("persistence", "original"), ("persistence", "augmented"), ("gcrnn", "original"), ("gcrnn", "augmented")]
    assert report.row("gcrnn", "augmented").scopes == "city+node"
    assert report.config_hash == config_hash(small_synth_config)
    assert report.seed == small_synth_config.seed
    assert len(report.training_curves["gcrnn/augmented"]) >= 1
    assert (tmp_path / "logs" / "train-log-gcrnn-augmented.jsonl").exists()
    # la persistenza ignora i nodi ausiliari: stesse metriche con e senza
    assert _metrics(report.row("persistence", "original")) == _metrics(report.row("persistence", "augmented"))

    csv_path, json_path = write_report(report, tmp_path)
    table = pd.read_csv(csv_path, keep_default_na=False)
    assert list(table.columns) == REPORT_COLUMNS
    loaded = load_report(json_path)
    for i, row in enumerate(loaded.rows):
        for column in ("mae_all", "rmse_all", "mae_grid", "rmse_grid"):
            assert table.loc[i, column] == pytest.approx(getattr(row, column), rel=1e-12)


def test_scope_sweep_labels(small_synth_config):
    report = run_comparison(small_synth_config, load_source(small_synth_config, synth=True), scope_sweep=True)
    assert [r.variant for r in report.rows] == [
        "original", "augmented:city", "augmented:node", "augmented:city+node"]


def test_comparison_is_deterministic(small_synth_config, tmp_path):
    source = load_source(small_synth_config, synth=True)
    paths = [write_report(run_comparison(small_synth_config, source), tmp_path / str(i))[0] for i in range(2)]
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_merge_reports(small_synth_config, tmp_path):
    source = load_source(small_synth_config, synth=True)
    a = run_comparison(small_synth_config, source, models=["persistence"])
    b = run_comparison(small_synth_config, source, models=["historical_average"])
    _, a_json = write_report(a, tmp_path / "a")
    _, b_json = write_report(b, tmp_path / "b")
    merged = merge_reports([a_json, b_json])
    assert len(merged.rows) == 4
    with pytest.raises(EvaluationError):
        merge_reports([a_json, a_json])
    with pytest.raises(EvaluationError):
        merge_reports([])


def test_score_splits_event_and_non_event_days(rng):
    y = rng.normal(size=(4, 3, 2, 1))
    pred = y.copy()
    pred[0, 1] += 2.0  # errore solo sulla cella designata, in un giorno con evento
    row = score(y, pred, designated_grid=1, event_day=[True, False, False, False])
    assert row.mae_event_days == pytest.approx(2.0)
    assert row.mae_non_event_days == 0.0
    assert row.mae_grid == pytest.approx(0.5)
    assert row.mae_all == pytest.approx(2.0 * 2 / y.size)
    with pytest.raises(EvaluationError):
        score(y[:0], pred[:0], designated_grid=1)
    with pytest.raises(EvaluationError):
        score(y, pred, designated_grid=3)


@pytest.mark.slow
def test_node_context_helps_on_event_days(tmp_path):
    """Benchmark sintetico di default, 5 seed: il nodo ausiliario riduce l'errore nei giorni con evento."""
    wins = 0
    for seed in range(5):
        config = load_experiment_config(SYNTH_TOML, {
            "seed": seed, "synth": {"seed": seed}, "context": {"cache_dir": str(tmp_path / "cache")},
        }).for_synth()
        report = run_comparison(config, load_source(config, synth=True))
        original, augmented = report.row("gcrnn", "original"), report.row("gcrnn", "augmented")
        assert augmented.scopes == "node"
        wins += augmented.mae_event_days < original.mae_event_days
        assert augmented.mae_non_event_days <= 1.05 * original.mae_non_event_days
    assert wins >= 4
