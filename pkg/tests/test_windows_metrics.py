import math
from datetime import timedelta

import numpy as np
import pytest
import torch

from app.core.exceptions import DataValidationError, InsufficientHistoryError
from app.schemas.flows import WindowSpec
from app.services.metrics import mae, rmse
from app.services.windows import make_windows, stack_windows, window_count


def test_window_count_and_contents(make_series):
    series = make_series(t=20)
    spec = WindowSpec(t1=6, t2=2, stride=3)
    samples = make_windows(series, spec)
    assert len(samples) == window_count(20, spec) == 5
    k = 3
    assert np.array_equal(samples[1].x, series.values[:, :, k:k + 6])
    assert np.array_equal(samples[1].y, series.values[:, :, k + 6:k + 8])
    assert samples[1].anchor_time == series.start_time + timedelta(hours=k + 6)


def test_windows_are_chronological(make_series):
    samples = make_windows(make_series(t=30), WindowSpec())
    anchors = [s.anchor_time for s in samples]
    assert anchors == sorted(anchors)
    x, y = stack_windows(samples)
    assert x.shape == (len(samples), 3, 2, 6)
    assert y.shape == (len(samples), 3, 2, 1)


def test_insufficient_history(make_series):
    with pytest.raises(InsufficientHistoryError) as exc:
        make_windows(make_series(t=6), WindowSpec(t1=6, t2=1))
    assert exc.value.message == "insufficient history"


def test_metrics_on_three_node_fixture():
    """MAE 1 e RMSE sqrt(2): errori |2| su metà degli elementi e 0 sull'altra metà."""
    y_true = np.zeros((3, 2, 1))
    y_pred = np.zeros((3, 2, 1))
    y_pred[:, 0, 0] = [2.0, -2.0, 2.0]
    assert mae(y_true, y_pred) == 1.0
    assert rmse(y_true, y_pred) == math.sqrt(2.0)


def test_perfect_predictor_scores_zero(rng):
    y = rng.normal(size=(4, 5, 2, 1))
    assert mae(y, y) == 0.0
    assert rmse(y, y, mask=[3]) == 0.0


def test_metrics_match_scalar_loop(rng):
    y_true = rng.normal(size=(7, 5, 2, 3))
    y_pred = rng.normal(size=(7, 5, 2, 3))
    abs_sum, sq_sum, count = 0.0, 0.0, 0
    for idx in np.ndindex(y_true.shape):
        err = y_pred[idx] - y_true[idx]
        abs_sum += abs(err)
        sq_sum += err * err
        count += 1
    assert mae(y_true, y_pred) == pytest.approx(abs_sum / count, abs=1e-12)
    assert rmse(y_true, y_pred) == pytest.approx(math.sqrt(sq_sum / count), abs=1e-12)


def test_mask_matches_manual_slice(rng):
    y_true = rng.normal(size=(6, 4, 2, 1))
    y_pred = rng.normal(size=(6, 4, 2, 1))
    manual = np.mean(np.abs(y_pred[:, 2] - y_true[:, 2]))
    assert mae(y_true, y_pred, mask=[2]) == pytest.approx(manual, abs=1e-12)
    assert mae(torch.as_tensor(y_true), torch.as_tensor(y_pred), mask=[2]) == pytest.approx(manual, abs=1e-12)


def test_metric_errors():
    with pytest.raises(DataValidationError):
        mae(np.zeros((2, 2, 1)), np.zeros((3, 2, 1)))
    with pytest.raises(DataValidationError):
        mae(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)), mask=[5])
    with pytest.raises(DataValidationError):
        rmse(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)), mask=[])
