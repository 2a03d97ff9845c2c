from __future__ import annotations

from typing import Sequence

import numpy as np

from app.core.exceptions import EvaluationError
from app.core.logging import get_logger
from app.models.forecaster import ForecastModel
from app.schemas.dataset import WindowSet
from app.schemas.report import ReportRow
from app.services.metrics import mae, rmse
from app.services.training import predict

logger = get_logger(__name__)


def score(y_true: np.ndarray, y_pred: np.ndarray, designated_grid: int, event_day: Sequence[bool] | None = None,
          model: str = "", variant: str = "original", scopes: str = "") -> ReportRow:
    """Metriche di una riga di report da target e previsioni [S, n, d, t2] già calcolate.

    Raises:
        EvaluationError: Nessun campione o cella designata fuori dalla griglia.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.ndim != 4 or y_true.shape[0] == 0:
        raise EvaluationError("empty test set", details={"shape": list(y_true.shape)})
    if not 0 <= designated_grid < y_true.shape[1]:
        raise EvaluationError("designated grid outside the graph",
                              details={"designated_grid": designated_grid, "n": y_true.shape[1]})
    if not np.all(np.isfinite(y_pred)):
        raise EvaluationError("model produced non-finite predictions", details={"model": model})

    grid = [designated_grid]
    row = ReportRow(model=model, variant=variant, scopes=scopes,
                    mae_all=mae(y_true, y_pred), rmse_all=rmse(y_true, y_pred),
                    mae_grid=mae(y_true, y_pred, mask=grid), rmse_grid=rmse(y_true, y_pred, mask=grid),
                    n_samples=int(y_true.shape[0]))

    ev = np.zeros(y_true.shape[0], dtype=bool) if event_day is None else np.asarray(event_day, dtype=bool)
    if ev.any():
        row.mae_event_days = mae(y_true[ev], y_pred[ev], mask=grid)
        row.rmse_event_days = rmse(y_true[ev], y_pred[ev], mask=grid)
    if (~ev).any():
        row.mae_non_event_days = mae(y_true[~ev], y_pred[~ev])
        row.rmse_non_event_days = rmse(y_true[~ev], y_pred[~ev])
    return row


def evaluate(model: ForecastModel, test: WindowSet, designated_grid: int, variant: str = "original",
             scopes: str = "") -> ReportRow:
    """Valuta il modello sullo split di test, sulla scala dei conteggi grezzi.

    Args:
        model (ForecastModel): Modello addestrato.
        test (WindowSet): Campioni dello split di test.
        designated_grid (int): Cella valutata a parte (maschera {designated_grid}).
        variant (str): Etichetta della variante ("original", "augmented", ...).
        scopes (str): Nodi ausiliari collegati, es. "city+node".

    Raises:
        EvaluationError: Split di test vuoto.

    Returns:
        ReportRow: Errori su tutte le celle, sulla cella designata e per tipo di giorno.
    """
    if test.size == 0:
        raise EvaluationError("empty test set")
    row = score(test.y, predict(model, test), designated_grid, test.event_day,
                model=model.architecture, variant=variant, scopes=scopes)
    logger.info(f"{row.model}/{row.variant}: MAE all {row.mae_all:.4f} grid {row.mae_grid:.4f}")
    return row
