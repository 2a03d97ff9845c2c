from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict

REPORT_COLUMNS = [
    "model", "variant", "scopes",
    "mae_all", "rmse_all", "mae_grid", "rmse_grid",
    "mae_event_days", "rmse_event_days", "mae_non_event_days", "rmse_non_event_days",
    "n_samples",
]


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_mae: float


class ReportRow(BaseModel):
    """Una riga della tabella: errori su tutte le celle, sulla cella designata e per tipo di giorno.

    Le metriche mediano su ogni elemento (nodo, feature, orizzonte) sulla scala dei conteggi grezzi.
    mae/rmse_event_days riguardano la cella designata nei giorni con evento;
    mae/rmse_non_event_days tutte le celle nei giorni senza evento.
    """

    model: str
    variant: str
    scopes: str = ""
    mae_all: float
    rmse_all: float
    mae_grid: float
    rmse_grid: float
    mae_event_days: float | None = None
    rmse_event_days: float | None = None
    mae_non_event_days: float | None = None
    rmse_non_event_days: float | None = None
    n_samples: int = 0


class EvalReport(BaseModel):
    rows: list[ReportRow] = []
    designated_grid: int
    seed: int
    config_hash: str = ""
    scale: str = "raw_counts"
    averaging: str = "mean over every (node, feature, horizon) entry"
    provenance: dict[str, Any] = {}
    training_curves: dict[str, list[EpochRecord]] = {}

    def row(self, model: str, variant: str) -> ReportRow:
        for r in self.rows:
            if r.model == model and r.variant == variant:
                return r
        raise KeyError(f"no row for {model}/{variant}")


class RunManifest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    subcommand: str
    config: dict[str, Any]
    input_digests: dict[str, str] = {}
    artifacts: list[str] = []
    tool_version: str
    seed: int
