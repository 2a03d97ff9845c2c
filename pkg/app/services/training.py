from __future__ import annotations

import copy
import math
import random
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict
from torch.utils.data import DataLoader, TensorDataset

from app.core.exceptions import TrainingDivergedError
from app.core.logging import JsonlLog, get_logger
from app.models.forecaster import DTYPES, ForecastModel, build_forecaster
from app.models.naive import HistoricalAverage
from app.schemas.context import Scope
from app.schemas.dataset import PreparedData, WindowSet
from app.schemas.experiment import ExperimentConfig
from app.schemas.report import EpochRecord
from app.services.augmentation import AuxNodeSpec
from app.services.metrics import mae

logger = get_logger(__name__)


class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: ForecastModel
    history: list[EpochRecord] = []
    best_epoch: int | None = None


def set_seed(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def aux_specs_for(scopes: Sequence[Scope], node_grid: int) -> list[AuxNodeSpec]:
    return [AuxNodeSpec(scope=s, target_grid=node_grid if s is Scope.NODE else None) for s in scopes]


def _tensors(ws: WindowSet, scopes: Sequence[Scope], dtype: torch.dtype) -> list[torch.Tensor]:
    out = [torch.as_tensor(ws.x, dtype=dtype), torch.as_tensor(ws.y, dtype=dtype),
           torch.as_tensor(ws.hour_of_week, dtype=torch.long)]
    out += [torch.as_tensor(ws.contexts[s.value], dtype=dtype) for s in scopes]
    return out


def _unpack(batch: Sequence[torch.Tensor], scopes: Sequence[Scope]):
    x, y, how, *ctx = batch
    return x, y, how, {s.value: c for s, c in zip(scopes, ctx)}


@torch.no_grad()
def predict(model: ForecastModel, ws: WindowSet, scopes: Sequence[Scope] | None = None,
            batch_size: int = 256) -> np.ndarray:
    """Previsioni [S, n, d, t2] in conteggi grezzi, in modalità eval."""
    scopes = [s for s, _ in model.aux] if scopes is None else list(scopes)
    model.eval()
    dtype = model.feature_mean.dtype
    loader = DataLoader(TensorDataset(*_tensors(ws, scopes, dtype)), batch_size=batch_size, shuffle=False)
    preds = []
    for batch in loader:
        x, _, how, ctx = _unpack(batch, scopes)
        preds.append(model(x, ctx, hour_of_week=how).to(torch.float64).numpy())
    return np.concatenate(preds, axis=0)


def train(config: ExperimentConfig, data: PreparedData, scopes: Sequence[Scope] = (),
          log_path: str | Path | None = None) -> TrainResult:
    """Addestra un forecaster sui dati preparati.

    Stesso seed e stessi dati danno la stessa inizializzazione della rete di base con o senza
    nodi ausiliari: le proiezioni vengono create dopo la rete.

    Args:
        config (ExperimentConfig): Seed, modello e ottimizzatore.
        data (PreparedData): Split già finestrati, statistiche di normalizzazione e contesti ridotti.
        scopes (Sequence[Scope]): Nodi ausiliari da collegare; vuoto per la variante originale.
        log_path (str | Path | None): File JSONL con un record per epoca.

    Raises:
        TrainingDivergedError: Loss non finita durante l'addestramento.

    Returns:
        TrainResult: Modello in modalità eval con i parametri della migliore epoca di validazione.
    """
    set_seed(config.seed)
    scopes = list(scopes)
    model = build_forecaster(config.model, data.adjacency, data.d, data.t1, data.t2,
                             data.feature_mean, data.feature_std,
                             aux_specs=aux_specs_for(scopes, data.node_grid),
                             context_dims={s: data.context_dims[s] for s in scopes},
                             activation=config.augmentation.activation)
    name = config.model.architecture

    if model.is_naive:
        if isinstance(model.core, HistoricalAverage):
            model.core.fit(data.train_series, data.timezone)
        logger.info(f"{name}: nothing to train")
        return TrainResult(model=model.eval())

    opt_cfg = config.optimizer
    dtype = DTYPES[config.model.dtype]
    generator = torch.Generator().manual_seed(config.seed)
    loader = DataLoader(TensorDataset(*_tensors(data.train, scopes, dtype)), batch_size=opt_cfg.batch_size,
                        shuffle=True, generator=generator)
    optimizer = torch.optim.Adam(model.parameters(), lr=opt_cfg.learning_rate, weight_decay=opt_cfg.weight_decay)
    std = torch.as_tensor(data.feature_std, dtype=dtype).view(data.d, 1)
    jsonl = JsonlLog(log_path) if log_path is not None else None

    history: list[EpochRecord] = []
    best_mae, best_epoch, best_state, stale = math.inf, None, None, 0
    for epoch in range(1, opt_cfg.max_epochs + 1):
        started = time.perf_counter()
        model.train()
        total, count = 0.0, 0
        for batch in loader:
            x, y, how, ctx = _unpack(batch, scopes)
            optimizer.zero_grad()
            # loss sulla scala normalizzata: le feature pesano allo stesso modo
            err = (model(x, ctx, hour_of_week=how) - y) / std
            loss = err.abs().mean() if opt_cfg.loss == "mae" else err.pow(2).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError("training loss is not finite",
                                            details={"model": name, "epoch": epoch, "loss": float(loss)})
            loss.backward()
            if opt_cfg.grad_clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), opt_cfg.grad_clip_norm)
            optimizer.step()
            total += float(loss) * x.shape[0]
            count += x.shape[0]

        val_mae = mae(data.val.y, predict(model, data.val, scopes))
        record = EpochRecord(epoch=epoch, train_loss=total / max(count, 1), val_mae=val_mae)
        history.append(record)
        if jsonl is not None:
            jsonl.write({**record.model_dump(), "elapsed_s": round(time.perf_counter() - started, 6)})
        logger.debug(f"{name} epoch {epoch}: train {record.train_loss:.4f} val MAE {val_mae:.4f}")

        if val_mae < best_mae:
            best_mae, best_epoch, stale = val_mae, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= opt_cfg.patience:
                logger.info(f"{name}: early stop at epoch {epoch}, best epoch {best_epoch}")
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    logger.info(f"{name} trained with scopes {[s.value for s in scopes]}: best val MAE {best_mae:.4f}")
    return TrainResult(model=model.eval(), history=history, best_epoch=best_epoch)
