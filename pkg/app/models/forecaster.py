from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn

from app.core.exceptions import ConfigError, ModelInputError
from app.core.logging import get_logger
from app.models.gcrnn import GCRNN
from app.models.graph import check_inputs
from app.models.naive import HistoricalAverage, Persistence
from app.models.stconv import STConv
from app.schemas.context import Scope
from app.schemas.experiment import ModelConfig
from app.services.augmentation import AuxNodeSpec, ProjectionStack, augment_adjacency, augment_sample

logger = get_logger(__name__)

NAIVE_ARCHITECTURES = ("persistence", "historical_average")
GRAPH_ARCHITECTURES = ("gcrnn", "stconv")
DTYPES = {"float32": torch.float32, "float64": torch.float64}


def build_core(architecture: str, hparams: Mapping[str, Any], n: int, d: int, t1: int, t2: int) -> nn.Module:
    match architecture:
        case "persistence":
            return Persistence(d, t1, t2)
        case "historical_average":
            return HistoricalAverage(n, d, t1, t2)
        case "gcrnn":
            return GCRNN(d, t1, t2, hidden=hparams["hidden"], layers=hparams["layers"], dropout=hparams["dropout"])
        case "stconv":
            return STConv(d, t1, t2, hidden=hparams["hidden"], blocks=hparams["blocks"],
                          kernel_size=hparams["kernel_size"], dropout=hparams["dropout"])
    raise ConfigError(f"unknown architecture {architecture!r}")


class ForecastModel(nn.Module):
    """Forecaster f_t con normalizzazione e, se presenti, i nodi ausiliari di contesto.

    forward(x [B, n, d, t1], contesti {scope: [B, d_c']}) -> [B, n, d, t2] in conteggi grezzi.
    Le righe dei nodi ausiliari in uscita vengono scartate.
    """

    def __init__(self, architecture: str, hparams: Mapping[str, Any], adjacency: np.ndarray,
                 d: int, t1: int, t2: int, feature_mean: np.ndarray, feature_std: np.ndarray,
                 aux_specs: Sequence[AuxNodeSpec] = (), context_dims: Mapping[Scope, int] | None = None,
                 activation: str = "tanh"):
        super().__init__()
        n = adjacency.shape[0]
        self.architecture = architecture
        self.hparams = dict(hparams)
        self.n_nodes, self.d, self.t1, self.t2 = n, d, t1, t2
        self.activation = activation
        self.aux = [(spec.scope, spec.target_grid) for spec in aux_specs]
        self.context_dims = {Scope(k): int(v) for k, v in (context_dims or {}).items()}
        self.core = build_core(architecture, self.hparams, n, d, t1, t2)
        self.projections = nn.ModuleDict()
        for scope, _ in self.aux:
            if scope not in self.context_dims:
                raise ConfigError(f"missing context dimension for {scope.value} auxiliary node")
            self.projections[scope.value] = ProjectionStack(self.context_dims[scope], d, t1, activation)
        self.register_buffer("adjacency", torch.as_tensor(adjacency, dtype=torch.float64))
        self.register_buffer("a_e", torch.as_tensor(augment_adjacency(adjacency, aux_specs), dtype=torch.float64))
        self.register_buffer("feature_mean", torch.as_tensor(feature_mean, dtype=torch.float64).reshape(d))
        self.register_buffer("feature_std", torch.as_tensor(feature_std, dtype=torch.float64).reshape(d))

    @property
    def is_naive(self) -> bool:
        return self.architecture in NAIVE_ARCHITECTURES

    @property
    def normalizes(self) -> bool:
        return bool(getattr(self.core, "uses_normalization", False))

    def forward(self, x: torch.Tensor, contexts: Mapping[str, torch.Tensor] | None = None,
                hour_of_week: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[-3:] != (self.n_nodes, self.d, self.t1):
            raise ModelInputError("input shape does not match the model",
                                  details={"got": list(x.shape), "expected": [self.n_nodes, self.d, self.t1]})
        check_inputs(x, self.adjacency)
        mean = self.feature_mean.to(x.dtype).view(self.d, 1)
        std = self.feature_std.to(x.dtype).view(self.d, 1)
        h = (x - mean) / std if self.normalizes else x

        specs = []
        for scope, target in self.aux:
            if contexts is None or scope.value not in contexts:
                raise ModelInputError(f"missing {scope.value} context vector")
            c = contexts[scope.value].to(x.dtype)
            if not torch.isfinite(c).all():
                raise ModelInputError(f"NaN or Inf in {scope.value} context vector")
            specs.append(AuxNodeSpec(scope=scope, target_grid=target, projection=self.projections[scope.value],
                                     context_vector=c))
        sample = augment_sample(h, None, self.adjacency, specs, a_e=self.a_e.to(x.dtype))

        y = self.core(sample.x_e, sample.a_e, hour_of_week=hour_of_week)[..., :self.n_nodes, :, :]
        return y * std + mean if self.normalizes else y

    # --- checkpoint ---------------------------------------------------------

    def checkpoint(self, seed: int) -> dict[str, Any]:
        return {
            "architecture": self.architecture,
            "hyperparameters": self.hparams,
            "shape": {"d": self.d, "t1": self.t1, "t2": self.t2},
            "adjacency": self.adjacency.cpu().numpy(),
            "aux": [{"scope": scope.value, "target_grid": target} for scope, target in self.aux],
            "context_dims": {scope.value: dim for scope, dim in self.context_dims.items()},
            "activation": self.activation,
            "normalization": {"mean": self.feature_mean.cpu().numpy(), "std": self.feature_std.cpu().numpy()},
            "dtype": str(next(iter(self.state_dict().values())).dtype).replace("torch.", ""),
            "state_dict": self.state_dict(),
            "seed": seed,
        }


def build_forecaster(model_cfg: ModelConfig, adjacency: np.ndarray, d: int, t1: int, t2: int,
                     feature_mean: np.ndarray, feature_std: np.ndarray,
                     aux_specs: Sequence[AuxNodeSpec] = (), context_dims: Mapping[Scope, int] | None = None,
                     activation: str = "tanh") -> ForecastModel:
    hparams = model_cfg.model_dump(include={"hidden", "layers", "dropout", "kernel_size", "blocks", "dtype"})
    model = ForecastModel(model_cfg.architecture, hparams, adjacency, d, t1, t2, feature_mean, feature_std,
                          aux_specs=aux_specs, context_dims=context_dims, activation=activation)
    return model.to(DTYPES[model_cfg.dtype])


def save_checkpoint(model: ForecastModel, path: str | Path, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.checkpoint(seed), path)
    logger.info(f"Saved {model.architecture} checkpoint to {path}")
    return path


def load_checkpoint(path: str | Path) -> tuple[ForecastModel, int]:
    """Ricostruisce il modello da un checkpoint; restituisce (modello in eval, seed)."""
    ckpt = torch.load(Path(path), map_location="cpu", weights_only=False)
    shape = ckpt["shape"]
    specs = [AuxNodeSpec(scope=Scope(a["scope"]), target_grid=a["target_grid"]) for a in ckpt["aux"]]
    model = ForecastModel(ckpt["architecture"], ckpt["hyperparameters"], np.asarray(ckpt["adjacency"]),
                          shape["d"], shape["t1"], shape["t2"],
                          ckpt["normalization"]["mean"], ckpt["normalization"]["std"],
                          aux_specs=specs, context_dims={Scope(k): v for k, v in ckpt["context_dims"].items()},
                          activation=ckpt["activation"])
    model = model.to(DTYPES[ckpt["hyperparameters"].get("dtype", "float32")])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, int(ckpt["seed"])
