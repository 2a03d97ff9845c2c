from __future__ import annotations

from datetime import date
from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.context import Scope
from app.schemas.flows import WindowSpec
from app.schemas.ingestion import SplitSpec

# Festività US nel periodo del caso di studio (date -> nome)
DEFAULT_HOLIDAYS: dict[date, str] = {
    date(2023, 5, 29): "Memorial Day",
    date(2023, 6, 19): "Juneteenth",
    date(2023, 7, 4): "Independence Day",
    date(2023, 9, 4): "Labor Day",
    date(2023, 10, 9): "Columbus Day",
}

Architecture = Literal["persistence", "historical_average", "gcrnn", "stconv"]


class DataConfig(BaseModel):
    series_dir: str | None = None
    trips_csv: str | None = None
    weather: str | None = None
    events: str | None = None
    contexts: str | None = None
    timezone: str = "America/New_York"
    period_start: date | None = None
    period_end: date | None = None


class GridConfig(BaseModel):
    # 13x13 celle da 1 km; la cella 84 (riga 6, colonna 6) contiene il Barclays Center
    origin_lat: float = 40.624144
    origin_lng: float = -74.052492
    cell_size_m: float = Field(default=1000.0, gt=0)
    n_rows: int = Field(default=13, ge=1)
    n_cols: int = Field(default=13, ge=1)
    adjacency: Literal["rook4", "queen8"] = "rook4"


class ModelConfig(BaseModel):
    architecture: Architecture = "gcrnn"
    hidden: int = Field(default=32, ge=1)
    layers: int = Field(default=1, ge=1)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    kernel_size: int = Field(default=2, ge=1)
    blocks: int = Field(default=1, ge=1)
    dtype: Literal["float32", "float64"] = "float32"


class AugmentationConfig(BaseModel):
    enabled: bool = True
    scopes: list[Scope] = [Scope.CITY, Scope.NODE]
    activation: Literal["tanh", "relu", "identity"] = "tanh"
    node_grid: int | None = Field(default=None, ge=0)

    @field_validator("scopes")
    @classmethod
    def _scopes(cls, v: list[Scope]) -> list[Scope]:
        if len(set(v)) != len(v):
            raise ValueError("duplicate auxiliary scopes")
        # ordine fisso: prima city, poi node
        return sorted(v, key=lambda s: 0 if s is Scope.CITY else 1)


class ContextConfig(BaseModel):
    backend: Literal["remote", "offline"] = "offline"
    embed_dim: int = Field(default=64, ge=1)
    backend_seed: int = 0
    variance_target: float = Field(default=0.95, gt=0.0, le=1.0)
    holidays: dict[date, str] = Field(default_factory=lambda: dict(DEFAULT_HOLIDAYS))
    cache_dir: str | None = None


class OptimizerConfig(BaseModel):
    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=32, ge=1)
    max_epochs: int = Field(default=40, ge=1)
    patience: int = Field(default=5, ge=1)
    loss: Literal["mae", "mse"] = "mae"
    weight_decay: float = Field(default=0.0, ge=0)
    grad_clip_norm: float | None = 5.0


class EvaluationConfig(BaseModel):
    designated_grid: int = Field(default=84, ge=0)


class SynthEvent(BaseModel):
    day: int = Field(ge=0)
    target_grid: int = Field(ge=0)
    multiplier: float = Field(gt=0)


_DEFAULT_EVENT_DAYS = (3, 7, 11, 15, 19, 24, 29, 35, 49, 52, 55, 58)


class SynthSpec(BaseModel):
    n_rows: int = Field(default=4, ge=1)
    n_cols: int = Field(default=4, ge=1)
    days: int = Field(default=60, ge=1)
    start_date: date = date(2023, 6, 1)
    # profilo orario di base (viaggi/ora), ore 0..23
    base_profile: list[float] = [2, 1, 1, 1, 1, 2, 5, 10, 16, 12, 8, 8,
                                 9, 9, 9, 10, 13, 17, 14, 10, 7, 5, 4, 3]
    # fattori settimanali, lunedì..domenica
    week_factors: list[float] = [1.0, 1.0, 1.0, 1.0, 1.05, 0.8, 0.75]
    grid_scale_range: tuple[float, float] = (0.6, 1.4)
    dropoff_shift_hours: int = 1
    events: list[SynthEvent] = Field(
        default_factory=lambda: [SynthEvent(day=d, target_grid=5, multiplier=2.5) for d in _DEFAULT_EVENT_DAYS])
    noise_level: float = Field(default=0.05, ge=0)
    seed: int = 0
    split_days: tuple[int, int, int] = (42, 6, 12)
    event_name: str = "Evening concert"
    venue: str = "Synthetic Arena"
    event_start_hour: int = Field(default=18, ge=0, le=23)
    event_end_hour: int = Field(default=22, ge=1, le=24)
    origin_lat: float = 40.70
    origin_lng: float = -74.00
    cell_size_m: float = Field(default=1000.0, gt=0)

    @model_validator(mode="after")
    def _check(self) -> SynthSpec:
        if len(self.base_profile) != 24 or any(v < 0 for v in self.base_profile):
            raise ValueError("base_profile needs 24 non-negative values")
        if len(self.week_factors) != 7 or any(v <= 0 for v in self.week_factors):
            raise ValueError("week_factors needs 7 positive values")
        n = self.n_rows * self.n_cols
        for ev in self.events:
            if ev.day >= self.days or ev.target_grid >= n:
                raise ValueError(f"event {ev} outside the synthetic grid or period")
        if sum(self.split_days) > self.days:
            raise ValueError("split_days exceed the number of synthetic days")
        if self.event_end_hour <= self.event_start_hour:
            raise ValueError("event_end_hour must follow event_start_hour")
        return self

    @property
    def designated_grid(self) -> int:
        return self.events[0].target_grid if self.events else 0

    def split(self) -> SplitSpec:
        from datetime import timedelta

        tr, va, te = self.split_days
        s = self.start_date
        return SplitSpec(
            train=(s, s + timedelta(days=tr - 1)),
            val=(s + timedelta(days=tr), s + timedelta(days=tr + va - 1)),
            test=(s + timedelta(days=tr + va), s + timedelta(days=tr + va + te - 1)),
        )


class ExperimentConfig(BaseModel):
    seed: int = 42
    data: DataConfig = DataConfig()
    grid: GridConfig = GridConfig()
    window: WindowSpec = WindowSpec()
    split: SplitSpec = SplitSpec()
    model: ModelConfig = ModelConfig()
    augmentation: AugmentationConfig = AugmentationConfig()
    context: ContextConfig = ContextConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    synth: SynthSpec = SynthSpec()

    def for_synth(self) -> ExperimentConfig:
        """Configurazione equivalente con split, griglia e fuso del benchmark sintetico."""
        s = self.synth
        return self.model_copy(update={
            "split": s.split(),
            "data": self.data.model_copy(update={"timezone": "UTC"}),
            "grid": self.grid.model_copy(update={"origin_lat": s.origin_lat, "origin_lng": s.origin_lng,
                                                 "cell_size_m": s.cell_size_m,
                                                 "n_rows": s.n_rows, "n_cols": s.n_cols}),
            "evaluation": self.evaluation.model_copy(update={"designated_grid": s.designated_grid}),
        })
