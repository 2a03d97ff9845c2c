from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

HOUR = timedelta(hours=1)


def as_utc(ts: datetime) -> datetime:
    """Timestamp naive = UTC; quelli con fuso vengono convertiti in UTC."""
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _frozen_array(value, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class FlowSeries(BaseModel):
    """Tensore orario dei flussi per cella: values[g, f, h] in viaggi/ora."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    start_time: datetime
    feature_names: tuple[str, ...] = ("pickup", "dropoff")

    @field_validator("values", mode="before")
    @classmethod
    def _values(cls, v):
        return _frozen_array(v, 3, "values")

    @field_validator("start_time")
    @classmethod
    def _start_time(cls, v: datetime) -> datetime:
        v = as_utc(v)
        if v.minute or v.second or v.microsecond:
            raise ValueError("start_time must be aligned to an hour boundary")
        return v

    @model_validator(mode="after")
    def _check(self) -> FlowSeries:
        n, d, t = self.values.shape
        if n < 1 or d < 1 or t < 1:
            raise ValueError(f"empty flow tensor of shape {self.values.shape}")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} feature names for {d} features")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("flow values must be finite")
        if np.any(self.values < 0):
            raise ValueError("flow values must be non-negative")
        return self

    @property
    def n_grids(self) -> int:
        return self.values.shape[0]

    @property
    def d_features(self) -> int:
        return self.values.shape[1]

    @property
    def t_hours(self) -> int:
        return self.values.shape[2]

    @property
    def end_time(self) -> datetime:
        """Istante (escluso) successivo all'ultima ora."""
        return self.start_time + self.t_hours * HOUR

    def time_at(self, k: int) -> datetime:
        return self.start_time + k * HOUR

    def hour_index(self, ts: datetime) -> int:
        delta = as_utc(ts) - self.start_time
        return int(delta // HOUR)

    def slice_hours(self, start: int, stop: int) -> FlowSeries:
        if not 0 <= start < stop <= self.t_hours:
            raise ValueError(f"hour range [{start}, {stop}) outside series of {self.t_hours} hours")
        return FlowSeries(values=self.values[:, :, start:stop], start_time=self.time_at(start),
                          feature_names=self.feature_names)


class GridGeometry(BaseModel):
    """Griglia regolare: origine all'angolo sud-ovest, indici row-major (riga 0 a sud)."""

    model_config = ConfigDict(frozen=True)

    origin_lat: float
    origin_lng: float
    cell_size_m: float = Field(gt=0)
    n_rows: int = Field(ge=1)
    n_cols: int = Field(ge=1)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols


class GraphSpec(GridGeometry):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    adjacency: np.ndarray

    @field_validator("adjacency", mode="before")
    @classmethod
    def _adjacency(cls, v):
        return _frozen_array(v, 2, "adjacency")

    @model_validator(mode="after")
    def _check(self) -> GraphSpec:
        a = self.adjacency
        if a.shape != (self.n_cells, self.n_cells):
            raise ValueError(f"adjacency shape {a.shape} does not match {self.n_rows}x{self.n_cols} grid")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        return self

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(origin_lat=self.origin_lat, origin_lng=self.origin_lng,
                            cell_size_m=self.cell_size_m, n_rows=self.n_rows, n_cols=self.n_cols)


class WindowSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    t1: int = Field(default=6, ge=1)
    t2: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)


class Sample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    y: np.ndarray
    anchor_time: datetime
