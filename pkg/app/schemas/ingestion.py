from __future__ import annotations

import math
from datetime import date, datetime

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class TripRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    started_at: datetime
    ended_at: datetime
    start_lat: float
    start_lng: float
    end_lat: float
    end_lng: float

    @model_validator(mode="after")
    def _check(self) -> TripRecord:
        if self.ended_at < self.started_at:
            raise ValueError("ended_at precedes started_at")
        coords = (self.start_lat, self.start_lng, self.end_lat, self.end_lng)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError("coordinates must be finite")
        return self


class SplitSpec(BaseModel):
    """Intervalli di giorni interi, estremi inclusi, in ordine cronologico."""

    model_config = ConfigDict(frozen=True)

    train: tuple[date, date] = (date(2023, 5, 4), date(2023, 8, 9))
    val: tuple[date, date] = (date(2023, 8, 10), date(2023, 8, 23))
    test: tuple[date, date] = (date(2023, 8, 24), date(2023, 9, 20))

    @field_validator("train", "val", "test")
    @classmethod
    def _range(cls, v: tuple[date, date]) -> tuple[date, date]:
        if v[1] < v[0]:
            raise ValueError(f"range {v[0]}..{v[1]} ends before it starts")
        return v

    @model_validator(mode="after")
    def _chronological(self) -> SplitSpec:
        if not (self.train[1] < self.val[0] and self.val[1] < self.test[0]):
            raise ValueError("split ranges must be chronological and non-overlapping")
        return self

    def days(self, name: str) -> int:
        start, end = getattr(self, name)
        return (end - start).days + 1


class IngestReport(BaseModel):
    total: int = 0
    kept: int = 0
    out_of_bounds: int = 0
    unparseable: int = 0
    out_of_period: int = 0
    pickups_kept: int = 0
    dropoffs_kept: int = 0
    warning: str | None = None
