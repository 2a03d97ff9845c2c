from __future__ import annotations

import math
from datetime import date, datetime
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Scope(str, Enum):
    CITY = "city"
    NODE = "node"


class WeatherInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    precipitation_mm: float = Field(ge=0)
    aqi: float = Field(ge=0)
    temp_min_c: float
    temp_max_c: float
    condition: str = "clear"

    @model_validator(mode="after")
    def _finite(self) -> WeatherInfo:
        for value in (self.precipitation_mm, self.aqi, self.temp_min_c, self.temp_max_c):
            if not math.isfinite(value):
                raise ValueError("weather values must be finite")
        return self


class CalendarInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    weekday: str
    holiday_name: str | None = None

    @classmethod
    def for_date(cls, day: date, holiday_name: str | None = None) -> CalendarInfo:
        return cls(weekday=day.strftime("%A"), holiday_name=holiday_name)


class DayContextInput(BaseModel):
    """Una riga del JSONL meteo/calendario."""

    date: date
    precipitation_mm: float = Field(ge=0)
    aqi: float = Field(ge=0)
    temp_min_c: float
    temp_max_c: float
    condition: str = "clear"
    holiday: str | None = None

    @property
    def weather(self) -> WeatherInfo:
        return WeatherInfo(precipitation_mm=self.precipitation_mm, aqi=self.aqi,
                           temp_min_c=self.temp_min_c, temp_max_c=self.temp_max_c,
                           condition=self.condition)


class EventInfo(BaseModel):
    """Una riga del JSONL eventi; orari nel fuso locale del dataset."""

    model_config = ConfigDict(frozen=True)

    name: str
    venue: str
    start_time: datetime
    end_time: datetime
    target_grid: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _order(self) -> EventInfo:
        if self.end_time <= self.start_time:
            raise ValueError("event end_time must follow start_time")
        return self


class ContextRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scope: Scope
    target_grid: int | None = None
    valid_from: datetime
    valid_to: datetime
    text: str
    embedding: np.ndarray | None = None

    @field_validator("embedding", mode="before")
    @classmethod
    def _embedding(cls, v):
        if v is None:
            return None
        arr = np.array(v, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise ValueError("embedding must be a vector")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check(self) -> ContextRecord:
        if self.scope is Scope.NODE and self.target_grid is None:
            raise ValueError("node-scope context requires target_grid")
        if self.target_grid is not None and self.target_grid < 0:
            raise ValueError("target_grid must be non-negative")
        if not self.valid_from < self.valid_to:
            raise ValueError("valid_from must precede valid_to")
        if not self.text:
            raise ValueError("context text must be non-empty")
        return self

    def to_json_dict(self) -> dict:
        return {
            "scope": self.scope.value,
            "target_grid": self.target_grid,
            "valid_from": self.valid_from.isoformat(),
            "valid_to": self.valid_to.isoformat(),
            "text": self.text,
            "embedding": None if self.embedding is None else self.embedding.tolist(),
        }
