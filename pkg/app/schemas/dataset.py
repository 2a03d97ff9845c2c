from __future__ import annotations

from datetime import datetime
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.schemas.context import Scope
from app.schemas.flows import FlowSeries


class WindowSet(BaseModel):
    """Campioni impilati di uno split.

    x [S, n, d, t1] e y [S, n, d, t2] in conteggi grezzi; contexts[scope] [S, d'] già ridotti con PCA.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    y: np.ndarray
    hour_of_week: np.ndarray
    event_day: np.ndarray
    anchors: list[datetime]
    contexts: dict[str, np.ndarray] = {}

    @model_validator(mode="after")
    def _check(self) -> WindowSet:
        s = self.x.shape[0]
        if self.y.shape[0] != s or self.hour_of_week.shape != (s,) or self.event_day.shape != (s,) \
                or len(self.anchors) != s:
            raise ValueError("window set components disagree on the number of samples")
        for scope, c in self.contexts.items():
            if c.ndim != 2 or c.shape[0] != s:
                raise ValueError(f"{scope} contexts must have shape [{s}, d']")
        return self

    @property
    def size(self) -> int:
        return self.x.shape[0]


class PreparedData(BaseModel):
    """Tutto ciò che serve a train/evaluate, calcolato una volta e condiviso dalle varianti di un confronto."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    train: WindowSet
    val: WindowSet
    test: WindowSet
    adjacency: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    train_series: FlowSeries
    timezone: str
    designated_grid: int
    node_grid: int
    context_dims: dict[Scope, int] = {}
    provenance: dict[str, Any] = {}

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.train.x.shape[2]

    @property
    def t1(self) -> int:
        return self.train.x.shape[3]

    @property
    def t2(self) -> int:
        return self.train.y.shape[3]
