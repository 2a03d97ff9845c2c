from __future__ import annotations

from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np
import torch
import torch.nn as nn

from app.core.exceptions import ModelInputError
from app.schemas.flows import FlowSeries

HOURS_PER_WEEK = 168


def hour_of_week(ts: datetime, tz: str = "UTC") -> int:
    local = ts.astimezone(ZoneInfo(tz))
    return local.weekday() * 24 + local.hour


class Persistence(nn.Module):
    """Ripete l'ultima ora osservata su tutti gli orizzonti."""

    uses_normalization = False

    def __init__(self, d: int, t1: int, t2: int):
        super().__init__()
        self.d, self.t1, self.t2 = d, t1, t2

    def forward(self, x: torch.Tensor, a: torch.Tensor, hour_of_week: torch.Tensor | None = None) -> torch.Tensor:
        return x[..., -1:].repeat_interleave(self.t2, dim=-1)


class HistoricalAverage(nn.Module):
    """Media di training per (ora della settimana, cella, feature).

    Le righe oltre le n celle (nodi ausiliari) ricevono la persistenza: vengono comunque scartate.
    """

    uses_normalization = False

    def __init__(self, n: int, d: int, t1: int, t2: int):
        super().__init__()
        self.n, self.d, self.t1, self.t2 = n, d, t1, t2
        self.register_buffer("table", torch.zeros(HOURS_PER_WEEK, n, d, dtype=torch.float64))

    def fit(self, series: FlowSeries, tz: str = "UTC") -> HistoricalAverage:
        sums = np.zeros((HOURS_PER_WEEK, self.n, self.d))
        counts = np.zeros(HOURS_PER_WEEK)
        for k in range(series.t_hours):
            slot = hour_of_week(series.time_at(k), tz)
            sums[slot] += series.values[:, :, k]
            counts[slot] += 1
        overall = series.values.mean(axis=2)
        table = np.where(counts[:, None, None] > 0, sums / np.maximum(counts, 1)[:, None, None], overall[None])
        self.table = torch.as_tensor(table, dtype=self.table.dtype)
        return self

    def forward(self, x: torch.Tensor, a: torch.Tensor, hour_of_week: torch.Tensor | None = None) -> torch.Tensor:
        if hour_of_week is None:
            raise ModelInputError("historical_average needs the hour-of-week of each anchor")
        unbatched = x.dim() == 3
        if unbatched:
            x = x.unsqueeze(0)
            hour_of_week = hour_of_week.reshape(1)
        out = x[..., -1:].repeat_interleave(self.t2, dim=-1).clone()
        steps = torch.arange(self.t2, device=x.device)
        slots = (hour_of_week.long().unsqueeze(-1) + steps) % HOURS_PER_WEEK  # [B, t2]
        hist = self.table.to(x.dtype)[slots]  # [B, t2, n, d]
        out[:, :self.n] = hist.permute(0, 2, 3, 1)
        return out.squeeze(0) if unbatched else out
