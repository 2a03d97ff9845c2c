from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.logging import get_logger
from app.schemas.context import DayContextInput, EventInfo
from app.schemas.experiment import SynthSpec
from app.schemas.flows import FlowSeries, GraphSpec, GridGeometry
from app.services.context import write_jsonl
from app.services.ingestion import FEATURES, build_graph
from app.services.storage import save_series

logger = get_logger(__name__)

SERIES_DIR = "series"
WEATHER_FILE = "weather.jsonl"
EVENTS_FILE = "events.jsonl"


class SynthDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    series: FlowSeries
    graph: GraphSpec
    days: list[DayContextInput]
    events: list[EventInfo]

    def day_map(self) -> dict[date, DayContextInput]:
        return {row.date: row for row in self.days}


def _event_multipliers(spec: SynthSpec) -> np.ndarray:
    mult = np.ones((spec.n_rows * spec.n_cols, spec.days))
    for ev in spec.events:
        mult[ev.target_grid, ev.day] *= ev.multiplier
    return mult


def _weather_stub(spec: SynthSpec, rng: np.random.Generator) -> list[DayContextInput]:
    rows = []
    for k in range(spec.days):
        precipitation = round(max(0.0, float(rng.normal(0.0, 3.0))), 1)
        temp_min = int(rng.integers(16, 25))
        rows.append(DayContextInput(
            date=spec.start_date + timedelta(days=k),
            precipitation_mm=precipitation,
            aqi=int(rng.integers(20, 80)),
            temp_min_c=temp_min,
            temp_max_c=temp_min + int(rng.integers(4, 11)),
            condition="rainy" if precipitation > 1.0 else "clear",
        ))
    return rows


def _events(spec: SynthSpec) -> list[EventInfo]:
    out = []
    for ev in spec.events:
        day = spec.start_date + timedelta(days=ev.day)
        start = datetime.combine(day, time(spec.event_start_hour), tzinfo=timezone.utc)
        out.append(EventInfo(name=spec.event_name, venue=spec.venue, start_time=start,
                             end_time=start + timedelta(hours=spec.event_end_hour - spec.event_start_hour),
                             target_grid=ev.target_grid))
    return out


def synth_generate(spec: SynthSpec) -> SynthDataset:
    """Dataset sintetico con eventi pianificati, in UTC.

    flow[g, f, h] = profilo(ora) · fattore(giorno della settimana) · scala(g) · moltiplicatore(g, giorno)
    più rumore di tipo Poisson (varianza proporzionale al valore), troncato a zero: la deviazione è
    noise_level · sqrt(valore · livello medio del profilo), cioè noise_level · valore al livello medio.
    I rilasci seguono il profilo dei prelievi spostato di dropoff_shift_hours.
    Stessa SynthSpec, stesso dataset bit per bit.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows * spec.n_cols
    t_hours = spec.days * 24
    scale = rng.uniform(*spec.grid_scale_range, size=n)
    days = _weather_stub(spec, rng)

    base = np.asarray(spec.base_profile, dtype=np.float64)
    hours = np.arange(t_hours) % 24
    day_idx = np.arange(t_hours) // 24
    week = np.asarray(spec.week_factors)[[(spec.start_date + timedelta(days=int(k))).weekday() for k in day_idx]]
    profiles = np.stack([base[hours], base[(hours - spec.dropoff_shift_hours) % 24]])  # [d, T]

    values = scale[:, None, None] * profiles[None] * week[None, None, :]
    values = values * _event_multipliers(spec)[:, day_idx][:, None, :]
    if spec.noise_level > 0:
        ref = float(base.mean())
        values = values + rng.normal(0.0, 1.0, size=values.shape) * spec.noise_level * np.sqrt(values * ref)
    values = np.clip(values, 0.0, None)

    start = datetime.combine(spec.start_date, time(0), tzinfo=timezone.utc)
    series = FlowSeries(values=values, start_time=start, feature_names=FEATURES)
    graph = build_graph(GridGeometry(origin_lat=spec.origin_lat, origin_lng=spec.origin_lng,
                                     cell_size_m=spec.cell_size_m, n_rows=spec.n_rows, n_cols=spec.n_cols))
    logger.info(f"Synthetic dataset: {n} grids, {spec.days} days, {len(spec.events)} event days, seed {spec.seed}")
    return SynthDataset(series=series, graph=graph, days=days, events=_events(spec))


def write_synth_dataset(dataset: SynthDataset, directory: str | Path) -> dict[str, Path]:
    directory = Path(directory)
    paths = {
        "series": save_series(dataset.series, directory / SERIES_DIR, dataset.graph),
        "weather": write_jsonl(directory / WEATHER_FILE, (d.model_dump(mode="json") for d in dataset.days)),
        "events": write_jsonl(directory / EVENTS_FILE, (e.model_dump(mode="json") for e in dataset.events)),
    }
    return paths
