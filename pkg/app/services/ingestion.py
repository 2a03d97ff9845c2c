from __future__ import annotations

import math
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Literal
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from app.core.exceptions import DataValidationError, IngestionError
from app.core.logging import get_logger
from app.schemas.flows import HOUR, FlowSeries, GraphSpec, GridGeometry, as_utc
from app.schemas.ingestion import IngestReport, SplitSpec, TripRecord

logger = get_logger(__name__)

EARTH_RADIUS_M = 6_371_008.8
OUT_OF_BOUNDS = -1
FEATURES = ("pickup", "dropoff")
TRIP_COLUMNS = ["started_at", "ended_at", "start_lat", "start_lng", "end_lat", "end_lng"]
UNPARSEABLE_WARNING_RATIO = 0.01


# --- Griglia -----------------------------------------------------------------

def project_local(lat, lng, grid: GridGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Proiezione equirettangolare locale (metri est, metri nord) rispetto all'origine della griglia."""
    lat = np.asarray(lat, dtype=np.float64)
    lng = np.asarray(lng, dtype=np.float64)
    x = EARTH_RADIUS_M * np.radians(lng - grid.origin_lng) * math.cos(math.radians(grid.origin_lat))
    y = EARTH_RADIUS_M * np.radians(lat - grid.origin_lat)
    return x, y


def local_to_latlng(x_m: float, y_m: float, grid: GridGeometry) -> tuple[float, float]:
    """Inversa di project_local, utile per generare coordinate di test e dati sintetici."""
    lat = grid.origin_lat + math.degrees(y_m / EARTH_RADIUS_M)
    lng = grid.origin_lng + math.degrees(x_m / (EARTH_RADIUS_M * math.cos(math.radians(grid.origin_lat))))
    return lat, lng


def assign_grid_many(lat, lng, grid: GridGeometry) -> np.ndarray:
    """Versione vettoriale di assign_grid; OUT_OF_BOUNDS per punti fuori griglia o non finiti."""
    x, y = project_local(lat, lng, grid)
    with np.errstate(invalid="ignore"):
        col = np.floor(x / grid.cell_size_m)
        row = np.floor(y / grid.cell_size_m)
    inside = (np.isfinite(col) & np.isfinite(row)
              & (col >= 0) & (col < grid.n_cols) & (row >= 0) & (row < grid.n_rows))
    idx = np.full(np.shape(x), OUT_OF_BOUNDS, dtype=np.int64)
    idx[inside] = (row[inside] * grid.n_cols + col[inside]).astype(np.int64)
    return idx


def assign_grid(lat: float, lng: float, grid: GridGeometry) -> int:
    """Indice row-major della cella che contiene il punto, con celle semiaperte [bordo, bordo + lato).

    Returns:
        int: Indice in [0, n) oppure OUT_OF_BOUNDS.
    """
    return int(assign_grid_many(np.array([lat]), np.array([lng]), grid)[0])


def build_adjacency(grid: GridGeometry, scheme: Literal["rook4", "queen8"] = "rook4") -> np.ndarray:
    """Adiacenza 0/1 simmetrica tra celle: rook4 collega i vicini laterali, queen8 aggiunge le diagonali."""
    if scheme not in ("rook4", "queen8"):
        raise DataValidationError(f"unknown adjacency scheme {scheme!r}")
    rows, cols = grid.n_rows, grid.n_cols
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if scheme == "queen8":
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    a = np.zeros((rows * cols, rows * cols), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    a[r * cols + c, rr * cols + cc] = 1.0
    return a


def build_graph(grid: GridGeometry, scheme: Literal["rook4", "queen8"] = "rook4") -> GraphSpec:
    return GraphSpec(**grid.model_dump(), adjacency=build_adjacency(grid, scheme))


# --- Aggregazione ------------------------------------------------------------

def hour_period(start: datetime, end: datetime) -> tuple[datetime, datetime]:
    start, end = as_utc(start), as_utc(end)
    for ts in (start, end):
        if ts.minute or ts.second or ts.microsecond:
            raise DataValidationError("period must be aligned to hour boundaries", details={"ts": ts.isoformat()})
    if end <= start:
        raise DataValidationError("empty aggregation period")
    return start, end


def local_day_bounds(first: date, last: date, tz: str) -> tuple[datetime, datetime]:
    """Intervallo UTC [inizio di first, fine di last) per giorni interi nel fuso tz."""
    zone = ZoneInfo(tz)
    start = datetime.combine(first, time(0), tzinfo=zone).astimezone(timezone.utc)
    end = datetime.combine(last + timedelta(days=1), time(0), tzinfo=zone).astimezone(timezone.utc)
    return start, end


class FlowAggregator:
    """Accumula i conteggi orari di prelievi/rilasci per cella.

    Ogni blocco di record produce un tensore parziale che viene sommato al totale:
    l'unione è una somma elemento per elemento, quindi indipendente dall'ordine.
    """

    def __init__(self, grid: GridGeometry, period: tuple[datetime, datetime], tz: str = "UTC"):
        self.grid = grid
        self.t_start, self.t_end = hour_period(*period)
        self.tz = tz
        self.t_hours = int((self.t_end - self.t_start) // HOUR)
        self.counts = np.zeros((grid.n_cells, len(FEATURES), self.t_hours), dtype=np.float64)
        self.report = IngestReport()

    def _hour_index(self, ts_utc: pd.Series) -> np.ndarray:
        delta = (ts_utc - pd.Timestamp(self.t_start)) // pd.Timedelta(hours=1)
        return delta.to_numpy(dtype=np.float64, na_value=np.nan)

    def add_frame(self, frame: pd.DataFrame) -> None:
        """Aggiunge un blocco di record grezzi (colonne TRIP_COLUMNS, timestamp locali)."""
        partial = np.zeros_like(self.counts)
        total = len(frame)
        started = _parse_local(frame["started_at"], self.tz)
        ended = _parse_local(frame["ended_at"], self.tz)
        coords = frame[TRIP_COLUMNS[2:]].apply(pd.to_numeric, errors="coerce")
        ok = (started.notna() & ended.notna() & np.isfinite(coords).all(axis=1) & (ended >= started)).to_numpy()

        legs_kept = np.zeros(total, dtype=bool)
        for f, (ts, lat_col, lng_col) in enumerate([(started, "start_lat", "start_lng"),
                                                     (ended, "end_lat", "end_lng")]):
            hours = self._hour_index(ts)
            cells = assign_grid_many(coords[lat_col].to_numpy(), coords[lng_col].to_numpy(), self.grid)
            with np.errstate(invalid="ignore"):
                in_period = ok & (hours >= 0) & (hours < self.t_hours)
            in_bounds = ok & (cells != OUT_OF_BOUNDS)
            keep = in_period & in_bounds
            np.add.at(partial, (cells[keep], f, hours[keep].astype(np.int64)), 1.0)
            legs_kept |= keep
            self.report.out_of_bounds += int(np.count_nonzero(ok & ~in_bounds))
            self.report.out_of_period += int(np.count_nonzero(in_bounds & ~in_period))
            if f == 0:
                self.report.pickups_kept += int(np.count_nonzero(keep))
            else:
                self.report.dropoffs_kept += int(np.count_nonzero(keep))

        self.counts += partial
        self.report.total += total
        self.report.unparseable += int(total - np.count_nonzero(ok))
        self.report.kept += int(np.count_nonzero(legs_kept))

    def add_trips(self, trips: Iterable[TripRecord], chunk_size: int = 50_000) -> None:
        buffer: list[dict] = []
        for trip in trips:
            buffer.append(trip.model_dump())
            if len(buffer) >= chunk_size:
                self.add_frame(pd.DataFrame(buffer, columns=TRIP_COLUMNS))
                buffer = []
        if buffer:
            self.add_frame(pd.DataFrame(buffer, columns=TRIP_COLUMNS))

    def finish(self) -> FlowSeries:
        if self.report.total and self.report.unparseable / self.report.total > UNPARSEABLE_WARNING_RATIO:
            self.report.warning = (f"{self.report.unparseable} of {self.report.total} records unparseable "
                                   f"(> {UNPARSEABLE_WARNING_RATIO:.0%})")
            logger.warning(self.report.warning)
        return FlowSeries(values=self.counts, start_time=self.t_start, feature_names=FEATURES)


def _parse_local(col: pd.Series, tz: str) -> pd.Series:
    if pd.api.types.is_datetime64_any_dtype(col) and getattr(col.dt, "tz", None) is not None:
        return col.dt.tz_convert("UTC")
    if not pd.api.types.is_datetime64_any_dtype(col):
        zone = ZoneInfo(tz)
        col = col.map(lambda v: v.astimezone(zone).replace(tzinfo=None)
                      if isinstance(v, datetime) and v.tzinfo is not None else v)
    parsed = pd.to_datetime(col, format="ISO8601", errors="coerce")
    # ora ambigua del cambio d'ora: si assume l'ora legale
    localized = parsed.dt.tz_localize(tz, ambiguous=np.ones(len(parsed), dtype=bool),
                                      nonexistent="shift_forward")
    return localized.dt.tz_convert("UTC")


def aggregate_flows(trips: Iterable[TripRecord], grid: GridGeometry, period: tuple[datetime, datetime],
                    tz: str = "UTC") -> FlowSeries:
    """Conta prelievi (feature 0) e rilasci (feature 1) per cella e per ora.

    Args:
        trips (Iterable[TripRecord]): Viaggi; i timestamp naive sono nel fuso tz del dataset.
        grid (GridGeometry): Geometria della griglia.
        period (tuple[datetime, datetime]): [inizio, fine) allineati all'ora, UTC.
        tz (str): Fuso del dataset.

    Returns:
        FlowSeries: Conteggi orari; viaggi fuori periodo o fuori griglia sono esclusi (per tratta).
    """
    aggregator = FlowAggregator(grid, period, tz)
    aggregator.add_trips(trips)
    return aggregator.finish()


def ingest_csv(path: str | Path, grid: GridGeometry, period: tuple[datetime, datetime], tz: str,
               chunk_size: int = 200_000) -> tuple[FlowSeries, IngestReport]:
    """Legge un CSV di viaggi a blocchi e lo aggrega in una FlowSeries.

    Raises:
        FileNotFoundError: Il file non esiste.
        IngestionError: Colonne obbligatorie mancanti.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trip file not found: {path}")
    aggregator = FlowAggregator(grid, period, tz)
    reader = pd.read_csv(path, chunksize=chunk_size, dtype=str, keep_default_na=False,
                         usecols=lambda c: c in TRIP_COLUMNS)
    for chunk in reader:
        missing = [c for c in TRIP_COLUMNS if c not in chunk.columns]
        if missing:
            raise IngestionError("trip CSV lacks required columns", details={"missing": missing, "file": str(path)})
        aggregator.add_frame(chunk)
    series = aggregator.finish()
    logger.info(f"Ingested {aggregator.report.total} records from {path}: kept {aggregator.report.kept}, "
                f"unparseable {aggregator.report.unparseable}, out of bounds legs {aggregator.report.out_of_bounds}")
    return series, aggregator.report


# --- Split -------------------------------------------------------------------

def split_series(series: FlowSeries, split: SplitSpec, tz: str = "UTC") -> tuple[FlowSeries, FlowSeries, FlowSeries]:
    """Divide la serie in train/val/test per giorni interi (nel fuso tz), in ordine cronologico.

    Raises:
        DataValidationError: Intervalli sovrapposti o fuori dal periodo della serie.
    """
    ranges = [split.train, split.val, split.test]
    for (_, prev_end), (next_start, _) in zip(ranges, ranges[1:]):
        if next_start <= prev_end:
            raise DataValidationError("split ranges overlap")

    parts = []
    for name, (first, last) in zip(("train", "val", "test"), ranges):
        start, end = local_day_bounds(first, last, tz)
        i0, i1 = series.hour_index(start), series.hour_index(end)
        if start < series.start_time or end > series.end_time:
            raise DataValidationError(f"{name} range outside series",
                                      details={"range": [first.isoformat(), last.isoformat()],
                                               "series": [series.start_time.isoformat(),
                                                          series.end_time.isoformat()]})
        parts.append(series.slice_hours(i0, i1))
    return parts[0], parts[1], parts[2]
