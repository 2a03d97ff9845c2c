from __future__ import annotations

from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable
from zoneinfo import ZoneInfo

import orjson
from pydantic import ValidationError

from app.core.exceptions import ContextError
from app.core.logging import get_logger
from app.schemas.context import CalendarInfo, ContextRecord, DayContextInput, EventInfo, Scope, WeatherInfo
from app.schemas.flows import as_utc

logger = get_logger(__name__)


def _ordinal(n: int) -> str:
    if 11 <= n % 100 <= 13:
        return f"{n}th"
    suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def _quantity(v: float) -> str:
    return "zero" if v == 0 else f"{v:g}"


def compose_city_text(day: date, weather: WeatherInfo, calendar: CalendarInfo) -> str:
    """Testo di contesto cittadino, una frase per fatto.

    Esempio: "Today is May 13th. There is zero precipitation. The air quality index is zero.
    The temperature ranges from 21 to 30 degrees Celsius. The weather is clear. Today is Saturday."
    """
    if weather.precipitation_mm == 0:
        rain = "There is zero precipitation."
    else:
        rain = f"There is {weather.precipitation_mm:g} mm of precipitation."
    sentences = [
        f"Today is {day.strftime('%B')} {_ordinal(day.day)}.",
        rain,
        f"The air quality index is {_quantity(weather.aqi)}.",
        f"The temperature ranges from {weather.temp_min_c:g} to {weather.temp_max_c:g} degrees Celsius.",
        f"The weather is {weather.condition}.",
        f"Today is {calendar.weekday}.",
    ]
    if calendar.holiday_name:
        sentences.append(f"Today is {calendar.holiday_name}.")
    return " ".join(sentences)


def prediction_hour_text(local_time: datetime) -> str:
    return f"The prediction is for {local_time.hour:02d}:00 on {local_time.strftime('%A')}."


def compose_node_text(grid: int, events: list[EventInfo]) -> str:
    """Testo di contesto per una cella: sede, evento e orari; testo canonico se non ci sono eventi."""
    if not events:
        return f"There are no scheduled events near grid {grid}."
    ordered = sorted(events, key=lambda ev: (ev.start_time, ev.end_time, ev.name))
    return " ".join(
        f"Near grid {grid}, {ev.venue} hosts {ev.name} from "
        f"{ev.start_time.strftime('%H:%M')} to {ev.end_time.strftime('%H:%M')}."
        for ev in ordered
    )


# --- Input JSONL -------------------------------------------------------------

def read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"context file not found: {path}")
    with path.open("rb") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    yield lineno, orjson.loads(line)
                except orjson.JSONDecodeError as e:
                    raise ContextError(f"invalid JSON at {path}:{lineno}", exc=e)


def load_day_contexts(path: str | Path) -> dict[date, DayContextInput]:
    days: dict[date, DayContextInput] = {}
    for lineno, obj in read_jsonl(path):
        try:
            item = DayContextInput.model_validate(obj)
        except ValidationError as e:
            raise ContextError(f"invalid day context at line {lineno}", details={"errors": e.errors()}, exc=e)
        days[item.date] = item
    return days


def load_events(path: str | Path) -> list[EventInfo]:
    events = []
    for lineno, obj in read_jsonl(path):
        try:
            events.append(EventInfo.model_validate(obj))
        except ValidationError as e:
            raise ContextError(f"invalid event at line {lineno}", details={"errors": e.errors()}, exc=e)
    return sorted(events, key=lambda ev: ev.start_time)


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        for row in rows:
            fh.write(orjson.dumps(row, option=orjson.OPT_SORT_KEYS) + b"\n")
    return path


# --- Catalogo dei contesti ---------------------------------------------------

class ContextCatalog:
    """Associa a ogni istante di previsione i ContextRecord cittadino e di cella.

    Il contesto cittadino è per (giorno locale, ora di previsione); quello di cella per giorno locale,
    con il testo canonico "nessun evento" nei giorni senza eventi.
    """

    def __init__(self, days: dict[date, DayContextInput], events: list[EventInfo], tz: str,
                 holidays: dict[date, str] | None = None, node_grid: int | None = None):
        self.days = days
        self.tz = ZoneInfo(tz)
        self.holidays = holidays or {}
        self.node_grid = node_grid
        self._events_by_day: dict[tuple[int, date], list[EventInfo]] = {}
        for ev in events:
            grid = ev.target_grid if ev.target_grid is not None else node_grid
            if grid is None:
                raise ContextError("event without target_grid and no default node grid", details={"event": ev.name})
            if ev.start_time.tzinfo is not None:
                # i testi riportano l'ora locale
                ev = ev.model_copy(update={"start_time": ev.start_time.astimezone(self.tz),
                                           "end_time": ev.end_time.astimezone(self.tz)})
            self._events_by_day.setdefault((grid, ev.start_time.date()), []).append(ev)

    def local(self, ts: datetime) -> datetime:
        return as_utc(ts).astimezone(self.tz)

    def _day_bounds(self, day: date) -> tuple[datetime, datetime]:
        start = datetime.combine(day, time(0), tzinfo=self.tz).astimezone(timezone.utc)
        end = datetime.combine(day + timedelta(days=1), time(0), tzinfo=self.tz).astimezone(timezone.utc)
        return start, end

    def day_text(self, day: date) -> str:
        item = self.days.get(day)
        if item is None:
            raise ContextError(f"no weather/calendar record for {day.isoformat()}")
        holiday = item.holiday or self.holidays.get(day)
        return compose_city_text(day, item.weather, CalendarInfo.for_date(day, holiday))

    def city_record(self, anchor_time: datetime) -> ContextRecord:
        local = self.local(anchor_time)
        text = f"{self.day_text(local.date())} {prediction_hour_text(local)}"
        start = as_utc(anchor_time)
        return ContextRecord(scope=Scope.CITY, valid_from=start, valid_to=start + timedelta(hours=1), text=text)

    def events_on(self, grid: int, day: date) -> list[EventInfo]:
        return self._events_by_day.get((grid, day), [])

    def node_record(self, anchor_time: datetime, grid: int) -> ContextRecord:
        day = self.local(anchor_time).date()
        valid_from, valid_to = self._day_bounds(day)
        return ContextRecord(scope=Scope.NODE, target_grid=grid, valid_from=valid_from, valid_to=valid_to,
                             text=compose_node_text(grid, self.events_on(grid, day)))

    def event_days(self, grid: int) -> set[date]:
        return {day for (g, day) in self._events_by_day if g == grid}

    def is_event_day(self, anchor_time: datetime, grid: int) -> bool:
        return (grid, self.local(anchor_time).date()) in self._events_by_day

    def records_for(self, anchors: Iterable[datetime], scopes: Iterable[Scope], grid: int | None = None
                    ) -> dict[Scope, list[ContextRecord]]:
        """Un ContextRecord per scope e per istante di previsione."""
        grid = grid if grid is not None else self.node_grid
        anchors = list(anchors)
        out: dict[Scope, list[ContextRecord]] = {}
        for scope in scopes:
            if scope is Scope.CITY:
                out[scope] = [self.city_record(a) for a in anchors]
            else:
                if grid is None:
                    raise ContextError("node-scope context requires a target grid")
                out[scope] = [self.node_record(a, grid) for a in anchors]
        return out
