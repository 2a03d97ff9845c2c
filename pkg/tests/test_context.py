from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo

import numpy as np
import pytest

from app.core.exceptions import ContextError
from app.schemas.context import CalendarInfo, DayContextInput, EventInfo, Scope, WeatherInfo
from app.services.context import (ContextCatalog, compose_city_text, compose_node_text, load_day_contexts,
                                  load_events, write_jsonl)
from app.services.storage import load_series, save_series

NY = ZoneInfo("America/New_York")


def test_city_text_example():
    text = compose_city_text(date(2023, 5, 13),
                             WeatherInfo(precipitation_mm=0, aqi=0, temp_min_c=21, temp_max_c=30),
                             CalendarInfo.for_date(date(2023, 5, 13)))
    assert text == ("Today is May 13th. There is zero precipitation. The air quality index is zero. "
                    "The temperature ranges from 21 to 30 degrees Celsius. The weather is clear. "
                    "Today is Saturday.")


def test_city_text_names_holiday_and_rain():
    text = compose_city_text(date(2023, 7, 4),
                             WeatherInfo(precipitation_mm=2.5, aqi=41, temp_min_c=22, temp_max_c=29,
                                         condition="rainy"),
                             CalendarInfo.for_date(date(2023, 7, 4), "Independence Day"))
    assert "Today is July 4th." in text
    assert "There is 2.5 mm of precipitation." in text
    assert text.endswith("Today is Tuesday. Today is Independence Day.")


def test_node_text():
    ev = EventInfo(name="Concert", venue="Barclays Center", start_time=datetime(2023, 8, 1, 19),
                   end_time=datetime(2023, 8, 1, 23), target_grid=84)
    assert compose_node_text(84, [ev]) == "Near grid 84, Barclays Center hosts Concert from 19:00 to 23:00."
    assert compose_node_text(84, []) == "There are no scheduled events near grid 84."


def _catalog() -> ContextCatalog:
    days = {date(2023, 8, d): DayContextInput(date=date(2023, 8, d), precipitation_mm=0, aqi=30,
                                              temp_min_c=20, temp_max_c=28) for d in (1, 2)}
    events = [EventInfo(name="Game", venue="Arena", start_time=datetime(2023, 8, 1, 19, tzinfo=NY),
                        end_time=datetime(2023, 8, 1, 22, tzinfo=NY), target_grid=84)]
    return ContextCatalog(days, events, "America/New_York", holidays={}, node_grid=84)


def test_catalog_records_follow_local_time():
    catalog = _catalog()
    # 03:00 UTC del 2 agosto = 23:00 del 1 agosto a New York
    anchor = datetime(2023, 8, 2, 3, tzinfo=timezone.utc)
    city = catalog.city_record(anchor)
    assert city.text.startswith("Today is August 1st.")
    assert city.text.endswith("The prediction is for 23:00 on Tuesday.")
    node = catalog.node_record(anchor, 84)
    assert node.text == "Near grid 84, Arena hosts Game from 19:00 to 22:00."
    assert catalog.is_event_day(anchor, 84)
    assert not catalog.is_event_day(datetime(2023, 8, 2, 12, tzinfo=timezone.utc), 84)
    assert catalog.event_days(84) == {date(2023, 8, 1)}


def test_records_for_every_anchor_and_scope():
    catalog = _catalog()
    anchors = [datetime(2023, 8, 1, 12 + h, tzinfo=timezone.utc) for h in range(3)]
    records = catalog.records_for(anchors, [Scope.CITY, Scope.NODE])
    assert [len(records[s]) for s in (Scope.CITY, Scope.NODE)] == [3, 3]
    assert all(r.target_grid == 84 for r in records[Scope.NODE])
    assert len({r.text for r in records[Scope.CITY]}) == 3


def test_missing_day_record():
    with pytest.raises(ContextError):
        _catalog().city_record(datetime(2023, 8, 5, 12, tzinfo=timezone.utc))


def test_context_jsonl_roundtrip(tmp_path):
    write_jsonl(tmp_path / "weather.jsonl", [
        {"date": "2023-08-01", "precipitation_mm": 0, "aqi": 30, "temp_min_c": 20, "temp_max_c": 28},
    ])
    write_jsonl(tmp_path / "events.jsonl", [
        {"name": "Game", "venue": "Arena", "start_time": "2023-08-01T19:00:00",
         "end_time": "2023-08-01T22:00:00", "target_grid": 84},
    ])
    assert list(load_day_contexts(tmp_path / "weather.jsonl")) == [date(2023, 8, 1)]
    assert load_events(tmp_path / "events.jsonl")[0].venue == "Arena"


def test_invalid_context_line(tmp_path):
    (tmp_path / "weather.jsonl").write_text('{"date": "2023-08-01", "aqi": -1}\n')
    with pytest.raises(ContextError):
        load_day_contexts(tmp_path / "weather.jsonl")


def test_series_directory_format(tmp_path, make_series):
    series = make_series(n=4, t=30)
    directory = save_series(series, tmp_path / "series")
    raw = np.fromfile(directory / "values.bin", dtype="<f8")
    assert raw.shape == (4 * 2 * 30,)
    assert raw[2 * 30 + 5] == series.values[1, 0, 5]
    loaded, graph = load_series(directory)
    assert graph is None
    assert np.array_equal(loaded.values, series.values)
    assert loaded.start_time == series.start_time
