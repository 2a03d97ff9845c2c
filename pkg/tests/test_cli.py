import os
from datetime import timedelta
from pathlib import Path

import numpy as np
import orjson
import pandas as pd
import pytest

from app.main import main
from app.schemas.context import DayContextInput
from app.schemas.flows import GridGeometry
from app.services.context import write_jsonl
from app.services.ingestion import local_to_latlng

SMALL = """
seed = 5

[model]
architecture = "gcrnn"
hidden = 8

[augmentation]
scopes = ["city", "node"]

[context]
backend = "offline"
embed_dim = 16
cache_dir = "{cache}"

[optimizer]
max_epochs = 2
patience = 2
batch_size = 64
learning_rate = 0.01

[synth]
n_rows = 3
n_cols = 3
days = 21
split_days = [14, 3, 4]
events = [
  {{ day = 2, target_grid = 4, multiplier = 2.5 }},
  {{ day = 9, target_grid = 4, multiplier = 2.5 }},
  {{ day = 16, target_grid = 4, multiplier = 2.5 }},
  {{ day = 19, target_grid = 4, multiplier = 2.5 }},
]
"""

FILES = """
[data]
series_dir = "{out}/synth/series"
weather = "{out}/synth/weather.jsonl"
events = "{out}/synth/events.jsonl"
timezone = "UTC"

[split]
train = ["2023-06-01", "2023-06-14"]
val = ["2023-06-15", "2023-06-17"]
test = ["2023-06-18", "2023-06-21"]

[evaluation]
designated_grid = 4
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL.format(cache=tmp_path / "cache"))
    return path


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def test_compare_synth(small_config, tmp_path):
    out = tmp_path / "out"
    assert _run("compare", "--config", small_config, "--synth", "--out-dir", out) == 0
    table = pd.read_csv(out / "report.csv")
    assert list(table["variant"]) == ["original", "augmented"]
    manifest = orjson.loads((out / "manifest-compare.json").read_bytes())
    assert manifest["subcommand"] == "compare"
    assert manifest["seed"] == 5
    assert str(small_config) in manifest["input_digests"]
    assert str(out / "report.csv") in manifest["artifacts"]


def test_embed_twice_hits_the_cache(small_config, tmp_path):
    out = tmp_path / "out"
    for expected_ratio in (0.0, 1.0):
        assert _run("embed", "--config", small_config, "--synth", "--out-dir", out) == 0
        summary = orjson.loads((out / "embed-report.json").read_bytes())
        assert summary["hit_ratio"] == expected_ratio
    assert summary["dim"] == 16
    assert summary["records"] > summary["unique_texts"]


def test_file_pipeline(small_config, tmp_path):
    """synth -> embed -> reduce -> train -> compare sui file scritti su disco."""
    out = tmp_path / "out"
    assert _run("synth", "--config", small_config, "--out-dir", out) == 0
    files_config = tmp_path / "files.toml"
    files_config.write_text(small_config.read_text() + FILES.format(out=out.as_posix()))

    for command in (["embed"], ["reduce"], ["train", "--variant", "augmented"], ["compare"]):
        assert _run(*command, "--config", files_config, "--out-dir", out) == 0, command
    assert (out / "pca-city.json").exists() and (out / "pca-node.json").exists()
    assert (out / "model.pt").exists()
    row = orjson.loads((out / "train-eval.json").read_bytes())
    assert row["scopes"] == "city+node"
    assert len(pd.read_csv(out / "report.csv")) == 2


def test_plot_and_report(small_config, tmp_path):
    out = tmp_path / "out"
    assert _run("plot", "--config", small_config, "--synth", "--out-dir", out,
                "--grids", "4,0", "--days", "2023-06-03,2023-06-04") == 0
    assert len(pd.read_csv(out / "flows.csv")) == 2 * 2 * 24

    for models, sub in (("persistence", "a"), ("historical_average", "b")):
        assert _run("compare", "--config", small_config, "--synth", "--models", models,
                    "--out-dir", tmp_path / sub) == 0
    assert _run("report", "--inputs", tmp_path / "a" / "report.json", tmp_path / "b" / "report.json",
                "--out-dir", tmp_path / "merged") == 0
    assert len(pd.read_csv(tmp_path / "merged" / "report.csv")) == 4


def test_missing_trips_file_is_a_runtime_error(tmp_path):
    assert _run("ingest", "--trips", tmp_path / "missing.csv", "--out-dir", tmp_path / "out") == 2


def test_usage_errors(small_config, tmp_path):
    assert _run("compare", "--no-such-flag") == 1
    assert _run() == 1
    assert _run("plot", "--synth", "--grids", "x", "--days", "2023-06-01") == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("[optimizer]\nlearning_rate = -1\n")
    assert _run("compare", "--config", bad, "--synth", "--out-dir", tmp_path / "out") == 1
    assert _run("compare", "--config", tmp_path / "absent.toml", "--synth") == 1


def test_plot_error_is_a_runtime_error(small_config, tmp_path):
    assert _run("plot", "--config", small_config, "--synth", "--out-dir", tmp_path,
                "--grids", "42", "--days", "2023-06-03") == 2


REAL = """
seed = 7

[data]
series_dir = "{out}/series"
weather = "{weather}"
timezone = "{tz}"
period_start = {first}
period_end = {last}

[grid]
origin_lat = {origin_lat}
origin_lng = {origin_lng}
cell_size_m = 1000.0
n_rows = 6
n_cols = 6

[split]
train = [{first}, {train_end}]
val = [{val_start}, {val_end}]
test = [{test_start}, {last}]

[model]
architecture = "gcrnn"
hidden = 8

[augmentation]
scopes = ["city", "node"]

[context]
backend = "offline"
embed_dim = 16
cache_dir = "{out}/cache"

[optimizer]
max_epochs = 2
patience = 2
batch_size = 64

[evaluation]
designated_grid = 14
"""


def _real_trip_config(trips: str, tmp_path) -> Path:
    """Configurazione ricavata dal CSV: griglia 6x6 attorno alla mediana dei prelievi, split 70/15/15 sui giorni
    interi coperti, meteo neutro per ogni giorno."""
    frame = pd.read_csv(trips, usecols=["started_at", "start_lat", "start_lng"], dtype=str)
    started = pd.to_datetime(frame["started_at"], errors="coerce", format="ISO8601").dropna()
    first = started.min().date() + timedelta(days=1)
    last = started.max().date() - timedelta(days=1)
    n_days = (last - first).days + 1
    if n_days < 14:
        pytest.skip(f"{trips} covers only {n_days} full days")
    n_train, n_val = int(n_days * 0.7), max(2, int(n_days * 0.15))

    lat = pd.to_numeric(frame["start_lat"], errors="coerce").median()
    lng = pd.to_numeric(frame["start_lng"], errors="coerce").median()
    centre = GridGeometry(origin_lat=lat, origin_lng=lng, cell_size_m=1000.0, n_rows=6, n_cols=6)
    origin_lat, origin_lng = local_to_latlng(-3000.0, -3000.0, centre)

    weather = write_jsonl(tmp_path / "weather.jsonl", (
        DayContextInput(date=first + timedelta(days=k), precipitation_mm=0.0, aqi=40, temp_min_c=15,
                        temp_max_c=25).model_dump(mode="json")
        for k in range(n_days)))
    path = tmp_path / "real.toml"
    path.write_text(REAL.format(
        out=(tmp_path / "out").as_posix(), weather=weather.as_posix(),
        tz=os.environ.get("FLOWCTX_TRIPS_TZ", "America/New_York"),
        origin_lat=origin_lat, origin_lng=origin_lng, first=first, last=last,
        train_end=first + timedelta(days=n_train - 1), val_start=first + timedelta(days=n_train),
        val_end=first + timedelta(days=n_train + n_val - 1), test_start=first + timedelta(days=n_train + n_val)))
    return path


@pytest.mark.skipif(not os.environ.get("FLOWCTX_TRIPS_CSV"), reason="set FLOWCTX_TRIPS_CSV to a real trip CSV")
def test_real_trip_file(tmp_path):
    trips = os.environ["FLOWCTX_TRIPS_CSV"]
    config = _real_trip_config(trips, tmp_path)
    out = tmp_path / "out"
    assert _run("ingest", "--config", config, "--trips", trips, "--out-dir", out) == 0
    assert (out / "ingest-report.json").exists()
    for command in ("embed", "reduce", "compare"):
        assert _run(command, "--config", config, "--out-dir", out) == 0, command

    table = pd.read_csv(out / "report.csv")
    assert list(table["variant"]) == ["original", "augmented"]
    for column in ("mae_all", "rmse_all", "mae_grid", "rmse_grid", "mae_non_event_days", "rmse_non_event_days"):
        assert np.isfinite(table[column]).all(), column
