from __future__ import annotations

import hashlib
import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import orjson

from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.schemas.flows import FlowSeries, GraphSpec

logger = get_logger(__name__)

VALUES_FILE = "values.bin"
META_FILE = "meta.json"
_DTYPE = np.dtype("<f8")


def dump_json(path: str | Path, data: Any) -> Path:
    """Scrive JSON in modo atomico (file temporaneo + rename) con chiavi ordinate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = orjson.dumps(data, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
    atomic_write_bytes(path, payload)
    return path


def load_json(path: str | Path) -> Any:
    return orjson.loads(Path(path).read_bytes())


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def graph_to_dict(graph: GraphSpec) -> dict:
    return {
        "origin_lat": graph.origin_lat,
        "origin_lng": graph.origin_lng,
        "cell_size_m": graph.cell_size_m,
        "n_rows": graph.n_rows,
        "n_cols": graph.n_cols,
        "adjacency": graph.adjacency.astype(np.int64).tolist(),
    }


def graph_from_dict(data: dict) -> GraphSpec:
    return GraphSpec(origin_lat=data["origin_lat"], origin_lng=data["origin_lng"],
                     cell_size_m=data["cell_size_m"], n_rows=data["n_rows"], n_cols=data["n_cols"],
                     adjacency=np.asarray(data["adjacency"], dtype=np.float64))


def save_series(series: FlowSeries, directory: str | Path, graph: GraphSpec | None = None) -> Path:
    """Salva la serie come tensore binario little-endian float64 [n][d][T] più sidecar JSON.

    Args:
        series (FlowSeries): Serie da salvare.
        directory (str | Path): Cartella di destinazione (creata se assente).
        graph (GraphSpec | None): Griglia/adiacenza da includere nel sidecar.

    Returns:
        Path: La cartella scritta.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, d, t = series.values.shape
    atomic_write_bytes(directory / VALUES_FILE, np.ascontiguousarray(series.values, dtype=_DTYPE).tobytes(order="C"))
    meta = {
        "start_time": series.start_time.isoformat(),
        "feature_names": list(series.feature_names),
        "n": n,
        "d": d,
        "T": t,
        "grid": graph_to_dict(graph) if graph is not None else None,
    }
    dump_json(directory / META_FILE, meta)
    logger.info(f"Saved flow series {n}x{d}x{t} to {directory}")
    return directory


def load_series(directory: str | Path) -> tuple[FlowSeries, GraphSpec | None]:
    """Carica una serie salvata con save_series.

    Raises:
        FileNotFoundError: Cartella o file mancanti.
        DataValidationError: Dimensioni del binario incoerenti con il sidecar.
    """
    directory = Path(directory)
    meta = load_json(directory / META_FILE)
    raw = (directory / VALUES_FILE).read_bytes()
    n, d, t = meta["n"], meta["d"], meta["T"]
    expected = n * d * t * _DTYPE.itemsize
    if len(raw) != expected:
        raise DataValidationError("flow tensor size does not match sidecar",
                                  details={"bytes": len(raw), "expected": expected})
    values = np.frombuffer(raw, dtype=_DTYPE).reshape(n, d, t)
    series = FlowSeries(values=values, start_time=datetime.fromisoformat(meta["start_time"]),
                        feature_names=tuple(meta["feature_names"]))
    graph = graph_from_dict(meta["grid"]) if meta.get("grid") else None
    return series, graph
