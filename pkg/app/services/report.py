from __future__ import annotations

from pathlib import Path
from typing import Any, Iterable

import pandas as pd
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import EvaluationError
from app.core.logging import get_logger
from app.schemas.report import REPORT_COLUMNS, EvalReport, RunManifest
from app.services.storage import atomic_write_bytes, dump_json, file_digest, load_json

logger = get_logger(__name__)

REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"


def report_frame(report: EvalReport) -> pd.DataFrame:
    """Tabella con una riga per (modello, variante) e le colonne di REPORT_COLUMNS."""
    return pd.DataFrame([row.model_dump() for row in report.rows], columns=REPORT_COLUMNS)


def write_report(report: EvalReport, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / REPORT_CSV
    atomic_write_bytes(csv_path, report_frame(report).to_csv(index=False, lineterminator="\n").encode("utf-8"))
    json_path = dump_json(directory / REPORT_JSON, report.model_dump(mode="json"))
    logger.info(f"Report with {len(report.rows)} rows written to {csv_path} and {json_path}")
    return csv_path, json_path


def load_report(path: str | Path) -> EvalReport:
    try:
        return EvalReport.model_validate(load_json(path))
    except ValidationError as e:
        raise EvaluationError(f"invalid report file {path}", details={"errors": e.errors()}, exc=e)


def merge_reports(paths: Iterable[str | Path]) -> EvalReport:
    """Unisce più report JSON (es. un modello per processo) in un'unica tabella.

    Raises:
        EvaluationError: Nessun report, celle designate diverse o righe duplicate.
    """
    reports = [(str(p), load_report(p)) for p in paths]
    if not reports:
        raise EvaluationError("no reports to merge")
    grids = {r.designated_grid for _, r in reports}
    if len(grids) != 1:
        raise EvaluationError("reports evaluate different designated grids", details={"grids": sorted(grids)})

    merged = EvalReport(designated_grid=grids.pop(), seed=reports[0][1].seed,
                        config_hash=reports[0][1].config_hash,
                        provenance={"merged_from": {path: r.config_hash for path, r in reports}})
    seen: set[tuple[str, str]] = set()
    for path, r in reports:
        for row in r.rows:
            key = (row.model, row.variant)
            if key in seen:
                raise EvaluationError("duplicate row in merged reports", details={"row": list(key), "file": path})
            seen.add(key)
            merged.rows.append(row)
        merged.training_curves.update(r.training_curves)
    return merged


def write_manifest(directory: str | Path, subcommand: str, config: dict[str, Any], seed: int,
                   inputs: Iterable[str | Path] = (), artifacts: Iterable[str | Path] = ()) -> Path:
    """manifest-<subcommand>.json con configurazione, digest degli input e artefatti prodotti."""
    digests: dict[str, str] = {}
    for item in inputs:
        path = Path(item)
        if path.is_file():
            digests[str(path)] = file_digest(path)
        elif path.is_dir():
            for child in sorted(p for p in path.rglob("*") if p.is_file()):
                digests[str(child)] = file_digest(child)
    manifest = RunManifest(subcommand=subcommand, config=config, input_digests=digests,
                           artifacts=sorted(str(a) for a in artifacts), tool_version=settings.SERVICE_VERSION,
                           seed=seed)
    return dump_json(Path(directory) / f"manifest-{subcommand}.json", manifest.model_dump(mode="json"))
