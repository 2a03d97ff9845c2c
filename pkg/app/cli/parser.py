from __future__ import annotations

import argparse
import sys
from datetime import date

from app.cli import commands
from app.core.config import settings
from app.core.exceptions import EXIT_USAGE


class CliParser(argparse.ArgumentParser):
    """ArgumentParser che esce con codice 1 sugli errori di utilizzo."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(raw: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _date_list(raw: str) -> list[date]:
    try:
        return [date.fromisoformat(v.strip()) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ISO dates, got {raw!r}")


def _str_list(raw: str) -> list[str]:
    return [v.strip() for v in raw.split(",") if v.strip()]


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="experiment TOML file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--backend", choices=["offline", "remote"], help="embedding backend")
    common.add_argument("--embed-dim", type=int, help="dimension of the offline embedding backend")
    common.add_argument("--out-dir", default="out", help="directory for artifacts and manifests")
    common.add_argument("--synth", action="store_true", help="use the synthetic benchmark instead of files")

    parser = CliParser(prog=settings.SERVICE_NAME,
                       description="Text-context auxiliary nodes for graph traffic forecasters.")
    parser.add_argument("--version", action="version", version=settings.SERVICE_VERSION)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("ingest", parents=[common], help="aggregate a trip CSV into hourly grid flows")
    p.add_argument("--trips", required=True, help="trip CSV (started_at, ended_at, start/end lat/lng)")
    p.add_argument("--chunk-size", type=int, default=200_000)
    p.set_defaults(handler=commands.ingest)

    p = sub.add_parser("embed", parents=[common], help="compose context texts and embed them")
    p.set_defaults(handler=commands.embed)

    p = sub.add_parser("reduce", parents=[common], help="fit city/node PCA on training contexts")
    p.add_argument("--contexts", help="contexts.jsonl written by `embed` (default: <out-dir>/contexts.jsonl)")
    p.set_defaults(handler=commands.reduce)

    p = sub.add_parser("train", parents=[common], help="train one forecaster variant")
    p.add_argument("--variant", choices=["original", "augmented"], default="augmented")
    p.set_defaults(handler=commands.train)

    p = sub.add_parser("compare", parents=[common], help="paired original vs augmented comparison")
    p.add_argument("--models", type=_str_list, help="comma-separated architectures")
    p.add_argument("--scope-sweep", action="store_true", help="report city, node and city+node variants")
    p.set_defaults(handler=commands.compare)

    p = sub.add_parser("synth", parents=[common], help="write the synthetic benchmark dataset")
    p.set_defaults(handler=commands.synth)

    p = sub.add_parser("plot", parents=[common], help="plot hourly flows of selected grids and days")
    p.add_argument("--grids", type=_int_list, required=True)
    p.add_argument("--days", type=_date_list, required=True)
    p.add_argument("--output", help="PNG path (default: <out-dir>/flows.png)")
    p.set_defaults(handler=commands.plot)

    p = sub.add_parser("report", parents=[common], help="merge report JSON files into one table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.set_defaults(handler=commands.report)
    return parser
