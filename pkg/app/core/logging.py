import logging
import sys
from pathlib import Path
from typing import Any

import orjson


def setup_logging(level: int | str = "INFO") -> None:
    logging.basicConfig(
        level=level,
        stream=sys.stdout,
        format="%(asctime)s %(levelname)s %(name)s - %(message)s",
        force=True,
    )


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


class JsonlLog:
    """Log a righe JSON (una per record), usato per la storia dell'addestramento."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(b"")

    def write(self, record: dict[str, Any]) -> None:
        with self.path.open("ab") as fh:
            fh.write(orjson.dumps(record, option=orjson.OPT_SORT_KEYS) + b"\n")
