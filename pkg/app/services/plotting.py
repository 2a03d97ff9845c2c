from __future__ import annotations

from datetime import date
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.core.exceptions import PlotError  # noqa: E402
from app.core.logging import get_logger  # noqa: E402
from app.schemas.flows import FlowSeries  # noqa: E402
from app.services.ingestion import local_day_bounds  # noqa: E402
from app.services.storage import atomic_write_bytes  # noqa: E402

logger = get_logger(__name__)


def flow_table(series: FlowSeries, grids: Sequence[int], days: Sequence[date], tz: str = "UTC") -> pd.DataFrame:
    """Righe (grid, day, hour, <feature>...) estratte dalla serie, nell'ordine richiesto.

    Raises:
        PlotError: Lista vuota, cella inesistente o giorno non coperto per intero dalla serie.
    """
    if not grids:
        raise PlotError("no grids requested")
    if not days:
        raise PlotError("no days requested")
    bad = [g for g in grids if not 0 <= g < series.n_grids]
    if bad:
        raise PlotError("requested grids outside the series", details={"grids": bad, "n": series.n_grids})

    rows = []
    for day in days:
        start, end = local_day_bounds(day, day, tz)
        if start < series.start_time or end > series.end_time:
            raise PlotError(f"day {day.isoformat()} is not covered by the series")
        i0, i1 = series.hour_index(start), series.hour_index(end)
        for g in grids:
            for hour, k in enumerate(range(i0, i1)):
                row = {"grid": g, "day": day.isoformat(), "hour": hour}
                row.update({name: float(series.values[g, f, k]) for f, name in enumerate(series.feature_names)})
                rows.append(row)
    return pd.DataFrame(rows, columns=["grid", "day", "hour", *series.feature_names])


def plot_flows(series: FlowSeries, grids: Sequence[int], days: Sequence[date], out_path: str | Path,
               tz: str = "UTC") -> tuple[Path, Path]:
    """Linee orarie dei flussi: un pannello per (cella, feature), una linea per giorno.

    Returns:
        tuple[Path, Path]: Immagine PNG e CSV con i valori disegnati (stesso nome, estensione .csv).
    """
    table = flow_table(series, grids, days, tz)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out_path.with_suffix(".csv")
    atomic_write_bytes(csv_path, table.to_csv(index=False, lineterminator="\n").encode("utf-8"))

    features = list(series.feature_names)
    fig, axes = plt.subplots(len(grids), len(features), figsize=(5 * len(features), 3 * len(grids)),
                             squeeze=False, sharex=True)
    for i, g in enumerate(grids):
        for j, feature in enumerate(features):
            ax = axes[i][j]
            for day, part in table[table["grid"] == g].groupby("day", sort=False):
                ax.plot(part["hour"], part[feature], marker="o", markersize=2, label=day)
            ax.set_title(f"Grid {g} - {feature}")
            ax.set_ylabel("trips / hour")
            ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("hour of day")
    axes[0][0].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    logger.info(f"Flow plot for grids {list(grids)} written to {out_path}")
    return out_path, csv_path
