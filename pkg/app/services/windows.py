from __future__ import annotations

import numpy as np

from app.core.exceptions import InsufficientHistoryError
from app.schemas.flows import FlowSeries, Sample, WindowSpec


def window_count(t_hours: int, spec: WindowSpec) -> int:
    if t_hours < spec.t1 + spec.t2:
        return 0
    return (t_hours - spec.t1 - spec.t2) // spec.stride + 1


def make_windows(series: FlowSeries, spec: WindowSpec) -> list[Sample]:
    """Costruisce le finestre (storia t1, orizzonte t2) in ordine cronologico.

    Args:
        series (FlowSeries): Serie sorgente.
        spec (WindowSpec): Lunghezze di storia/orizzonte e passo.

    Raises:
        InsufficientHistoryError: La serie ha meno di t1 + t2 ore.

    Returns:
        list[Sample]: Campioni con x = values[:, :, k:k+t1], y = values[:, :, k+t1:k+t1+t2].
    """
    count = window_count(series.t_hours, spec)
    if count == 0:
        raise InsufficientHistoryError(series.t_hours, spec.t1 + spec.t2)

    samples = []
    for i in range(count):
        k = i * spec.stride
        samples.append(Sample(
            x=series.values[:, :, k:k + spec.t1],
            y=series.values[:, :, k + spec.t1:k + spec.t1 + spec.t2],
            anchor_time=series.time_at(k + spec.t1),
        ))
    return samples


def stack_windows(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Impila x e y dei campioni in due array [S, n, d, t]."""
    x = np.stack([s.x for s in samples])
    y = np.stack([s.y for s in samples])
    return x, y
