from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from app.core.exceptions import DataValidationError

ArrayLike = np.ndarray | torch.Tensor


def _as_numpy(t: ArrayLike) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        return t.detach().cpu().to(torch.float64).numpy()
    return np.asarray(t, dtype=np.float64)


def _masked_error(y_true: ArrayLike, y_pred: ArrayLike, mask: Sequence[int] | None, node_axis: int) -> np.ndarray:
    a = _as_numpy(y_true)
    b = _as_numpy(y_pred)
    if a.shape != b.shape:
        raise DataValidationError("shape mismatch", details={"y_true": list(a.shape), "y_pred": list(b.shape)})
    if mask is not None:
        idx = np.asarray(list(mask), dtype=np.int64)
        if a.ndim == 0:
            raise DataValidationError("mask given for a scalar tensor")
        n = a.shape[node_axis]
        if idx.size == 0 or np.any(idx < 0) or np.any(idx >= n):
            raise DataValidationError("invalid node mask", details={"mask": idx.tolist(), "n": n})
        a = np.take(a, idx, axis=node_axis)
        b = np.take(b, idx, axis=node_axis)
    if a.size == 0:
        raise DataValidationError("no entries to evaluate")
    return b - a


def mae(y_true: ArrayLike, y_pred: ArrayLike, mask: Sequence[int] | None = None, node_axis: int = -3) -> float:
    """Errore assoluto medio su tutti gli elementi (nodo, feature, orizzonte).

    Args:
        y_true, y_pred: Tensori di forma [..., n, d, t2] (il nodo è su node_axis).
        mask (Sequence[int] | None): Sottoinsieme di nodi su cui restringere la media.
        node_axis (int): Asse dei nodi. Default -3.

    Raises:
        DataValidationError: Forme diverse o maschera non valida.
    """
    err = _masked_error(y_true, y_pred, mask, node_axis)
    return float(np.mean(np.abs(err)))


def rmse(y_true: ArrayLike, y_pred: ArrayLike, mask: Sequence[int] | None = None, node_axis: int = -3) -> float:
    """Radice dell'errore quadratico medio, stesse convenzioni di mae."""
    err = _masked_error(y_true, y_pred, mask, node_axis)
    return float(np.sqrt(np.mean(np.square(err))))
