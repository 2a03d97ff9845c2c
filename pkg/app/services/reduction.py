from __future__ import annotations

from pathlib import Path

import numpy as np

from app.core.exceptions import ReductionError
from app.core.logging import get_logger
from app.schemas.reduction import PCAModel
from app.services.storage import dump_json, load_json

logger = get_logger(__name__)

_CUMULATIVE_TOL = 1e-12


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Ogni riga ha positiva la coordinata di modulo massimo."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_pca(embeddings: np.ndarray, variance_target: float = 0.95) -> PCAModel:
    """PCA sulla covarianza (normalizzazione 1/(m-1)) con la regola della varianza trattenuta.

    Args:
        embeddings (np.ndarray): Matrice [m, d_c] di embedding del solo split di training.
        variance_target (float): Frazione di varianza da trattenere. Default 0.95.

    Raises:
        ReductionError: Meno di due righe, valori non finiti o target fuori da (0, 1].

    Returns:
        PCAModel: d_c' = più piccolo k con varianza cumulata >= variance_target.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ReductionError("PCA needs at least 2 embeddings", details={"shape": list(x.shape)})
    if not np.all(np.isfinite(x)):
        raise ReductionError("embeddings must be finite")
    if not 0.0 < variance_target <= 1.0:
        raise ReductionError("variance_target must be in (0, 1]", details={"variance_target": variance_target})

    m, d = x.shape
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (m - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order].T

    total = float(eigvals.sum())
    scale = float(eigvals[0]) if eigvals.size else 0.0
    if total <= 0.0 or scale <= np.finfo(np.float64).eps * max(1.0, float(np.abs(x).max())) ** 2:
        logger.warning(f"Zero-variance embedding matrix ({m}x{d}); keeping a single component")
        return PCAModel(mean=mean, components=_fix_signs(eigvecs[:1]),
                        explained_variance=np.zeros(1), explained_variance_ratio=np.zeros(1),
                        variance_target=variance_target)

    rank = int(np.count_nonzero(eigvals > scale * max(m, d) * np.finfo(np.float64).eps))
    ratios = eigvals / total
    cumulative = np.cumsum(ratios[:rank])
    k = int(np.searchsorted(cumulative, variance_target - _CUMULATIVE_TOL)) + 1
    k = min(k, rank)

    model = PCAModel(mean=mean, components=_fix_signs(eigvecs[:k]), explained_variance=eigvals[:k],
                     explained_variance_ratio=ratios[:k], variance_target=variance_target)
    logger.info(f"PCA on {m}x{d}: kept {k} of {rank} components "
                f"({float(cumulative[k - 1]):.4f} of the variance)")
    return model


def transform(model: PCAModel, v: np.ndarray) -> np.ndarray:
    """components · (v − mean); accetta un vettore [d_c] o una matrice [m, d_c]."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.input_dim:
        raise ReductionError("dimension mismatch", details={"expected": model.input_dim, "got": v.shape[-1]})
    return (v - model.mean) @ model.components.T


def inverse_transform(model: PCAModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.dim:
        raise ReductionError("dimension mismatch", details={"expected": model.dim, "got": z.shape[-1]})
    return z @ model.components + model.mean


def save_pca(model: PCAModel, path: str | Path) -> Path:
    return dump_json(path, model.to_json_dict())


def load_pca(path: str | Path) -> PCAModel:
    return PCAModel.from_json_dict(load_json(path))
