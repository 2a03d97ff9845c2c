from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class PCAModel(BaseModel):
    """Modello PCA: componenti ortonormali ordinate per varianza spiegata decrescente."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    variance_target: float = 0.95

    @field_validator("mean", "components", "explained_variance", "explained_variance_ratio", mode="before")
    @classmethod
    def _freeze(cls, v):
        arr = np.array(v, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check(self) -> PCAModel:
        if self.mean.ndim != 1 or self.components.ndim != 2:
            raise ValueError("mean must be a vector and components a matrix")
        k, d = self.components.shape
        if d != self.mean.shape[0]:
            raise ValueError(f"components have {d} columns, mean has {self.mean.shape[0]} entries")
        if self.explained_variance_ratio.shape != (k,) or self.explained_variance.shape != (k,):
            raise ValueError("one explained variance entry per component required")
        return self

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "ratios": self.explained_variance_ratio.tolist(),
            "variance_target": self.variance_target,
            "dim": self.dim,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> PCAModel:
        components = np.array(data["components"], dtype=np.float64).reshape(data["dim"], len(data["mean"]))
        return cls(mean=data["mean"], components=components,
                   explained_variance=data["explained_variance"],
                   explained_variance_ratio=data["ratios"],
                   variance_target=data.get("variance_target", 0.95))
