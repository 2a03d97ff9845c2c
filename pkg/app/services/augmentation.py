from __future__ import annotations

from typing import Callable, Literal, Sequence

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, model_validator
from torch import nn

from app.core.exceptions import AugmentationError
from app.schemas.context import Scope

Activation = Literal["tanh", "relu", "identity"]

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "tanh": torch.tanh,
    "relu": torch.relu,
    "identity": lambda t: t,
}


class ProjectionStack(nn.Module):
    """t1 strati lineari W_i ∈ R^{d × d_c'}, b_i ∈ R^d; la colonna i del blocco è σ(W_i c + b_i)."""

    def __init__(self, context_dim: int, d: int, t1: int, activation: Activation = "tanh"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise AugmentationError(f"unknown activation {activation!r}")
        self.context_dim = context_dim
        self.d = d
        self.t1 = t1
        self.activation = activation
        self.layers = nn.ModuleList(nn.Linear(context_dim, d) for _ in range(t1))

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        sigma = ACTIVATIONS[self.activation]
        return torch.stack([sigma(layer(c)) for layer in self.layers], dim=-1)


def project_context(c: torch.Tensor, stack: ProjectionStack) -> torch.Tensor:
    """Blocco di feature del nodo ausiliario, forma [..., d, t1].

    Raises:
        AugmentationError: La dimensione di c non coincide con quella della pila.
    """
    c = torch.as_tensor(c)
    if c.shape[-1] != stack.context_dim:
        raise AugmentationError("context dimension mismatch",
                                details={"expected": stack.context_dim, "got": int(c.shape[-1])})
    return stack(c)


class AuxNodeSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scope: Scope
    target_grid: int | None = None
    projection: ProjectionStack | None = None
    context_vector: np.ndarray | torch.Tensor | None = None

    @model_validator(mode="after")
    def _check(self) -> AuxNodeSpec:
        if self.scope is Scope.NODE and self.target_grid is None:
            raise ValueError("node-scope auxiliary node requires target_grid")
        return self


class AugmentedSample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_e: torch.Tensor
    a_e: np.ndarray | torch.Tensor
    y: torch.Tensor | None = None
    aux_indices: list[int]


def augment_features(x: torch.Tensor, blocks: Sequence[torch.Tensor]) -> torch.Tensor:
    """Accoda k blocchi [..., d, t1] come nuove righe di nodo: [..., n, d, t1] -> [..., n + k, d, t1].

    Raises:
        AugmentationError: Forma di un blocco diversa da quella di un nodo di x.
    """
    x = torch.as_tensor(x)
    if not blocks:
        return x
    node_shape = x.shape[:-3] + x.shape[-2:]
    rows = []
    for i, block in enumerate(blocks):
        block = torch.as_tensor(block, dtype=x.dtype)
        if block.shape != node_shape:
            raise AugmentationError("auxiliary block shape mismatch",
                                    details={"block": i, "expected": list(node_shape), "got": list(block.shape)})
        rows.append(block.unsqueeze(-3))
    return torch.cat([x, *rows], dim=-3)


def augment_adjacency(a: np.ndarray, specs: Sequence[AuxNodeSpec]) -> np.ndarray:
    """Espande A con k nodi ausiliari, nell'ordine dato.

    Un nodo city è collegato a tutti i nodi originali (riga e colonna di uno), un nodo node
    solo alla cella target_grid. Le voci ausiliario-ausiliario e la diagonale restano a zero.

    Raises:
        AugmentationError: A non quadrata/simmetrica/0-1 o target_grid non valido.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AugmentationError("adjacency must be square", details={"shape": list(a.shape)})
    if not np.array_equal(a, a.T) or not np.all((a == 0) | (a == 1)):
        raise AugmentationError("adjacency must be symmetric with 0/1 entries")
    n, k = a.shape[0], len(specs)
    a_e = np.zeros((n + k, n + k), dtype=np.float64)
    a_e[:n, :n] = a
    for j, spec in enumerate(specs):
        aux = n + j
        if spec.scope is Scope.CITY:
            a_e[aux, :n] = 1.0
            a_e[:n, aux] = 1.0
        else:
            if spec.target_grid is None or not 0 <= spec.target_grid < n:
                raise AugmentationError("invalid target_grid", details={"target_grid": spec.target_grid, "n": n})
            a_e[aux, spec.target_grid] = 1.0
            a_e[spec.target_grid, aux] = 1.0
    return a_e


def aux_indices(n: int, k: int) -> list[int]:
    return list(range(n, n + k))


def augment_sample(x: torch.Tensor, y: torch.Tensor | None, a: np.ndarray | torch.Tensor,
                   specs: Sequence[AuxNodeSpec], a_e: np.ndarray | torch.Tensor | None = None) -> AugmentedSample:
    """Costruisce (X_e, A_e, Y) proiettando il vettore di contesto di ciascun nodo ausiliario.

    Args:
        x (torch.Tensor): Feature originali [..., n, d, t1].
        y (torch.Tensor | None): Target sui soli nodi originali; None in inferenza.
        a (np.ndarray | torch.Tensor): Adiacenza originale [n, n].
        specs (Sequence[AuxNodeSpec]): Nodi ausiliari con pila di proiezione e vettore di contesto.
        a_e (np.ndarray | torch.Tensor | None): Adiacenza estesa già calcolata per gli stessi specs.

    Raises:
        AugmentationError: Spec senza proiezione o senza vettore di contesto.
    """
    x = torch.as_tensor(x)
    blocks = []
    for spec in specs:
        if spec.projection is None or spec.context_vector is None:
            raise AugmentationError("auxiliary node needs a projection and a context vector",
                                    details={"scope": spec.scope.value})
        c = torch.as_tensor(spec.context_vector, dtype=spec.projection.layers[0].weight.dtype)
        blocks.append(project_context(c, spec.projection).to(x.dtype))
    if a_e is None:
        a_e = augment_adjacency(np.asarray(a), specs)
    return AugmentedSample(x_e=augment_features(x, blocks), a_e=a_e,
                           y=None if y is None else torch.as_tensor(y),
                           aux_indices=aux_indices(x.shape[-3], len(specs)))
