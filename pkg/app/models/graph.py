from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.init as init

from app.core.exceptions import ModelInputError


def normalize_adjacency(a: torch.Tensor) -> torch.Tensor:
    """Â = D^{-1/2} (A + I) D^{-1/2}, con D i gradi di A + I (quindi sempre >= 1)."""
    a = torch.as_tensor(a)
    a_tilde = a + torch.eye(a.shape[-1], dtype=a.dtype, device=a.device)
    d_inv_sqrt = a_tilde.sum(dim=-1).pow(-0.5)
    return d_inv_sqrt.unsqueeze(-1) * a_tilde * d_inv_sqrt.unsqueeze(-2)


def check_inputs(x: torch.Tensor, a: torch.Tensor) -> None:
    """Valida (x, a) prima del calcolo: x [..., N, d, t], a [N, N] simmetrica e non negativa."""
    if x.dim() < 3:
        raise ModelInputError("input must have shape [..., N, d, t]", details={"shape": list(x.shape)})
    if a.dim() != 2 or a.shape[0] != a.shape[1] or a.shape[0] != x.shape[-3]:
        raise ModelInputError("adjacency does not match node count",
                              details={"x": list(x.shape), "a": list(a.shape)})
    if not torch.isfinite(x).all():
        raise ModelInputError("NaN or Inf in model input")
    if not torch.isfinite(a).all() or (a < 0).any() or not torch.equal(a, a.transpose(0, 1)):
        raise ModelInputError("adjacency must be finite, symmetric and non-negative")


class GraphConv(nn.Module):
    """Propagazione Â·h·W (+ b), polimorfa nel numero di nodi."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(in_features, out_features))
        init.xavier_uniform_(self.weight)
        if bias:
            self.bias = nn.Parameter(torch.zeros(out_features))
        else:
            self.register_parameter("bias", None)

    def forward(self, h: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        out = torch.matmul(a_hat, h) @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


def graph_propagate(h: torch.Tensor, a: torch.Tensor, conv: GraphConv) -> torch.Tensor:
    """Propaga le feature di nodo h [..., N, f] sul grafo a [N, N] con i pesi di conv."""
    a = torch.as_tensor(a, dtype=h.dtype)
    if a.dim() != 2 or not torch.equal(a, a.transpose(0, 1)):
        raise ModelInputError("adjacency must be a symmetric matrix")
    return conv(h, normalize_adjacency(a))
