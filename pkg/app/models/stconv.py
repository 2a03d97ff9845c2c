from __future__ import annotations

import torch
import torch.nn as nn

from app.core.exceptions import ConfigError
from app.models.graph import GraphConv, graph_propagate


class TemporalGatedConv(nn.Module):
    """Convoluzione 1-D lungo il tempo con porta GLU: (P + X_res) ⊙ σ(Q). Input [B, C, N, T]."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int):
        super().__init__()
        self.kernel_size = kernel_size
        self.conv = nn.Conv2d(c_in, 2 * c_out, (1, kernel_size))
        self.align = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        p, q = self.conv(x).chunk(2, dim=1)
        res = x if self.align is None else self.align(x)
        res = res[..., self.kernel_size - 1:]
        return (p + res) * torch.sigmoid(q)


class STConvBlock(nn.Module):
    # T: convoluzione temporale con porta
    # G: propagazione sul grafo
    # T: convoluzione temporale con porta
    # N: normalizzazione sui canali (indipendente da N nodi)
    # D: dropout

    def __init__(self, c_in: int, c_hidden: int, c_out: int, kernel_size: int, dropout: float):
        super().__init__()
        self.tconv1 = TemporalGatedConv(c_in, c_out, kernel_size)
        self.gconv = GraphConv(c_out, c_hidden)
        self.tconv2 = TemporalGatedConv(c_hidden, c_out, kernel_size)
        self.norm = nn.LayerNorm(c_out)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        x = self.tconv1(x)
        h = torch.relu(graph_propagate(x.permute(0, 3, 2, 1), a, self.gconv))  # [B, T, N, C]
        x = self.tconv2(h.permute(0, 3, 2, 1))
        x = self.norm(x.permute(0, 3, 2, 1)).permute(0, 3, 2, 1)
        return self.dropout(x)


class STConv(nn.Module):
    """Pila di blocchi T-G-T seguita da una lettura lineare. Input [B, N, d, t1], output [B, N, d, t2]."""

    uses_normalization = True

    def __init__(self, d: int, t1: int, t2: int, hidden: int = 32, blocks: int = 1, kernel_size: int = 2,
                 dropout: float = 0.0):
        super().__init__()
        self.d, self.t1, self.t2 = d, t1, t2
        self.t_out = t1 - blocks * 2 * (kernel_size - 1)
        if self.t_out < 1:
            raise ConfigError("temporal kernels consume the whole history window",
                              details={"t1": t1, "blocks": blocks, "kernel_size": kernel_size})
        self.blocks = nn.ModuleList(
            STConvBlock(d if i == 0 else hidden, hidden, hidden, kernel_size, dropout) for i in range(blocks))
        self.readout = nn.Linear(hidden * self.t_out, d * t2)

    def forward(self, x: torch.Tensor, a: torch.Tensor, hour_of_week: torch.Tensor | None = None) -> torch.Tensor:
        unbatched = x.dim() == 3
        if unbatched:
            x = x.unsqueeze(0)
        batch, n_nodes = x.shape[0], x.shape[1]
        h = x.permute(0, 2, 1, 3)  # [B, d, N, t1]
        for block in self.blocks:
            h = block(h, a)
        h = h.permute(0, 2, 1, 3).reshape(batch, n_nodes, -1)  # [B, N, C * t_out]
        out = self.readout(h).view(batch, n_nodes, self.d, self.t2)
        return out.squeeze(0) if unbatched else out
