from __future__ import annotations

import torch
import torch.nn as nn

from app.models.graph import GraphConv, graph_propagate


class GCRNNCell(nn.Module):
    """Cella GRU con porte calcolate per propagazione sul grafo al posto delle mappe dense."""

    def __init__(self, in_features: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.gates = GraphConv(in_features + hidden, 2 * hidden)
        self.candidate = GraphConv(in_features + hidden, hidden)

    def forward(self, x_t: torch.Tensor, h: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        zr = torch.sigmoid(graph_propagate(torch.cat([x_t, h], dim=-1), a, self.gates))
        z, r = zr.chunk(2, dim=-1)
        c = torch.tanh(graph_propagate(torch.cat([x_t, r * h], dim=-1), a, self.candidate))
        return z * h + (1.0 - z) * c


class GCRNN(nn.Module):
    """GRU su grafo + lettura lineare di tutti gli orizzonti.

    Input [B, N, d, t1] e adiacenza [N, N]; output [B, N, d, t2].
    """

    uses_normalization = True

    def __init__(self, d: int, t1: int, t2: int, hidden: int = 32, layers: int = 1, dropout: float = 0.0):
        super().__init__()
        self.d, self.t1, self.t2 = d, t1, t2
        self.hidden = hidden
        self.cells = nn.ModuleList(GCRNNCell(d if i == 0 else hidden, hidden) for i in range(layers))
        self.dropout = nn.Dropout(dropout)
        self.readout = nn.Linear(hidden, d * t2)

    def forward(self, x: torch.Tensor, a: torch.Tensor, hour_of_week: torch.Tensor | None = None) -> torch.Tensor:
        unbatched = x.dim() == 3
        if unbatched:
            x = x.unsqueeze(0)
        batch, n_nodes = x.shape[0], x.shape[1]
        states = [x.new_zeros(batch, n_nodes, self.hidden) for _ in self.cells]
        for t in range(x.shape[-1]):
            inp = x[..., t]
            for i, cell in enumerate(self.cells):
                states[i] = cell(inp, states[i], a)
                inp = self.dropout(states[i])
        out = self.readout(inp).view(batch, n_nodes, self.d, self.t2)
        return out.squeeze(0) if unbatched else out
