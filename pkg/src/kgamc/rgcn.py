"""Semantic feature extractor: relational GraphSAGE over the knowledge graph.

Two heterogeneous layers (one mean-aggregating GraphSAGE unit per relation
type), a residual branch from the raw node features, and a two-layer
projection head mapping into the d-dimensional semantic space shared with
the signal network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import nncore
from .mkg import RELATIONS, HeteroGraph, RelationType
from .nncore import Tensor, l2_normalize, leaky_relu, linear


@dataclass
class GraphTensors:
    """Torch-side view of a HeteroGraph: per-relation edge index arrays."""

    num_nodes: int
    src: dict[RelationType, Tensor] = field(default_factory=dict)
    dst: dict[RelationType, Tensor] = field(default_factory=dict)
    in_count: dict[RelationType, Tensor] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, g: HeteroGraph) -> "GraphTensors":
        gt = cls(num_nodes=g.num_nodes)
        for rel in RELATIONS:
            pairs = g.edges.get(rel, [])
            src = torch.tensor([h for h, _ in pairs], dtype=torch.long)
            dst = torch.tensor([t for _, t in pairs], dtype=torch.long)
            count = torch.zeros(g.num_nodes, dtype=torch.long)
            if len(pairs) > 0:
                count.index_add_(0, dst, torch.ones_like(dst))
            gt.src[rel], gt.dst[rel], gt.in_count[rel] = src, dst, count
        return gt


def _as_tensors(g) -> GraphTensors:
    return g if isinstance(g, GraphTensors) else GraphTensors.from_graph(g)


@dataclass
class RgcnParams:
    """One GraphSAGE weight per relation per layer, residual and projection."""

    sage1: dict[RelationType, Tensor]
    sage2: dict[RelationType, Tensor]
    res_w: Tensor
    res_b: Tensor
    proj1_w: Tensor
    proj1_b: Tensor
    proj2_w: Tensor
    proj2_b: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate((self.sage1, self.sage2), start=1):
            for rel in RELATIONS:
                out[f"sage{i}.{rel.value}.w"] = layer[rel]
        out["res.w"] = self.res_w
        out["res.b"] = self.res_b
        out["proj1.w"] = self.proj1_w
        out["proj1.b"] = self.proj1_b
        out["proj2.w"] = self.proj2_w
        out["proj2.b"] = self.proj2_b
        return out


def init_rgcn_params(
    in_dim: int,
    d: int,
    proj_hidden: int,
    rng: np.random.Generator,
    dtype=torch.float32,
) -> RgcnParams:
    g = lambda shape: nncore.glorot_uniform(shape, rng, dtype=dtype)
    return RgcnParams(
        sage1={rel: g((2 * in_dim, d)) for rel in RELATIONS},
        sage2={rel: g((2 * d, d)) for rel in RELATIONS},
        res_w=g((in_dim, d)),
        res_b=nncore.zeros_param((d,), dtype=dtype),
        proj1_w=g((d, proj_hidden)),
        proj1_b=nncore.zeros_param((proj_hidden,), dtype=dtype),
        proj2_w=g((proj_hidden, d)),
        proj2_b=nncore.zeros_param((d,), dtype=dtype),
    )


def sage_unit(g, feats: Tensor, relation: RelationType, w: Tensor) -> Tensor:
    """GraphSAGE step for one relation, aggregating over full in-neighborhoods.

    Per node i: h_N = mean of in-neighbor features along stored edge
    direction (0 when the node has no in-edges under this relation), and
    out_i = l2_normalize(leaky_relu(W . concat(h_i, h_N))).
    """
    gt = _as_tensors(g)
    src, dst = gt.src[relation], gt.dst[relation]
    h_n = torch.zeros_like(feats)
    if src.numel() > 0:
        h_n = h_n.index_add(0, dst, feats[src])
        denom = gt.in_count[relation].clamp(min=1).to(feats.dtype).unsqueeze(1)
        h_n = h_n / denom
    return l2_normalize(leaky_relu(linear(torch.cat([feats, h_n], dim=1), w)))


def hetero_layer(g, feats: Tensor, units: dict[RelationType, Tensor]) -> Tensor:
    """Combine per-relation sage_unit outputs.

    Each node averages the outputs of the relations under which it has at
    least one in-neighbor; nodes untouched by every relation fall back to
    the average of all relations' zero-neighborhood outputs.
    """
    gt = _as_tensors(g)
    outs = torch.stack([sage_unit(gt, feats, rel, units[rel]) for rel in RELATIONS])
    active = torch.stack([gt.in_count[rel] > 0 for rel in RELATIONS]).to(feats.dtype)
    n_active = active.sum(dim=0)
    combined = (outs * active.unsqueeze(2)).sum(dim=0) / n_active.clamp(min=1).unsqueeze(1)
    fallback = outs.mean(dim=0)
    return torch.where((n_active > 0).unsqueeze(1), combined, fallback)


def rgcn_forward(g, m: Tensor, params: RgcnParams) -> Tensor:
    """Full semantic extractor: a x b node features -> a x d embeddings.

    Both hetero layer outputs are row-normalized before the residual add,
    then projected by the two-layer head.
    """
    gt = _as_tensors(g)
    h1 = l2_normalize(hetero_layer(gt, m, params.sage1))
    h2 = l2_normalize(hetero_layer(gt, h1, params.sage2))
    z = h2 + linear(m, params.res_w, params.res_b)
    hidden = leaky_relu(linear(z, params.proj1_w, params.proj1_b))
    return linear(hidden, params.proj2_w, params.proj2_b)


def semantic_anchors(embeddings: Tensor, anchor_indices) -> Tensor:
    """Select the class-anchor rows (modulationMethod nodes) in class order."""
    idx = torch.as_tensor(anchor_indices, dtype=torch.long)
    return embeddings[idx]
