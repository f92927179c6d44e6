"""Signal feature extractor: multi-scale 1-D CNN over I/Q frames.

Two multi-scale blocks (stride-2 stem conv feeding five kernel-size
branches), global average pooling, an affine map into the d-dimensional
semantic space, and a single affine classifier head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import nncore
from .errors import ShapeError
from .nncore import Tensor, conv1d, global_avg_pool, leaky_relu, linear

KERNEL_SIZES = (1, 3, 5, 7, 9)


@dataclass
class MsnetConfig:
    frame_len: int = 128
    in_channels: int = 2
    stem_channels: int = 32
    branch_channels: int = 16
    d: int = 128
    n_classes: int = 10

    @property
    def cat_channels(self) -> int:
        return len(KERNEL_SIZES) * self.branch_channels


@dataclass
class BlockParams:
    stem_w: Tensor
    stem_b: Tensor
    # per branch: 1x1 reduction then the kxk conv
    reduce_w: list[Tensor]
    reduce_b: list[Tensor]
    branch_w: list[Tensor]
    branch_b: list[Tensor]


@dataclass
class MsnetParams:
    cfg: MsnetConfig
    blocks: list[BlockParams]
    fc_w: Tensor
    fc_b: Tensor
    cls_w: Tensor
    cls_b: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {}
        for bi, bp in enumerate(self.blocks, start=1):
            out[f"block{bi}.stem.w"] = bp.stem_w
            out[f"block{bi}.stem.b"] = bp.stem_b
            for ki, k in enumerate(KERNEL_SIZES):
                out[f"block{bi}.branch{k}.reduce.w"] = bp.reduce_w[ki]
                out[f"block{bi}.branch{k}.reduce.b"] = bp.reduce_b[ki]
                out[f"block{bi}.branch{k}.conv.w"] = bp.branch_w[ki]
                out[f"block{bi}.branch{k}.conv.b"] = bp.branch_b[ki]
        out["fc.w"] = self.fc_w
        out["fc.b"] = self.fc_b
        out["cls.w"] = self.cls_w
        out["cls.b"] = self.cls_b
        return out


def _init_block(
    c_in: int, cfg: MsnetConfig, rng: np.random.Generator, dtype
) -> BlockParams:
    g = lambda shape: nncore.glorot_uniform(shape, rng, dtype=dtype)
    z = lambda n: nncore.zeros_param((n,), dtype=dtype)
    cs, cb = cfg.stem_channels, cfg.branch_channels
    return BlockParams(
        stem_w=g((cs, c_in, 3)),
        stem_b=z(cs),
        reduce_w=[g((cb, cs, 1)) for _ in KERNEL_SIZES],
        reduce_b=[z(cb) for _ in KERNEL_SIZES],
        branch_w=[g((cb, cb, k)) for k in KERNEL_SIZES],
        branch_b=[z(cb) for _ in KERNEL_SIZES],
    )


def init_msnet_params(
    cfg: MsnetConfig, rng: np.random.Generator, dtype=torch.float32
) -> MsnetParams:
    g = lambda shape: nncore.glorot_uniform(shape, rng, dtype=dtype)
    block1 = _init_block(cfg.in_channels, cfg, rng, dtype)
    block2 = _init_block(cfg.cat_channels, cfg, rng, dtype)
    return MsnetParams(
        cfg=cfg,
        blocks=[block1, block2],
        fc_w=g((cfg.cat_channels, cfg.d)),
        fc_b=nncore.zeros_param((cfg.d,), dtype=dtype),
        cls_w=g((cfg.d, cfg.n_classes)),
        cls_b=nncore.zeros_param((cfg.n_classes,), dtype=dtype),
    )


def multiscale_block(x: Tensor, bp: BlockParams) -> Tensor:
    """Stride-2 stem conv, then five parallel 1x1 -> kx1 branches, concatenated.

    [.., C_in, T] -> [.., 5*branch_channels, ceil(T/2)].
    """
    if x.shape[-1] < 4:
        raise ShapeError(f"multiscale_block needs T >= 4, got input {tuple(x.shape)}")
    stem = leaky_relu(conv1d(x, bp.stem_w, bp.stem_b, stride=2))
    branches = []
    for ki in range(len(KERNEL_SIZES)):
        h = leaky_relu(conv1d(stem, bp.reduce_w[ki], bp.reduce_b[ki]))
        h = leaky_relu(conv1d(h, bp.branch_w[ki], bp.branch_b[ki]))
        branches.append(h)
    return torch.cat(branches, dim=-2)


def msnet_forward(frames: Tensor, params: MsnetParams) -> Tensor:
    """Map [N, 2, L] frames to [N, d] signal features."""
    cfg = params.cfg
    if frames.dim() != 3 or frames.shape[1] != cfg.in_channels or frames.shape[2] != cfg.frame_len:
        raise ShapeError(
            f"expected frames [N, {cfg.in_channels}, {cfg.frame_len}], got {tuple(frames.shape)}"
        )
    h = multiscale_block(frames, params.blocks[0])
    h = multiscale_block(h, params.blocks[1])
    pooled = global_avg_pool(h)
    return linear(pooled, params.fc_w, params.fc_b)


def classify(features: Tensor, params: MsnetParams) -> Tensor:
    """Affine classifier head; softmax lives in the loss."""
    if features.shape[-1] != params.cfg.d:
        raise ShapeError(
            f"expected features [N, {params.cfg.d}], got {tuple(features.shape)}"
        )
    return linear(features, params.cls_w, params.cls_b)
