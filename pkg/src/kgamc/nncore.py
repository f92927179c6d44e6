"""Differentiable numeric kernel used by both feature extractors.

Thin, contract-checked wrappers over torch tensor ops: 1-D convolution
with the package's same-padding convention, affine maps, activations,
pooling, guarded normalization/cosine and parameter initialization.
Gradients come from torch's reverse-mode tape; the test suite validates
every op against central finite differences at double precision.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ShapeError

LEAKY_SLOPE = 0.01
NORM_EPS = 1e-12

Tensor = torch.Tensor


def conv1d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int = 1,
    same_pad: bool = True,
) -> Tensor:
    """1-D convolution over the trailing time axis.

    ``x`` is [C_in, T] or [N, C_in, T]; ``w`` is [C_out, C_in, k]. With
    ``same_pad`` the input is padded left floor((k-1)/2), right
    ceil((k-1)/2), giving T' = ceil(T / stride).
    """
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    if x.dim() != 3 or w.dim() != 3:
        raise ShapeError(f"conv1d expects 3-d input/weight, got {tuple(x.shape)} and {tuple(w.shape)}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv1d channel mismatch: input {tuple(x.shape)} vs weight {tuple(w.shape)}"
        )
    k = w.shape[2]
    if same_pad:
        x = torch.nn.functional.pad(x, ((k - 1) // 2, k // 2))
    out = torch.nn.functional.conv1d(x, w, b, stride=stride)
    return out.squeeze(0) if squeeze else out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map with weight laid out [d_in, d_out]."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(
            f"linear dim mismatch: input {tuple(x.shape)} vs weight {tuple(w.shape)}"
        )
    out = x @ w
    return out if b is None else out + b


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return torch.nn.functional.leaky_relu(x, negative_slope=slope)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    return torch.softmax(x, dim=-1)


def global_avg_pool(x: Tensor) -> Tensor:
    """Average each channel over time: [C, T] -> [C] or [N, C, T] -> [N, C]."""
    if x.dim() not in (2, 3):
        raise ShapeError(f"global_avg_pool expects [C,T] or [N,C,T], got {tuple(x.shape)}")
    return x.mean(dim=-1)


def l2_normalize(x: Tensor) -> Tensor:
    """Normalize rows to unit length.

    Rows with norm below 1e-12 pass through unchanged and contribute zero
    gradient, so dead features never produce NaN.
    """
    norm = x.norm(dim=-1, keepdim=True)
    live = norm > NORM_EPS
    safe = torch.where(live, norm, torch.ones_like(norm))
    return torch.where(live, x / safe, x.detach())


def cosine_sim(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two vectors; 0 if either has (near-)zero norm."""
    if u.shape != v.shape or u.dim() != 1:
        raise ShapeError(f"cosine_sim expects equal 1-d shapes, got {tuple(u.shape)} and {tuple(v.shape)}")
    nu = u.norm()
    nv = v.norm()
    live = (nu > NORM_EPS) & (nv > NORM_EPS)
    safe = torch.where(live, nu * nv, torch.ones_like(nu))
    return torch.where(live, (u * v).sum() / safe, torch.zeros_like(nu))


def cosine_matrix(x: Tensor, y: Tensor) -> Tensor:
    """Pairwise cosine similarities between rows of x [N,d] and y [M,d].

    Zero-norm rows yield cosine 0 against everything (guarded, no NaN).
    """
    if x.shape[-1] != y.shape[-1]:
        raise ShapeError(f"cosine_matrix dim mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return l2_normalize(x) @ l2_normalize(y).T


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """Accumulate gradients of a scalar loss into every tape parameter."""
    if loss.numel() != 1:
        raise ShapeError(f"backward needs a scalar, got shape {tuple(loss.shape)}")
    loss.backward(retain_graph=retain_graph)


def glorot_uniform(
    shape: tuple[int, ...], rng: np.random.Generator, dtype=torch.float32
) -> Tensor:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) leaf parameter.

    Fans follow the layout convention: [d_in, d_out] for affine weights,
    [C_out, C_in, k] for conv kernels.
    """
    if len(shape) == 2:
        fan_in, fan_out = shape[0], shape[1]
    elif len(shape) == 3:
        c_out, c_in, k = shape
        fan_in, fan_out = c_in * k, c_out * k
    else:
        raise ShapeError(f"glorot_uniform supports 2-d/3-d shapes, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape)
    return torch.tensor(data, dtype=dtype, requires_grad=True)


def zeros_param(shape: tuple[int, ...], dtype=torch.float32) -> Tensor:
    return torch.zeros(shape, dtype=dtype, requires_grad=True)
