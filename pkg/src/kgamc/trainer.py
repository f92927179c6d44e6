"""Joint optimization of the signal and semantic networks.

Each step runs one whole-graph semantic forward (anchors), one signal
forward on the shuffled batch, the joint loss, and separate Adam updates
for the two networks under a shared step-decay schedule with the semantic
learning rate tiers below the signal one. Inference uses the signal
network only.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataio import Dataset
from .errors import CheckpointError, ConfigurationError, StateError
from .loss import joint_loss
from .mkg import HeteroGraph, anchors as anchor_map, init_node_features
from .msnet import MsnetConfig, MsnetParams, classify, init_msnet_params, msnet_forward
from .nncore import Tensor, cosine_matrix, softmax
from .rgcn import (
    GraphTensors,
    RgcnParams,
    init_rgcn_params,
    rgcn_forward,
    semantic_anchors,
)
from .sigsyn import ModulationClass

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CKPT_MAGIC = b"KGMC"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 80
    batch_size: int = 1024
    lr_msnet: float = 1e-3
    lr_rgcn: float = 1e-6
    weight_decay: float = 5e-4
    step_epochs: int = 5
    step_factor: float = 0.8
    lam: float = 0.2
    d: int = 128
    seed: int = 0
    proj_hidden: int = 256
    stem_channels: int = 32
    branch_channels: int = 16

    def __post_init__(self):
        if self.lr_msnet <= 0 or self.lr_rgcn <= 0:
            raise ValueError("learning rates must be > 0")
        if self.lr_rgcn > self.lr_msnet:
            raise ValueError(
                f"lr_rgcn ({self.lr_rgcn}) must not exceed lr_msnet ({self.lr_msnet})"
            )
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.step_factor <= 1:
            raise ValueError("step_factor must be in (0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass
class ModelState:
    msnet: MsnetParams
    rgcn: RgcnParams
    moments: dict[str, tuple[Tensor, Tensor]]
    step_count: int
    epoch: int
    frozen_anchors: Tensor | None
    class_names: list[str]
    cfg: TrainConfig
    graph_in_dim: int


@dataclass
class TrainHistory:
    entries: list[dict] = field(default_factory=list)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e, sort_keys=True) + "\n")


@dataclass
class GraphContext:
    graph: HeteroGraph
    tensors: GraphTensors
    features: Tensor
    anchor_indices: list[int]

    @property
    def in_dim(self) -> int:
        return self.features.shape[1]


def prepare_graph(g: HeteroGraph, class_names: list[str]) -> GraphContext:
    """Featurize the graph and resolve the per-class anchor node indices."""
    classes = []
    for name in class_names:
        try:
            classes.append(ModulationClass[name])
        except KeyError:
            raise ConfigurationError(f"unknown modulation class {name!r}") from None
    amap = anchor_map(g, tuple(classes))
    feats = torch.tensor(init_node_features(g), dtype=torch.float32)
    return GraphContext(
        graph=g,
        tensors=GraphTensors.from_graph(g),
        features=feats,
        anchor_indices=[amap[c] for c in classes],
    )


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Multiplicative decay factor: step_factor^(epoch // step_epochs)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.step_factor ** (epoch // cfg.step_epochs)


def adam_step(
    params: dict[str, Tensor],
    moments: dict[str, tuple[Tensor, Tensor]],
    lr: float,
    weight_decay: float,
    t: int,
) -> None:
    """One Adam update with bias correction and decoupled weight decay.

    Parameters whose gradient is unset are skipped entirely (no decay),
    matching the lambda=0 contract of leaving the semantic network frozen.
    """
    if t < 1:
        raise ValueError(f"step counter must be >= 1, got {t}")
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        m, v = moments[name]
        m.mul_(ADAM_BETA1).add_(g, alpha=1.0 - ADAM_BETA1)
        v.mul_(ADAM_BETA2).addcmul_(g, g, value=1.0 - ADAM_BETA2)
        update = (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS)
        p.data.mul_(1.0 - lr * weight_decay).sub_(update, alpha=lr)


def _mean_pairwise_cos(x_s: Tensor) -> float:
    m = x_s.shape[0]
    cos = cosine_matrix(x_s, x_s)
    return float((cos.sum() - cos.diagonal().sum()) / (m * (m - 1)))


def _batched_features(x: Tensor, params: MsnetParams, batch: int = 1024) -> Tensor:
    outs = [msnet_forward(x[i : i + batch], params) for i in range(0, len(x), batch)]
    return torch.cat(outs, dim=0)


def train(
    train_ds: Dataset,
    test_ds: Dataset,
    graph: HeteroGraph | GraphContext,
    cfg: TrainConfig,
) -> tuple[ModelState, TrainHistory]:
    """Run the full joint training loop; deterministic in (data, cfg, seed)."""
    if train_ds.class_names != test_ds.class_names:
        raise ConfigurationError("train/test class tables differ")
    if train_ds.frame_len != test_ds.frame_len:
        raise ConfigurationError("train/test frame lengths differ")
    gctx = graph if isinstance(graph, GraphContext) else prepare_graph(graph, train_ds.class_names)
    n_classes = len(train_ds.class_names)

    ms_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    kg_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))

    ms_cfg = MsnetConfig(
        frame_len=train_ds.frame_len,
        stem_channels=cfg.stem_channels,
        branch_channels=cfg.branch_channels,
        d=cfg.d,
        n_classes=n_classes,
    )
    msnet_params = init_msnet_params(ms_cfg, ms_rng)
    rgcn_params = init_rgcn_params(gctx.in_dim, cfg.d, cfg.proj_hidden, kg_rng)
    named = {f"msnet.{k}": v for k, v in msnet_params.named().items()}
    named |= {f"rgcn.{k}": v for k, v in rgcn_params.named().items()}
    moments = {k: (torch.zeros_like(p), torch.zeros_like(p)) for k, p in named.items()}
    ms_named = {k: v for k, v in named.items() if k.startswith("msnet.")}
    kg_named = {k: v for k, v in named.items() if k.startswith("rgcn.")}

    x_train, y_train, _ = train_ds.to_arrays()
    x_test, y_test, _ = test_ds.to_arrays()
    xt = torch.from_numpy(x_train)
    yt = torch.from_numpy(y_train)
    xe = torch.from_numpy(x_test)
    ye = torch.from_numpy(y_test)

    history = TrainHistory()
    t = 0
    last_anchors: Tensor | None = None
    for epoch in range(cfg.epochs):
        factor = lr_schedule(epoch, cfg)
        perm = shuffle_rng.permutation(len(xt))
        loss_sums = {"l_ce": 0.0, "l_npair": 0.0, "l_p": 0.0, "l_total": 0.0}
        correct = 0
        for start in range(0, len(perm), cfg.batch_size):
            idx = torch.from_numpy(perm[start : start + cfg.batch_size])
            xb, yb = xt[idx], yt[idx]

            if cfg.lam != 0.0:
                emb = rgcn_forward(gctx.tensors, gctx.features, rgcn_params)
                x_s = semantic_anchors(emb, gctx.anchor_indices)
            else:
                with torch.no_grad():
                    emb = rgcn_forward(gctx.tensors, gctx.features, rgcn_params)
                    x_s = semantic_anchors(emb, gctx.anchor_indices)
            feats = msnet_forward(xb, msnet_params)
            logits = classify(feats, msnet_params)
            lb = joint_loss(feats, x_s, logits, yb, cfg.lam)

            for p in named.values():
                p.grad = None
            lb.l_total.backward()
            t += 1
            adam_step(ms_named, moments, cfg.lr_msnet * factor, cfg.weight_decay, t)
            adam_step(kg_named, moments, cfg.lr_rgcn * factor, cfg.weight_decay, t)

            w = len(idx)
            for key, val in lb.as_floats().items():
                loss_sums[key] += val * w
            correct += int((logits.argmax(dim=1) == yb).sum())
            last_anchors = x_s.detach()

        with torch.no_grad():
            test_feats = _batched_features(xe, msnet_params)
            test_pred = classify(test_feats, msnet_params).argmax(dim=1)
            test_acc = float((test_pred == ye).float().mean())
        entry = {k: v / len(xt) for k, v in loss_sums.items()}
        entry.update(
            epoch=epoch,
            train_acc=correct / len(xt),
            test_acc=test_acc,
            anchor_mean_cos=_mean_pairwise_cos(last_anchors),
        )
        history.entries.append(entry)

    state = ModelState(
        msnet=msnet_params,
        rgcn=rgcn_params,
        moments=moments,
        step_count=t,
        epoch=cfg.epochs,
        frozen_anchors=None if last_anchors is None else last_anchors.clone(),
        class_names=list(train_ds.class_names),
        cfg=cfg,
        graph_in_dim=gctx.in_dim,
    )
    return state, history


def infer(
    frames: np.ndarray,
    state: ModelState,
    mode: str = "classifier",
    return_scores: bool = False,
):
    """Predict labels (and return features) using the signal network only.

    ``classifier`` mode takes the argmax of the affine head's logits;
    ``anchor`` mode matches features against the frozen training anchors
    by cosine. Neither touches the graph network.
    """
    if mode not in ("classifier", "anchor"):
        raise ValueError(f"unknown inference mode {mode!r}")
    x = torch.as_tensor(np.asarray(frames), dtype=torch.float32)
    if x.dim() == 2:
        x = x.unsqueeze(0)
    with torch.no_grad():
        feats = _batched_features(x, state.msnet)
        if mode == "classifier":
            scores = softmax(classify(feats, state.msnet))
        else:
            if state.frozen_anchors is None:
                raise StateError("anchor-mode inference requires frozen anchors")
            scores = softmax(cosine_matrix(feats, state.frozen_anchors))
        preds = scores.argmax(dim=1)
    if return_scores:
        return preds.numpy(), feats.numpy(), scores.numpy()
    return preds.numpy(), feats.numpy()


# --- checkpoint container -------------------------------------------------


def _named_state_arrays(state: ModelState) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    named = {f"msnet.{k}": v for k, v in state.msnet.named().items()}
    named |= {f"rgcn.{k}": v for k, v in state.rgcn.named().items()}
    for name, p in named.items():
        arrays[name] = p.detach().numpy()
        m, v = state.moments[name]
        arrays[f"adam.m.{name}"] = m.numpy()
        arrays[f"adam.v.{name}"] = v.numpy()
    if state.frozen_anchors is not None:
        arrays["frozen_anchors"] = state.frozen_anchors.numpy()
    return arrays


def save_checkpoint(state: ModelState, path: str | Path) -> None:
    """Serialize parameters, optimizer moments, anchors and the config echo."""
    header = {
        "class_names": state.class_names,
        "epoch": state.epoch,
        "step_count": state.step_count,
        "graph_in_dim": state.graph_in_dim,
        "msnet_cfg": dataclasses.asdict(state.msnet.cfg),
        "train_cfg": dataclasses.asdict(state.cfg),
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = bytearray()
    buf += CKPT_MAGIC
    buf += struct.pack("<H", CKPT_VERSION)
    buf += struct.pack("<I", len(hdr)) + hdr
    arrays = _named_state_arrays(state)
    buf += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def _rebuild_params(header: dict, blobs: dict[str, np.ndarray]) -> ModelState:
    ms_cfg = MsnetConfig(**header["msnet_cfg"])
    cfg = TrainConfig(**header["train_cfg"])
    rng = np.random.default_rng(0)  # placeholder structure; data overwritten
    msnet_params = init_msnet_params(ms_cfg, rng)
    rgcn_params = init_rgcn_params(header["graph_in_dim"], cfg.d, cfg.proj_hidden, rng)

    named = {f"msnet.{k}": v for k, v in msnet_params.named().items()}
    named |= {f"rgcn.{k}": v for k, v in rgcn_params.named().items()}
    moments: dict[str, tuple[Tensor, Tensor]] = {}
    for name, p in named.items():
        for key in (name, f"adam.m.{name}", f"adam.v.{name}"):
            if key not in blobs:
                raise CheckpointError(f"missing parameter blob {key!r}")
            if blobs[key].shape != tuple(p.shape):
                raise CheckpointError(
                    f"blob {key!r} has shape {blobs[key].shape}, expected {tuple(p.shape)}"
                )
        p.data = torch.from_numpy(blobs[name].copy())
        moments[name] = (
            torch.from_numpy(blobs[f"adam.m.{name}"].copy()),
            torch.from_numpy(blobs[f"adam.v.{name}"].copy()),
        )
    frozen = None
    if "frozen_anchors" in blobs:
        frozen = torch.from_numpy(blobs["frozen_anchors"].copy())
    return ModelState(
        msnet=msnet_params,
        rgcn=rgcn_params,
        moments=moments,
        step_count=header["step_count"],
        epoch=header["epoch"],
        frozen_anchors=frozen,
        class_names=list(header["class_names"]),
        cfg=cfg,
        graph_in_dim=header["graph_in_dim"],
    )


def load_checkpoint(path: str | Path) -> ModelState:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"truncated checkpoint at offset {pos}")
        out = data[pos : pos + n]
        pos += n
        return out

    if take(4) != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic at offset 0 in {path}")
    (version,) = struct.unpack("<H", take(2))
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<I", take(4))
    header = json.loads(take(hlen).decode("utf-8"))
    (nblobs,) = struct.unpack("<I", take(4))
    blobs: dict[str, np.ndarray] = {}
    for _ in range(nblobs):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        blobs[name] = arr
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes at offset {pos}")
    return _rebuild_params(header, blobs)
