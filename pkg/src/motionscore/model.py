"""The snippet-scoring network.

A stack of 3D conv stages with shared weights encodes each snippet; global
average pooling yields a feature vector that feeds (a) a classifier head and
(b) a two-layer attention gate (FC -> ReLU -> FC -> Sigmoid) producing one
weight in [0, 1] per snippet. Per-snippet class scores are combined by the
attention-weighted consensus F = sum_i(lambda_i * scores_i) / K, and a
softmax on F gives the class distribution. Multi-stream late fusion averages
per-modality video-level distributions.

The encoder is a configurable desk-scale stand-in for an inflated-2D
architecture; ``inflate_kernel`` implements the 2D->3D inflation rule itself
(replicate along time, divide by depth) so temporally constant inputs
reproduce the 2D response at every time step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tensor
from .errors import ConfigError, ContractError, DimensionError, InputError
from .sampling import AugmentConfig, SamplerConfig, Snippet, dense_snippets, test_preprocess

IN_CHANNELS = {"rgb": 3, "flow": 2, "mb": 2}


@dataclass(frozen=True)
class StageSpec:
    channels: int
    kernel: Tuple[int, int, int] = (3, 3, 3)
    stride: Tuple[int, int, int] = (1, 1, 1)

    @property
    def padding(self) -> Tuple[int, int, int]:
        return tuple(k // 2 for k in self.kernel)


# spatial stride 2 on alternating stages, temporal stride 2 on stages 2 and 4
DEFAULT_STAGES = (
    StageSpec(8, (3, 3, 3), (1, 2, 2)),
    StageSpec(16, (3, 3, 3), (2, 1, 1)),
    StageSpec(32, (3, 3, 3), (1, 2, 2)),
    StageSpec(64, (3, 3, 3), (2, 1, 1)),
)


@dataclass
class EncoderConfig:
    stages: Tuple[StageSpec, ...] = DEFAULT_STAGES
    num_classes: int = 3
    attention_hidden: Optional[int] = None   # default: feature_dim // 2
    dropout: float = 0.7                     # drop probability before the head

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.stages:
            raise ConfigError("encoder needs at least one conv stage")
        for s in self.stages:
            if s.channels < 1 or any(k < 1 for k in s.kernel) or any(st < 1 for st in s.stride):
                raise ConfigError(f"invalid stage spec {s}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def feature_dim(self) -> int:
        return self.stages[-1].channels

    @property
    def hidden_dim(self) -> int:
        return self.attention_hidden or max(1, self.feature_dim // 2)


@dataclass
class SnippetOutput:
    features: Tensor      # [feature_dim]
    class_scores: Tensor  # [num_classes]
    attention: Tensor     # scalar in [0, 1]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_params(cfg: EncoderConfig, in_channels: int,
                rng: np.random.Generator) -> ParamSet:
    """Centered uniform fan-in initialization for conv/FC weights, zero biases."""
    params = ParamSet()
    c_in = in_channels
    for i, stage in enumerate(cfg.stages):
        kt, kh, kw = stage.kernel
        fan_in = c_in * kt * kh * kw
        params.add(f"enc.conv{i}.w", _uniform(rng, (stage.channels, c_in, kt, kh, kw), fan_in))
        params.add(f"enc.conv{i}.b", np.zeros(stage.channels, dtype=np.float32))
        c_in = stage.channels
    feat, hidden = cfg.feature_dim, cfg.hidden_dim
    params.add("att.fc1.w", _uniform(rng, (feat, hidden), feat))
    params.add("att.fc1.b", np.zeros(hidden, dtype=np.float32))
    params.add("att.fc2.w", _uniform(rng, (hidden, 1), hidden))
    params.add("att.fc2.b", np.zeros(1, dtype=np.float32))
    params.add("head.w", _uniform(rng, (feat, cfg.num_classes), feat))
    params.add("head.b", np.zeros(cfg.num_classes, dtype=np.float32))
    return params


def encode_snippet(snippet: Union[Snippet, Tensor, np.ndarray], params: ParamSet,
                   cfg: EncoderConfig, *, training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> SnippetOutput:
    """Shared-weight encoding: conv stages -> global average pool -> features;
    classifier head and attention gate read the pooled features."""
    if isinstance(snippet, Snippet):
        x = snippet.frames
        expected = IN_CHANNELS.get(snippet.modality)
        if expected is not None and x.shape[0] != expected:
            raise InputError(
                f"modality {snippet.modality!r} expects {expected} channels, "
                f"snippet has {x.shape[0]}")
    else:
        x = snippet if isinstance(snippet, Tensor) else Tensor(snippet, check=False)
    if x.data.ndim != 4:
        raise InputError(f"snippet tensor must be [C, L, H, W], got {x.shape}")
    if x.shape[0] != params["enc.conv0.w"].shape[1]:
        raise InputError(
            f"snippet has {x.shape[0]} channels but encoder expects "
            f"{params['enc.conv0.w'].shape[1]}")

    for i, stage in enumerate(cfg.stages):
        w = params[f"enc.conv{i}.w"]
        b = params[f"enc.conv{i}.b"]
        x = ad.conv3d(x, w, stage.stride, stage.padding)
        x = ad.add(x, ad.reshape(b, (b.shape[0], 1, 1, 1)))
        x = ad.relu(x)
    features = ad.global_avg_pool(x)

    hidden = ad.relu(ad.add(ad.matmul(features, params["att.fc1.w"]), params["att.fc1.b"]))
    gate = ad.sigmoid(ad.add(ad.matmul(hidden, params["att.fc2.w"]), params["att.fc2.b"]))
    attention = ad.index(gate, 0)

    dropped = ad.dropout(features, cfg.dropout, rng=rng, training=training)
    class_scores = ad.add(ad.matmul(dropped, params["head.w"]), params["head.b"])
    return SnippetOutput(features=features, class_scores=class_scores, attention=attention)


def weighted_mean(lams: Sequence[Tensor], scores: Sequence[Tensor]) -> Tensor:
    """F = sum_i(lam_i * scores_i) / K as one tape node.

    Accumulates in float64 so the result is symmetric under permutation of
    the (lam, scores) pairs.
    """
    if not scores:
        raise ContractError("consensus needs at least one snippet output")
    if len(lams) != len(scores):
        raise ContractError("one attention weight per snippet output required")
    m = scores[0].shape
    for s in scores[1:]:
        if s.shape != m:
            raise DimensionError(f"score shapes differ: {s.shape} vs {m}")
    k = len(scores)
    acc = np.zeros(m, dtype=np.float64)
    for lam, s in zip(lams, scores):
        acc += float(lam.data) * s.data.astype(np.float64)
    out = (acc / k).astype(scores[0].dtype)

    def bwd(g):
        for lam, s in zip(lams, scores):
            if s.requires_grad:
                ad._accumulate(s, g * (float(lam.data) / k))
            if lam.requires_grad:
                ad._accumulate(lam, np.asarray(
                    np.sum(g * s.data, dtype=np.float64) / k, dtype=lam.dtype))
    return ad.make_node(out, tuple(lams) + tuple(scores), bwd)


def consensus(outputs: Sequence[SnippetOutput]) -> Tensor:
    """Attention-weighted consensus over K snippet outputs."""
    if not outputs:
        raise ContractError("consensus needs at least one snippet output")
    return weighted_mean([o.attention for o in outputs],
                         [o.class_scores for o in outputs])


def consensus_unweighted(outputs: Sequence[SnippetOutput]) -> Tensor:
    """Plain segment mean: every attention weight forced to 1."""
    if not outputs:
        raise ContractError("consensus needs at least one snippet output")
    ones = [Tensor(np.float32(1.0), check=False) for _ in outputs]
    return weighted_mean(ones, [o.class_scores for o in outputs])


def class_probs(scores: Union[Tensor, np.ndarray]) -> Tensor:
    """Softmax over class scores (max-subtracted for stability)."""
    t = scores if isinstance(scores, Tensor) else Tensor(scores, check=False)
    return ad.softmax(t)


def fuse_modalities(per_modality_scores: Sequence[Union[Tensor, np.ndarray]]) -> np.ndarray:
    """Unweighted elementwise mean of per-modality video-level distributions."""
    if not per_modality_scores:
        raise InputError("need at least one modality stream")
    arrays = [s.data if isinstance(s, Tensor) else np.asarray(s) for s in per_modality_scores]
    m = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != m:
            raise InputError(f"score length mismatch: {a.shape} vs {m}")
    return np.mean(np.stack(arrays), axis=0, dtype=np.float64).astype(np.float32)


def inflate_kernel(kernel2d: Union[Tensor, np.ndarray], depth: int) -> Tensor:
    """Replicate 2D conv weights along a new temporal axis and divide by the
    depth, so temporally constant inputs see the original 2D response."""
    if depth < 1:
        raise ConfigError(f"inflation depth must be >= 1, got {depth}")
    k = kernel2d.data if isinstance(kernel2d, Tensor) else np.asarray(kernel2d)
    if k.ndim != 4:
        raise DimensionError(f"2D kernel must be [C_out, C_in, kH, kW], got {k.shape}")
    inflated = np.repeat(k[:, :, None, :, :], depth, axis=2) / k.dtype.type(depth)
    return Tensor(inflated, check=False)


@dataclass
class VideoPrediction:
    class_index: int
    probs: np.ndarray
    per_modality: Dict[str, np.ndarray]


def predict_video(modality_arrays: Mapping[str, np.ndarray],
                  models: Mapping[str, Tuple[ParamSet, EncoderConfig]],
                  sampler_cfg: SamplerConfig,
                  aug: Optional[AugmentConfig] = None,
                  clip_id: str = "") -> VideoPrediction:
    """Dense snippets per modality -> per-snippet class probabilities -> mean
    over snippets -> late fusion -> argmax (smallest index wins ties)."""
    aug = aug or AugmentConfig(enabled=False)
    per_modality: Dict[str, np.ndarray] = {}
    for modality, arr in modality_arrays.items():
        if modality not in models:
            raise ConfigError(f"no trained parameters for modality {modality!r}")
        params, cfg = models[modality]
        arr = test_preprocess(np.asarray(arr), aug)
        snippets = dense_snippets(arr, sampler_cfg, modality=modality, clip_id=clip_id)
        with ad.no_grad():
            probs = [class_probs(encode_snippet(s, params, cfg).class_scores).data
                     for s in snippets]
        per_modality[modality] = np.mean(
            np.stack(probs), axis=0, dtype=np.float64).astype(np.float32)
    fused = fuse_modalities(list(per_modality.values()))
    return VideoPrediction(class_index=int(np.argmax(fused)), probs=fused,
                           per_modality=per_modality)
