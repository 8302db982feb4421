"""Focal-loss training with temporal-segment sampling, subject-level k-fold
cross-validation, and macro-F1 / accuracy evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import AdamConfig, ParamSet, Tensor, adam_step
from .errors import ConfigError, ContractError, InputError
from .model import (EncoderConfig, IN_CHANNELS, class_probs, consensus,
                    consensus_unweighted, encode_snippet, init_params, predict_video)
from .sampling import AugmentConfig, SamplerConfig, augment, segment_sample

LOSS_EPSILON = 1e-12


# -- score grouping and focal loss --------------------------------------------


def group_scores(updrs_raw: int) -> int:
    """Severity grouping: 0 normal, 1-2 mild, 3-4 severe."""
    if not 0 <= updrs_raw <= 4:
        raise InputError(f"raw score {updrs_raw} outside 0..4")
    if updrs_raw == 0:
        return 0
    return 1 if updrs_raw <= 2 else 2


@dataclass
class FocalConfig:
    alpha: float = 0.5
    gamma: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")


def focal_loss(p: Union[Tensor, np.ndarray], y: int, cfg: FocalConfig) -> Tensor:
    """-alpha * (1 - p_y)^gamma * log(p_y) on the true-class probability.

    At alpha=1, gamma=0 this is exactly the cross-entropy -log(p_y).
    """
    t = p if isinstance(p, Tensor) else Tensor(p, check=False)
    if t.data.ndim != 1:
        raise ContractError(f"probability vector expected, got shape {t.shape}")
    if not 0 <= y < t.shape[0]:
        raise InputError(f"class index {y} outside 0..{t.shape[0] - 1}")
    py = ad.clip_min(ad.index(t, y), LOSS_EPSILON)
    modulator = ad.pow_const(1.0 - py, cfg.gamma)
    return -(cfg.alpha * modulator * ad.log(py))


def cross_entropy(p: Union[Tensor, np.ndarray], y: int) -> Tensor:
    t = p if isinstance(p, Tensor) else Tensor(p, check=False)
    return -ad.log(ad.clip_min(ad.index(t, y), LOSS_EPSILON))


# -- clips and folds -----------------------------------------------------------


@dataclass
class LabeledClip:
    clip_id: str
    subject_id: str
    task: str
    updrs_raw: int
    class_label: int = -1

    def __post_init__(self):
        expected = group_scores(self.updrs_raw)
        if self.class_label == -1:
            self.class_label = expected
        elif self.class_label != expected:
            raise InputError(
                f"clip {self.clip_id!r}: class_label {self.class_label} != "
                f"group({self.updrs_raw}) = {expected}")


@dataclass
class LoadedClip:
    meta: LabeledClip
    data: np.ndarray          # [C, N, H, W]


@dataclass
class FoldPlan:
    k: int
    assignment: Dict[str, int]   # subject_id -> fold index

    def subjects_in(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def fold_of(self, subject_id: str) -> int:
        return self.assignment[subject_id]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(
            {"k": self.k, "assignment": self.assignment}, indent=1, sort_keys=True) + "\n")

    @staticmethod
    def load(path) -> "FoldPlan":
        raw = json.loads(Path(path).read_text())
        return FoldPlan(k=int(raw["k"]), assignment={k: int(v) for k, v in raw["assignment"].items()})


def subject_folds(subjects: Sequence[str], k: int, rng: np.random.Generator) -> FoldPlan:
    """Shuffle subjects and deal them round-robin into k folds; every clip of
    a subject follows its subject, so folds never share a patient."""
    unique = sorted(set(subjects))
    if k < 1:
        raise ConfigError(f"fold count must be >= 1, got {k}")
    if k > len(unique):
        raise ConfigError(f"cannot split {len(unique)} subjects into {k} folds")
    perm = rng.permutation(len(unique))
    return FoldPlan(k=k, assignment={unique[int(p)]: i % k for i, p in enumerate(perm)})


# -- metrics -------------------------------------------------------------------


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], m: int) -> np.ndarray:
    cm = np.zeros((m, m), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    """F1 per class from a confusion matrix (rows = true); 0 when undefined."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    true = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(cm: np.ndarray) -> float:
    return float(per_class_f1(cm).mean())


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.diag(cm).sum() / total) if total else 0.0


# -- training loop ---------------------------------------------------------------


@dataclass
class TrainHyper:
    epochs: int = 120
    learning_rate: float = 1e-5
    batch_size: int = 2
    focal: FocalConfig = field(default_factory=FocalConfig)
    seed: int = 0
    use_attention: bool = True
    val_every: int = 10       # 0 disables validation during training

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    train_f1: float
    train_accuracy: float
    val_f1: Optional[float] = None


class TrainingDiverged(RuntimeError):
    pass


def _clip_rng(seed: int, epoch: int, clip_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, epoch, clip_index)))


def train(clips: Sequence[LoadedClip], modality: str, encoder_cfg: EncoderConfig,
          sampler_cfg: SamplerConfig, aug_cfg: AugmentConfig, hyper: TrainHyper,
          val_clips: Sequence[LoadedClip] = (),
          params: Optional[ParamSet] = None,
          log_fn: Optional[Callable[[EpochLog], None]] = None
          ) -> Tuple[ParamSet, List[EpochLog]]:
    """End-to-end training: per clip, k segment snippets are sampled,
    augmented, encoded with shared weights, combined by attention-weighted
    consensus, and scored with the focal loss; gradients flow through the
    whole stack into one Adam step per batch. Deterministic under the seed."""
    if not clips:
        raise InputError("empty training set")
    if modality not in IN_CHANNELS:
        raise ConfigError(f"unknown modality {modality!r}")
    clips = sorted(clips, key=lambda c: c.meta.clip_id)
    if params is None:
        params = init_params_for(encoder_cfg, modality, hyper.seed)
    adam = AdamConfig(learning_rate=max(hyper.learning_rate, 1e-30))
    logs: List[EpochLog] = []
    n = len(clips)
    for epoch in range(hyper.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence((hyper.seed, 7, epoch))).permutation(n)
        losses: List[float] = []
        y_true: List[int] = []
        y_pred: List[int] = []
        for lo in range(0, n, hyper.batch_size):
            batch = order[lo:lo + hyper.batch_size]
            batch_losses = []
            for ci in batch:
                clip = clips[int(ci)]
                rng = _clip_rng(hyper.seed, epoch, int(ci))
                snippets = segment_sample(
                    clip.data, sampler_cfg, rng, modality=modality,
                    clip_id=clip.meta.clip_id, subject_id=clip.meta.subject_id)
                snippets = [augment(s, rng, aug_cfg) for s in snippets]
                outs = [encode_snippet(s, params, encoder_cfg, training=True, rng=rng)
                        for s in snippets]
                fused = consensus(outs) if hyper.use_attention else consensus_unweighted(outs)
                probs = class_probs(fused)
                batch_losses.append(focal_loss(probs, clip.meta.class_label, hyper.focal))
                y_true.append(clip.meta.class_label)
                y_pred.append(int(np.argmax(probs.data)))
            loss = batch_losses[0]
            for extra in batch_losses[1:]:
                loss = loss + extra
            loss = loss / len(batch_losses)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, batch starting {lo} "
                    f"(modality {modality})")
            ad.backward(loss, params)
            if hyper.learning_rate > 0:
                adam_step(params, adam)
            else:
                params.zero_grad()   # frozen run: parameters stay bit-identical
            losses.append(value)
        cm = confusion_matrix(y_true, y_pred, encoder_cfg.num_classes)
        entry = EpochLog(epoch=epoch,
                         mean_loss=float(np.mean(losses)),
                         train_f1=macro_f1(cm),
                         train_accuracy=accuracy(cm))
        if val_clips and hyper.val_every and (epoch + 1) % hyper.val_every == 0:
            entry.val_f1 = validate(val_clips, modality, params, encoder_cfg,
                                    sampler_cfg, aug_cfg)
        logs.append(entry)
        if log_fn is not None:
            log_fn(entry)
    return params, logs


def init_params_for(encoder_cfg: EncoderConfig, modality: str, seed: int) -> ParamSet:
    if modality not in IN_CHANNELS:
        raise ConfigError(f"unknown modality {modality!r}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 11)))
    return init_params(encoder_cfg, IN_CHANNELS[modality], rng)


def validate(clips: Sequence[LoadedClip], modality: str, params: ParamSet,
             encoder_cfg: EncoderConfig, sampler_cfg: SamplerConfig,
             aug_cfg: AugmentConfig) -> float:
    y_true, y_pred = [], []
    for clip in clips:
        pred = predict_video({modality: clip.data}, {modality: (params, encoder_cfg)},
                             sampler_cfg, aug_cfg, clip_id=clip.meta.clip_id)
        y_true.append(clip.meta.class_label)
        y_pred.append(pred.class_index)
    return macro_f1(confusion_matrix(y_true, y_pred, encoder_cfg.num_classes))


# -- cross-validated evaluation --------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    n_clips: int
    confusion: np.ndarray
    macro_f1: float
    accuracy: float


@dataclass
class EvalReport:
    per_fold: List[FoldResult]
    mean_f1: float
    std_f1: float
    mean_accuracy: float
    std_accuracy: float
    pooled_confusion: np.ndarray
    pooled_f1: float
    pooled_accuracy: float
    modalities: Tuple[str, ...]


ClipArrays = Callable[[LabeledClip, str], np.ndarray]


def evaluate(fold_plan: FoldPlan,
             models_per_fold: Mapping[int, Mapping[str, Tuple[ParamSet, EncoderConfig]]],
             clips: Sequence[LabeledClip],
             clip_arrays: ClipArrays,
             modalities: Sequence[str],
             sampler_cfg: SamplerConfig,
             aug_cfg: Optional[AugmentConfig] = None,
             num_classes: int = 3) -> EvalReport:
    """Held-out prediction per fold with late fusion across the requested
    modalities; reports per-fold and averaged macro-F1/accuracy plus the
    pooled-prediction variant."""
    per_fold: List[FoldResult] = []
    pooled_true: List[int] = []
    pooled_pred: List[int] = []
    for fold in range(fold_plan.k):
        if fold not in models_per_fold:
            raise ConfigError(f"missing trained model for fold {fold}")
        models = models_per_fold[fold]
        for m in modalities:
            if m not in models:
                raise ConfigError(f"missing modality {m!r} model for fold {fold}")
        val_subjects = set(fold_plan.subjects_in(fold))
        fold_clips = [c for c in clips if c.subject_id in val_subjects]
        y_true, y_pred = [], []
        for clip in fold_clips:
            arrays = {m: clip_arrays(clip, m) for m in modalities}
            pred = predict_video(arrays, models, sampler_cfg, aug_cfg, clip_id=clip.clip_id)
            y_true.append(clip.class_label)
            y_pred.append(pred.class_index)
        cm = confusion_matrix(y_true, y_pred, num_classes)
        per_fold.append(FoldResult(fold=fold, n_clips=len(fold_clips), confusion=cm,
                                   macro_f1=macro_f1(cm), accuracy=accuracy(cm)))
        pooled_true.extend(y_true)
        pooled_pred.extend(y_pred)
    f1s = [r.macro_f1 for r in per_fold]
    accs = [r.accuracy for r in per_fold]
    pooled_cm = confusion_matrix(pooled_true, pooled_pred, num_classes)
    return EvalReport(
        per_fold=per_fold,
        mean_f1=float(np.mean(f1s)),
        std_f1=float(np.std(f1s)),
        mean_accuracy=float(np.mean(accs)),
        std_accuracy=float(np.std(accs)),
        pooled_confusion=pooled_cm,
        pooled_f1=macro_f1(pooled_cm),
        pooled_accuracy=accuracy(pooled_cm),
        modalities=tuple(modalities),
    )
