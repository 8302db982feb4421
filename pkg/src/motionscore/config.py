"""Pipeline configuration: one nested YAML file covering every stage.

Every training hyperparameter surfaces here with its standard default
(learning rate 1e-5, batch size 2, dropout 0.7, 120 epochs, K=4 segments,
32-frame train snippets, 64x16 test snippets, focal alpha 0.5 / gamma 2,
5 folds, 340x256 input resolution).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import yaml

from .errors import ConfigError
from .flow import TvL1Params
from .model import EncoderConfig, StageSpec
from .sampling import AugmentConfig, SamplerConfig
from .synthetic import ClassSpec, SynthConfig
from .training import FocalConfig, TrainHyper


@dataclass
class DatasetConfig:
    manifest: Optional[str] = None      # existing dataset: path to manifest.json
    root: Optional[str] = None
    synth: Optional[SynthConfig] = None  # or generate one
    target_resolution: Optional[Tuple[int, int]] = None  # (height, width)

    def __post_init__(self):
        if self.manifest is None and self.synth is None:
            raise ConfigError("dataset needs either a manifest path or a synth section")


@dataclass
class PipelineConfig:
    schema: int = 1
    seed: int = 0
    workdir: str = "out"
    task: str = "hand_movement"
    dataset: DatasetConfig = field(default_factory=lambda: DatasetConfig(synth=SynthConfig()))
    flow: TvL1Params = field(default_factory=TvL1Params)
    flow_input_bound: float = 20.0
    mb_input_bound: float = 2.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: EncoderConfig = field(default_factory=EncoderConfig)
    attention: bool = True
    loss: FocalConfig = field(default_factory=FocalConfig)
    training: TrainHyper = field(default_factory=TrainHyper)
    folds: int = 5
    modalities: Tuple[str, ...] = ("rgb", "flow", "mb")

    def hyper(self) -> TrainHyper:
        h = self.training
        return TrainHyper(epochs=h.epochs, learning_rate=h.learning_rate,
                          batch_size=h.batch_size, focal=self.loss, seed=self.seed,
                          use_attention=self.attention, val_every=h.val_every)


def _take(section: dict, allowed: Sequence[str], where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where!r} section")
    return section


def _tuple2(value, where: str) -> Tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where} must be a 2-element list")
    return (int(value[0]), int(value[1]))


def _parse_synth(raw: dict) -> SynthConfig:
    raw = _take(raw, ["n_subjects", "clips_per_subject", "class_specs", "camera_pan",
                      "frame_size", "frame_count", "fps", "task", "rng_seed"], "dataset.synth")
    kwargs = dict(raw)
    if "class_specs" in kwargs:
        kwargs["class_specs"] = tuple(
            ClassSpec(amplitude=float(c["amplitude"]), frequency=float(c["frequency"]),
                      decay=float(c["decay"]))
            for c in kwargs["class_specs"])
    for key in ("camera_pan", "frame_size", "frame_count"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SynthConfig(**kwargs)


def _parse_stages(raw) -> Tuple[StageSpec, ...]:
    stages = []
    for s in raw:
        s = _take(dict(s), ["channels", "kernel", "stride"], "model.stages[]")
        stages.append(StageSpec(
            channels=int(s["channels"]),
            kernel=tuple(s.get("kernel", (3, 3, 3))),
            stride=tuple(s.get("stride", (1, 1, 1)))))
    return tuple(stages)


def load_config(path) -> PipelineConfig:
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return parse_config(raw)


def parse_config(raw: dict) -> PipelineConfig:
    raw = _take(dict(raw), ["schema", "seed", "workdir", "task", "dataset", "flow",
                            "sampler", "augment", "model", "loss", "training",
                            "folds", "run", "mb"], "top level")
    ds_raw = _take(dict(raw.get("dataset", {})),
                   ["manifest", "root", "synth", "target_resolution"], "dataset")
    dataset = DatasetConfig(
        manifest=ds_raw.get("manifest"),
        root=ds_raw.get("root"),
        synth=_parse_synth(dict(ds_raw["synth"])) if ds_raw.get("synth") is not None else None,
        target_resolution=_tuple2(ds_raw["target_resolution"], "dataset.target_resolution")
        if ds_raw.get("target_resolution") else None,
    )

    flow_raw = _take(dict(raw.get("flow", {})),
                     ["lambda", "theta", "tau", "pyramid_levels", "scale_factor",
                      "warps_per_level", "iterations_per_warp", "stop_epsilon",
                      "input_bound"], "flow")
    flow_bound = float(flow_raw.pop("input_bound", 20.0))
    if "lambda" in flow_raw:
        flow_raw["lam"] = float(flow_raw.pop("lambda"))
    flow = TvL1Params(**flow_raw)

    mb_raw = _take(dict(raw.get("mb", {})), ["input_bound"], "mb")

    sampler = SamplerConfig(**_take(dict(raw.get("sampler", {})),
                                    ["k_segments", "train_len", "test_snippets",
                                     "test_len", "rng_seed"], "sampler"))

    aug_raw = _take(dict(raw.get("augment", {})),
                    ["enabled", "out_size", "scales", "flip_prob"], "augment")
    augment = AugmentConfig(
        enabled=bool(aug_raw.get("enabled", True)),
        out_size=_tuple2(aug_raw["out_size"], "augment.out_size")
        if aug_raw.get("out_size") else None,
        scales=tuple(aug_raw.get("scales", AugmentConfig().scales)),
        flip_prob=float(aug_raw.get("flip_prob", 0.5)))

    model_raw = _take(dict(raw.get("model", {})),
                      ["stages", "num_classes", "attention_hidden", "dropout",
                       "attention"], "model")
    attention = bool(model_raw.pop("attention", True))
    if "stages" in model_raw:
        model_raw["stages"] = _parse_stages(model_raw["stages"])
    model = EncoderConfig(**model_raw)

    loss = FocalConfig(**_take(dict(raw.get("loss", {})), ["alpha", "gamma"], "loss"))

    train_raw = _take(dict(raw.get("training", {})),
                      ["epochs", "learning_rate", "batch_size", "val_every"], "training")
    training = TrainHyper(focal=loss, **train_raw)

    run_raw = _take(dict(raw.get("run", {})), ["modalities"], "run")
    modalities = tuple(run_raw.get("modalities", ("rgb", "flow", "mb")))
    for m in modalities:
        if m not in ("rgb", "flow", "mb"):
            raise ConfigError(f"unknown modality {m!r} in run.modalities")

    task = {"hand": "hand_movement", "gait": "gait"}.get(
        raw.get("task", "hand_movement"), raw.get("task", "hand_movement"))
    if task not in ("hand_movement", "gait"):
        raise ConfigError(f"unknown task {task!r}")
    folds = int(raw.get("folds", 5))
    if folds < 1:
        raise ConfigError("folds must be >= 1")
    return PipelineConfig(
        schema=int(raw.get("schema", 1)),
        seed=int(raw.get("seed", 0)),
        workdir=str(raw.get("workdir", "out")),
        task=task,
        dataset=dataset,
        flow=flow,
        flow_input_bound=flow_bound,
        mb_input_bound=float(mb_raw.get("input_bound", 2.0)),
        sampler=sampler,
        augment=augment,
        model=model,
        attention=attention,
        loss=loss,
        training=training,
        folds=folds,
        modalities=modalities,
    )


def config_fingerprint(cfg: PipelineConfig) -> dict:
    """Canonical nested dict of everything that affects pipeline outputs;
    used for cache keys."""
    return {
        "schema": cfg.schema,
        "seed": cfg.seed,
        "task": cfg.task,
        "flow": vars(cfg.flow) | {"input_bound": cfg.flow_input_bound},
        "mb_input_bound": cfg.mb_input_bound,
        "sampler": vars(cfg.sampler),
        "augment": {"enabled": cfg.augment.enabled, "out_size": cfg.augment.out_size,
                    "scales": list(cfg.augment.scales), "flip_prob": cfg.augment.flip_prob},
        "model": {"stages": [[s.channels, list(s.kernel), list(s.stride)]
                             for s in cfg.model.stages],
                  "num_classes": cfg.model.num_classes,
                  "attention_hidden": cfg.model.attention_hidden,
                  "dropout": cfg.model.dropout},
        "attention": cfg.attention,
        "loss": vars(cfg.loss),
        "training": {"epochs": cfg.training.epochs,
                     "learning_rate": cfg.training.learning_rate,
                     "batch_size": cfg.training.batch_size,
                     "val_every": cfg.training.val_every},
        "folds": cfg.folds,
        "target_resolution": cfg.dataset.target_resolution,
    }
