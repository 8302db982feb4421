"""End-to-end pipeline: dataset -> optical flow -> motion boundaries ->
per-modality per-fold training -> fused evaluation report.

Every stage is content-addressed: its cache key hashes the exact input files
it consumes plus the configuration slice that affects it, so re-runs with
unchanged inputs are pure cache hits and any upstream change invalidates
exactly its downstream consumers. The final report is deterministic: same
config and seed give byte-identical bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .autodiff import ParamSet, Tensor
from .boundaries import motion_boundary
from .cache import StageCache, hash_files, hash_params, resolve_cache_root, stage_key
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig, config_fingerprint
from .datasets import (DatasetManifest, ManifestEntry, ingest, list_frames,
                       load_gray_frames, load_rgb_frames)
from .errors import ConfigError, InputError, PipelineError
from .flo_io import FLOW_MAGIC, MB_MAGIC, read_flo, write_flo
from .flow import FlowField, TvL1Params, estimate_flow, stack_two_channel
from .model import EncoderConfig
from .sampling import AugmentConfig, choose_transform, dense_starts, segment_sample
from .synthetic import generate_synthetic
from .training import (EvalReport, FoldPlan, LabeledClip, LoadedClip, evaluate,
                       subject_folds, train)

log = logging.getLogger("motionscore.pipeline")


def extract_flow_dir(frame_dir, out_dir, params: TvL1Params,
                     target: Optional[Tuple[int, int]] = None) -> List[Path]:
    """Estimate flow for each consecutive frame pair; writes f%06d.flo files."""
    frames = load_gray_frames(frame_dir, target)
    if frames.shape[0] < 2:
        raise InputError(f"{frame_dir} holds {frames.shape[0]} frame(s); "
                         "flow needs at least two")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(frames.shape[0] - 1):
        field = estimate_flow(frames[i], frames[i + 1], params)
        path = out / f"f{i:06d}.flo"
        write_flo(path, field.u, field.v, magic=FLOW_MAGIC)
        written.append(path)
    return written


def extract_mb_dir(flo_dir, out_dir) -> List[Path]:
    """Convert each flow file into a motion-boundary file (same container,
    distinct magic)."""
    flo_files = sorted(Path(flo_dir).glob("*.flo"))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, path in enumerate(flo_files):
        u, v, _ = read_flo(path, expect_magic=FLOW_MAGIC)
        field = motion_boundary(FlowField(u.shape[1], u.shape[0], u, v))
        dst = out / f"m{i:06d}.flo"
        write_flo(dst, field.b_u, field.b_v, magic=MB_MAGIC)
        written.append(dst)
    return written


def render_report(cfg: PipelineConfig, plan: FoldPlan, report: EvalReport) -> str:
    """Stable plain-text report; all floats at fixed precision, no paths or
    timestamps, so identical runs produce identical bytes."""
    lines = ["motionscore-report/1"]
    lines.append(f"task={cfg.task}")
    lines.append(f"seed={cfg.seed}")
    lines.append(f"folds={plan.k}")
    lines.append("modalities=" + ",".join(report.modalities))
    for r in report.per_fold:
        lines.append(f"[fold {r.fold}]")
        lines.append(f"subjects=" + ",".join(plan.subjects_in(r.fold)))
        lines.append(f"clips={r.n_clips}")
        rows = " | ".join(" ".join(str(x) for x in row) for row in r.confusion)
        lines.append(f"confusion={rows}")
        lines.append(f"accuracy={r.accuracy:.6f}")
        lines.append(f"macro_f1={r.macro_f1:.6f}")
    lines.append("[summary]")
    lines.append(f"mean_accuracy={report.mean_accuracy:.6f}")
    lines.append(f"std_accuracy={report.std_accuracy:.6f}")
    lines.append(f"mean_macro_f1={report.mean_f1:.6f}")
    lines.append(f"std_macro_f1={report.std_f1:.6f}")
    rows = " | ".join(" ".join(str(x) for x in row) for row in report.pooled_confusion)
    lines.append(f"pooled_confusion={rows}")
    lines.append(f"pooled_accuracy={report.pooled_accuracy:.6f}")
    lines.append(f"pooled_macro_f1={report.pooled_f1:.6f}")
    return "\n".join(lines) + "\n"


@dataclass
class PipelineResult:
    report_path: Path
    report_text: str
    dataset: DatasetManifest
    plan: FoldPlan
    eval_report: EvalReport
    model_paths: Dict[Tuple[str, int], Path]
    cache_hits: int
    cache_misses: int


class Pipeline:
    def __init__(self, cfg: PipelineConfig, workdir: Optional[Path] = None,
                 cache_root: Optional[Path] = None):
        self.cfg = cfg
        self.workdir = Path(workdir or cfg.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.cache = StageCache(cache_root or resolve_cache_root(None, self.workdir))
        self.fingerprint = config_fingerprint(cfg)
        self.hits = 0
        self.misses = 0
        self._flow_dirs: Dict[str, Path] = {}
        self._mb_dirs: Dict[str, Path] = {}
        self._array_memo: Dict[Tuple[str, str], np.ndarray] = {}

    def _build(self, stage: str, key: str, build_fn, label: str = "") -> Path:
        path, hit = self.cache.build(stage, key, build_fn, label)
        self.hits += hit
        self.misses += not hit
        return path

    # -- dataset ---------------------------------------------------------

    def ensure_dataset(self) -> DatasetManifest:
        ds = self.cfg.dataset
        if ds.synth is not None:
            key = stage_key("synth", hash_params(vars(ds.synth) | {
                "class_specs": [vars(c) for c in ds.synth.class_specs]}))

            def build(out: Path):
                generate_synthetic(ds.synth, out)

            root = self._build("dataset", key, build, label="synthetic")
            return DatasetManifest.load(root, root / "manifest.json")
        root = Path(ds.root or Path(ds.manifest).parent)
        return ingest(root, ds.manifest)

    # -- flow / boundaries -------------------------------------------------

    def _clip_frames_hash(self, manifest: DatasetManifest, entry: ManifestEntry) -> str:
        frame_dir = manifest.frame_path(entry)
        return hash_files(list_frames(frame_dir), frame_dir)

    def ensure_flow(self, manifest: DatasetManifest, entry: ManifestEntry) -> Path:
        if entry.clip_id in self._flow_dirs:
            return self._flow_dirs[entry.clip_id]
        params = self.fingerprint["flow"]
        key = stage_key("flow", self._clip_frames_hash(manifest, entry),
                        hash_params(params | {"target": self.cfg.dataset.target_resolution}))

        def build(out: Path):
            try:
                extract_flow_dir(manifest.frame_path(entry), out, self.cfg.flow,
                                 self.cfg.dataset.target_resolution)
            except Exception as e:
                raise PipelineError("extract-flow", entry.clip_id, e) from e

        path = self._build("flow", key, build, label=entry.clip_id)
        self._flow_dirs[entry.clip_id] = path
        return path

    def ensure_mb(self, manifest: DatasetManifest, entry: ManifestEntry) -> Path:
        if entry.clip_id in self._mb_dirs:
            return self._mb_dirs[entry.clip_id]
        flo_dir = self.ensure_flow(manifest, entry)
        key = stage_key("mb", hash_files(sorted(flo_dir.glob("*.flo")), flo_dir))

        def build(out: Path):
            try:
                extract_mb_dir(flo_dir, out)
            except Exception as e:
                raise PipelineError("extract-mb", entry.clip_id, e) from e

        path = self._build("mb", key, build, label=entry.clip_id)
        self._mb_dirs[entry.clip_id] = path
        return path

    # -- per-clip network inputs -------------------------------------------

    def clip_array(self, manifest: DatasetManifest, entry: ManifestEntry,
                   modality: str) -> np.ndarray:
        memo_key = (entry.clip_id, modality)
        if memo_key in self._array_memo:
            return self._array_memo[memo_key]
        target = self.cfg.dataset.target_resolution
        if modality == "rgb":
            arr = load_rgb_frames(manifest.frame_path(entry), target)
        elif modality == "flow":
            flo_dir = self.ensure_flow(manifest, entry)
            pairs = [read_flo(p, expect_magic=FLOW_MAGIC)[:2]
                     for p in sorted(flo_dir.glob("*.flo"))]
            arr = stack_two_channel(pairs, self.cfg.flow_input_bound).data
        elif modality == "mb":
            mb_dir = self.ensure_mb(manifest, entry)
            pairs = [read_flo(p, expect_magic=MB_MAGIC)[:2]
                     for p in sorted(mb_dir.glob("*.flo"))]
            arr = stack_two_channel(pairs, self.cfg.mb_input_bound).data
        else:
            raise ConfigError(f"unknown modality {modality!r}")
        self._array_memo[memo_key] = arr
        return arr

    def _modality_input_hash(self, manifest: DatasetManifest, entry: ManifestEntry,
                             modality: str) -> str:
        if modality == "rgb":
            return self._clip_frames_hash(manifest, entry)
        if modality == "flow":
            d = self.ensure_flow(manifest, entry)
        else:
            d = self.ensure_mb(manifest, entry)
        return hash_files(sorted(d.glob("*.flo")), d)

    # -- folds and training ---------------------------------------------------

    def fold_plan(self, manifest: DatasetManifest) -> FoldPlan:
        task_clips = manifest.for_task(self.cfg.task)
        subjects = sorted({e.subject_id for e in task_clips})
        rng = np.random.default_rng(np.random.SeedSequence((self.cfg.seed, 23)))
        plan = subject_folds(subjects, self.cfg.folds, rng)
        plan.save(self.workdir / "folds.json")
        return plan

    def _labeled(self, entry: ManifestEntry) -> LabeledClip:
        return LabeledClip(clip_id=entry.clip_id, subject_id=entry.subject_id,
                           task=entry.task, updrs_raw=entry.updrs_raw)

    def ensure_model(self, manifest: DatasetManifest, plan: FoldPlan,
                     modality: str, fold: int) -> Path:
        task_clips = sorted(manifest.for_task(self.cfg.task), key=lambda e: e.clip_id)
        val_subjects = set(plan.subjects_in(fold))
        train_entries = [e for e in task_clips if e.subject_id not in val_subjects]
        input_hash = hash_params([
            (e.clip_id, self._modality_input_hash(manifest, e, modality))
            for e in train_entries])
        key = stage_key("train", modality, str(fold), input_hash,
                        hash_params(self.fingerprint))

        def build(out: Path):
            try:
                clips = [LoadedClip(meta=self._labeled(e),
                                    data=self.clip_array(manifest, e, modality))
                         for e in train_entries]
                params, logs = train(clips, modality, self.cfg.model, self.cfg.sampler,
                                     self.cfg.augment, self.cfg.hyper())
                save_checkpoint(out / "model.ckpt", params,
                                meta={"modality": modality, "fold": str(fold)})
                with open(out / "train_log.txt", "w") as f:
                    for entry in logs:
                        f.write(f"epoch={entry.epoch} loss={entry.mean_loss:.6f} "
                                f"train_f1={entry.train_f1:.6f} "
                                f"train_acc={entry.train_accuracy:.6f}" +
                                (f" val_f1={entry.val_f1:.6f}" if entry.val_f1 is not None else "")
                                + "\n")
            except PipelineError:
                raise
            except Exception as e:
                raise PipelineError("train", f"{modality}/fold{fold}", e) from e

        path = self._build("train", key, build, label=f"{modality} fold{fold}")
        return path / "model.ckpt"

    def load_model(self, ckpt_path: Path) -> Tuple[ParamSet, EncoderConfig]:
        arrays, meta = load_checkpoint(ckpt_path)
        params = ParamSet()
        for name, arr in arrays.items():
            params.add(name, Tensor(arr, check=False))
        return params, self.cfg.model

    # -- evaluation --------------------------------------------------------

    def evaluate_models(self, manifest: DatasetManifest, plan: FoldPlan,
                        model_paths: Dict[Tuple[str, int], Path]) -> EvalReport:
        task_clips = sorted(manifest.for_task(self.cfg.task), key=lambda e: e.clip_id)
        clips = [self._labeled(e) for e in task_clips]
        by_id = {e.clip_id: e for e in task_clips}
        models_per_fold = {
            fold: {m: self.load_model(model_paths[(m, fold)]) for m in self.cfg.modalities}
            for fold in range(plan.k)}

        def arrays(clip: LabeledClip, modality: str) -> np.ndarray:
            return self.clip_array(manifest, by_id[clip.clip_id], modality)

        try:
            return evaluate(plan, models_per_fold, clips, arrays, self.cfg.modalities,
                            self.cfg.sampler, self.cfg.augment,
                            num_classes=self.cfg.model.num_classes)
        except PipelineError:
            raise
        except Exception as e:
            raise PipelineError("evaluate", "", e) from e

    # -- the whole thing ------------------------------------------------------

    def run(self) -> PipelineResult:
        manifest = self.ensure_dataset()
        task_clips = manifest.for_task(self.cfg.task)
        if not task_clips:
            raise PipelineError("dataset", "", ConfigError(
                f"no clips for task {self.cfg.task!r}"))
        plan = self.fold_plan(manifest)
        needs_flow = "flow" in self.cfg.modalities or "mb" in self.cfg.modalities
        if needs_flow:
            for entry in sorted(task_clips, key=lambda e: e.clip_id):
                self.ensure_flow(manifest, entry)
        if "mb" in self.cfg.modalities:
            for entry in sorted(task_clips, key=lambda e: e.clip_id):
                self.ensure_mb(manifest, entry)
        model_paths: Dict[Tuple[str, int], Path] = {}
        for modality in self.cfg.modalities:
            for fold in range(plan.k):
                model_paths[(modality, fold)] = self.ensure_model(
                    manifest, plan, modality, fold)
        report = self.evaluate_models(manifest, plan, model_paths)
        text = render_report(self.cfg, plan, report)
        report_path = self.workdir / "report.txt"
        report_path.write_text(text)
        log.info("report written to %s (cache: %d hits, %d misses)",
                 report_path, self.hits, self.misses)
        return PipelineResult(report_path=report_path, report_text=text,
                              dataset=manifest, plan=plan, eval_report=report,
                              model_paths=model_paths, cache_hits=self.hits,
                              cache_misses=self.misses)


def pipeline_run(cfg: PipelineConfig, workdir: Optional[Path] = None,
                 cache_root: Optional[Path] = None) -> PipelineResult:
    return Pipeline(cfg, workdir=workdir, cache_root=cache_root).run()


# -- snippet manifest (debugging aid for the sample verb) ----------------------


def sample_manifest(cfg: PipelineConfig, manifest: DatasetManifest, mode: str,
                    modality: str) -> List[str]:
    """One line per snippet: clip_id, modality, start, length, transform.
    Training mode reproduces the epoch-0 draws of a full-dataset training
    pass (fold-filtered runs see a subset with the same per-clip streams)."""
    lines = []
    task_clips = sorted(manifest.for_task(cfg.task), key=lambda e: e.clip_id)
    for idx, entry in enumerate(task_clips):
        if mode == "train":
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, idx)))
            n = entry.frame_count
            dummy = np.zeros((1, n, 1, 1), dtype=np.float32)
            snippets = segment_sample(dummy, cfg.sampler, rng, modality=modality,
                                      clip_id=entry.clip_id, subject_id=entry.subject_id)
            for s in snippets:
                spec = choose_transform(rng, cfg.augment) if cfg.augment.enabled else None
                desc = spec.descriptor() if spec else "none"
                lines.append(f"{entry.clip_id}\t{modality}\t{s.start}\t"
                             f"{cfg.sampler.train_len}\t{desc}")
        elif mode == "test":
            for start in dense_starts(entry.frame_count, cfg.sampler.test_snippets,
                                      cfg.sampler.test_len):
                lines.append(f"{entry.clip_id}\t{modality}\t{start}\t"
                             f"{cfg.sampler.test_len}\tcenter-crop")
        else:
            raise ConfigError(f"unknown sample mode {mode!r}")
    return lines
