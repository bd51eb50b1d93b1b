"""Mini-batch training loop, AP50 evaluation, prediction dump, ablation drivers."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .boxes import BoundingBox, assign_gt_proposal, hit_at_50
from .data import DatasetError, FeatureStore, GroundingSample, load_dataset
from .model import (
    GradientSet,
    TransformModel,
    backward,
    cosine_scores,
    init_model,
    save_checkpoint,
)
from .optim import OptimizerConfig, OptimizerState, learning_rate, step

EPOCH_LOG_HEADER = "epoch,lr,mean_train_loss,val_ap50,skipped_samples"


class NoTrainableSamplesError(DatasetError):
    """Every training sample lacks a GT-assignable proposal."""


@dataclass(frozen=True)
class RunConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    top_k: int = 32
    min_gt_iou: float = 0.5
    strict_ap50: bool = True
    train_dir: Optional[Path] = None
    val_dir: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    threads: Optional[int] = None  # worker cap for evaluation/prediction; None = serial

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        for name in ("train_dir", "val_dir", "checkpoint_path"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, name, Path(value))


@dataclass(frozen=True)
class PerSampleResult:
    sample_id: str
    predicted_box: BoundingBox
    predicted_index: int  # index into the sample's original proposal list
    max_score: float
    hit: bool


@dataclass(frozen=True)
class EvalReport:
    ap50: float
    oracle_recall: float
    n_samples: int
    per_sample: tuple[PerSampleResult, ...]


@dataclass(frozen=True)
class EpochLogRow:
    epoch: int
    lr: float
    mean_train_loss: float
    val_ap50: float
    skipped_samples: int


@dataclass(frozen=True)
class TrainResult:
    model: TransformModel
    log: tuple[EpochLogRow, ...]


@dataclass(frozen=True)
class AblationResult:
    rows: tuple[tuple[str, float], ...]

    def to_csv(self) -> str:
        lines = ["label,ap50"]
        lines += [f"{label},{float(ap50)!r}" for label, ap50 in self.rows]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(5, *(len(label) for label, _ in self.rows)) if self.rows else 5
        lines = [f"{'label':<{width}}  ap50", f"{'-' * width}  ------"]
        lines += [f"{label:<{width}}  {float(ap50):.4f}" for label, ap50 in self.rows]
        return "\n".join(lines) + "\n"


def top_k_indices(sample: GroundingSample, k: int) -> list[int]:
    """Original-list indices of the k highest-rpn_score proposals, in original order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(sample.proposals)
    if n <= k:
        return list(range(n))
    by_score = sorted(range(n), key=lambda i: -sample.proposals[i].rpn_score)  # stable
    return sorted(by_score[:k])


def select_top_k(sample: GroundingSample, k: int) -> GroundingSample:
    """Keep the k highest-confidence proposals (stable ties); no-op when the sample has <= k."""
    if len(sample.proposals) <= k:
        return sample
    kept = top_k_indices(sample, k)
    return replace(sample, proposals=tuple(sample.proposals[i] for i in kept))


def _map_ordered(fn: Callable, items: Sequence, threads: Optional[int]) -> list:
    workers = threads or 1
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_model_dims(model: TransformModel, store: FeatureStore) -> None:
    d_img = store.image_feats.shape[1]
    d_txt = store.text_feats.shape[1]
    if (model.d_img, model.d_txt) != (d_img, d_txt):
        raise ValueError(
            f"model dims ({model.d_img}, {model.d_txt}) do not match "
            f"dataset dims ({d_img}, {d_txt})"
        )


def _evaluate_samples(
    model: TransformModel,
    samples: Sequence[GroundingSample],
    store: FeatureStore,
    cfg: RunConfig,
) -> EvalReport:
    if not samples:
        raise DatasetError("empty dataset: nothing to evaluate")
    _check_model_dims(model, store)

    def one(sample: GroundingSample) -> tuple[PerSampleResult, bool]:
        kept = top_k_indices(sample, cfg.top_k)
        rows = [sample.proposals[i].feat_row for i in kept]
        sv = cosine_scores(model, store.text_feats[sample.text_row], store.image_feats[rows])
        local = int(np.argmax(sv.scores))  # first maximum: lowest-index tie-break
        orig = kept[local]
        box = sample.proposals[orig].box
        hit = hit_at_50(box, sample.gt_box, strict=cfg.strict_ap50)
        oracle = any(
            hit_at_50(sample.proposals[i].box, sample.gt_box, strict=cfg.strict_ap50)
            for i in kept
        )
        result = PerSampleResult(
            sample_id=sample.sample_id,
            predicted_box=box,
            predicted_index=orig,
            max_score=float(sv.scores[local]),
            hit=hit,
        )
        return result, oracle

    outcomes = _map_ordered(one, samples, cfg.threads)
    per_sample = tuple(r for r, _ in outcomes)
    n = len(per_sample)
    ap50 = sum(1 for r in per_sample if r.hit) / n
    oracle_recall = sum(1 for _, o in outcomes if o) / n
    return EvalReport(ap50=ap50, oracle_recall=oracle_recall, n_samples=n, per_sample=per_sample)


def evaluate(model: TransformModel, dataset_dir, cfg: RunConfig) -> EvalReport:
    """Score a dataset: per-sample argmax prediction, AP50 and oracle recall."""
    _, samples, store = load_dataset(dataset_dir)
    return _evaluate_samples(model, samples, store, cfg)


def train(cfg: RunConfig) -> TrainResult:
    """Train on cfg.train_dir, logging per-epoch mean loss and cfg.val_dir AP50.

    Per epoch the training samples are reshuffled by a dedicated seeded
    generator, grouped into batches, and each batch applies one optimizer
    step with the gradient averaged over its GT-assignable samples; samples
    with no assignable proposal are skipped and counted. The final model is
    checkpointed to cfg.checkpoint_path when set.
    """
    if cfg.train_dir is None or cfg.val_dir is None:
        raise ValueError("train requires both train_dir and val_dir")
    meta_tr, samples_tr, store_tr = load_dataset(cfg.train_dir)
    _, samples_va, store_va = load_dataset(cfg.val_dir)
    if (store_tr.text_feats.shape[1] != store_va.text_feats.shape[1]
            or store_tr.image_feats.shape[1] != store_va.image_feats.shape[1]):
        raise DatasetError(
            f"train dims ({meta_tr.d_img}, {meta_tr.d_txt}) do not match validation dims "
            f"({store_va.image_feats.shape[1]}, {store_va.text_feats.shape[1]})"
        )

    # per-sample training views: (text feature, kept proposal features, gt index)
    prepared = []
    for sample in samples_tr:
        kept = select_top_k(sample, cfg.top_k)
        gt_local = assign_gt_proposal(kept, cfg.min_gt_iou)
        if gt_local is None:
            prepared.append(None)
            continue
        rows = [p.feat_row for p in kept.proposals]
        prepared.append((store_tr.text_feats[sample.text_row], store_tr.image_feats[rows], gt_local))
    if not any(item is not None for item in prepared):
        raise NoTrainableSamplesError(
            f"no trainable samples: no proposal reaches IoU {cfg.min_gt_iou} "
            f"with its gt_box in {cfg.train_dir}"
        )

    opt = cfg.optimizer
    model = init_model(meta_tr.d_img, meta_tr.d_txt, opt.seed)
    state = OptimizerState.zeros(model)
    shuffle_rng = np.random.default_rng([opt.seed, 1])
    n = len(samples_tr)
    log: list[EpochLogRow] = []
    for epoch in range(opt.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        valid_total = 0
        skipped = 0
        for start in range(0, n, opt.batch_size):
            grad_w = np.zeros_like(model.weight)
            grad_b = np.zeros_like(model.bias)
            n_valid = 0
            for idx in order[start:start + opt.batch_size]:
                item = prepared[idx]
                if item is None:
                    skipped += 1
                    continue
                text_feat, prop_feats, gt_local = item
                sample_loss, grads = backward(model, text_feat, prop_feats, gt_local)
                grad_w += grads.d_weight
                grad_b += grads.d_bias
                loss_sum += sample_loss
                n_valid += 1
            if n_valid:
                batch_grads = GradientSet(d_weight=grad_w / n_valid, d_bias=grad_b / n_valid)
                model, state = step(model, state, batch_grads, opt, epoch)
                valid_total += n_valid
        val_report = _evaluate_samples(model, samples_va, store_va, cfg)
        log.append(EpochLogRow(
            epoch=epoch,
            lr=learning_rate(opt, epoch),
            mean_train_loss=loss_sum / valid_total,
            val_ap50=val_report.ap50,
            skipped_samples=skipped,
        ))
    if cfg.checkpoint_path is not None:
        save_checkpoint(model, cfg.checkpoint_path)
    return TrainResult(model=model, log=tuple(log))


def write_epoch_log(log: Sequence[EpochLogRow], path) -> Path:
    """Write the epoch log as CSV; identical runs produce identical bytes."""
    path = Path(path)
    lines = [EPOCH_LOG_HEADER]
    for row in log:
        lines.append(
            f"{row.epoch},{float(row.lr)!r},{float(row.mean_train_loss)!r},"
            f"{float(row.val_ap50)!r},{row.skipped_samples}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def predict(model: TransformModel, dataset_dir, cfg: RunConfig, out_path) -> Path:
    """Write one JSON line per sample: {sample_id, box, score}, in manifest order."""
    report = evaluate(model, dataset_dir, cfg)
    out_path = Path(out_path)
    lines = []
    for row in report.per_sample:
        lines.append(json.dumps(
            {"sample_id": row.sample_id, "box": row.predicted_box.as_list(), "score": row.max_score},
            separators=(",", ":"),
        ))
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def ablate_top_k(cfg: RunConfig, ks: Sequence[int]) -> AblationResult:
    """Train and evaluate once per proposal budget k, same seed throughout."""
    if not ks:
        raise ValueError("ks must be non-empty")
    rows = []
    for k in ks:
        run_cfg = replace(cfg, top_k=int(k), checkpoint_path=None)
        result = train(run_cfg)
        report = evaluate(result.model, run_cfg.val_dir, run_cfg)
        rows.append((str(int(k)), report.ap50))
    return AblationResult(rows=tuple(rows))


def ablate_encoders(dataset_dirs: Sequence[tuple[str, Path]], cfg: RunConfig) -> AblationResult:
    """Train and evaluate once per labeled dataset root (each holding train/ and test/)."""
    if not dataset_dirs:
        raise ValueError("dataset_dirs must be non-empty")
    rows = []
    for label, root in dataset_dirs:
        root = Path(root)
        train_dir = root / "train"
        test_dir = root / "test"
        if not train_dir.is_dir() or not test_dir.is_dir():
            raise DatasetError(
                f"{label}: expected train/ and test/ dataset directories under {root}"
            )
        run_cfg = replace(cfg, train_dir=train_dir, val_dir=test_dir, checkpoint_path=None)
        result = train(run_cfg)
        report = evaluate(result.model, test_dir, run_cfg)
        rows.append((label, report.ap50))
    return AblationResult(rows=tuple(rows))
