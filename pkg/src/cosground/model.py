"""Learnable grounding core: affine text transform, cosine scoring,
softmax cross-entropy, analytic gradients, checkpoint serialization.

The model maps a sentence feature into image-feature space with a single
affine layer, scores each proposal feature by cosine similarity against the
transformed vector, and trains by cross-entropy over the per-proposal
softmax with the ground-truth proposal as the target class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

CHECKPOINT_MAGIC = b"CMSVGCK1"

# proposal-feature norms are clamped below at this value during scoring;
# the loader already rejects exactly-zero rows
NORM_FLOOR = 1e-12


class DegenerateModelError(ValueError):
    """The transformed text vector has zero norm: cosine scores undefined."""


class CheckpointError(Exception):
    """Malformed or incompatible checkpoint file."""


@dataclass
class TransformModel:
    """Affine map from text-embedding space to image-feature space."""

    weight: np.ndarray  # (d_img, d_txt)
    bias: np.ndarray    # (d_img,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ValueError(f"weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight rows {self.weight.shape[0]}"
            )
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("model parameters must be finite")

    @property
    def d_img(self) -> int:
        return self.weight.shape[0]

    @property
    def d_txt(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "TransformModel":
        return TransformModel(self.weight.copy(), self.bias.copy())


@dataclass
class GradientSet:
    d_weight: np.ndarray  # (d_img, d_txt)
    d_bias: np.ndarray    # (d_img,)


@dataclass
class ScoreVector:
    """Per-proposal cosine scores with their softmax distribution."""

    scores: np.ndarray  # (P,)
    probs: np.ndarray   # (P,)
    gt_index: Optional[int] = None

    @classmethod
    def from_scores(cls, scores, gt_index: Optional[int] = None) -> "ScoreVector":
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size == 0:
            raise ValueError(f"scores must be a non-empty 1-D vector, got shape {scores.shape}")
        if gt_index is not None and not (0 <= gt_index < scores.size):
            raise ValueError(f"gt_index {gt_index} out of range for {scores.size} scores")
        shifted = scores - scores.max()
        exp = np.exp(shifted)
        probs = exp / exp.sum()
        return cls(scores=scores, probs=probs, gt_index=gt_index)


def init_model(d_img: int, d_txt: int, seed: int) -> TransformModel:
    """Fan-in uniform init: weight ~ U(-1/sqrt(d_txt), +1/sqrt(d_txt)), bias 0."""
    rng = np.random.default_rng([seed, 0])
    bound = 1.0 / np.sqrt(d_txt)
    weight = rng.uniform(-bound, bound, size=(d_img, d_txt))
    return TransformModel(weight=weight, bias=np.zeros(d_img))


def transform(model: TransformModel, text_feat: np.ndarray) -> np.ndarray:
    """Apply the affine map: weight @ text_feat + bias."""
    text_feat = np.asarray(text_feat, dtype=np.float64)
    if text_feat.shape != (model.d_txt,):
        raise ValueError(
            f"text feature shape {text_feat.shape} does not match model d_txt={model.d_txt}"
        )
    return model.weight @ text_feat + model.bias


def cosine_scores(
    model: TransformModel,
    text_feat: np.ndarray,
    proposal_feats: np.ndarray,
    gt_index: Optional[int] = None,
) -> ScoreVector:
    """Cosine similarity of every proposal feature against the transformed text vector."""
    proposal_feats = np.asarray(proposal_feats, dtype=np.float64)
    if proposal_feats.ndim != 2 or proposal_feats.shape[0] == 0:
        raise ValueError(f"proposal_feats must be a non-empty P x d_img matrix, got {proposal_feats.shape}")
    if proposal_feats.shape[1] != model.d_img:
        raise ValueError(
            f"proposal feature dim {proposal_feats.shape[1]} does not match model d_img={model.d_img}"
        )
    t = transform(model, text_feat)
    t_norm = np.linalg.norm(t)
    if t_norm == 0.0:
        raise DegenerateModelError("transformed text vector has zero norm")
    prop_norms = np.maximum(np.linalg.norm(proposal_feats, axis=1), NORM_FLOOR)
    raw = (proposal_feats @ t) / (prop_norms * t_norm)
    scores = np.clip(raw, -1.0, 1.0)
    return ScoreVector.from_scores(scores, gt_index=gt_index)


def loss(score_vec: ScoreVector) -> float:
    """Cross-entropy loss -log softmax(scores)[gt], computed in log space."""
    if score_vec.gt_index is None:
        raise ValueError("loss requires a ScoreVector with gt_index set")
    shifted = score_vec.scores - score_vec.scores.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[score_vec.gt_index])


def backward(
    model: TransformModel,
    text_feat: np.ndarray,
    proposal_feats: np.ndarray,
    gt_index: int,
) -> tuple[float, GradientSet]:
    """Loss and its analytic gradients with respect to weight and bias.

    With t the transformed vector, a_i the i-th proposal feature and
    s_i = cos(a_i, t): dL/ds_i = softmax(s)_i - [i == gt];
    ds_i/dt = a_i/(|a_i||t|) - s_i t/|t|^2; the chain rule gives dL/dt, and
    d_weight = outer(dL/dt, text_feat), d_bias = dL/dt. The returned loss is
    bit-identical to loss(cosine_scores(...)) on the same inputs.
    """
    text_feat = np.asarray(text_feat, dtype=np.float64)
    proposal_feats = np.asarray(proposal_feats, dtype=np.float64)
    sv = cosine_scores(model, text_feat, proposal_feats, gt_index=gt_index)
    loss_value = loss(sv)

    t = transform(model, text_feat)
    t_norm = np.linalg.norm(t)
    prop_norms = np.maximum(np.linalg.norm(proposal_feats, axis=1), NORM_FLOOR)

    dl_dscores = sv.probs.copy()
    dl_dscores[gt_index] -= 1.0
    unit_props = proposal_feats / prop_norms[:, None]
    # dL/dt = sum_i dl_dscores[i] * (unit_props[i]/|t| - scores[i] * t/|t|^2)
    dl_dt = (dl_dscores @ unit_props) / t_norm - (dl_dscores @ sv.scores) * t / (t_norm * t_norm)
    grads = GradientSet(d_weight=np.outer(dl_dt, text_feat), d_bias=dl_dt)
    return loss_value, grads


def save_checkpoint(model: TransformModel, path) -> None:
    """Write magic, u32 LE dims, then weight and bias as float64 LE."""
    path = Path(path)
    payload = (
        CHECKPOINT_MAGIC
        + struct.pack("<II", model.d_img, model.d_txt)
        + np.ascontiguousarray(model.weight, dtype="<f8").tobytes()
        + np.ascontiguousarray(model.bias, dtype="<f8").tobytes()
    )
    path.write_bytes(payload)


def load_checkpoint(path, expected_dims: Optional[tuple[int, int]] = None) -> TransformModel:
    """Read a checkpoint; optionally enforce (d_img, d_txt) of the target dataset."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    header = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < header:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(blob)} bytes)")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a checkpoint file")
    d_img, d_txt = struct.unpack("<II", blob[len(CHECKPOINT_MAGIC): header])
    if d_img < 1 or d_txt < 1:
        raise CheckpointError(f"{path}: invalid dims d_img={d_img}, d_txt={d_txt}")
    expected_len = header + 8 * (d_img * d_txt + d_img)
    if len(blob) != expected_len:
        raise CheckpointError(
            f"{path}: size mismatch: {len(blob)} bytes, dims imply {expected_len}"
        )
    if expected_dims is not None and (d_img, d_txt) != tuple(expected_dims):
        raise CheckpointError(
            f"{path}: checkpoint dims ({d_img}, {d_txt}) do not match expected {tuple(expected_dims)}"
        )
    flat = np.frombuffer(blob, dtype="<f8", offset=header)
    weight = flat[: d_img * d_txt].reshape(d_img, d_txt).astype(np.float64)
    bias = flat[d_img * d_txt:].astype(np.float64)
    return TransformModel(weight=weight, bias=bias)
