"""Central finite-difference verification of the analytic backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NORM_FLOOR, TransformModel, backward, transform


@dataclass(frozen=True)
class GradCheckResult:
    trials: int
    coords_checked: int
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _losses_for_shifts(
    dots: np.ndarray,       # (P,) proposal_feats @ t
    col: np.ndarray,        # (P,) proposal feature column hit by the shifted coordinate
    prop_norms: np.ndarray, # (P,) clamped proposal norms
    t_sq: float,            # |t|^2
    t_i: float,             # coordinate of t being shifted
    shifts: np.ndarray,     # (M,) additive shifts applied to t_i
    gt_index: int,
) -> np.ndarray:
    """Loss at t + shift*e_i for every shift, via the same scoring pipeline.

    Shifting t's i-th coordinate by d changes the dot products by d*col and
    |t|^2 by 2*t_i*d + d^2; everything else is the unmodified forward math
    (norm clamp, [-1, 1] clip, log-space cross-entropy).
    """
    dots_shifted = dots[:, None] + col[:, None] * shifts[None, :]          # (P, M)
    t_norms = np.sqrt(t_sq + 2.0 * t_i * shifts + shifts * shifts)        # (M,)
    scores = np.clip(dots_shifted / (prop_norms[:, None] * t_norms[None, :]), -1.0, 1.0)
    shifted = scores - scores.max(axis=0, keepdims=True)
    return np.log(np.exp(shifted).sum(axis=0)) - shifted[gt_index, :]


def fd_gradients(
    model: TransformModel,
    text_feat: np.ndarray,
    proposal_feats: np.ndarray,
    gt_index: int,
    step: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the loss w.r.t. every weight and bias coordinate.

    Perturbing weight[i, j] by +-h shifts the transformed vector's i-th
    coordinate by +-h*text_feat[j] (and bias[i] by +-h shifts it by +-h), so
    each column of differences is evaluated in a vectorized pass per output
    coordinate instead of rebuilding the weight matrix 2*d_img*d_txt times.
    """
    text_feat = np.asarray(text_feat, dtype=np.float64)
    proposal_feats = np.asarray(proposal_feats, dtype=np.float64)
    t = transform(model, text_feat)
    t_sq = float(t @ t)
    dots = proposal_feats @ t
    prop_norms = np.maximum(np.linalg.norm(proposal_feats, axis=1), NORM_FLOOR)

    d_img, d_txt = model.weight.shape
    fd_weight = np.empty((d_img, d_txt))
    fd_bias = np.empty(d_img)
    weight_shifts = step * text_feat  # (d_txt,)
    for i in range(d_img):
        col = proposal_feats[:, i]
        loss_plus = _losses_for_shifts(dots, col, prop_norms, t_sq, t[i], weight_shifts, gt_index)
        loss_minus = _losses_for_shifts(dots, col, prop_norms, t_sq, t[i], -weight_shifts, gt_index)
        fd_weight[i, :] = (loss_plus - loss_minus) / (2.0 * step)
        bias_shift = np.array([step, -step])
        lb = _losses_for_shifts(dots, col, prop_norms, t_sq, t[i], bias_shift, gt_index)
        fd_bias[i] = (lb[0] - lb[1]) / (2.0 * step)
    return fd_weight, fd_bias


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-8) -> np.ndarray:
    """Per-coordinate relative error, zeroed where the absolute gap is under the floor."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff > abs_floor, diff / np.maximum(scale, abs_floor), 0.0)
    return rel


def run_gradcheck(
    trials: int = 100,
    seed: int = 7,
    proposals_range: tuple[int, int] = (2, 64),
    d_img_range: tuple[int, int] = (4, 128),
    d_txt_range: tuple[int, int] = (4, 128),
    step: float = 1e-6,
    tolerance: float = 1e-5,
    abs_floor: float = 1e-8,
) -> GradCheckResult:
    """Compare analytic gradients against central differences on random configurations."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    coords = 0
    for _ in range(trials):
        n_props = int(rng.integers(proposals_range[0], proposals_range[1] + 1))
        d_img = int(rng.integers(d_img_range[0], d_img_range[1] + 1))
        d_txt = int(rng.integers(d_txt_range[0], d_txt_range[1] + 1))
        model = TransformModel(
            weight=rng.standard_normal((d_img, d_txt)) / np.sqrt(d_txt),
            bias=rng.standard_normal(d_img) * 0.1,
        )
        text_feat = rng.standard_normal(d_txt)
        proposal_feats = rng.standard_normal((n_props, d_img))
        gt_index = int(rng.integers(n_props))

        _, grads = backward(model, text_feat, proposal_feats, gt_index)
        fd_weight, fd_bias = fd_gradients(model, text_feat, proposal_feats, gt_index, step=step)

        rel_w = relative_errors(grads.d_weight, fd_weight, abs_floor)
        rel_b = relative_errors(grads.d_bias, fd_bias, abs_floor)
        max_rel = max(max_rel, float(rel_w.max()), float(rel_b.max()))
        coords += rel_w.size + rel_b.size
    return GradCheckResult(
        trials=trials, coords_checked=coords, max_rel_err=max_rel, tolerance=tolerance
    )
