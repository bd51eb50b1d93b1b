"""Turn images + commands + proposal boxes into an embedding dataset directory.

The output is the four-file directory format the grounding trainer loads:
meta.json, manifest.jsonl, image_feats.bin, text_feats.bin. One image-feature
row per proposal (encoded from the tight resized crop), one text row per
command, all float32 little-endian.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .encoders import resolve_image_encoder, resolve_text_encoder, resize_crop

CROP_POLICY = "tight-box-resize"


class ExtractionError(Exception):
    """Unusable annotations or images; nothing is written."""


class ClippedBoxWarning(UserWarning):
    """A proposal box reached outside the image and was clipped to its bounds."""


@dataclass(frozen=True)
class ExtractionConfig:
    image_encoder_name: str
    sentence_encoder_name: str
    input_annotations: Path
    image_root: Path
    output_dir: Path
    crop_policy: str = CROP_POLICY

    def __post_init__(self):
        if self.crop_policy != CROP_POLICY:
            raise ValueError(f"crop_policy must be {CROP_POLICY!r}, got {self.crop_policy!r}")
        for name in ("input_annotations", "image_root", "output_dir"):
            value = getattr(self, name)
            if not isinstance(value, Path):
                object.__setattr__(self, name, Path(value))


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ExtractionError(msg)


def _parse_box(raw, where: str) -> tuple[float, float, float, float]:
    _require(isinstance(raw, list) and len(raw) == 4
             and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw),
             f"{where}: box must be a 4-element number array, got {raw!r}")
    x1, y1, x2, y2 = (float(v) for v in raw)
    _require(x1 < x2 and y1 < y2, f"{where}: box {raw!r} has no area")
    return x1, y1, x2, y2


def _read_annotations(path: Path) -> list[dict]:
    if not path.is_file():
        raise ExtractionError(f"annotations file not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        where = f"{path.name} line {lineno}"
        _require(line.strip() != "", f"{where}: blank line")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExtractionError(f"{where}: invalid JSON: {exc}") from exc
        for key in ("image", "command", "gt_box", "proposals"):
            _require(key in obj, f"{where}: missing field {key!r}")
        _require(isinstance(obj["image"], str) and obj["image"],
                 f"{where}: image must be a non-empty path string")
        _require(isinstance(obj["command"], str), f"{where}: command must be a string")
        _parse_box(obj["gt_box"], where)
        _require(isinstance(obj["proposals"], list) and obj["proposals"],
                 f"{where}: proposals must be a non-empty array")
        for j, prop in enumerate(obj["proposals"]):
            pwhere = f"{where} proposal {j}"
            _require(isinstance(prop, dict) and {"box", "score"} <= set(prop),
                     f"{pwhere}: expected an object with box and score")
            _parse_box(prop["box"], pwhere)
            score = prop["score"]
            _require(isinstance(score, (int, float)) and not isinstance(score, bool)
                     and 0.0 <= float(score) <= 1.0,
                     f"{pwhere}: score must be a number in [0, 1], got {score!r}")
        records.append(obj)
    _require(bool(records), f"{path.name}: no annotation records")
    return records


def _clip_box(box: tuple[float, float, float, float], width: int, height: int,
              where: str) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = box
    cx1, cy1 = max(x1, 0.0), max(y1, 0.0)
    cx2, cy2 = min(x2, float(width)), min(y2, float(height))
    _require(cx1 < cx2 and cy1 < cy2,
             f"{where}: proposal box {list(box)} lies entirely outside the "
             f"{width}x{height} image")
    if (cx1, cy1, cx2, cy2) != box:
        warnings.warn(f"{where}: proposal box {list(box)} clipped to image bounds "
                      f"[{cx1}, {cy1}, {cx2}, {cy2}]", ClippedBoxWarning, stacklevel=3)
    return cx1, cy1, cx2, cy2


def extract(cfg: ExtractionConfig) -> Path:
    """Encode every proposal crop and command, then write the dataset directory."""
    image_encoder = resolve_image_encoder(cfg.image_encoder_name)
    text_encoder = resolve_text_encoder(cfg.sentence_encoder_name)
    records = _read_annotations(cfg.input_annotations)

    crops: list[np.ndarray] = []
    manifest_lines: list[str] = []
    feat_row = 0
    for i, rec in enumerate(records):
        image_path = cfg.image_root / rec["image"]
        try:
            with Image.open(image_path) as img:
                img.load()
                image = img.convert("RGB")
        except OSError as exc:
            raise ExtractionError(f"unreadable image {image_path}: {exc}") from exc
        width, height = image.size

        proposals = []
        for j, prop in enumerate(rec["proposals"]):
            where = f"sample {i} ({rec['image']}) proposal {j}"
            box = _clip_box(_parse_box(prop["box"], where), width, height, where)
            crops.append(resize_crop(image, box, image_encoder.input_size))
            proposals.append({"box": list(box), "rpn_score": float(prop["score"]),
                              "feat_row": feat_row})
            feat_row += 1
        manifest_lines.append(json.dumps({
            "sample_id": f"sample-{i:06d}",
            "command": rec["command"],
            "text_row": i,
            "gt_box": [float(v) for v in rec["gt_box"]],
            "proposals": proposals,
        }, separators=(",", ":")))

    image_feats = image_encoder.encode(crops)
    text_feats = text_encoder.encode([rec["command"] for rec in records])
    for label, feats in (("image", image_feats), ("text", text_feats)):
        _require(bool(np.isfinite(feats).all()), f"{label} encoder produced non-finite values")
        norms = np.linalg.norm(feats.astype(np.float64), axis=1)
        _require(bool((norms > 0.0).all()),
                 f"{label} encoder produced a zero-norm feature row "
                 f"(row {int(np.argmin(norms))})")

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": 1,
        "d_img": int(image_feats.shape[1]),
        "d_txt": int(text_feats.shape[1]),
        "num_samples": len(records),
        "num_proposal_rows": int(image_feats.shape[0]),
        "dtype": "f32",
        "endianness": "little",
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (out / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    (out / "image_feats.bin").write_bytes(image_feats.astype("<f4").tobytes())
    (out / "text_feats.bin").write_bytes(text_feats.astype("<f4").tobytes())
    return out
