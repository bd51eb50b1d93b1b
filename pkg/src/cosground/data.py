"""On-disk dataset format: loading with validation, plus a synthetic generator.

A dataset directory holds exactly four files:

    meta.json        JSON object with the DatasetMeta fields
    manifest.jsonl   one JSON object per sample
    image_feats.bin  num_proposal_rows x d_img float32 little-endian, row-major
    text_feats.bin   num_samples x d_txt float32 little-endian, row-major
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .boxes import BoundingBox

META_FILE = "meta.json"
MANIFEST_FILE = "manifest.jsonl"
IMAGE_FEATS_FILE = "image_feats.bin"
TEXT_FEATS_FILE = "text_feats.bin"

_META_FIELDS = (
    "schema_version",
    "d_img",
    "d_txt",
    "num_samples",
    "num_proposal_rows",
    "dtype",
    "endianness",
)


class DatasetError(Exception):
    """Raised for any malformed or inconsistent dataset directory."""


@dataclass(frozen=True)
class DatasetMeta:
    schema_version: int
    d_img: int
    d_txt: int
    num_samples: int
    num_proposal_rows: int
    dtype: str = "f32"
    endianness: str = "little"


@dataclass(frozen=True)
class Proposal:
    box: BoundingBox
    rpn_score: float
    feat_row: int


@dataclass(frozen=True)
class GroundingSample:
    sample_id: str
    command: str
    text_row: int
    gt_box: BoundingBox
    proposals: tuple[Proposal, ...]


@dataclass(frozen=True)
class FeatureStore:
    """Memory-resident feature matrices, float64, immutable after load."""

    image_feats: np.ndarray  # (num_proposal_rows, d_img)
    text_feats: np.ndarray   # (num_samples, d_txt)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DatasetError(msg)


def _load_meta(dir_path: Path) -> DatasetMeta:
    path = dir_path / META_FILE
    if not path.is_file():
        raise DatasetError(f"{META_FILE}: missing file in {dir_path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DatasetError(f"{META_FILE}: not valid JSON: {exc}") from exc
    _require(isinstance(raw, dict), f"{META_FILE}: top-level value must be a JSON object")
    missing = [k for k in _META_FIELDS if k not in raw]
    extra = [k for k in raw if k not in _META_FIELDS]
    _require(not missing, f"{META_FILE}: missing fields {missing}")
    _require(not extra, f"{META_FILE}: unknown fields {extra}")
    for key in ("schema_version", "d_img", "d_txt", "num_samples", "num_proposal_rows"):
        _require(isinstance(raw[key], int) and not isinstance(raw[key], bool),
                 f"{META_FILE}: field {key!r} must be an integer")
    meta = DatasetMeta(**raw)
    _require(meta.schema_version == 1, f"{META_FILE}: unsupported schema_version {meta.schema_version}")
    _require(meta.d_img >= 1, f"{META_FILE}: d_img must be >= 1, got {meta.d_img}")
    _require(meta.d_txt >= 1, f"{META_FILE}: d_txt must be >= 1, got {meta.d_txt}")
    _require(meta.num_samples >= 0, f"{META_FILE}: num_samples must be >= 0")
    _require(meta.num_proposal_rows >= 0, f"{META_FILE}: num_proposal_rows must be >= 0")
    _require(meta.dtype == "f32", f"{META_FILE}: dtype must be \"f32\", got {meta.dtype!r}")
    _require(meta.endianness == "little", f"{META_FILE}: endianness must be \"little\", got {meta.endianness!r}")
    return meta


def _load_matrix(dir_path: Path, name: str, rows: int, cols: int) -> np.ndarray:
    path = dir_path / name
    if not path.is_file():
        raise DatasetError(f"{name}: missing file in {dir_path}")
    blob = path.read_bytes()
    expected = rows * cols * 4
    _require(
        len(blob) == expected,
        f"{name}: dimension mismatch: file holds {len(blob)} bytes, "
        f"meta.json implies {rows} x {cols} x 4 = {expected} bytes",
    )
    mat = np.frombuffer(blob, dtype="<f4").reshape(rows, cols).astype(np.float64)
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(~(norms > 0.0))  # catches zeros and NaNs
    if bad.size:
        raise DatasetError(f"{name}: zero-norm feature row at row {int(bad[0])}")
    mat.setflags(write=False)
    return mat


def _parse_box(value, where: str) -> BoundingBox:
    _require(isinstance(value, list) and len(value) == 4,
             f"{where}: box must be a 4-element array")
    _require(all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value),
             f"{where}: box coordinates must be numbers")
    try:
        return BoundingBox.from_list(value)
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from exc


def _parse_sample(obj, meta: DatasetMeta, where: str) -> GroundingSample:
    _require(isinstance(obj, dict), f"{where}: record must be a JSON object")
    for key in ("sample_id", "command", "text_row", "gt_box", "proposals"):
        _require(key in obj, f"{where}: missing field {key!r}")
    sample_id = obj["sample_id"]
    _require(isinstance(sample_id, str), f"{where}: sample_id must be a string")
    where = f"{where} (sample_id={sample_id!r})"
    _require(isinstance(obj["command"], str), f"{where}: command must be a string")
    text_row = obj["text_row"]
    _require(isinstance(text_row, int) and not isinstance(text_row, bool),
             f"{where}: text_row must be an integer")
    _require(0 <= text_row < meta.num_samples,
             f"{where}: text_row {text_row} out of range [0, {meta.num_samples})")
    gt_box = _parse_box(obj["gt_box"], f"{where}: gt_box")
    raw_props = obj["proposals"]
    _require(isinstance(raw_props, list) and len(raw_props) >= 1,
             f"{where}: proposals must be a non-empty array")
    proposals = []
    seen_rows = set()
    for j, rp in enumerate(raw_props):
        pwhere = f"{where}: proposal {j}"
        _require(isinstance(rp, dict), f"{pwhere}: must be a JSON object")
        for key in ("box", "rpn_score", "feat_row"):
            _require(key in rp, f"{pwhere}: missing field {key!r}")
        box = _parse_box(rp["box"], f"{pwhere}: box")
        score = rp["rpn_score"]
        _require(isinstance(score, (int, float)) and not isinstance(score, bool),
                 f"{pwhere}: rpn_score must be a number")
        _require(0.0 <= score <= 1.0, f"{pwhere}: rpn_score {score} outside [0, 1]")
        feat_row = rp["feat_row"]
        _require(isinstance(feat_row, int) and not isinstance(feat_row, bool),
                 f"{pwhere}: feat_row must be an integer")
        _require(0 <= feat_row < meta.num_proposal_rows,
                 f"{pwhere}: feat_row {feat_row} out of range [0, {meta.num_proposal_rows})")
        _require(feat_row not in seen_rows, f"{pwhere}: duplicate feat_row {feat_row} within sample")
        seen_rows.add(feat_row)
        proposals.append(Proposal(box=box, rpn_score=float(score), feat_row=feat_row))
    return GroundingSample(
        sample_id=sample_id,
        command=obj["command"],
        text_row=text_row,
        gt_box=gt_box,
        proposals=tuple(proposals),
    )


def load_dataset(dir_path) -> tuple[DatasetMeta, list[GroundingSample], FeatureStore]:
    """Load and validate a dataset directory.

    Every cross-reference is checked (row indices in range, binary sizes
    matching meta, per-sample feat_row uniqueness, no zero-norm feature
    rows); errors name the offending file and line/row. Sample order equals
    manifest line order. Features come back as float64.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise DatasetError(f"dataset directory not found: {dir_path}")
    meta = _load_meta(dir_path)
    image_feats = _load_matrix(dir_path, IMAGE_FEATS_FILE, meta.num_proposal_rows, meta.d_img)
    text_feats = _load_matrix(dir_path, TEXT_FEATS_FILE, meta.num_samples, meta.d_txt)

    manifest_path = dir_path / MANIFEST_FILE
    if not manifest_path.is_file():
        raise DatasetError(f"{MANIFEST_FILE}: missing file in {dir_path}")
    samples: list[GroundingSample] = []
    total_props = 0
    with manifest_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise DatasetError(f"{MANIFEST_FILE}: line {lineno}: blank line")
            where = f"{MANIFEST_FILE}: line {lineno}"
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DatasetError(f"{where}: malformed JSON: {exc}") from exc
            sample = _parse_sample(obj, meta, where)
            total_props += len(sample.proposals)
            samples.append(sample)
    _require(
        len(samples) == meta.num_samples,
        f"{MANIFEST_FILE}: holds {len(samples)} samples, meta.json says {meta.num_samples}",
    )
    _require(
        total_props == meta.num_proposal_rows,
        f"{MANIFEST_FILE}: proposals sum to {total_props}, "
        f"meta.json says num_proposal_rows={meta.num_proposal_rows}",
    )
    return meta, samples, FeatureStore(image_feats=image_feats, text_feats=text_feats)


def load_meta(dir_path) -> DatasetMeta:
    """Validate and return only meta.json, without touching feature files."""
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise DatasetError(f"dataset directory not found: {dir_path}")
    return _load_meta(dir_path)


# --- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticResult:
    """Output locations of generate_synthetic plus the planted linear map."""

    train_dir: Path
    test_dir: Path
    mixing: np.ndarray  # (d_img, d_txt), maps latent text directions to image space


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _grid_box(index: int, cols: int) -> BoundingBox:
    # 10x10 boxes on a 12px pitch: pairwise IoU is exactly 0
    col = index % cols
    row = index // cols
    x0 = 12.0 * col
    y0 = 12.0 * row
    return BoundingBox(x0, y0, x0 + 10.0, y0 + 10.0)


def _write_split(
    out_dir: Path,
    split: str,
    n: int,
    p: int,
    mixing: np.ndarray,
    noise_sigma: float,
    rng: np.random.Generator,
) -> None:
    d_img, d_txt = mixing.shape
    cols = math.isqrt(p - 1) + 1
    image_feats = np.empty((n * p, d_img))
    text_feats = np.empty((n, d_txt))
    lines = []
    for i in range(n):
        latent = _unit(rng.standard_normal(d_txt))
        text_feats[i] = latent + noise_sigma * rng.standard_normal(d_txt)
        gt_slot = int(rng.integers(p))
        for j in range(p):
            if j == gt_slot:
                target = _unit(mixing @ latent)
                image_feats[i * p + j] = target + noise_sigma * rng.standard_normal(d_img)
            else:
                distractor = _unit(rng.standard_normal(d_txt))
                image_feats[i * p + j] = _unit(mixing @ distractor)
        rpn_scores = rng.uniform(size=p)
        boxes = [_grid_box(j, cols) for j in range(p)]
        record = {
            "sample_id": f"{split}-{i:06d}",
            "command": "",
            "text_row": i,
            "gt_box": boxes[gt_slot].as_list(),
            "proposals": [
                {"box": boxes[j].as_list(), "rpn_score": float(rpn_scores[j]), "feat_row": i * p + j}
                for j in range(p)
            ],
        }
        lines.append(json.dumps(record, separators=(",", ":")))

    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": 1,
        "d_img": d_img,
        "d_txt": d_txt,
        "num_samples": n,
        "num_proposal_rows": n * p,
        "dtype": "f32",
        "endianness": "little",
    }
    (out_dir / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (out_dir / MANIFEST_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / IMAGE_FEATS_FILE).write_bytes(image_feats.astype("<f4").tobytes())
    (out_dir / TEXT_FEATS_FILE).write_bytes(text_feats.astype("<f4").tobytes())


def generate_synthetic(
    out_root,
    n_train: int,
    n_test: int,
    p: int,
    d_img: int,
    d_txt: int,
    noise_sigma: float,
    seed: int,
) -> SyntheticResult:
    """Write train/ and test/ dataset directories with planted structure.

    A fixed standard-normal matrix M (d_img x d_txt) is drawn once from the
    seeded generator. Per sample: a latent unit vector z gives the text
    feature z + N(0, sigma^2 I); the ground-truth proposal feature is
    Mz/|Mz| + N(0, sigma^2 I); each distractor is Mz'/|Mz'| for a fresh
    latent z'. Boxes sit on a fixed disjoint grid with the ground-truth
    proposal's box doubling as gt_box, its slot chosen uniformly at random.
    Identical arguments produce byte-identical directories.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError(f"n_train and n_test must be >= 1, got {n_train}, {n_test}")
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if d_img < 2 or d_txt < 2:
        raise ValueError(f"dims must be >= 2, got d_img={d_img}, d_txt={d_txt}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    out_root = Path(out_root)
    rng = np.random.default_rng(seed)
    mixing = rng.standard_normal((d_img, d_txt))
    train_dir = out_root / "train"
    test_dir = out_root / "test"
    _write_split(train_dir, "train", n_train, p, mixing, noise_sigma, rng)
    _write_split(test_dir, "test", n_test, p, mixing, noise_sigma, rng)
    return SyntheticResult(train_dir=train_dir, test_dir=test_dir, mixing=mixing)
