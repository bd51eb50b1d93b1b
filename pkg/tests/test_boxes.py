"""Box arithmetic: IoU against a rasterization oracle, GT assignment, hit rule."""

import numpy as np
import pytest

from cosground import BoundingBox, GroundingSample, Proposal, assign_gt_proposal, hit_at_50, iou


def raster_iou_counts(a: BoundingBox, b: BoundingBox) -> tuple[int, int]:
    """Intersection/union cell counts of integer-coordinate boxes on a unit grid."""
    x_lo = int(min(a.x_min, b.x_min))
    x_hi = int(max(a.x_max, b.x_max))
    y_lo = int(min(a.y_min, b.y_min))
    y_hi = int(max(a.y_max, b.y_max))
    inter = union = 0
    for x in range(x_lo, x_hi):
        for y in range(y_lo, y_hi):
            in_a = a.x_min <= x < a.x_max and a.y_min <= y < a.y_max
            in_b = b.x_min <= x < b.x_max and b.y_min <= y < b.y_max
            inter += in_a and in_b
            union += in_a or in_b
    return inter, union


def random_int_box(rng: np.random.Generator, span: int = 14) -> BoundingBox:
    x0, y0 = int(rng.integers(0, span - 1)), int(rng.integers(0, span - 1))
    x1 = int(rng.integers(x0 + 1, span + 1))
    y1 = int(rng.integers(y0 + 1, span + 1))
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


def random_real_box(rng: np.random.Generator) -> BoundingBox:
    x0, y0 = rng.uniform(-5, 5, size=2)
    w, h = rng.uniform(0.1, 8, size=2)
    return BoundingBox(x0, y0, x0 + w, y0 + h)


def make_sample(gt_box: BoundingBox, boxes: list[BoundingBox]) -> GroundingSample:
    props = tuple(
        Proposal(box=b, rpn_score=0.5, feat_row=i) for i, b in enumerate(boxes)
    )
    return GroundingSample(sample_id="s", command="", text_row=0, gt_box=gt_box, proposals=props)


class TestBoundingBox:
    def test_valid_construction(self):
        b = BoundingBox(1.0, 2.0, 4.0, 6.0)
        assert b.area == 12.0
        assert b.as_list() == [1.0, 2.0, 4.0, 6.0]

    @pytest.mark.parametrize("coords", [
        (0, 0, 0, 1),      # zero width
        (0, 0, 1, 0),      # zero height
        (2, 0, 1, 1),      # inverted x
        (0, 2, 1, 1),      # inverted y
        (0, 0, float("nan"), 1),
    ])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValueError):
            BoundingBox(*[float(c) for c in coords])

    def test_from_list_roundtrip(self):
        b = BoundingBox.from_list([1, 2, 3, 4])
        assert BoundingBox.from_list(b.as_list()) == b
        with pytest.raises(ValueError):
            BoundingBox.from_list([1, 2, 3])

    def test_translate(self):
        b = BoundingBox(0.0, 0.0, 2.0, 3.0).translate(5.0, -1.0)
        assert b == BoundingBox(5.0, -1.0, 7.0, 2.0)


class TestIou:
    def test_identity(self):
        b = BoundingBox(0.5, 1.5, 3.25, 9.0)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(2, 2, 3, 3)) == 0.0

    def test_touching_edges_count_as_disjoint(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(1, 0, 2, 1)) == 0.0

    def test_one_seventh_case(self):
        # 2x2 squares overlapping in a unit cell: inter 1, union 4 + 4 - 1
        a = BoundingBox(0, 0, 2, 2)
        b = BoundingBox(1, 1, 3, 3)
        assert iou(a, b) == 1.0 / 7.0
        inter, union = raster_iou_counts(a, b)
        assert (inter, union) == (1, 7)

    def test_matches_rasterization_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            a, b = random_int_box(rng), random_int_box(rng)
            inter, union = raster_iou_counts(a, b)
            assert iou(a, b) == inter / union

    def test_symmetry_and_translation_invariance(self):
        rng = np.random.default_rng(22)
        for _ in range(300):
            a, b = random_real_box(rng), random_real_box(rng)
            assert iou(a, b) == iou(b, a)
            dx, dy = rng.uniform(-50, 50, size=2)
            assert abs(iou(a.translate(dx, dy), b.translate(dx, dy)) - iou(a, b)) <= 1e-12

    def test_range(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            v = iou(random_real_box(rng), random_real_box(rng))
            assert 0.0 <= v <= 1.0

    def test_contained_box(self):
        outer = BoundingBox(0, 0, 4, 4)
        inner = BoundingBox(1, 1, 2, 2)
        assert iou(outer, inner) == 1.0 / 16.0


class TestAssignGtProposal:
    def test_exact_match_wins(self):
        gt = BoundingBox(0, 0, 10, 10)
        boxes = [BoundingBox(40, 0, 50, 10), BoundingBox(20, 0, 30, 10), gt]
        assert assign_gt_proposal(make_sample(gt, boxes)) == 2

    def test_all_disjoint_returns_none(self):
        gt = BoundingBox(0, 0, 10, 10)
        boxes = [BoundingBox(20, 0, 30, 10), BoundingBox(40, 0, 50, 10)]
        assert assign_gt_proposal(make_sample(gt, boxes), min_iou=0.5) is None

    def test_tie_breaks_to_lowest_index(self):
        gt = BoundingBox(0, 0, 10, 10)
        boxes = [BoundingBox(20, 0, 30, 10), gt, gt]
        assert assign_gt_proposal(make_sample(gt, boxes)) == 1

    def test_threshold_is_inclusive(self):
        # IoU of [0,0,2,1] against [0,0,1,1] is exactly 0.5
        gt = BoundingBox(0, 0, 1, 1)
        sample = make_sample(gt, [BoundingBox(0, 0, 2, 1)])
        assert assign_gt_proposal(sample, min_iou=0.5) == 0
        assert assign_gt_proposal(sample, min_iou=0.5000001) is None

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(31)
        gt = BoundingBox(3, 3, 9, 9)
        boxes = [random_real_box(rng) for _ in range(6)] + [BoundingBox(3, 3, 8.5, 9)]
        base = assign_gt_proposal(make_sample(gt, boxes), min_iou=0.1)
        assert base is not None
        for _ in range(10):
            perm = rng.permutation(len(boxes))
            permuted = [boxes[i] for i in perm]
            got = assign_gt_proposal(make_sample(gt, permuted), min_iou=0.1)
            assert permuted[got] == boxes[base]


class TestHitAt50:
    def test_identity_hits(self):
        b = BoundingBox(0, 0, 5, 5)
        assert hit_at_50(b, b) is True

    def test_low_overlap_misses(self):
        assert hit_at_50(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 3, 3)) is False

    def test_exact_half_iou_is_a_miss_when_strict(self):
        a = BoundingBox(0, 0, 2, 1)
        gt = BoundingBox(0, 0, 1, 1)
        assert iou(a, gt) == 0.5
        inter, union = raster_iou_counts(a, gt)
        assert inter / union == 0.5
        assert hit_at_50(a, gt, strict=True) is False
        assert hit_at_50(a, gt, strict=False) is True
