"""
Tests for instance pruning.
"""

import numpy as np
import pytest

from anchordiff.exceptions import FileError, ShapeError, ValidationError
from anchordiff.metrics import region_similarity
from anchordiff.pruning import (
    Detection, InstancePruner, apply_pruning, box_iou, link_trajectories, mask_box, pairwise_iou,
    pruning_mask, read_detections, size_low, small_static, track_areas, write_detections
)
from anchordiff.synthdata import gen_video, pruning_scene


def rect_detection(frame, top, left, h, w, shape=(20, 20), hint=-1) -> Detection:
    mask = np.zeros(shape, dtype=bool)
    mask[top:top + h, left:left + w] = True
    return Detection.from_mask(frame, mask, track_hint=hint)


def small_static_oracle(detections, size_thr, support, iou_thr=0.6):
    selected = []
    for d in detections:
        count = sum(1 for other in detections if box_iou(d.box, other.box) > iou_thr)
        if count > support and d.area < size_thr:
            selected.append(d)
    return selected


def random_detections(rng, n_frames=6, shape=(20, 20)):
    detections = []
    for t in range(n_frames):
        for _ in range(int(rng.integers(0, 4))):
            h, w = int(rng.integers(1, 8)), int(rng.integers(1, 8))
            top, left = int(rng.integers(0, shape[0] - h + 1)), int(rng.integers(0, shape[1] - w + 1))
            detections.append(rect_detection(t, top, left, h, w, shape))
    return detections


@pytest.fixture
def scene():
    return gen_video(pruning_scene(), np.random.default_rng(0))


class TestBoxes:
    """Test suite for box helpers."""

    def test_mask_box(self):
        """Test boxes are tight with an exclusive upper corner."""
        mask = np.zeros((6, 8), dtype=bool)
        mask[2:4, 1:6] = True
        assert mask_box(mask) == (1, 2, 6, 4)
        with pytest.raises(ValidationError):
            mask_box(np.zeros((3, 3), dtype=bool))

    def test_box_iou(self):
        """Test IoU of identical, disjoint and overlapping boxes."""
        assert box_iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0
        assert box_iou((0, 0, 2, 2), (5, 5, 7, 7)) == 0.0
        assert box_iou((0, 0, 4, 4), (2, 0, 6, 4)) == pytest.approx(8 / 24)

    def test_pairwise_matches_scalar(self, rng):
        """Test the vectorised IoU matrix equals the scalar IoU."""
        dets = random_detections(rng, n_frames=10)
        boxes = np.array([d.box for d in dets])
        matrix = pairwise_iou(boxes)
        for i, a in enumerate(dets):
            for j, b in enumerate(dets):
                assert matrix[i, j] == box_iou(a.box, b.box)

    def test_detection_validation(self):
        """Test a box that does not bound its mask is rejected."""
        mask = np.zeros((5, 5), dtype=bool)
        mask[1:3, 1:3] = True
        with pytest.raises(ValidationError):
            Detection(0, (0, 0, 3, 3), mask)
        with pytest.raises(ValidationError):
            Detection(0, (0, 0, 1, 1), np.zeros((5, 5), dtype=bool))


class TestSmallStatic:
    """Test suite for size_low and small_static."""

    def test_size_low_is_nth_largest(self):
        """Test size_low picks the n-th largest area."""
        dets = [rect_detection(0, 0, 0, 1, a) for a in (3, 9, 5, 7)]
        assert size_low(dets, 2) == 7
        assert size_low(dets, 4) == 3
        assert size_low(dets, 10) == 3
        with pytest.raises(ValidationError):
            size_low([], 3)

    def test_matches_oracle(self, rng):
        """Test small_static against a double loop over random detection sets."""
        for _ in range(200):
            dets = random_detections(rng)
            if not dets:
                continue
            thr = size_low(dets, 6)
            support = float(rng.integers(0, 4))
            expected = small_static_oracle(dets, thr, support)
            assert [id(d) for d in small_static(dets, thr, support)] == [id(d) for d in expected]

    def test_order_invariant(self, rng):
        """Test shuffling the input does not change which detections are selected."""
        for _ in range(50):
            dets = random_detections(rng)
            if not dets:
                continue
            thr = size_low(dets, 6)
            shuffled = [dets[i] for i in rng.permutation(len(dets))]
            assert {id(d) for d in small_static(dets, thr, 1.0)} == {id(d) for d in small_static(shuffled, thr, 1.0)}

    def test_empty(self):
        """Test no detections gives no small-static instances."""
        assert small_static([], 10, 1) == []

    def test_single_frame_degenerate(self):
        """Test with one frame any detection below the size threshold is small-static."""
        det = rect_detection(0, 3, 3, 2, 2)
        assert small_static([det], det.area + 1, 0.5 * 1) == [det]
        assert small_static([det], det.area, 0.5 * 1) == []
        assert small_static([det], size_low([det], 1), 0.5) == []


class TestPruningMask:
    """Test suite for the per-frame keep-mask."""

    def test_dominant_frame_removes_small_static(self):
        """Test a small-static instance is cut when one instance dominates."""
        big = rect_detection(0, 0, 0, 10, 10)
        small = rect_detection(0, 15, 15, 2, 2)
        keep = pruning_mask(0, np.ones((20, 20), dtype=bool), [small], [big, small], size_thr=50)
        assert not keep[small.mask].any()
        assert keep[big.mask].all()

    def test_no_dominant_instance(self):
        """Test nothing is removed when the two largest instances are comparable."""
        big = rect_detection(0, 0, 0, 10, 10)
        other = rect_detection(0, 12, 0, 8, 8)
        small = rect_detection(0, 15, 15, 2, 2)
        keep = pruning_mask(0, np.ones((20, 20), dtype=bool), [small], [big, other, small], size_thr=50)
        assert keep.all()

    def test_below_size_threshold(self):
        """Test nothing is removed when the largest instance is not above size_thr."""
        big = rect_detection(0, 0, 0, 5, 5)
        small = rect_detection(0, 15, 15, 2, 2)
        keep = pruning_mask(0, np.ones((20, 20), dtype=bool), [small], [big, small], size_thr=25)
        assert keep.all()

    def test_other_frames_ignored(self):
        """Test small-static instances of other frames are not applied."""
        big = rect_detection(1, 0, 0, 10, 10)
        small_elsewhere = rect_detection(0, 15, 15, 2, 2)
        keep = pruning_mask(1, np.ones((20, 20), dtype=bool), [small_elsewhere], [big], size_thr=50)
        assert keep.all()

    def test_no_detections(self):
        """Test a frame without detections keeps everything."""
        assert pruning_mask(0, np.zeros((4, 4), dtype=bool), [], [], 1).all()


class TestInstancePruner:
    """Test suite for video-level pruning."""

    def test_pruning_scene_removes_distractor(self, scene):
        """Test the static distractor is removed and the mover kept."""
        distractor = {d.frame_index: d.mask for d in scene.detections if d.track_hint == 1}
        assert sorted(distractor) == list(range(1, 10))
        predicted = [m | distractor.get(t, np.zeros_like(m)) for t, m in enumerate(scene.masks)]

        refined = apply_pruning(predicted, scene.detections)
        for got, gt in zip(refined, scene.masks):
            np.testing.assert_array_equal(got, gt)

        before = np.mean([region_similarity(p, g) for p, g in zip(predicted, scene.masks)])
        after = np.mean([region_similarity(p, g) for p, g in zip(refined, scene.masks)])
        assert after > before
        assert after == 1.0

    def test_idempotent(self, scene):
        """Test pruning twice equals pruning once."""
        distractor = {d.frame_index: d.mask for d in scene.detections if d.track_hint == 1}
        predicted = [m | distractor.get(t, np.zeros_like(m)) for t, m in enumerate(scene.masks)]
        once = apply_pruning(predicted, scene.detections)
        twice = apply_pruning(once, scene.detections)
        for a, b in zip(once, twice):
            np.testing.assert_array_equal(a, b)

    def test_never_adds_pixels(self, rng):
        """Test refined masks are subsets of the predictions."""
        for _ in range(30):
            dets = random_detections(rng)
            predicted = [rng.random((20, 20)) > 0.5 for _ in range(6)]
            for got, pred in zip(InstancePruner().prune(predicted, dets), predicted):
                assert not (got & ~pred).any()

    def test_no_detections_copies(self):
        """Test predictions pass through unchanged without detections."""
        predicted = [np.eye(4, dtype=bool)]
        refined = apply_pruning(predicted, [])
        np.testing.assert_array_equal(refined[0], predicted[0])
        assert refined[0] is not predicted[0]

    def test_detection_frame_out_of_range(self):
        """Test a detection past the last frame raises ValidationError."""
        with pytest.raises(ValidationError):
            apply_pruning([np.zeros((20, 20), dtype=bool)], [rect_detection(3, 0, 0, 2, 2)])

    def test_detection_shape_mismatch(self):
        """Test instance masks must match the prediction size."""
        with pytest.raises(ShapeError):
            apply_pruning([np.zeros((10, 10), dtype=bool)], [rect_detection(0, 0, 0, 2, 2)])

    def test_invalid_thresholds(self):
        """Test thresholds outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            InstancePruner(link_iou=1.5)


class TestTrajectories:
    """Test suite for IoU-based linking."""

    def test_slow_mover_is_one_track(self):
        """Test a slowly moving box links into a single track."""
        dets = [rect_detection(t, 2, t, 8, 8) for t in range(5)]
        tracks = link_trajectories(dets)
        assert len(tracks) == 1
        assert len(tracks[0]) == 5
        assert tracks[0].cumulative_area == 5 * 64

    def test_gap_ends_track(self):
        """Test a missing frame splits the track."""
        dets = [rect_detection(t, 2, 2, 6, 6) for t in (0, 1, 3)]
        assert [len(t) for t in link_trajectories(dets)] == [2, 1]

    def test_greedy_prefers_higher_iou(self):
        """Test each track continues with its best-overlapping detection."""
        dets = [
            rect_detection(0, 0, 0, 6, 6),
            rect_detection(1, 0, 1, 6, 6),
            rect_detection(1, 0, 0, 6, 6),
        ]
        tracks = link_trajectories(dets)
        assert tracks[0].detections[1] is dets[2]
        assert len(tracks) == 2


    def test_interleaved_movers_keep_identity(self):
        """Test two boxes crossing paths each stay on their own track."""
        shape, n_frames = (30, 40), 20
        first = [rect_detection(t, 5, t, 10, 10, shape) for t in range(n_frames)]
        second = [rect_detection(t, 10, 20 - t, 10, 10, shape) for t in range(n_frames)]
        dets = []
        for t in range(n_frames):
            dets.extend([second[t], first[t]] if t % 2 else [first[t], second[t]])

        for t in range(1, n_frames):
            own = box_iou(first[t - 1].box, first[t].box) + box_iou(second[t - 1].box, second[t].box)
            swapped = box_iou(first[t - 1].box, second[t].box) + box_iou(second[t - 1].box, first[t].box)
            assert own > swapped

        tracks = link_trajectories(dets, 0.5)
        assert len(tracks) == 2
        tracks.sort(key=lambda track: track.detections[0] is not first[0])
        for track, expected in zip(tracks, (first, second)):
            assert len(track) == n_frames
            assert all(got is want for got, want in zip(track.detections, expected))

    def test_track_areas_sorted(self):
        """Test tracks come back largest cumulative area first."""
        dets = [rect_detection(0, 0, 0, 2, 2), rect_detection(0, 10, 10, 5, 5), rect_detection(1, 10, 10, 5, 5)]
        areas = [area for _, area in track_areas(dets)]
        assert areas == [50, 4]


class TestDetectionFiles:
    """Test suite for the detections file format."""

    def test_write_then_read(self, tmp_path, scene):
        """Test detections survive a write and read."""
        write_detections(tmp_path / "detections.txt", scene.detections)
        loaded = read_detections(tmp_path / "detections.txt")
        assert [(d.frame_index, d.box, d.track_hint) for d in loaded] == \
               [(d.frame_index, d.box, d.track_hint) for d in scene.detections]
        for a, b in zip(loaded, scene.detections):
            np.testing.assert_array_equal(a.mask, b.mask)

    def test_comments_and_blank_lines(self, tmp_path):
        """Test comment and blank lines are skipped."""
        path = tmp_path / "detections.txt"
        path.write_text("# header\n\n")
        assert read_detections(path) == []

    def test_wrong_field_count(self, tmp_path):
        """Test malformed lines report their line number."""
        path = tmp_path / "detections.txt"
        path.write_text("0 1 2 3\n")
        with pytest.raises(FileError) as exc:
            read_detections(path)
        assert ":1:" in str(exc.value)

    def test_missing_file(self, tmp_path):
        """Test a missing detections file raises FileError."""
        with pytest.raises(FileError):
            read_detections(tmp_path / "nope.txt")
