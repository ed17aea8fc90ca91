import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow.evaluation import (
    EvalConfig,
    KeypointSet,
    cosegment,
    grid_to_pixel,
    mask_transfer_scores,
    pck,
    pixel_to_grid,
    propagate_keypoints,
    transfer_keypoints,
)
from semflow.geometry import warp_scalar
from semflow.matching import MatchConfig, match_features
from semflow.model import FlowModel

from conftest import brute_bilinear


def kps(xy, h=100, w=100, bbox=None):
    return KeypointSet.from_array(np.asarray(xy, dtype=float), h, w, bbox)


def test_keypointset_validation():
    with pytest.raises(ValueError):
        KeypointSet((("a", 1, 1), ("a", 2, 2)), 10, 10)
    with pytest.raises(ValueError):
        KeypointSet((("a", 10, 1),), 10, 10)
    with pytest.raises(ValueError):
        EvalConfig(alpha=0)


def test_transfer_examples(rng):
    pts = kps([[10, 20], [300, 5], [159.5, 159.5]], 320, 320)
    same = transfer_keypoints(pts, np.zeros((20, 20, 2)), (320, 320), (320, 320))
    np.testing.assert_allclose(same.xy, pts.xy, atol=1e-12)
    shift = np.zeros((20, 20, 2))
    shift[..., 0] = 1
    moved = transfer_keypoints(kps([[10, 20], [100, 5]], 320, 320), shift, (320, 320), (320, 320))
    np.testing.assert_allclose(moved.xy, [[26, 20], [116, 5]], atol=1e-12)


def test_transfer_matches_bilinear_oracle(rng):
    flow = rng.uniform(-1, 1, (20, 20, 2))
    pts = kps(rng.uniform(20, 140, (10, 2)), 160, 160)
    out = transfer_keypoints(pts, flow, (160, 160), (160, 160))
    for (x, y), (px, py) in zip(pts.xy, out.xy):
        gx, gy = (x + 0.5) / 8 - 0.5, (y + 0.5) / 8 - 0.5
        dx, dy = brute_bilinear(flow[..., 0], gx, gy), brute_bilinear(flow[..., 1], gx, gy)
        np.testing.assert_allclose([px, py], [(gx + dx + 0.5) * 8 - 0.5, (gy + dy + 0.5) * 8 - 0.5], atol=1e-9)


def test_pixel_grid_round_trip(rng):
    xy = rng.uniform(0, 99, (20, 2))
    np.testing.assert_allclose(grid_to_pixel(pixel_to_grid(xy, (100, 80), (20, 20)), (100, 80), (20, 20)), xy)


def test_pck_examples():
    gt = kps([[50, 50], [60, 60]], bbox=(0, 0, 100, 100))
    assert pck(gt, gt) == 1.0
    pred = kps([[55, 50], [60, 75]])
    assert pck(pred, gt, EvalConfig(0.1)) == 0.5
    # a distance exactly at the threshold counts
    assert pck(kps([[60, 50], [60, 60]]), gt) == 1.0


def test_pck_errors():
    gt = kps([[1, 1]], bbox=(0, 0, 10, 10))
    with pytest.raises(ValueError):
        pck(KeypointSet((("x", 1, 1),), 100, 100), gt)
    with pytest.raises(ValueError):
        pck(kps([[1, 1]]), kps([[1, 1]]))
    with pytest.raises(ValueError):
        pck(KeypointSet((), 10, 10), KeypointSet((), 10, 10, (0, 0, 1, 1)))


def test_pck_img_normalization():
    gt = kps([[0, 0], [0, 0]], h=50, w=200)
    pred = kps([[19, 0], [0, 6]], h=50, w=200)
    # 19/200 = 0.095 passes, 6/50 = 0.12 fails
    assert pck(pred, gt, EvalConfig(0.1, "img")) == 0.5


def test_mask_transfer_examples(rng):
    m = rng.random((8, 8)) < 0.5
    assert mask_transfer_scores(m, m) == (1.0, 1.0)
    assert mask_transfer_scores(m, ~m) == (0.0, 0.0)
    assert mask_transfer_scores(np.zeros((3, 3)), np.zeros((3, 3))) == (1.0, 1.0)
    assert mask_transfer_scores(np.zeros((3, 3)), np.ones((3, 3)))[1] == 0.0
    with pytest.raises(ValueError):
        mask_transfer_scores(np.zeros((3, 3)), np.zeros((3, 4)))


def test_cosegment_examples(rng):
    full, z = np.ones((6, 6)), np.zeros((6, 6, 2))
    a, b = cosegment(full, full, z, z)
    assert a.values.all() and b.values.all()
    left, right = np.zeros((6, 6)), np.zeros((6, 6))
    left[:, :3], right[:, 3:] = 1, 1
    a, b = cosegment(left, right, z, z)
    assert not a.values.any() and not b.values.any()
    ms, mt = (rng.random((6, 6)) < 0.5).astype(float), (rng.random((6, 6)) < 0.5).astype(float)
    fs, ft = rng.uniform(-2, 2, (6, 6, 2)), rng.uniform(-2, 2, (6, 6, 2))
    a, b = cosegment(ms, mt, fs, ft)
    np.testing.assert_array_equal(a.values, ms * (warp_scalar(mt, fs) > 0.5))
    np.testing.assert_array_equal(b.values, mt * (warp_scalar(ms, ft) > 0.5))


def test_propagation_on_identical_frames():
    feats = np.eye(400).reshape(20, 20, 400)
    frames = [feats] * 5
    start = KeypointSet.from_array([[3.0, 4.0], [12.5, 15.0]], 20, 20)
    out = propagate_keypoints(frames, start, lambda a, b: match_features(a, b, MatchConfig())[0])
    assert len(out) == 5
    for k in out:
        assert np.max(np.abs(k.xy - start.xy)) < 0.5


def test_propagation_tracks_cumulative_translation():
    # frames cut from one texture at 8 px steps; the toy extractor sees 2-cell shifts
    tex = np.random.default_rng(3).integers(0, 256, (80, 120), dtype=np.uint8)
    frames = [tex[:, 32 - 8 * i : 112 - 8 * i] for i in range(4)]
    model = FlowModel(seed=None)
    start = KeypointSet.from_array([[30.0, 30.0], [41.0, 52.0]], 80, 80)
    out = propagate_keypoints(frames, start, lambda a, b: model.flows(a, b, MatchConfig(mode="discrete"))[0])
    for i, k in enumerate(out):
        np.testing.assert_allclose(k.xy, start.xy + [8 * i, 0], atol=1.0)


def test_propagation_two_frames_zero_flow():
    start = KeypointSet.from_array([[5.0, 7.0]], 40, 40)
    out = propagate_keypoints([0, 0], start, lambda a, b: np.zeros((20, 20, 2)))
    np.testing.assert_allclose(out[1].xy, start.xy, atol=1e-12)
    with pytest.raises(ValueError):
        propagate_keypoints([0], start, lambda a, b: None)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_property_pck_monotone_bounded_permutation_invariant(seed, a1, a2):
    rng = np.random.default_rng(seed)
    gt_xy = rng.uniform(0, 99, (8, 2))
    pred_xy = np.clip(gt_xy + rng.normal(scale=10, size=(8, 2)), 0, 99)
    gt = kps(gt_xy, bbox=(10, 10, 70, 90))
    pred = kps(pred_xy)
    lo, hi = sorted((a1, a2))
    p_lo, p_hi = pck(pred, gt, EvalConfig(lo)), pck(pred, gt, EvalConfig(hi))
    assert 0 <= p_lo <= p_hi <= 1
    perm = rng.permutation(8)
    shuffled = KeypointSet(tuple(pred.points[i] for i in perm), 100, 100)
    assert pck(shuffled, gt, EvalConfig(lo)) == p_lo


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_cosegment_subsets(seed):
    rng = np.random.default_rng(seed)
    ms, mt = (rng.random((5, 5)) < 0.5).astype(float), (rng.random((5, 5)) < 0.5).astype(float)
    a, b = cosegment(ms, mt, rng.uniform(-2, 2, (5, 5, 2)), rng.uniform(-2, 2, (5, 5, 2)))
    assert np.all(a.values <= ms) and np.all(b.values <= mt)
