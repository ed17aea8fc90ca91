import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow.geometry import AffineTransform, affine_to_flow
from semflow.losses import LossWeights, Mask, flow_consistency, mask_consistency, smoothness, total_loss

from conftest import brute_bilinear
from gradcases import check_case


def warp_oracle(g, f):
    h, w = g.shape
    return np.array([[brute_bilinear(g, x + f[y, x, 0], y + f[y, x, 1]) for x in range(w)] for y in range(h)])


def mask_oracle(ms, mt, fs, ft):
    return np.sum((ms - warp_oracle(mt, fs)) ** 2) / ms.size + np.sum((mt - warp_oracle(ms, ft)) ** 2) / mt.size


def flow_oracle(fs, ft, ms, mt):
    total = 0.0
    for F, G, M in ((fs, ft, ms), (ft, fs, mt)):
        b = M > 0.5
        if not b.any():
            continue
        hat = np.stack([warp_oracle(G[..., c], F) for c in range(2)], axis=-1)
        total += sum(np.sum((F[y, x] + hat[y, x]) ** 2) for y, x in zip(*np.nonzero(b))) / b.sum()
    return total


def smooth_oracle(fs, ft, ms, mt):
    total = 0.0
    for F, M in ((fs, ms), (ft, mt)):
        b = M > 0.5
        if not b.any():
            continue
        h, w = b.shape
        s = 0.0
        for y in range(h):
            for x in range(w):
                if not b[y, x]:
                    continue
                if x + 1 < w:
                    s += np.abs(F[y, x + 1] - F[y, x]).sum()
                if y + 1 < h:
                    s += np.abs(F[y + 1, x] - F[y, x]).sum()
        total += s / b.sum()
    return total


def random_case(rng, n=6):
    ms = (rng.random((n, n)) < 0.5).astype(float)
    mt = (rng.random((n, n)) < 0.5).astype(float)
    ms[0, 0] = mt[0, 0] = 1
    return ms, mt, rng.uniform(-2, 2, (n, n, 2)), rng.uniform(-2, 2, (n, n, 2))


def test_mask_type():
    m = Mask(np.array([[0.0, 0.7], [0.5, 1.0]]))
    assert m.pixel_count == 4 and m.foreground_count == 2
    with pytest.raises(ValueError):
        Mask(np.array([[2.0]]))


def test_mask_consistency_examples(rng):
    z = np.zeros((4, 4, 2))
    m = (rng.random((4, 4)) < 0.5).astype(float)
    assert mask_consistency(m, m, z, z).value == 0
    assert mask_consistency(np.ones((4, 4)), np.zeros((4, 4)), z, z).value == pytest.approx(2.0)
    ms, mt, fs, ft = random_case(rng)
    assert mask_consistency(ms, mt, fs, ft).value == pytest.approx(mask_oracle(ms, mt, fs, ft), abs=1e-12)


def test_flow_consistency_examples(rng):
    m = (rng.random((5, 5)) < 0.5).astype(float)
    z = np.zeros((5, 5, 2))
    assert flow_consistency(z, z, m, m).value == 0
    ms, mt, fs, ft = random_case(rng)
    assert flow_consistency(fs, ft, ms, mt).value == pytest.approx(flow_oracle(fs, ft, ms, mt), abs=1e-12)


def test_flow_consistency_affine_inverse_pair():
    t = AffineTransform.about_center(np.array([[1.05, -0.12], [0.1, 0.95]]), (9.5, 9.5), (0.4, -0.3))
    fs, ft = affine_to_flow(t, 20, 20), affine_to_flow(t.inverse(), 20, 20)
    interior = np.zeros((20, 20))
    interior[5:15, 5:15] = 1
    assert flow_consistency(fs, ft, interior, interior).value < 1e-3


def test_flow_consistency_many_to_one(rng):
    ms = np.ones((4, 4))
    ys, xs = np.mgrid[0:4, 0:4]
    fs = np.stack([2 - xs, 1 - ys], axis=-1).astype(float)  # everything lands on (2, 1)
    ft = np.zeros((4, 4, 2))
    v = flow_consistency(fs, ft, ms, ms).value
    assert v > 0
    assert v == pytest.approx(flow_oracle(fs, ft, ms, ms), abs=1e-12)


def test_smoothness_examples(rng):
    m = np.ones((3, 3))
    const = np.broadcast_to([0.3, -1.2], (3, 3, 2)).copy()
    assert smoothness(const, const, m, m).value == 0
    ramp = np.zeros((3, 3, 2))
    ramp[..., 0] = np.arange(3)[None, :]
    # 6 unit x-differences per direction over 9 foreground cells, both directions
    assert smoothness(ramp, ramp, m, m).value == pytest.approx(12 / 9)
    ms, mt, fs, ft = random_case(rng)
    assert smoothness(fs, ft, ms, mt).value == pytest.approx(smooth_oracle(fs, ft, ms, mt), abs=1e-12)


def test_total_loss_examples(rng):
    m = (rng.random((5, 5)) < 0.5).astype(float)
    m[0, 0] = 1
    z = np.zeros((5, 5, 2))
    rep = total_loss(z, z, m, m)
    assert rep.total == rep.mask_term == rep.flow_term == rep.smooth_term == 0
    ms, mt, fs, ft = random_case(rng)
    assert total_loss(fs, ft, ms, mt, LossWeights(1, 0, 0)).total == mask_consistency(ms, mt, fs, ft).value
    rep = total_loss(fs, ft, ms, mt)
    expected = 3 * mask_oracle(ms, mt, fs, ft) + 16 * flow_oracle(fs, ft, ms, mt) + 0.5 * smooth_oracle(fs, ft, ms, mt)
    assert rep.total == pytest.approx(expected, abs=1e-9)
    assert rep.total == pytest.approx(3 * rep.mask_term + 16 * rep.flow_term + 0.5 * rep.smooth_term, abs=1e-9)


def test_empty_foreground_gives_zero_term_with_warning(rng, caplog):
    fs, ft = rng.normal(size=(4, 4, 2)), rng.normal(size=(4, 4, 2))
    empty = np.zeros((4, 4))
    with caplog.at_level(logging.WARNING):
        assert flow_consistency(fs, ft, empty, empty).value == 0
        assert smoothness(fs, ft, empty, empty).value == 0
    assert "no foreground" in caplog.text


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        total_loss(np.zeros((4, 4, 2)), np.zeros((4, 4, 2)), np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(ValueError):
        mask_consistency(np.ones((4, 4)), np.ones((4, 4)), np.zeros((4, 3, 2)), np.zeros((4, 4, 2)))


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(-1, 0, 0)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_through_matching_graph(seed):
    assert check_case("total_loss_through_matching", seed) < 1e-4
    assert check_case("total_loss", seed) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_non_negative_and_symmetric(seed):
    ms, mt, fs, ft = random_case(np.random.default_rng(seed), 5)
    a = total_loss(fs, ft, ms, mt)
    b = total_loss(ft, fs, mt, ms)
    assert min(a.mask_term, a.flow_term, a.smooth_term) >= 0
    assert a.total == pytest.approx(b.total, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_property_background_contributes_nothing(seed):
    rng = np.random.default_rng(seed)
    ms, _, fs, ft = random_case(rng, 5)
    empty = np.zeros((5, 5))
    # change the flow on background cells whose upper and left neighbors are background too
    bg = ms < 0.5
    free = bg.copy()
    free[1:, :] &= bg[:-1, :]
    free[:, 1:] &= bg[:, :-1]
    fs2 = fs.copy()
    fs2[free] += rng.normal(size=(int(free.sum()), 2))
    assert flow_consistency(fs, ft, ms, empty).value == flow_consistency(fs2, ft, ms, empty).value
    assert smoothness(fs, ft, ms, empty).value == smoothness(fs2, ft, ms, empty).value
