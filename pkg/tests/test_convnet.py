import math
import time

import numpy as np
import pytest

from conftest import random_images, reference_net
from deepstdp import convnet
from deepstdp.convnet import TrainConfig, balanced_order, loss_and_grads, reinit_head, sgd_step
from deepstdp.numerics import RngStream


def naive_forward(p, img):
    """Direct loop evaluation of the feature extractor for one image."""
    x = img
    for i in range(1, len(p.channels) + 1):
        w, b = p.tensors[f"conv{i}.w"], p.tensors[f"conv{i}.b"]
        c_out, c_in = w.shape[:2]
        _, h, wd = x.shape
        xp = np.zeros((c_in, h + 2, wd + 2))
        xp[:, 1:-1, 1:-1] = x
        z = np.zeros((c_out, h, wd))
        for o in range(c_out):
            for r in range(h):
                for c in range(wd):
                    acc = b[o]
                    for ci in range(c_in):
                        for di in range(3):
                            for dj in range(3):
                                acc += w[o, ci, di, dj] * xp[ci, r + di, c + dj]
                    z[o, r, c] = max(acc, 0.0)
        pooled = np.zeros((c_out, h // 2, wd // 2))
        for o in range(c_out):
            for r in range(h // 2):
                for c in range(wd // 2):
                    pooled[o, r, c] = max(z[o, 2 * r + a, 2 * c + e] for a in (0, 1) for e in (0, 1))
        x = pooled
    flat = x.reshape(-1)
    fw, fb = p.tensors["fc.w"], p.tensors["fc.b"]
    return np.array([fb[j] + sum(fw[j, m] * flat[m] for m in range(flat.size)) for j in range(fw.shape[0])])


def test_zero_weights_zero_features():
    p = reference_net()
    zero = p.like({n: np.zeros_like(t) for n, t in p.tensors.items()})
    assert not convnet.forward_features(zero, np.zeros((1, 16, 16))).any()
    assert not convnet.logits(zero, np.zeros((1, 16, 16))).any()


def test_center_tap_constant_image():
    p = convnet.init_params((1, 8, 8), 3, RngStream(0), channels=(1, 1), d_feat=4)
    t = {n: np.zeros_like(v) for n, v in p.tensors.items()}
    t["conv1.w"][0, 0, 1, 1] = 2.0
    t["conv2.w"][0, 0, 1, 1] = 0.5
    t["fc.w"][:] = np.arange(1, 5)[:, None]
    feats = convnet.forward_features(p.like(t), np.full((1, 8, 8), 3.0))
    # every pooled value is 3 * 2 * 0.5 = 3; four of them feed each unit
    assert np.allclose(feats, 3.0 * 4 * np.arange(1, 5), atol=1e-12)


def test_forward_matches_naive_loops():
    p = convnet.init_params((1, 8, 8), 3, RngStream(2), channels=(3, 4), d_feat=6)
    imgs = random_images(3, seed=3, in_shape=(1, 8, 8))
    fast = convnet.forward_features(p, imgs)
    for n in range(3):
        assert np.abs(fast[n] - naive_forward(p, imgs[n])).max() < 1e-10
    assert np.allclose(convnet.forward_features(p, imgs[0]), fast[0], rtol=0, atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        convnet.forward_features(reference_net(), np.zeros((2, 1, 8, 8)))


def test_uniform_logits_give_log_k():
    p = reference_net(k=7)
    t = dict(p.tensors, **{"head.w": np.zeros((7, 64)), "head.b": np.zeros(7)})
    lg = loss_and_grads(p.like(t), random_images(4), np.array([0, 3, 6, 1]))
    assert lg.loss == pytest.approx(math.log(7), abs=1e-12)


def test_saturated_prediction_has_zero_gradient():
    p = reference_net(k=4)
    b = np.zeros(4)
    b[2] = 1e4
    lg = loss_and_grads(p.like(dict(p.tensors, **{"head.b": b})), random_images(3), np.array([2, 2, 2]))
    assert np.all(lg.per_sample_sq_grad_norm == 0.0)
    assert all(not g.any() for g in lg.grads.tensors.values())


def test_label_range_checked():
    with pytest.raises(ValueError):
        loss_and_grads(reference_net(k=3), random_images(2), np.array([0, 3]))


def finite_difference_check(p, imgs, labels, per_tensor=40, h=1e-5, seed=0):
    analytic = loss_and_grads(p, imgs, labels).grads
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in p.tensors.items():
        coords = rng.choice(t.size, min(per_tensor, t.size), replace=False)
        for c in coords:
            bumped = {n: v.copy() for n, v in p.tensors.items()}
            flat = bumped[name].reshape(-1)
            flat[c] += h
            up = loss_and_grads(p.like(bumped), imgs, labels).loss
            flat[c] -= 2 * h
            down = loss_and_grads(p.like(bumped), imgs, labels).loss
            fd = (up - down) / (2 * h)
            g = analytic.tensors[name].reshape(-1)[c]
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    return worst


def test_gradients_match_finite_differences():
    p = reference_net(k=5, seed=4)
    assert p.num_params >= 1000
    imgs = random_images(4, seed=5)
    start = time.perf_counter()
    assert finite_difference_check(p, imgs, np.array([0, 1, 4, 2])) < 1e-4
    assert time.perf_counter() - start < 30


def test_per_sample_gradients_average_to_batch():
    p = reference_net(k=5, seed=6)
    imgs, labels = random_images(5, seed=7), np.array([0, 1, 2, 3, 4])
    batch = loss_and_grads(p, imgs, labels)
    singles = [loss_and_grads(p, imgs[n : n + 1], labels[n : n + 1]) for n in range(5)]
    for name in p.names:
        mean = np.mean([s.grads.tensors[name] for s in singles], axis=0)
        assert np.abs(mean - batch.grads.tensors[name]).max() < 1e-10
    for n, s in enumerate(singles):
        sq = sum(float((g**2).sum()) for g in s.grads.tensors.values())
        assert batch.per_sample_sq_grad_norm[n] == pytest.approx(sq, rel=1e-10)


def test_batch_order_invariance():
    p = reference_net(seed=8)
    imgs, labels = random_images(6, seed=9), np.array([0, 1, 2, 3, 4, 0])
    perm = np.array([3, 5, 0, 2, 1, 4])
    assert loss_and_grads(p, imgs, labels).loss == pytest.approx(loss_and_grads(p, imgs[perm], labels[perm]).loss, rel=1e-12)


def test_sgd_step():
    p = reference_net(seed=10)
    g = p.like({n: np.ones_like(t) for n, t in p.tensors.items()})
    assert all(np.array_equal(a, b) for a, b in zip(sgd_step(p, g, 0.0).tensors.values(), p.tensors.values()))
    half = sgd_step(sgd_step(p, g, 0.05), g, 0.05)
    full = sgd_step(p, g, 0.1)
    assert all(np.allclose(half.tensors[n], full.tensors[n], atol=1e-15) for n in p.names)
    # quadratic toy: loss = 0.5 * |p|^2 has gradient p
    quad = sgd_step(p, p, 0.1)
    assert np.linalg.norm(quad.flat()) < np.linalg.norm(p.flat())


def test_reinit_head_isolation_and_determinism():
    p = reference_net(seed=11)
    a, b = reinit_head(p, RngStream(1)), reinit_head(p, RngStream(1))
    for n in p.feature_names:
        assert np.array_equal(a.tensors[n], p.tensors[n])
    assert np.array_equal(a.tensors["head.w"], b.tensors["head.w"])
    x = random_images(1, seed=12)
    assert np.linalg.norm(convnet.logits(a, x) - convnet.logits(p, x)) > 0
    assert reinit_head(p, RngStream(2), k=9).k == 9


def test_train_pass_reduces_loss():
    p = reference_net(k=3, seed=13)
    imgs = random_images(30, seed=14)
    labels = np.arange(30) % 3
    before = loss_and_grads(p, imgs, labels).loss
    cfg = TrainConfig(lr=0.05, batch=5)
    for _ in range(5):
        p, _ = convnet.train_pass(p, imgs, labels, cfg, RngStream(15))
    assert loss_and_grads(p, imgs, labels).loss < before


def test_balanced_order_covers_classes_evenly():
    labels = np.array([0] * 90 + [1] * 8 + [2] * 2)
    idx = balanced_order(labels, RngStream(0))
    counts = np.bincount(labels[idx], minlength=3)
    assert len(idx) == 100 and counts.min() >= 30


def test_checkpoint_round_trip(tmp_path):
    p = reference_net(seed=16)
    convnet.save_params(p, tmp_path / "ck")
    q = convnet.load_params(tmp_path / "ck")
    assert q.in_shape == p.in_shape and q.channels == p.channels and q.d_feat == p.d_feat
    assert all(np.array_equal(q.tensors[n], p.tensors[n]) for n in p.names)
