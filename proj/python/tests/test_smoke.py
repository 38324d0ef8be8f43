import math

import numpy as np
import pytest

import ican


def test_mfb_matches_dense_bilinear_form():
    rng = np.random.default_rng(0)
    dx, dy, k, o = 4, 3, 2, 5
    x, y = rng.normal(size=dx), rng.normal(size=dy)
    u, v = rng.normal(size=(dx, k * o)), rng.normal(size=(dy, k * o))
    z = ican.mfb_fuse(x, y, u, v, k)
    expected = [x @ (u[:, i * k:(i + 1) * k] @ v[:, i * k:(i + 1) * k].T) @ y for i in range(o)]
    np.testing.assert_allclose(z, expected, rtol=1e-12)


def test_block_matches_einsum():
    rng = np.random.default_rng(1)
    L, M, N, R, dx, dy, o = 2, 3, 2, 2, 4, 5, 3
    a, b, c = rng.normal(size=(dx, L * R)), rng.normal(size=(dy, M * R)), rng.normal(size=(o, N * R))
    cores = rng.normal(size=(R, L, M, N))
    x, y = rng.normal(size=dx), rng.normal(size=dy)
    z = ican.block_fuse(x, y, a, b, c, cores)
    expected = sum(
        np.einsum("lmn,a,al,b,bm,in->i", cores[r], x, a[:, r * L:(r + 1) * L], y,
                  b[:, r * M:(r + 1) * M], c[:, r * N:(r + 1) * N])
        for r in range(R)
    )
    np.testing.assert_allclose(z, expected, rtol=1e-12)


def test_batched_mfb_rows_match_single():
    rng = np.random.default_rng(2)
    xs, ys = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    u, v = rng.normal(size=(4, 6)), rng.normal(size=(2, 6))
    batch = ican.mfb_fuse(xs, ys, u, v, 3)
    for i in range(3):
        np.testing.assert_allclose(batch[i], ican.mfb_fuse(xs[i], ys[i], u, v, 3), rtol=1e-13)


def test_weighted_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 2, 3))
    targets = [[0, 1], [0, 2], [1, 1], [2, 0]]
    loss, grad = ican.weighted_ce_loss(logits, targets)
    assert math.isfinite(loss) and grad.shape == logits.shape
    eps = 1e-6
    for idx in [(0, 0, 0), (1, 1, 2), (3, 0, 1)]:
        up, down = logits.copy(), logits.copy()
        up[idx] += eps
        down[idx] -= eps
        numeric = (ican.weighted_ce_loss(up, targets)[0] - ican.weighted_ce_loss(down, targets)[0]) / (2 * eps)
        assert grad[idx] == pytest.approx(numeric, rel=1e-6, abs=1e-9)


def test_zones_and_labels():
    zones = ican.standard_zones()
    assert len(zones) == 18
    assert [z["price_line"] for z in zones][:3] == [157, 202, 247]
    assert ican.price_to_label(179.99) == 0
    assert ican.price_to_label(180.0) == 1
    assert ican.price_to_label(5000.0) == 17


def test_vote_distribution():
    uniform = [[0.25] * 4 for _ in range(5)]
    r = ican.vote(uniform, 240.0)
    assert r["distribution"] == pytest.approx([1 / 18] * 18, abs=0)
    peaked = [[0.0, 1.0, 0.0, 0.0]] * 5
    r = ican.vote(peaked, 240.0)
    assert sum(r["distribution"]) == pytest.approx(1.0)
    assert len(ican.coarse_partitions(5, 4, 240.0)) == 5


def test_config_round_trip():
    c = ican.RunConfig()
    c["cells"] = "4"
    c.set("variant", "block")
    again = ican.RunConfig(c.to_text())
    assert again["cells"] == "4" and again.get("variant") == "block"
    assert "learning_rate" in ican.RunConfig.keys()
    with pytest.raises(Exception):
        c.set("no_such_key", "1")


def test_generate_train_evaluate_attention(tmp_path):
    c = ican.RunConfig("seed=4\nsamples=120\nmax_epochs=2\nd_v=8\npositions=9\nd_a=6\n"
                       "o_attn=6\nattn_hidden=8\no_pred=12\ncells=2\n")
    assert ican.generate(c, tmp_path / "data") == 120
    log = ican.train(c, tmp_path / "data", tmp_path / "run")
    assert [e["epoch"] for e in log] == [1, 2]
    assert all(math.isfinite(e["loss"]) for e in log)

    report = ican.evaluate(tmp_path / "run" / "best.ckpt", tmp_path / "data")
    top = report["topk"]
    assert 0.0 <= top[3] <= top[5] <= top[7] <= 1.0
    assert len(report["predictions"]) == len(report["samples"])

    visual, attribute = ican.attention(tmp_path / "run" / "best.ckpt", tmp_path / "data", report["samples"][0])
    assert visual.shape == (2, 9)
    np.testing.assert_allclose(visual.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(attribute.sum(axis=1), 1.0, atol=1e-12)
