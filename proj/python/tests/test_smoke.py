import numpy as np
import pytest

import curvlab

TINY = """
dataset = synthetic
activation = relu
stream = random_label
synthetic_per_class = 12
synthetic_dim = 10
subset_size = 100
hidden_widths = 8,8
num_tasks = 2
epochs_per_task = 3
batch_size = 32
probe_batch = 20
"""


def test_effective_rank():
    assert curvlab.effective_rank(np.array([1.0, 0.0, 0.0])) == 1
    assert curvlab.effective_rank(np.ones(100)) == 100
    assert curvlab.effective_rank(np.zeros(4)) == 0


def test_fisher_rank_matches_numpy_svd():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((120, 8)) @ rng.standard_normal((8, 30))
    report = curvlab.empirical_fisher_rank(g)
    s = np.linalg.svd(g, compute_uv=False)
    assert report["erank"] == curvlab.effective_rank(s)
    assert report["max_rank"] == 30
    assert report["relative"] == pytest.approx(report["erank"] / 30)


def test_gradients_agree():
    layout = [5, 7, 3]
    params = curvlab.init_params(layout, seed=3)
    assert params.shape == (curvlab.param_count(layout),)
    rng = np.random.default_rng(1)
    x = rng.random((6, 5))
    y = np.array([0, 1, 2, 0, 1, 2])
    g = curvlab.batch_gradient(layout, params, "tanh", x, y)
    cols = curvlab.per_sample_gradients(layout, params, "tanh", x, y)
    np.testing.assert_allclose(cols.mean(axis=1), g, atol=1e-12)

    def loss(p):
        logits = curvlab.forward(layout, p, "tanh", x)
        logits = logits - logits.max(axis=1, keepdims=True)
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        return -logp[np.arange(len(y)), y].mean()

    e = np.zeros_like(params)
    e[4] = 1e-6
    fd = (loss(params + e) - loss(params - e)) / 2e-6
    assert fd == pytest.approx(g[4], rel=1e-5, abs=1e-9)


def test_penalties():
    layout = [4, 3, 2]
    init = curvlab.init_params(layout, seed=0)
    rng = np.random.default_rng(2)
    params = init + 0.1 * rng.standard_normal(init.shape)
    w, w_grad = curvlab.wasserstein_penalty(layout, params, init)
    r, r_grad = curvlab.regenerative_penalty(layout, params, init)
    assert 0.0 <= w <= r
    assert r == pytest.approx(np.sum((params - init) ** 2))
    assert w_grad.shape == r_grad.shape == params.shape


def test_config_errors_raise_value_error():
    with pytest.raises(ValueError, match="line 1"):
        curvlab.normalize_config("num_tasks = -3\n")
    assert "activation = relu" in curvlab.normalize_config(TINY)


def test_run_is_deterministic(tmp_path):
    a = curvlab.run(TINY, tmp_path / "a.csv")
    b = curvlab.run(TINY, tmp_path / "b.csv")
    assert a == b
    assert len(a) == 2
    text = (tmp_path / "a.csv").read_text()
    assert text == (tmp_path / "b.csv").read_text()
    assert text.splitlines()[0] == curvlab.csv_header()


def test_sweep_and_fixtures(tmp_path):
    rows = curvlab.sweep(TINY, ["none", "wasserstein"], [0.001], [0], tmp_path / "sweep")
    assert [r["regularizer"] for r in rows] == ["none", "wasserstein"]
    assert all(r["seeds_ok"] == 1 for r in rows)
    assert (tmp_path / "sweep" / "summary.csv").exists()

    curvlab.make_fixtures(tmp_path)
    x, y, classes = curvlab.load_idx(
        tmp_path / "fixture-images-idx3-ubyte", tmp_path / "fixture-labels-idx1-ubyte"
    )
    assert x.shape == (2, 16)
    assert list(y) == [3, 7]
    assert classes == 8
    with pytest.raises(OSError):
        curvlab.load_idx(tmp_path / "missing", tmp_path / "missing")
