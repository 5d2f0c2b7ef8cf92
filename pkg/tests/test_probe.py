import numpy as np
import pytest

from conftest import FD_RTOL, numeric_grad, rel_err
from windae import ndnet, probe


def sort_rank(p, true_class):
    """Oracle: stable sort by (-probability, class index), position of the truth."""
    order = sorted(range(len(p)), key=lambda j: (-p[j], j))
    return order.index(true_class) + 1


def separable_set(per_class=20):
    feats = np.zeros((11 * per_class, 4, 16))
    labels = np.repeat(np.arange(-5, 6), per_class)
    for i, n_w in enumerate(labels):
        feats[i, 0, n_w + 5] = 1.0
    return feats, labels


def test_rank_examples():
    p = np.zeros(11)
    p[6] = 1.0
    assert probe.rank_of_truth(p, 6) == 1
    assert probe.rank_of_truth(np.full(11, 1 / 11), 0) == 1
    assert probe.rank_of_truth(np.full(11, 1 / 11), 10) == 11


def test_rank_matches_sort_oracle(rng):
    probs = rng.dirichlet(np.ones(11), size=10_000)
    # inject ties
    probs[::7, 3] = probs[::7, 5]
    truth = rng.integers(0, 11, size=10_000)
    vec = probe.ranks(probs, truth)
    for i in range(10_000):
        expected = sort_rank(probs[i], truth[i])
        assert probe.rank_of_truth(probs[i], truth[i]) == expected
        assert vec[i] == expected


def test_histogram_totals():
    h = probe.RankHistogram.from_ranks([1, 1, 2, 11])
    assert h.total == 4
    assert h.counts[0] == 2 and h.counts[10] == 1
    assert sum(h.rates()) == pytest.approx(1.0)


def test_perfect_predictor():
    class Perfect:
        def predict_proba(self, feats):
            return np.eye(11)[feats]

    h = probe.evaluate(Perfect(), np.arange(11), np.arange(-5, 6))
    assert h.rates()[0] == 1.0


def test_uniform_random_predictor(rng):
    n = 55_000

    class Random:
        def predict_proba(self, feats):
            return rng.dirichlet(np.ones(11), size=len(feats))

    h = probe.evaluate(Random(), np.zeros(n), rng.integers(-5, 6, size=n))
    se = np.sqrt((1 / 11) * (10 / 11) / n)
    assert np.all(np.abs(np.array(h.rates()) - 1 / 11) < 5 * se)


def test_empty_test_set():
    p = probe.Probe()
    with pytest.raises(ValueError):
        probe.evaluate(p, np.zeros((0, 4, 16)), np.zeros(0, dtype=int))


def test_label_out_of_range():
    with pytest.raises(ValueError):
        probe.train_probe(np.zeros((1, 4, 16)), [6])


def test_separable_toy_reaches_full_accuracy():
    feats, labels = separable_set()
    ckpt = probe.train_probe(feats, labels, probe.ProbeConfig(lr=0.5, epochs=100, seed=1),
                             probe.ProbeArchitecture(filters_used=1))
    h = probe.evaluate(ckpt, feats, labels)
    assert h.rates()[0] == 1.0


def test_zero_epochs_is_initialization():
    ckpt = probe.train_probe(np.zeros((3, 4, 16)), [0, 1, 2], probe.ProbeConfig(epochs=0, seed=2))
    ref = probe.Probe()
    ndnet.init_uniform(ref.net, np.random.default_rng(np.random.SeedSequence(2).spawn(2)[0]))
    for p in ref.parameters():
        assert ckpt.params[p.name].tobytes() == p.value.tobytes()


def test_training_deterministic(rng):
    feats = rng.random((50, 4, 16))
    labels = rng.integers(-5, 6, size=50)
    conf = probe.ProbeConfig(epochs=5, seed=3)
    a = probe.train_probe(feats, labels, conf)
    b = probe.train_probe(feats, labels, conf)
    assert a.to_json() == b.to_json()


def test_filters_restricted(rng):
    feats = rng.random((5, 4, 16))
    p = probe.Probe(probe.ProbeArchitecture(filters_used=2))
    np.testing.assert_array_equal(p.inputs(feats), feats[:, :2, :].reshape(5, 32))


def test_outputs_are_probabilities(rng):
    p = probe.Probe()
    ndnet.init_uniform(p.net, rng)
    probs = p.predict_proba(rng.random((100, 4, 16)) * 50)
    assert np.all(probs >= 0)
    assert np.all(np.abs(probs.sum(axis=1) - 1) < 1e-12)


def test_evaluation_order_independent(rng):
    p = probe.Probe()
    ndnet.init_uniform(p.net, rng)
    feats = rng.random((40, 4, 16))
    labels = rng.integers(-5, 6, size=40)
    perm = rng.permutation(40)
    assert probe.evaluate(p, feats, labels) == probe.evaluate(p, feats[perm], labels[perm])


def test_probe_gradient(rng):
    for _ in range(10):
        p = probe.Probe(probe.ProbeArchitecture(filters_used=3, hidden=16))
        ndnet.init_uniform(p.net, rng)
        for prm in p.parameters():
            if prm.name.endswith("bias"):
                prm.value[...] = rng.standard_normal(prm.value.shape) * 0.1
        x = rng.random((4, 48))
        y = rng.integers(0, 11, size=4)

        def loss():
            return ndnet.softmax_xent(p.net.forward(x), y)[0]

        p.net.zero_grad()
        _, _, g = ndnet.softmax_xent(p.net.forward(x), y)
        gx = p.net.backward(g)
        assert rel_err(gx, numeric_grad(loss, x)) < FD_RTOL
        for prm in p.parameters():
            assert rel_err(prm.grad, numeric_grad(loss, prm.value)) < FD_RTOL


def test_filter_sweep_and_table(tmp_path, rng):
    feats, labels = separable_set(5)
    res = probe.filter_sweep(feats, labels, feats, labels, probe.ProbeConfig(epochs=2))
    assert set(res) == {1, 2, 3, 4}
    probe.write_rank_table({k: h for k, (_, h) in res.items()}, tmp_path / "t.csv")
    table = probe.read_rank_table(tmp_path / "t.csv")
    assert set(table) == {1, 2, 3, 4}
    for k, rates in table.items():
        assert len(rates) == 11
        assert abs(sum(rates) - 1) < 1e-9
        assert rates == res[k][1].rates()


def test_checkpoint_roundtrip(tmp_path, rng):
    feats = rng.random((30, 4, 16))
    labels = rng.integers(-5, 6, size=30)
    ckpt = probe.train_probe(feats, labels, probe.ProbeConfig(epochs=2))
    ckpt.save(tmp_path / "p.json")
    from windae.checkpoint import ModelCheckpoint
    back = probe.Probe.from_checkpoint(ModelCheckpoint.load(tmp_path / "p.json"))
    assert back.predict_proba(feats).tobytes() == probe.Probe.from_checkpoint(ckpt).predict_proba(feats).tobytes()
