import numpy as np
import pytest

from conftest import FD_RTOL, numeric_grad, rel_err
from windae import ae, ndnet, windgen
from windae.checkpoint import CheckpointError, ModelCheckpoint


def small_set(n_per_pattern=1, max_segments=2, seed=3):
    params = windgen.GenParams(samples_per_pattern=n_per_pattern, max_segments=max_segments, seed=seed)
    return windgen.generate_split(params, "train")


def ae_gradcheck(model, rng, n_coords=25):
    """Finite-difference check of every parameter array (sampled coordinates) and the input."""
    x = rng.standard_normal((2, 2, model.arch.L))
    drop = model.decoder.layers[2]
    drop.frozen_mask = (rng.random((2, model.arch.hidden)) >= drop.rate) / (1 - drop.rate)
    target = x.reshape(2, -1).copy()

    def loss():
        return ndnet.mse_loss(model.forward(x, train=True), target)[0]

    model.zero_grad()
    _, g = ndnet.mse_loss(model.forward(x, train=True), target)
    gx = model.backward(g)
    errs = []
    for p in model.parameters() + [ndnet.Param("input", x)]:
        analytic = gx if p.name == "input" else p.grad
        arr = x if p.name == "input" else p.value
        coords = rng.choice(arr.size, size=min(n_coords, arr.size), replace=False)
        num = numeric_grad(loss, arr, coords)
        errs.append(rel_err(analytic.reshape(-1)[coords], num))
    drop.frozen_mask = None
    return max(errs)


def test_architecture_shapes():
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((3, 2, 128))
    assert model.encode(x).shape == (3, 4, 16)
    assert model.forward(x).shape == (3, 256)


def test_end_to_end_gradient(rng):
    for _ in range(10):
        model = ae.Autoencoder(ae.AeArchitecture(hidden=32))
        model.initialize(rng)
        for p in model.parameters():
            if p.name.endswith("bias"):
                p.value[...] = rng.standard_normal(p.value.shape) * 0.1
        assert ae_gradcheck(model, rng) < FD_RTOL


def test_features_nonnegative_and_shape():
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    f = ae.extract_features(model, small_set())
    assert f.shape == (7, 4, 16)
    assert np.all(f >= 0)


def test_zero_model_gives_zero_features():
    f = ae.extract_features(ae.Autoencoder(), small_set())
    assert np.all(f == 0)


def test_identical_samples_identical_features():
    s = small_set()[3]
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    f = ae.extract_features(model, [s, s])
    assert f[0].tobytes() == f[1].tobytes()


def test_reconstruct_deterministic_and_shape_checked():
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    s = small_set()[2]
    a = ae.reconstruct(model, s)
    assert a.shape == (256,)
    assert a.tobytes() == ae.reconstruct(model, s).tobytes()
    with pytest.raises(ValueError):
        ae.reconstruct(model, np.zeros((1, 2, 64)))


def test_zero_epochs_returns_initialization():
    x, _ = windgen.stack(small_set())
    conf = ae.AeConfig(epochs=0, seed=4)
    res = ae.train(x, x, conf)
    assert res.log == []
    ref = ae.Autoencoder()
    ref.initialize(np.random.default_rng(np.random.SeedSequence(4).spawn(3)[0]))
    for p in ref.parameters():
        assert res.final.params[p.name].tobytes() == p.value.tobytes()


def test_empty_train_set_rejected():
    with pytest.raises(ValueError):
        ae.train(np.zeros((0, 2, 128)), np.zeros((0, 2, 128)), ae.AeConfig(epochs=1))


def test_training_is_reproducible():
    x, _ = windgen.stack(small_set())
    conf = ae.AeConfig(lr=0.05, epochs=3, seed=1)
    a = ae.train(x, x[:3], conf)
    b = ae.train(x, x[:3], conf)
    assert a.final.to_json() == b.final.to_json()
    assert a.best.to_json() == b.best.to_json()
    assert [r.to_line() for r in a.log] == [r.to_line() for r in b.log]


def test_log_epochs_and_best_selection():
    x, _ = windgen.stack(small_set(max_segments=3))
    res = ae.train(x, x[::2], ae.AeConfig(lr=0.05, epochs=7, eval_every=2, seed=2))
    epochs = [r.epoch for r in res.log]
    assert epochs == [0, 2, 4, 6, 7]
    losses = [r.test_loss for r in res.log]
    assert res.best_epoch == epochs[int(np.argmin(losses))]
    # the stored best checkpoint reproduces the minimum logged test loss
    assert ae.reconstruction_loss(res.best, x[::2]) == min(losses)


def test_log_loss_equals_reconstruction_path():
    x, _ = windgen.stack(small_set())
    res = ae.train(x, x, ae.AeConfig(lr=0.05, epochs=2, seed=0))
    assert res.log[-1].train_loss == ae.reconstruction_loss(res.final, x)
    per = ae.per_sample_loss(res.final, x)
    out = ae.reconstruct(res.final, x[0])
    assert per[0] == pytest.approx(ndnet.mse_loss(out, x[0].reshape(-1))[0], rel=1e-15)


def test_divergence_is_reported():
    x, _ = windgen.stack(small_set())
    with pytest.raises(ae.TrainingDiverged, match="epoch"):
        ae.train(x, x, ae.AeConfig(lr=1e6, epochs=50, seed=0))


def test_checkpoint_roundtrip_bitwise(tmp_path):
    model = ae.Autoencoder(ae.AeArchitecture(c1=3, hidden=20))
    model.initialize(np.random.default_rng(5))
    ckpt = model.to_checkpoint({"seed": 5})
    ckpt.save(tmp_path / "m.json")
    back = ModelCheckpoint.load(tmp_path / "m.json")
    x = np.random.default_rng(6).standard_normal((4, 2, 128))
    assert ae.reconstruct(back, x).tobytes() == ae.reconstruct(model, x).tobytes()
    assert back.to_json() == ckpt.to_json()


def test_checkpoint_kind_checked():
    ckpt = ae.Autoencoder().to_checkpoint()
    ckpt.kind = "probe"
    with pytest.raises(CheckpointError):
        ae.Autoencoder.from_checkpoint(ckpt)


def test_pattern_averages():
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    s = small_set(n_per_pattern=3)
    avg = ae.pattern_averaged_features(model, s)
    assert set(avg) == {p.symbol() for p in windgen.enumerate_patterns(2)}
    feats = ae.extract_features(model, s)
    grp = [i for i, t in enumerate(s) if t.pattern.symbol() == "+-"]
    np.testing.assert_allclose(avg["+-"], feats[grp].mean(axis=0))
    # permutation invariance
    rev = ae.pattern_averaged_features(model, s[::-1])
    np.testing.assert_allclose(rev["+-"], avg["+-"], rtol=1e-14)


def test_pattern_average_of_identical_samples():
    model = ae.Autoencoder()
    model.initialize(np.random.default_rng(0))
    s = small_set()[4]
    avg = ae.pattern_averaged_features(model, [s, s, s])
    np.testing.assert_allclose(avg[s.pattern.symbol()], ae.extract_features(model, [s])[0], rtol=1e-15)


def test_pattern_average_missing_group():
    model = ae.Autoencoder()
    with pytest.raises(ValueError, match="no samples"):
        ae.pattern_averaged_features(model, small_set(max_segments=1), patterns=["++"])
