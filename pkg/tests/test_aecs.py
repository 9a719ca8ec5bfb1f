import numpy as np
import pytest

from autolabel.aecs import (
    AecsModel,
    CompactMatrix,
    check_undercomplete,
    encode,
    train_aecs,
    write_compact_csv,
)
from autolabel.dataset import TimeSeriesDataset, pad_batch
from autolabel.errors import ConfigurationError, ShapeError
from autolabel.neuralnet import RMSProp, clip_by_global_norm
from gradcheck import check_gradients


def sines(n, length, seed=0, channels=1):
    g = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, length)
    return [np.stack([np.sin(t * (1 + c) + g.uniform(0, 3)) for c in range(channels)], axis=1)
            for _ in range(n)]


def test_compact_matrix_shapes():
    ds = TimeSeriesDataset(tuple(sines(40, 24)))
    model = train_aecs(ds, p=12, epochs=2, seed=0)
    Z = encode(model, ds)
    assert isinstance(Z, CompactMatrix)
    assert Z.embeddings.shape == (40, 12)
    assert np.all(np.isfinite(Z.embeddings))


@pytest.mark.parametrize("n", [400, 500])
def test_compact_matrix_row_count(n):
    # encoding does not depend on training length, so an untrained model suffices for shape
    insts = sines(n, 16, seed=n)
    Z = encode(AecsModel(1, 12, seed=1), insts)
    assert Z.embeddings.shape == (n, 12)


def test_training_deterministic():
    insts = sines(6, 16)
    a = train_aecs(insts, p=4, epochs=3, seed=7)
    b = train_aecs(insts, p=4, epochs=3, seed=7)
    assert a.history == b.history
    assert encode(a, insts).embeddings.tobytes() == encode(b, insts).embeddings.tobytes()


def test_identical_rows_identical_codes():
    x = sines(1, 20)[0]
    Z = encode(AecsModel(1, 5, seed=2), [x, x.copy(), x]).embeddings
    assert np.array_equal(Z[0], Z[1]) and np.array_equal(Z[0], Z[2])


def test_variable_lengths_encoded():
    g = np.random.default_rng(3)
    insts = [g.normal(size=(t, 1)) for t in (104, 150, 198)]
    model = train_aecs(insts, p=12, epochs=1, seed=0)
    Z = encode(model, insts).embeddings
    assert Z.shape == (3, 12) and np.all(np.isfinite(Z))
    # padding does not leak into the code of a shorter series
    alone = encode(model, insts[:1]).embeddings
    np.testing.assert_allclose(Z[0], alone[0], atol=1e-12)


def test_merged_encoding_is_concatenation():
    model = AecsModel(2, 4, seed=3)
    a, b = sines(5, 12, 1, 2), sines(3, 12, 2, 2)
    whole = encode(model, a + b).embeddings
    np.testing.assert_allclose(whole, np.vstack([encode(model, a).embeddings,
                                                 encode(model, b).embeddings]), atol=1e-12)


def test_source_hash_tracks_data():
    model = AecsModel(1, 3)
    a = sines(3, 8)
    assert encode(model, a).source_hash == encode(model, [x.copy() for x in a]).source_hash
    assert encode(model, a).source_hash != encode(model, a[:2]).source_hash


def test_undercomplete_guard():
    with pytest.raises(ConfigurationError, match="shorter"):
        train_aecs(sines(4, 12), p=12)
    with pytest.raises(ConfigurationError):
        check_undercomplete(10, 1)
    check_undercomplete(13, 12)


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        encode(AecsModel(2, 3), sines(2, 8))


def test_constant_dataset_loss_decreases():
    insts = [np.full((16, 1), 0.7) for _ in range(5)]
    model = train_aecs(insts, p=4, epochs=40, seed=0)
    assert model.history[-1] < model.history[0]
    assert np.all(np.isfinite(model.history))


def test_early_stop_window():
    insts = [np.zeros((10, 1)) for _ in range(3)]
    model = train_aecs(insts, p=3, epochs=150, seed=0)
    h = model.history
    assert len(h) < 150
    # stopped: each of the last 20 epochs beat the best earlier loss by less than 1e-6
    for e in range(len(h) - 20, len(h)):
        assert min(h[:e]) - h[e] < 1e-6
    # and the epoch before that window was still improving
    e = len(h) - 21
    assert e == 0 or min(h[:e]) - h[e] >= 1e-6


def _toy():
    g = np.random.default_rng(11)
    return pad_batch([g.normal(size=(6, 1)) for _ in range(3)])


def test_full_gradient_check_toy():
    X, mask = _toy()
    model = AecsModel(1, 3, seed=1)
    loss, grads = model.loss_and_grads(X, mask)
    failures, probed = check_gradients(lambda: model.loss(X, mask), model.parameters(), grads)
    assert probed == sum(v.size for v in model.parameters().values())
    assert failures == []


def test_gradient_check_during_smoke_run():
    X, mask = _toy()
    model = AecsModel(1, 3, seed=2)
    params = model.parameters()
    opt = RMSProp()
    for epoch in range(1, 41):
        loss, grads = model.loss_and_grads(X, mask)
        if epoch % 10 == 0:
            failures, _ = check_gradients(lambda: model.loss(X, mask), params, grads,
                                          per_tensor=40, seed=epoch)
            assert failures == [], f"epoch {epoch}"
        opt.step(params, clip_by_global_norm(grads, 5.0))


def test_masked_gradient_check():
    g = np.random.default_rng(12)
    X, mask = pad_batch([g.normal(size=(t, 2)) for t in (7, 4, 5)])
    model = AecsModel(2, 3, seed=3)
    loss, grads = model.loss_and_grads(X, mask)
    failures, _ = check_gradients(lambda: model.loss(X, mask), model.parameters(), grads, per_tensor=60)
    assert failures == []


def test_write_compact_csv(tmp_path):
    Z = CompactMatrix(np.array([[1.0, 0.5], [1 / 3, -2.0]]), "x")
    write_compact_csv(Z, tmp_path / "z.csv")
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert lines == ["z0,z1", "1,0.5", "0.333333333,-2"]
