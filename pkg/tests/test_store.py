import numpy as np
import pytest

from unrest.embed import ChannelSelection, EmbeddingMap
from unrest.gaussians import LayerWeights, build_model, fit, score_map
from unrest.store import StoreError, load_model, save_model, serialize_model


def make_model(seed=200, metric="wnlml", threshold=2.5):
    rng = np.random.Generator(np.random.Philox(seed))
    k = 4
    train = rng.standard_normal((k + 10, 3, 3, k))
    g = fit(train, epsilon=0.01)
    sel = ChannelSelection(indices=(0, 2, 5, 7), total=9, seed=3, layer_channels=(2, 3, 4))
    model = build_model(
        g, sel, LayerWeights((0.0, 1.0, 5.0)), metric=metric,
        fingerprint="f" * 64, config={"patch": {"size": 12, "stride": 6}},
    )
    if threshold is not None:
        model = model.with_threshold(threshold)
    return model


def make_emb(rng, k=4):
    grids = rng.standard_normal((1, 3, 3, k)).astype(np.float32)
    return EmbeddingMap(
        lattice=grids[0],
        cell=4,
        image_shape=(12, 12),
        patch_size=12,
        patch_origins=[(0, 0)],
        patch_grids=grids,
    )


class TestRoundTrip:
    def test_scoring_bit_identical_after_reload(self, tmp_path):
        model = make_model()
        path = tmp_path / "m.pdm"
        save_model(model, path)
        back = load_model(path)
        rng = np.random.Generator(np.random.Philox(7))
        emb = make_emb(rng)
        a = score_map(emb, model)
        b = score_map(emb, back)
        assert np.array_equal(a, b)

    def test_all_fields_survive(self, tmp_path):
        model = make_model()
        path = tmp_path / "m.pdm"
        save_model(model, path)
        back = load_model(path)
        assert back.metric == model.metric
        assert back.threshold == model.threshold
        assert back.fingerprint == model.fingerprint
        assert back.score_offset == model.score_offset
        assert back.selection == model.selection
        assert back.layer_weights == model.layer_weights
        assert back.config == model.config
        assert np.array_equal(back.gaussians.mean, model.gaussians.mean)
        assert np.array_equal(back.gaussians.precision, model.gaussians.precision)
        assert np.array_equal(back.gaussians.logdet, model.gaussians.logdet)

    def test_serialization_deterministic(self):
        a = serialize_model(make_model())
        b = serialize_model(make_model())
        assert a == b

    def test_uncalibrated_model_roundtrips(self, tmp_path):
        model = make_model(threshold=None)
        path = tmp_path / "m.pdm"
        save_model(model, path)
        assert load_model(path).threshold is None


class TestIntegrity:
    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "m.pdm"
        save_model(make_model(), path)
        blob = path.read_bytes()
        for cut in (len(blob) - 1, len(blob) // 2, 10):
            (tmp_path / "t.pdm").write_bytes(blob[:cut])
            with pytest.raises(StoreError):
                load_model(tmp_path / "t.pdm")

    def test_bitflip_rejected(self, tmp_path):
        path = tmp_path / "m.pdm"
        save_model(make_model(), path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        (tmp_path / "x.pdm").write_bytes(bytes(blob))
        with pytest.raises(StoreError):
            load_model(tmp_path / "x.pdm")

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "x.pdm").write_bytes(b"NOPE" + b"\x00" * 100)
        with pytest.raises(StoreError):
            load_model(tmp_path / "x.pdm")

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(StoreError):
            load_model(tmp_path / "absent.pdm")

    def test_fingerprint_guard(self, tmp_path):
        path = tmp_path / "m.pdm"
        save_model(make_model(), path)
        assert load_model(path, expect_fingerprint="f" * 64).metric == "wnlml"
        with pytest.raises(StoreError):
            load_model(path, expect_fingerprint="0" * 64)
