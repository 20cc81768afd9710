import numpy as np
import pytest

from unrest.embed import (
    ChannelSelection,
    EmbedError,
    PatchConfig,
    align_concat,
    axis_origins,
    embed_image,
    extract_patches,
    sample_channel_selection,
)


class FakeBackbone:
    """Stand-in handle emitting per-patch constant feature maps.

    Each patch's features are constant and equal to the value of the
    patch's top-left pixel, which makes overlap averaging checkable by
    hand.  Layer layout mirrors the real test backbone (strides 4/8/16).
    """

    input_size = 32
    input_channels = 3
    layer_channels = (2, 3, 4)
    total_channels = 9
    finest_stride = 4

    def features(self, patches):
        x = np.asarray(patches)
        if x.ndim == 3:
            x = x[:, None]
        n = x.shape[0]
        s = self.input_size
        maps = []
        for channels, stride in zip(self.layer_channels, (4, 8, 16)):
            m = np.empty((n, channels, s // stride, s // stride), dtype=np.float32)
            for i in range(n):
                m[i] = x[i, 0, 0, 0]
            maps.append(m)
        return maps


class TestAxisOrigins:
    def test_exact_fit_single_patch(self):
        assert axis_origins(224, 224, 112) == [0]

    def test_500_224_112(self):
        assert axis_origins(500, 224, 112) == [0, 112, 224, 276]

    def test_tail_clamped(self):
        origins = axis_origins(70, 32, 16)
        assert origins == [0, 16, 32, 38]
        assert origins[-1] + 32 == 70

    @pytest.mark.parametrize("dim,size,stride", [(33, 32, 16), (100, 32, 8), (64, 64, 32), (65, 64, 64)])
    def test_union_covers_axis(self, dim, size, stride):
        origins = axis_origins(dim, size, stride)
        covered = np.zeros(dim, bool)
        for o in origins:
            covered[o : o + size] = True
        assert covered.all()


class TestExtractPatches:
    def test_single_patch_at_origin(self):
        grid = np.arange(224 * 224, dtype=float).reshape(224, 224)
        patches = extract_patches(grid, PatchConfig(size=224, stride=112))
        assert len(patches) == 1
        patch, origin = patches[0]
        assert origin == (0, 0)
        assert np.array_equal(patch, grid)

    def test_500_grid_has_16_patches(self):
        grid = np.zeros((500, 500))
        patches = extract_patches(grid, PatchConfig(size=224, stride=112))
        assert len(patches) == 16
        origins = {o for _, o in patches}
        expected = {(oy, ox) for oy in (0, 112, 224, 276) for ox in (0, 112, 224, 276)}
        assert origins == expected

    def test_small_grid_replicate_padded(self):
        grid = np.ones((10, 12))
        patches = extract_patches(grid, PatchConfig(size=32, stride=16))
        assert len(patches) == 1
        patch, origin = patches[0]
        assert patch.shape == (32, 32)
        assert (patch == 1).all()

    @pytest.mark.parametrize("shape", [(64, 64), (70, 40), (33, 97)])
    def test_union_of_footprints_covers_grid(self, shape):
        grid = np.zeros(shape)
        cfg = PatchConfig(size=32, stride=16)
        covered = np.zeros((max(shape[0], 32), max(shape[1], 32)), bool)
        for _, (oy, ox) in extract_patches(grid, cfg):
            covered[oy : oy + 32, ox : ox + 32] = True
        assert covered.all()

    def test_rejects_empty_grid(self):
        with pytest.raises(EmbedError):
            extract_patches(np.zeros((0, 5)), PatchConfig(size=4, stride=2))


class TestAlignConcat:
    def test_constant_maps_concatenate(self):
        maps = [
            np.full((1, 2, 8, 8), 1.0, np.float32),
            np.full((1, 3, 4, 4), 2.0, np.float32),
            np.full((1, 4, 2, 2), 3.0, np.float32),
        ]
        out = align_concat(maps)
        assert out.shape == (1, 9, 8, 8)
        vec = out[0, :, 3, 5]
        assert np.array_equal(vec, np.array([1, 1, 2, 2, 2, 3, 3, 3, 3], np.float32))

    def test_nearest_neighbor_indexing(self):
        deep = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
        fine = np.zeros((1, 1, 8, 8), np.float32)
        out = align_concat([fine, deep])
        for i in range(8):
            for j in range(8):
                assert out[0, 1, i, j] == deep[0, 0, i // 4, j // 4]

    def test_order_stable(self):
        rng = np.random.Generator(np.random.Philox(8))
        maps = [rng.standard_normal((2, c, s, s)).astype(np.float32) for c, s in [(2, 8), (3, 4), (4, 2)]]
        a = align_concat(maps)
        b = align_concat([m.copy() for m in maps])
        assert np.array_equal(a, b)


class TestChannelSelection:
    def test_keep_all_identity(self):
        sel = sample_channel_selection(9, 9, seed=1, layer_channels=(2, 3, 4))
        assert sel.indices == tuple(range(9))

    def test_deterministic(self):
        a = sample_channel_selection(448, 100, seed=42, layer_channels=(64, 128, 256))
        b = sample_channel_selection(448, 100, seed=42, layer_channels=(64, 128, 256))
        assert a.indices == b.indices

    def test_cardinality_and_sortedness(self):
        sel = sample_channel_selection(448, 100, seed=7, layer_channels=(64, 128, 256))
        assert len(sel.indices) == 100
        assert len(set(sel.indices)) == 100
        assert list(sel.indices) == sorted(sel.indices)

    def test_layer_provenance(self):
        sel = ChannelSelection(indices=(0, 1, 2, 5, 8), total=9, seed=0, layer_channels=(2, 3, 4))
        assert sel.layer_of_kept().tolist() == [0, 0, 1, 2, 2]

    def test_keep_more_than_total_rejected(self):
        with pytest.raises(ValueError):
            sample_channel_selection(5, 6, seed=0, layer_channels=(5,))


class TestEmbedImage:
    def selection(self, keep=9):
        return sample_channel_selection(9, keep, seed=3, layer_channels=(2, 3, 4))

    def test_single_patch_equals_patch_embedding(self):
        handle = FakeBackbone()
        grid = np.full((32, 32), 0.5, np.float32)
        emb = embed_image(grid, PatchConfig(size=32, stride=16), handle, self.selection())
        assert emb.lattice.shape == (8, 8, 9)
        assert len(emb.patch_origins) == 1
        assert np.array_equal(emb.lattice, emb.patch_grids[0])

    def test_overlap_averaging(self):
        handle = FakeBackbone()
        # 32x48 grid: origins (0,0) and (0,16); patch constants a and b
        grid = np.zeros((32, 48), np.float32)
        grid[0, 0] = 2.0   # top-left of patch 1 -> constant a = 2
        grid[0, 16] = 4.0  # top-left of patch 2 -> constant b = 4
        emb = embed_image(grid, PatchConfig(size=32, stride=16), handle, self.selection())
        assert len(emb.patch_origins) == 2
        lat = emb.lattice
        # columns 0..3 only patch 1; 4..7 overlap; 8..11 only patch 2
        assert np.allclose(lat[:, :4, :], 2.0)
        assert np.allclose(lat[:, 4:8, :], 3.0)
        assert np.allclose(lat[:, 8:, :], 4.0)

    def test_full_pipeline_no_empty_positions(self, backbone32):
        rng = np.random.Generator(np.random.Philox(12))
        grid = rng.uniform(-1, 1, size=(70, 70)).astype(np.float32)
        sel = sample_channel_selection(
            backbone32.total_channels, 24, seed=5, layer_channels=backbone32.layer_channels
        )
        emb = embed_image(grid, PatchConfig(size=32, stride=16), backbone32, sel)
        assert emb.lattice.shape[2] == 24
        assert np.isfinite(emb.lattice).all()
        # padded to 72 -> 18 lattice cells per axis
        assert emb.lattice.shape[:2] == (18, 18)
        assert emb.image_shape == (70, 70)

    def test_determinism(self, backbone32):
        rng = np.random.Generator(np.random.Philox(13))
        grid = rng.uniform(-1, 1, size=(64, 64)).astype(np.float32)
        sel = sample_channel_selection(
            backbone32.total_channels, 16, seed=6, layer_channels=backbone32.layer_channels
        )
        cfg = PatchConfig(size=32, stride=16)
        a = embed_image(grid, cfg, backbone32, sel)
        b = embed_image(grid, cfg, backbone32, sel)
        assert np.array_equal(a.lattice, b.lattice)
        assert np.array_equal(a.patch_grids, b.patch_grids)

    def test_rejects_nan_grid(self, backbone32):
        grid = np.full((32, 32), np.nan, np.float32)
        sel = sample_channel_selection(
            backbone32.total_channels, 8, seed=1, layer_channels=backbone32.layer_channels
        )
        with pytest.raises(EmbedError):
            embed_image(grid, PatchConfig(size=32, stride=16), backbone32, sel)

    def test_rejects_misaligned_stride(self, backbone32):
        grid = np.zeros((64, 64), np.float32)
        sel = sample_channel_selection(
            backbone32.total_channels, 8, seed=1, layer_channels=backbone32.layer_channels
        )
        with pytest.raises(EmbedError):
            embed_image(grid, PatchConfig(size=32, stride=10), backbone32, sel)


class TestBackboneHandle:
    def test_shapes_and_descriptor(self, backbone32):
        assert backbone32.layer_channels == (16, 32, 64)
        assert [l.stride for l in backbone32.layers] == [4, 8, 16]
        desc = backbone32.descriptor()
        assert desc["input_size"] == 32 and len(desc["sha256"]) == 64

    def test_deterministic_inference(self, backbone32):
        rng = np.random.Generator(np.random.Philox(14))
        x = rng.uniform(-1, 1, (2, 32, 32)).astype(np.float32)
        f1 = backbone32.features(x)
        f2 = backbone32.features(x)
        for a, b in zip(f1, f2):
            assert np.array_equal(a, b)

    def test_nondegenerate_features(self, backbone32):
        zero = np.zeros((1, 32, 32), np.float32)
        onehot = zero.copy()
        onehot[0, 16, 16] = 1.0
        fz = backbone32.features(zero)
        fo = backbone32.features(onehot)
        assert any(not np.array_equal(a, b) for a, b in zip(fz, fo))

    def test_corrupt_file_rejected(self, tmp_path):
        from unrest.backbone import BackboneError, BackboneHandle

        bad = tmp_path / "bad.onnx"
        bad.write_bytes(b"\x01\x02garbage")
        with pytest.raises(BackboneError):
            BackboneHandle.load(bad, input_size=32)

    def test_missing_file_rejected(self, tmp_path):
        from unrest.backbone import BackboneError, BackboneHandle

        with pytest.raises(BackboneError):
            BackboneHandle.load(tmp_path / "absent.onnx", input_size=32)

    def test_wrong_output_names_rejected(self, tmp_path):
        import numpy as np

        from unrest.backbone import BackboneError, BackboneHandle
        from unrest.onnxlite import GraphBuilder, serialize_model

        b = GraphBuilder("wrong")
        b.add_input("input", ("N", 3, "H", "W"))
        b.add_node("Relu", ["input"], ["only"])
        b.add_output("only", ("N", 3, "H", "W"))
        path = tmp_path / "wrong.onnx"
        path.write_bytes(serialize_model(b.model()))
        with pytest.raises(BackboneError):
            BackboneHandle.load(path, input_size=32)
