import gzip
import json
import shutil

import numpy as np
import pytest

from sigmadelta.data import (FrameDataset, gen_random_network,
                             gen_random_stream, load_idx, save_idx,
                             temporal_reshuffle)
from sigmadelta.network import forward_original


def blob_dataset(rng, n=64, width=16, classes=4):
    labels = rng.integers(0, classes, n)
    centers = rng.uniform(0.2, 0.8, (classes, width))
    frames = np.clip(centers[labels] + rng.normal(0, 0.05, (n, width)), 0, 1)
    # keep everything on the 1/255 grid so IDX round-trips exactly
    frames = np.round(frames * 255) / 255
    return FrameDataset(frames, labels)


class TestIdxIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = blob_dataset(rng)
        save_idx(ds, tmp_path / "imgs", tmp_path / "labels",
                 sidecar_path=tmp_path / "meta.json", meta={"seed": 0})
        loaded = load_idx(tmp_path / "imgs", tmp_path / "labels")
        assert np.array_equal(loaded.frames, ds.frames)
        assert np.array_equal(loaded.labels, ds.labels)
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["count"] == len(ds)
        assert meta["seed"] == 0

    def test_gzip_transparent(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = blob_dataset(rng, n=10)
        save_idx(ds, tmp_path / "imgs", tmp_path / "labels")
        for name in ("imgs", "labels"):
            with open(tmp_path / name, "rb") as f_in, \
                    gzip.open(tmp_path / f"{name}.gz", "wb") as f_out:
                shutil.copyfileobj(f_in, f_out)
        loaded = load_idx(tmp_path / "imgs.gz", tmp_path / "labels.gz")
        assert np.array_equal(loaded.frames, ds.frames)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x04" + b"\x00" * 12)
        with pytest.raises(ValueError, match="magic"):
            load_idx(tmp_path / "bad")

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(2)
        ds = blob_dataset(rng, n=10)
        save_idx(ds, tmp_path / "imgs")
        data = (tmp_path / "imgs").read_bytes()
        (tmp_path / "short").write_bytes(data[:-5])
        with pytest.raises(ValueError, match="truncated"):
            load_idx(tmp_path / "short")

    def test_label_count_mismatch(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = blob_dataset(rng, n=10)
        save_idx(ds, tmp_path / "imgs")
        short = FrameDataset(ds.frames[:5], ds.labels[:5])
        save_idx(short, tmp_path / "imgs5", tmp_path / "labels5")
        with pytest.raises(ValueError, match="count"):
            load_idx(tmp_path / "imgs", tmp_path / "labels5")

    def test_range_checked_on_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_idx(FrameDataset(np.full((2, 4), 2.0)), tmp_path / "x")

    def test_label_range_checked_on_save(self, tmp_path):
        ds = FrameDataset(np.zeros((2, 4)), labels=[0, 300])
        with pytest.raises(ValueError, match="ubyte"):
            save_idx(ds, tmp_path / "imgs", tmp_path / "labels")


class TestTemporalReshuffle:
    def test_output_is_permutation(self):
        rng = np.random.default_rng(4)
        ds = blob_dataset(rng, n=100)
        out = temporal_reshuffle(ds, buffer_size=16,
                                 rng=np.random.default_rng(1))
        key = lambda frames: sorted(map(tuple, frames))
        assert key(out.frames) == key(ds.frames)
        assert sorted(out.labels) == sorted(ds.labels)
        assert out.ordering == "temporal"

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(5)
        ds = blob_dataset(rng, n=60)
        a = temporal_reshuffle(ds, 8, np.random.default_rng(9))
        b = temporal_reshuffle(ds, 8, np.random.default_rng(9))
        assert np.array_equal(a.frames, b.frames)

    def test_adjacency_improves(self):
        rng = np.random.default_rng(6)
        ds = FrameDataset(rng.standard_normal((200, 16)))
        seed_rng = np.random.default_rng(2)
        shuffled = ds.frames[np.random.default_rng(2).permutation(len(ds))]
        out = temporal_reshuffle(ds, buffer_size=50, rng=seed_rng)
        before = np.linalg.norm(np.diff(shuffled, axis=0), axis=1).mean()
        after = np.linalg.norm(np.diff(out.frames, axis=0), axis=1).mean()
        assert after < before

    def test_buffer_one_keeps_drawn_order(self):
        rng = np.random.default_rng(7)
        ds = blob_dataset(rng, n=30)
        out = temporal_reshuffle(ds, buffer_size=1, rng=np.random.default_rng(3))
        perm = np.random.default_rng(3).permutation(len(ds))
        assert np.array_equal(out.frames, ds.frames[perm])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            temporal_reshuffle(FrameDataset(np.empty((0, 4))), 4,
                               np.random.default_rng(0))

    def test_labels_follow_frames(self):
        rng = np.random.default_rng(8)
        ds = blob_dataset(rng, n=40)
        lookup = {tuple(f): l for f, l in zip(ds.frames, ds.labels)}
        out = temporal_reshuffle(ds, 8, np.random.default_rng(4))
        for f, l in zip(out.frames, out.labels):
            assert lookup[tuple(f)] == l


class TestRandomNetwork:
    def test_same_seed_same_net(self):
        a = gen_random_network(np.random.default_rng(10))
        b = gen_random_network(np.random.default_rng(10))
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)

    def test_rescaling_does_not_change_function(self):
        # the factors multiply out to 1 through the homogeneous layers
        scaled = gen_random_network(np.random.default_rng(11))
        plain = gen_random_network(np.random.default_rng(11),
                                   factors=(1.0, 1.0, 1.0))
        rng = np.random.default_rng(12)
        for _ in range(10):
            x = rng.standard_normal(100)
            assert np.max(np.abs(forward_original(scaled, x)
                                 - forward_original(plain, x))) < 1e-9

    def test_weight_variance_matches_initialization(self):
        net = gen_random_network(np.random.default_rng(13))
        for layer, factor in zip(net.layers, (0.5, 8.0, 0.25)):
            want = 2.0 / (layer.d_in + layer.d_out) * factor ** 2
            assert np.var(layer.weights) == pytest.approx(want, rel=0.10)

    def test_zero_biases_unit_scales(self):
        net = gen_random_network(np.random.default_rng(14))
        for layer in net.layers:
            assert np.all(layer.bias == 0)
            assert np.asarray(layer.scale) == 1.0

    def test_factor_count_checked(self):
        with pytest.raises(ValueError):
            gen_random_network(np.random.default_rng(0), dims=(4, 4),
                               factors=(1.0, 2.0))


class TestRandomStream:
    def test_iid_at_zero_smoothness(self):
        ds = gen_random_stream(np.random.default_rng(15), 100, 8, 0.0)
        assert ds.frames.shape == (100, 8)
        c = np.corrcoef(ds.frames[:-1].ravel(), ds.frames[1:].ravel())[0, 1]
        assert abs(c) < 0.1

    def test_constant_at_full_smoothness(self):
        ds = gen_random_stream(np.random.default_rng(16), 10, 4, 1.0)
        assert np.array_equal(ds.frames, np.tile(ds.frames[0], (10, 1)))

    def test_smoothness_reduces_frame_distance(self):
        smooth = gen_random_stream(np.random.default_rng(17), 200, 8, 0.9)
        rough = gen_random_stream(np.random.default_rng(17), 200, 8, 0.0)
        d = lambda f: np.linalg.norm(np.diff(f, axis=0), axis=1).mean()
        assert d(smooth.frames) < d(rough.frames)

    def test_validation(self):
        rng = np.random.default_rng(18)
        with pytest.raises(ValueError):
            gen_random_stream(rng, 0, 4)
        with pytest.raises(ValueError):
            gen_random_stream(rng, 5, 4, smoothness=1.5)
