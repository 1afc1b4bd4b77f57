import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepvo import ingest
from deepvo.errors import (
    DecodeError,
    DimensionMismatch,
    EmptySet,
    EmptySide,
    LengthMismatch,
    TooShort,
    UnknownSequence,
    ZeroDimension,
)
from deepvo.geom import DeltaPose, planar_pose
from deepvo.ingest import (
    NormStats,
    Raster,
    Sample,
    SplitSpec,
    augment_with_feature_channel,
    build_pairs,
    compute_norm_stats,
    load_raster,
    normalize_image,
    read_records,
    save_raster,
    split,
    warp_resize,
    write_records,
)


def gray(h, w, value=0):
    return Raster(np.full((h, w, 1), value, dtype=np.uint8))


def rgb(h, w, value=0):
    return Raster(np.full((h, w, 3), value, dtype=np.uint8))


def make_samples(n, seq_id="s", h=4, w=4, c=3):
    rng = np.random.default_rng(0)
    out = []
    for i in range(n):
        a = Raster(rng.integers(0, 256, (h, w, c), dtype=np.uint8))
        b = Raster(rng.integers(0, 256, (h, w, c), dtype=np.uint8))
        out.append(Sample(a, b, DeltaPose(0.0, 1.0, 0.0), seq_id=seq_id, frame_idx=i))
    return out


class TestLoadRaster:
    def test_black_png(self, tmp_path):
        path = tmp_path / "black.png"
        save_raster(path, rgb(2, 2, 0))
        img = load_raster(path)
        assert (img.width, img.height) == (2, 2)
        assert not img.data.any()

    def test_native_odometry_frame_size(self, tmp_path):
        # Full-size dashboard frame: 1241x376.
        path = tmp_path / "frame.png"
        save_raster(path, gray(376, 1241, 77))
        img = load_raster(path)
        assert (img.width, img.height) == (1241, 376)
        assert img.channels == 1

    def test_grayscale_stays_single_channel(self, tmp_path):
        path = tmp_path / "g.png"
        save_raster(path, gray(3, 5, 10))
        assert load_raster(path).channels == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_raster(tmp_path / "nope.png")

    def test_decode_error(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not an image")
        with pytest.raises(DecodeError):
            load_raster(path)


class TestWarpResize:
    def test_identity_is_byte_identical(self):
        rng = np.random.default_rng(1)
        img = Raster(rng.integers(0, 256, (256, 256, 3), dtype=np.uint8))
        out = warp_resize(img, 256, 256)
        assert np.array_equal(out.data, img.data)

    def test_anisotropic_to_square(self):
        img = gray(376, 1241, 128)
        out = warp_resize(img, 256, 256)
        assert (out.width, out.height, out.channels) == (256, 256, 1)

    def test_hand_bilinear_2_to_4(self):
        img = Raster(np.array([[[0], [255]]], dtype=np.uint8))
        out = warp_resize(img, 4, 1)
        vals = out.data[0, :, 0]
        assert list(vals) == [0, 64, 191, 255]
        assert np.all(np.diff(vals.astype(int)) >= 0)

    def test_zero_dimension(self):
        with pytest.raises(ZeroDimension):
            warp_resize(gray(4, 4), 0, 4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 12),
           st.integers(1, 12), st.integers(1, 12))
    def test_output_range_within_input_range(self, seed, h, w, oh, ow):
        rng = np.random.default_rng(seed)
        img = Raster(rng.integers(0, 256, (h, w, 1), dtype=np.uint8))
        out = warp_resize(img, ow, oh)
        assert out.data.min() >= img.data.min()
        assert out.data.max() <= img.data.max()


class TestBuildPairs:
    def test_two_frames_one_sample(self):
        frames = [rgb(4, 4), rgb(4, 4)]
        poses = [planar_pose(0, 0, 0), planar_pose(0, 1, 0)]
        samples = build_pairs(frames, poses, "00")
        assert len(samples) == 1
        assert samples[0].label == pytest.approx((0.0, 1.0, 0.0))
        assert samples[0].seq_id == "00"

    def test_sample_count_arithmetic(self):
        lengths = [5, 2, 9, 3]
        total = 0
        for i, n in enumerate(lengths):
            frames = [rgb(2, 2)] * n
            poses = [planar_pose(0, j, 0) for j in range(n)]
            total += len(build_pairs(frames, poses, str(i)))
        assert total == sum(n - 1 for n in lengths)

    def test_stationary_label(self):
        frames = [rgb(2, 2), rgb(2, 2)]
        poses = [planar_pose(3, 4, 0.5)] * 2
        assert build_pairs(frames, poses)[0].label == (0.0, 0.0, 0.0)

    def test_temporal_order_preserved(self):
        frames = [rgb(2, 2)] * 5
        poses = [planar_pose(0, i, 0) for i in range(5)]
        samples = build_pairs(frames, poses, "seq")
        assert [s.frame_idx for s in samples] == [0, 1, 2, 3]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            build_pairs([rgb(2, 2)], [planar_pose(0, 0, 0)] * 2)

    def test_too_short(self):
        with pytest.raises(TooShort):
            build_pairs([rgb(2, 2)], [planar_pose(0, 0, 0)])


class TestSplit:
    def test_80_20_counts(self):
        samples = make_samples(100)
        train, test = split(samples, SplitSpec("random", train_fraction=0.8, seed=1))
        assert (len(train), len(test)) == (80, 20)

    def test_50_50_counts(self):
        samples = make_samples(100)
        train, test = split(samples, SplitSpec("random", train_fraction=0.5, seed=1))
        assert (len(train), len(test)) == (50, 50)

    def test_seed_determinism(self):
        samples = make_samples(40)
        spec = SplitSpec("random", train_fraction=0.8, seed=7)
        a = split(samples, spec)
        b = split(samples, spec)
        assert [s.frame_idx for s in a[0]] == [s.frame_idx for s in b[0]]
        assert [s.frame_idx for s in a[1]] == [s.frame_idx for s in b[1]]

    def test_every_sequence_on_both_sides(self):
        samples = make_samples(20, "a") + make_samples(30, "b")
        train, test = split(samples, SplitSpec("random", train_fraction=0.5, seed=3))
        assert {s.seq_id for s in train} == {"a", "b"}
        assert {s.seq_id for s in test} == {"a", "b"}

    def test_holdout_routes_whole_sequences(self):
        samples = make_samples(10, "00") + make_samples(10, "07")
        spec = SplitSpec("holdout", train_sequences=("00",), test_sequences=("07",))
        train, test = split(samples, spec)
        assert all(s.seq_id == "00" for s in train)
        assert all(s.seq_id == "07" for s in test)

    def test_holdout_unknown_sequence(self):
        samples = make_samples(5, "03")
        spec = SplitSpec("holdout", train_sequences=("00",), test_sequences=("07",))
        with pytest.raises(UnknownSequence):
            split(samples, spec)

    def test_holdout_empty_side(self):
        samples = make_samples(5, "00")
        spec = SplitSpec("holdout", train_sequences=("00",), test_sequences=("07",))
        with pytest.raises(EmptySide):
            split(samples, spec)

    def test_empty_input(self):
        with pytest.raises(EmptySet):
            split([], SplitSpec("random"))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 60),
           st.sampled_from([0.5, 0.8, 0.31]))
    def test_random_split_is_partition(self, seed, n, fraction):
        samples = make_samples(n, h=2, w=2)
        train, test = split(samples, SplitSpec("random", train_fraction=fraction,
                                               seed=seed))
        train_ids = {id(s) for s in train}
        test_ids = {id(s) for s in test}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {id(s) for s in samples}


class TestNormStats:
    def test_all_zero_guard(self):
        stats = compute_norm_stats(make_zero_samples())
        assert stats.mean == pytest.approx([0.0])
        assert stats.std == pytest.approx([1.0])

    def test_constant_128(self):
        samples = [Sample(gray(2, 2, 128), gray(2, 2, 128), DeltaPose(0, 0, 0))]
        stats = compute_norm_stats(samples)
        assert stats.mean == pytest.approx([128 / 255])
        assert stats.std == pytest.approx([1.0])  # degenerate, clamped

    def test_black_and_white_pair(self):
        samples = [Sample(gray(2, 2, 0), gray(2, 2, 0), DeltaPose(0, 0, 0)),
                   Sample(gray(2, 2, 255), gray(2, 2, 255), DeltaPose(0, 0, 0))]
        stats = compute_norm_stats(samples)
        assert stats.mean == pytest.approx([0.5])
        assert stats.std == pytest.approx([0.5])

    def test_empty(self):
        with pytest.raises(EmptySet):
            compute_norm_stats([])

    def test_normalize_image_shape_and_values(self):
        stats = NormStats(mean=np.array([0.5]), std=np.array([0.25]))
        arr = normalize_image(gray(2, 3, 255), stats)
        assert arr.shape == (1, 2, 3)
        assert arr.dtype == np.float32
        assert arr == pytest.approx(np.full((1, 2, 3), 2.0))


def make_zero_samples():
    return [Sample(gray(2, 2, 0), gray(2, 2, 0), DeltaPose(0, 0, 0))]


class TestAugment:
    def test_adds_fourth_channel(self):
        s = make_samples(1, h=8, w=8)[0]
        out = augment_with_feature_channel(s, gray(8, 8, 255), gray(8, 8, 0))
        assert out.img_a.channels == 4
        assert out.img_b.channels == 4

    def test_zero_mask_leaves_rgb_untouched(self):
        s = make_samples(1, h=4, w=4)[0]
        out = augment_with_feature_channel(s, gray(4, 4, 0), gray(4, 4, 0))
        assert np.array_equal(out.img_a.data[:, :, :3], s.img_a.data)
        assert not out.img_a.data[:, :, 3].any()

    def test_dropping_channel_recovers_bytes(self):
        s = make_samples(1, h=4, w=4)[0]
        out = augment_with_feature_channel(s, gray(4, 4, 9), gray(4, 4, 7))
        assert out.img_a.data[:, :, :3].tobytes() == s.img_a.data.tobytes()
        assert out.img_b.data[:, :, :3].tobytes() == s.img_b.data.tobytes()

    def test_mask_dimension_mismatch(self):
        s = make_samples(1, h=4, w=4)[0]
        with pytest.raises(DimensionMismatch):
            augment_with_feature_channel(s, gray(5, 4), gray(4, 4))
        with pytest.raises(DimensionMismatch):
            augment_with_feature_channel(s, rgb(4, 4), rgb(4, 4))


class TestRecords:
    def test_roundtrip(self, tmp_path):
        samples = make_samples(5, h=6, w=7)
        path = tmp_path / "set.dvos"
        assert write_records(path, samples) == 5
        back = read_records(path)
        assert len(back) == 5
        for orig, loaded in zip(samples, back):
            assert np.array_equal(orig.img_a.data, loaded.img_a.data)
            assert np.array_equal(orig.img_b.data, loaded.img_b.data)
            assert loaded.label == orig.label

    def test_header_layout(self, tmp_path):
        samples = make_samples(1, h=3, w=5, c=3)
        path = tmp_path / "one.dvos"
        write_records(path, samples)
        raw = path.read_bytes()
        assert raw[:4] == b"DVOS"
        assert len(raw) == 16 + 2 * (3 * 5 * 3) + 24

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dvos"
        path.write_bytes(b"XXXX" + bytes(60))
        with pytest.raises(DecodeError):
            read_records(path)


class TestManifest:
    def test_parse_and_resolve(self, tmp_path):
        (tmp_path / "seq00").mkdir()
        (tmp_path / "manifest.txt").write_text(
            "# corpus\n00 seq00 poses00.txt\n\n01 /abs/dir /abs/p.txt\n"
        )
        entries = ingest.parse_manifest(tmp_path / "manifest.txt")
        assert len(entries) == 2
        assert entries[0].seq_id == "00"
        assert entries[0].image_dir == (tmp_path / "seq00").resolve()
        assert str(entries[1].image_dir) == "/abs/dir"

    def test_bad_line(self, tmp_path):
        (tmp_path / "m.txt").write_text("00 only_two\n")
        with pytest.raises(DecodeError):
            ingest.parse_manifest(tmp_path / "m.txt")

    def test_list_frames_sorted(self, tmp_path):
        d = tmp_path / "imgs"
        d.mkdir()
        for name in ["000002.png", "000000.png", "000001.png"]:
            save_raster(d / name, gray(2, 2))
        (d / "notes.txt").write_text("x")
        frames = ingest.list_frames(d)
        assert [p.name for p in frames] == ["000000.png", "000001.png", "000002.png"]
