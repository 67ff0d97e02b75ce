import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from greenleaf import data as D
from greenleaf.data import AugmentationConfig, AugmentParams, DatasetIndex
from greenleaf.fixtures import write_fixture

# class sizes of the public rice-leaf set: BrownSpot, Healthy, Hispa, LeafBlast
RICE_COUNTS = [523, 1488, 565, 779]


def fake_index(counts, names=None):
    names = names or [f"c{i}" for i in range(len(counts))]
    records = [(f"/x/{names[c]}/{i:05d}.jpg", c) for c, n in enumerate(counts) for i in range(n)]
    return DatasetIndex(names, records)


def save_png(path, hwc):
    Image.fromarray(np.asarray(hwc, dtype=np.uint8)).save(path)


# ---------------------------------------------------------------- scanning


def test_scan_sorted_classes(tmp_path):
    write_fixture(tmp_path, per_class=[2, 1, 3, 1], size=8)
    idx = D.scan_dataset(tmp_path)
    assert idx.class_names == ["BrownSpot", "Healthy", "Hispa", "LeafBlast"]
    assert idx.counts() == [2, 1, 3, 1] and idx.skipped == 0


def test_scan_skips_non_images(tmp_path):
    d = tmp_path / "only"
    d.mkdir()
    for name in ("a.jpg", "b.JPG"):
        Image.new("RGB", (4, 4)).save(d / name, format="JPEG")
    (d / "notes.txt").write_text("x")
    idx = D.scan_dataset(tmp_path)
    assert len(idx) == 2 and idx.skipped == 1


def test_scan_errors(tmp_path):
    with pytest.raises(D.DatasetError):
        D.scan_dataset(tmp_path)
    with pytest.raises(D.DatasetError):
        D.scan_dataset(tmp_path / "missing")


def test_index_invariants_and_json(tmp_path):
    with pytest.raises(D.DatasetError):
        DatasetIndex(["a"], [("p", 1)])
    with pytest.raises(D.DatasetError):
        DatasetIndex(["a"], [("p", 0), ("p", 0)])
    idx = fake_index([3, 2])
    path = tmp_path / "index.json"
    idx.to_json(path)
    raw = json.loads(path.read_text())
    assert raw["class_names"] == ["c0", "c1"] and len(raw["records"]) == 5
    back = DatasetIndex.from_json(path)
    assert back.records == idx.records and back.class_names == idx.class_names


# ---------------------------------------------------------------- balancing


def test_balance_rice_counts():
    idx = fake_index(RICE_COUNTS)
    assert len(idx) == 3355
    bal = D.balance_downsample(idx, seed=0)
    assert bal.counts() == [523] * 4 and len(bal) == 2092


def test_balance_subset_and_counts():
    idx = fake_index([10, 4, 7])
    bal = D.balance_downsample(idx, seed=3)
    assert bal.counts() == [4, 4, 4]
    assert set(bal.records) <= set(idx.records)


def test_balance_already_balanced_unchanged():
    idx = fake_index([5, 5, 5])
    assert Counter(D.balance_downsample(idx, 9).records) == Counter(idx.records)


def test_balance_deterministic_and_seeded():
    idx = fake_index([50, 20])
    assert D.balance_downsample(idx, 1).records == D.balance_downsample(idx, 1).records
    assert D.balance_downsample(idx, 1).records != D.balance_downsample(idx, 2).records


def test_balance_empty_class_named():
    with pytest.raises(D.DatasetError, match="c1"):
        D.balance_downsample(fake_index([3, 0, 2]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=2, max_size=5), st.integers(0, 2**31))
def test_balance_idempotent(counts, seed):
    once = D.balance_downsample(fake_index(counts), seed)
    assert D.balance_downsample(once, seed + 1).records == once.records


# ---------------------------------------------------------------- splitting


def test_split_rounding_rule():
    train, val = D.stratified_split(fake_index([523] * 4), 0.2, seed=0)
    assert val.counts() == [105] * 4 and train.counts() == [418] * 4


def test_split_half():
    train, val = D.stratified_split(fake_index([10]), 0.5, seed=0)
    assert len(train) == len(val) == 5


def test_split_deterministic():
    idx = fake_index([30, 17])
    a, b = D.stratified_split(idx, 0.3, 4), D.stratified_split(idx, 0.3, 4)
    assert a[0].records == b[0].records and a[1].records == b[1].records


def test_split_errors():
    with pytest.raises(D.DatasetError):
        D.stratified_split(fake_index([1, 4]), 0.5)
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(D.DatasetError):
            D.stratified_split(fake_index([4]), bad)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 60), min_size=1, max_size=4), st.floats(0.05, 0.45), st.integers(0, 99))
def test_split_partition_property(counts, frac, seed):
    idx = fake_index(counts)
    train, val = D.stratified_split(idx, frac, seed)
    assert not set(train.records) & set(val.records)
    assert Counter(train.records + val.records) == Counter(idx.records)
    assert val.counts() == [math.floor(n * frac + 0.5) for n in counts]


# ---------------------------------------------------------------- image loading


def test_solid_red_image(tmp_path):
    p = tmp_path / "red.png"
    save_png(p, np.broadcast_to([255, 0, 0], (10, 10, 3)))
    out = D.load_and_resize(p, 224)
    assert out.shape == (1, 3, 224, 224)
    assert np.all(out[0, 0] == 1.0) and np.all(out[0, 1:] == 0.0)


def _bilinear_oracle(img2d, r, i, j):
    """Independent per-pixel half-pixel-centre bilinear blend of a small grayscale image."""
    h, w = img2d.shape
    sy = min(max((i + 0.5) * h / r - 0.5, 0.0), h - 1)
    sx = min(max((j + 0.5) * w / r - 0.5, 0.0), w - 1)
    y0, x0 = int(math.floor(sy)), int(math.floor(sx))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    dy, dx = sy - y0, sx - x0
    return ((1 - dy) * (1 - dx) * img2d[y0, x0] + (1 - dy) * dx * img2d[y0, x1]
            + dy * (1 - dx) * img2d[y1, x0] + dy * dx * img2d[y1, x1])


@pytest.mark.parametrize("r", [3, 5, 8])
def test_checkerboard_upscale_matches_oracle(tmp_path, r):
    board = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    p = tmp_path / "board.png"
    save_png(p, np.repeat(board[:, :, None], 3, axis=2))
    out = D.load_and_resize(p, r)[0, 0]
    ref = np.array([[_bilinear_oracle(board / 255.0, r, i, j) for j in range(r)] for i in range(r)])
    np.testing.assert_allclose(out, ref, atol=1e-6, rtol=0)
    if r % 2:
        assert abs(out[r // 2, r // 2] - 0.5) <= 1e-6


def test_undecodable_file_names_path(tmp_path):
    p = tmp_path / "broken.jpg"
    p.write_bytes(b"not an image")
    with pytest.raises(D.DecodeError, match="broken.jpg"):
        D.load_and_resize(p, 8)


def test_load_index_skips_failures(tmp_path):
    write_fixture(tmp_path, per_class=2, size=8)
    (tmp_path / "Hispa" / "zz.png").write_bytes(b"garbage")
    idx = D.scan_dataset(tmp_path)
    with pytest.raises(D.DecodeError):
        D.load_index(idx, 8)
    ds = D.load_index(idx, 8, skip_failures=True)
    assert len(ds) == 8 and ds.failures == [str(tmp_path / "Hispa" / "zz.png")]


# ---------------------------------------------------------------- augmentation


def test_zero_ranges_bit_identical(rng):
    img = rng.random((3, 9, 7))
    for seed in range(5):
        assert np.array_equal(D.augment(img, AugmentationConfig.none(), seed), img)


def test_pure_flip_reverses_columns():
    pattern = np.arange(27, dtype=np.float64).reshape(3, 3, 3) / 27
    out = D.apply_augmentation(pattern, AugmentParams(flip=True))
    assert np.array_equal(out, pattern[:, :, ::-1])


def test_sampled_ranges_over_many_draws():
    cfg = AugmentationConfig()
    draws = [D.sample_augmentation(cfg, s) for s in range(10_000)]
    rot = np.array([d.rotation_deg for d in draws])
    shear = np.array([d.shear for d in draws])
    zoom = np.array([d.zoom for d in draws])
    sx = np.array([d.shift_x for d in draws])
    assert rot.min() >= -30 and rot.max() <= 30 and rot.max() - rot.min() > 59
    assert shear.min() >= -0.15 and shear.max() <= 0.15
    assert zoom.min() >= 0.85 and zoom.max() <= 1.15
    assert np.abs(sx).max() <= 0.2
    assert 0.47 <= np.mean([d.flip for d in draws]) <= 0.53


def test_transform_substreams_are_independent():
    base = AugmentationConfig()
    narrow = AugmentationConfig(rotation_deg=5.0, horizontal_flip=False)
    for s in range(50):
        a, b = D.sample_augmentation(base, s), D.sample_augmentation(narrow, s)
        assert (a.zoom, a.shift_x, a.shift_y, a.shear) == (b.zoom, b.shift_x, b.shift_y, b.shear)
        assert a.rotation_deg == pytest.approx(b.rotation_deg * 6)


def test_composition_order():
    p = AugmentParams(rotation_deg=20, zoom=1.1, shift_x=0.1, shift_y=-0.05, shear=0.1, flip=True)
    th = math.radians(20)
    shift = np.array([[1, 0, 0.1 * 10], [0, 1, -0.05 * 8], [0, 0, 1]])
    rot = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    zoom = np.diag([1.1, 1.1, 1])
    shear = np.array([[1, 0.1, 0], [0, 1, 0], [0, 0, 1]])
    flip = np.diag([-1, 1, 1])
    np.testing.assert_allclose(p.matrix(8, 10), flip @ shear @ zoom @ rot @ shift, atol=1e-15)


def test_pure_shift_moves_pixels():
    img = np.zeros((1, 5, 5))
    img[0, 2, 2] = 1.0
    out = D.apply_augmentation(img, AugmentParams(shift_x=0.2))
    assert out[0, 2, 3] == 1.0 and out.sum() == 1.0


def test_augment_returns_params():
    out, params = D.augment(np.zeros((3, 4, 4)), AugmentationConfig(), 3, return_params=True)
    assert params == D.sample_augmentation(AugmentationConfig(), 3) and out.shape == (3, 4, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 12), st.integers(3, 12))
def test_augment_preserves_shape_and_range(seed, h, w):
    img = np.random.default_rng(seed).random((3, h, w))
    out = D.augment(img, AugmentationConfig(), seed)
    assert out.shape == img.shape and out.min() >= 0.0 and out.max() <= 1.0


def test_augmentation_config_validation():
    with pytest.raises(D.DatasetError):
        AugmentationConfig(zoom=1.0)
    with pytest.raises(D.DatasetError):
        AugmentationConfig(rotation_deg=-1)


# ---------------------------------------------------------------- batching


def _arrays(n, k=4):
    labels = np.arange(n) % k
    return D.ArrayDataset(np.arange(n, dtype=np.float32)[:, None, None, None] * np.ones((1, 3, 2, 2)),
                          labels, [str(i) for i in range(k)])


def test_batch_sizes_keep_partial():
    assert [len(y) for _, y in D.batches(_arrays(100), 32, shuffle_seed=0)] == [32, 32, 32, 4]


def test_every_record_once_per_epoch():
    ds = _arrays(50)
    seen = np.concatenate([x[:, 0, 0, 0] for x, _ in D.batches(ds, 7, 3)])
    assert sorted(seen.astype(int).tolist()) == list(range(50))
    labels = np.concatenate([y for _, y in D.batches(ds, 7, 3)])
    assert Counter(labels.tolist()) == Counter(ds.labels.tolist())


def test_epochs_reshuffle_same_multiset():
    ds = _arrays(40)
    e0 = np.concatenate([x[:, 0, 0, 0] for x, _ in D.batches(ds, 8, 1, epoch=0)])
    e1 = np.concatenate([x[:, 0, 0, 0] for x, _ in D.batches(ds, 8, 1, epoch=1)])
    assert not np.array_equal(e0, e1) and sorted(e0) == sorted(e1)
    again = np.concatenate([x[:, 0, 0, 0] for x, _ in D.batches(ds, 8, 1, epoch=0)])
    assert np.array_equal(e0, again)


def test_augmented_records_independent_of_batch_size(rng):
    ds = D.ArrayDataset(rng.random((6, 3, 5, 5)), np.arange(6) % 2, ["a", "b"])
    cfg = AugmentationConfig()

    def by_record(bs):
        out = {}
        for x, _ in D.batches(ds, bs, shuffle_seed=None, augmentation=cfg, epoch=2):
            for img in x:
                out[len(out)] = img
        return out

    a, b = by_record(2), by_record(4)
    assert all(np.array_equal(a[i], b[i]) for i in range(6))


def test_batches_from_index(tmp_path):
    write_fixture(tmp_path, per_class=3, size=8)
    idx = D.scan_dataset(tmp_path)
    sizes = [x.shape for x, _ in D.batches(idx, 5, 0, resolution=6)]
    assert sizes == [(5, 3, 6, 6), (5, 3, 6, 6), (2, 3, 6, 6)]
    with pytest.raises(D.DatasetError):
        next(D.batches(idx, 0, 0, resolution=6))
