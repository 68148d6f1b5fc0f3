import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from eppnet import netpbm
from eppnet import parsemap as pm
from eppnet.errors import (
    EmptyIntersection,
    FormatError,
    FrameSizeMismatch,
    GridTooSmall,
    LabelOutOfRange,
)

PALETTE = pm.make_palette(pm.LIP_LABELS)


# -- crop / resize -----------------------------------------------------------

def test_crop_whole_map_is_identity():
    m = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert np.array_equal(pm.crop_to_bbox(m, pm.BBox(0, 0, 4, 3)), m)


def test_crop_center():
    m = np.arange(16, dtype=np.uint8).reshape(4, 4)
    assert pm.crop_to_bbox(m, pm.BBox(1, 1, 3, 3)).tolist() == [[5, 6], [9, 10]]


def test_crop_clips_to_map_and_rejects_disjoint_boxes():
    m = np.arange(16, dtype=np.uint8).reshape(4, 4)
    assert pm.crop_to_bbox(m, pm.BBox(-2, 2, 9, 9)).shape == (2, 4)
    with pytest.raises(EmptyIntersection):
        pm.crop_to_bbox(m, pm.BBox(5, 5, 8, 8))


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        pm.BBox(3, 0, 3, 2)


def test_resize_examples():
    m = np.array([[1, 2], [3, 4]], dtype=np.uint8)
    assert np.array_equal(pm.resize_nearest(m, 2, 2), m)
    assert pm.resize_nearest(m, 4, 4).tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    g = np.arange(9).reshape(3, 3)
    assert pm.resize_nearest(g, 2, 2).tolist() == [[0, 2], [6, 8]]


@settings(max_examples=80, deadline=None)
@given(hnp.arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 19)),
       st.integers(1, 20), st.integers(1, 20))
def test_resize_matches_oracle_and_creates_no_new_labels(img, h, w):
    out = pm.resize_nearest(img, h, w)
    assert np.array_equal(out, oracles.resize_loop(img, h, w))
    assert set(np.unique(out)) <= set(np.unique(img))


def test_resize_rgb():
    img = np.random.default_rng(0).integers(0, 255, size=(5, 7, 3), dtype=np.uint8)
    assert np.array_equal(pm.resize_nearest(img, 3, 9), oracles.resize_loop(img, 3, 9))


# -- palette / colorize ------------------------------------------------------

def test_palette_entries():
    pal = pm.make_palette(256)
    assert tuple(pal[0]) == (0, 0, 0)
    assert tuple(pal[1]) == (128, 0, 0)
    assert [tuple(int(v) for v in c) for c in pal] == [oracles.voc_color(i) for i in range(256)]
    assert len({tuple(c) for c in pal}) == 256


def test_palette_bounds():
    with pytest.raises(ValueError):
        pm.make_palette(0)
    with pytest.raises(ValueError):
        pm.make_palette(257)


def test_colorize():
    assert not pm.colorize(np.zeros((3, 3), np.uint8), PALETTE).any()
    two = pm.colorize(np.array([[0, 1], [1, 0]], np.uint8), PALETTE)
    assert len({tuple(p) for p in two.reshape(-1, 3)}) == 2
    m = np.random.default_rng(1).integers(0, 20, size=(6, 5))
    out = pm.colorize(m, PALETTE)
    for r in range(6):
        for c in range(5):
            assert tuple(out[r, c]) == oracles.voc_color(int(m[r, c]))
    with pytest.raises(LabelOutOfRange):
        pm.colorize(np.array([[20]]), PALETTE)


# -- selection / tiling ------------------------------------------------------

def test_select_frames_uniform():
    sel = pm.FrameSelection(pm.TEST_UNIFORM, 9)
    assert pm.select_frames(9, sel).tolist() == list(range(9))
    assert pm.select_frames(90, sel).tolist() == [5, 15, 25, 35, 45, 55, 65, 75, 85]
    assert pm.select_frames(4, sel).tolist() == [0, 0, 1, 1, 2, 2, 2, 3, 3]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 400), st.integers(1, 20))
def test_uniform_selection_properties(n, t):
    idx = pm.select_frames(n, pm.FrameSelection(pm.TEST_UNIFORM, t))
    assert len(idx) == t and np.all(np.diff(idx) >= 0)
    assert idx.min() >= 0 and idx.max() < n
    assert idx.tolist() == oracles.center_rule(n, t)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 100), st.integers(1, 12), st.integers(0, 2 ** 64 - 1))
def test_random_selection_sorted_in_range_and_seeded(n, t, seed):
    sel = pm.FrameSelection(pm.TRAIN_RANDOM, t, seed)
    a = pm.select_frames(n, sel)
    assert len(a) == t and np.all(np.diff(a) >= 0) and a.min() >= 0 and a.max() < n
    assert np.array_equal(a, pm.select_frames(n, sel))


def test_frame_selection_validation():
    with pytest.raises(ValueError):
        pm.FrameSelection("sometimes", 9)
    with pytest.raises(ValueError):
        pm.FrameSelection(pm.TEST_UNIFORM, 0)


def _const_frames(n, size=160):
    return [np.full((size, size, 3), (20 * k, 255 - 20 * k, 7 * k), dtype=np.uint8) for k in range(n)]


def test_tile_layout():
    frames = _const_frames(9)
    fmap = pm.tile(frames, 3, 3)
    assert fmap.pixels.shape == (480, 480, 3)
    assert np.array_equal(fmap.pixels[160:320, 160:320], frames[4])
    centers = [tuple(fmap.pixels[80 + 160 * (k // 3), 80 + 160 * (k % 3)]) for k in range(9)]
    assert centers == [tuple(f[0, 0]) for f in frames]


def test_tile_pixel_multiset_and_black_filler():
    frames = _const_frames(5, 4)
    fmap = pm.tile(frames, 2, 3)
    assert not fmap.block(5).any()
    got = np.sort(np.concatenate([fmap.block(k).reshape(-1, 3) for k in range(5)]), axis=0)
    want = np.sort(np.concatenate([f.reshape(-1, 3) for f in frames]), axis=0)
    assert np.array_equal(got, want)


def test_tile_untile_round_trip():
    rng = np.random.default_rng(2)
    frames = [rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8) for _ in range(9)]
    back = pm.untile(pm.tile(frames, 3, 3))
    assert all(np.array_equal(a, b) for a, b in zip(frames, back))


def test_tile_errors():
    with pytest.raises(GridTooSmall):
        pm.tile(_const_frames(10, 2), 3, 3)
    with pytest.raises(FrameSizeMismatch):
        pm.tile([np.zeros((2, 2, 3), np.uint8), np.zeros((3, 2, 3), np.uint8)], 1, 2)


# -- augmentation ------------------------------------------------------------

IMG = np.random.default_rng(3).integers(0, 256, size=(8, 8, 3), dtype=np.uint8)


def test_zero_delta_is_identity():
    assert np.array_equal(pm.augment(IMG, (0.0, 0.0, 0.0), seed=5), IMG)


def test_zero_brightness_is_black():
    assert not pm.apply_photometric(IMG, 0.0, 1.0, 1.0).any()


def test_augment_deterministic_and_seed_sensitive():
    a = pm.augment(IMG, seed=9)
    assert np.array_equal(a, pm.augment(IMG, seed=9))
    assert a.dtype == np.uint8
    assert not np.array_equal(a, pm.augment(IMG, seed=10))


def test_photometric_formula():
    img = np.array([[[100, 50, 200]]], dtype=np.uint8)
    x = np.array([100, 50, 200]) * 1.1
    gray = lambda v: v @ np.array([0.299, 0.587, 0.114])
    x = 0.9 * x + 0.1 * gray(x)
    x = 1.2 * x - 0.2 * gray(x)
    expect = np.clip(np.rint(x), 0, 255).astype(np.uint8)
    assert np.array_equal(pm.apply_photometric(img, 1.1, 0.9, 1.2)[0, 0], expect)


def test_negative_range_rejected():
    with pytest.raises(ValueError):
        pm.augment(IMG, (-0.1, 0.0, 0.0))


# -- composition -------------------------------------------------------------

def test_feature_map_of_blank_maps_is_black():
    maps = [np.zeros((30, 20), np.uint8)] * 9
    fmap = pm.build_feature_map(maps, [None] * 9, pm.FrameSelection(), PALETTE)
    assert fmap.pixels.shape == (480, 480, 3) and not fmap.pixels.any()


def test_feature_map_constant_frames_give_palette_blocks():
    maps = [np.full((30, 20), k, np.uint8) for k in range(9)]
    fmap = pm.build_feature_map(maps, [None] * 9, pm.FrameSelection(), PALETTE)
    for k in range(9):
        assert np.all(fmap.block(k) == PALETTE[k])


def test_feature_map_uses_boxes():
    m = np.zeros((40, 40), np.uint8)
    m[10:20, 10:20] = 3
    fmap = pm.build_feature_map([m], [pm.BBox(10, 10, 20, 20)], pm.FrameSelection(t=1), PALETTE,
                                tile_size=16, grid=(1, 1))
    assert np.all(fmap.pixels == PALETTE[3])


def test_feature_map_determinism():
    rng = np.random.default_rng(4)
    maps = [rng.integers(0, 20, size=(24, 18), dtype=np.uint8) for _ in range(30)]
    boxes = [pm.BBox(2, 3, 15, 20) if k % 3 else None for k in range(30)]
    a = pm.build_feature_map(maps, boxes, pm.FrameSelection(), PALETTE)
    b = pm.build_feature_map(maps, boxes, pm.FrameSelection(), PALETTE)
    assert a.pixels.tobytes() == b.pixels.tobytes()
    sel = pm.FrameSelection(pm.TRAIN_RANDOM, 9, 77)
    assert np.array_equal(pm.build_feature_map(maps, boxes, sel, PALETTE).pixels,
                          pm.build_feature_map(maps, boxes, sel, PALETTE).pixels)


# -- files -------------------------------------------------------------------

def test_bbox_file_round_trip_and_union():
    boxes = [pm.BBox(1, 2, 3, 4), None, pm.BBox(0, 0, 5, 5)]
    assert pm.parse_bboxes(pm.format_bboxes(boxes), 3) == boxes
    merged = pm.parse_bboxes("0 1 1 4 4\n0 3 0 6 2\n", 1)
    assert merged == [pm.BBox(1, 0, 6, 4)]
    for bad in ("0 1 2 3\n", "5 0 0 1 1\n", "x 0 0 1 1\n"):
        with pytest.raises(FormatError):
            pm.parse_bboxes(bad, 2)


def test_read_label_maps(tmp_path):
    for k in (1, 0, 2):
        netpbm.write_pgm(tmp_path / pm.frame_filename("S", k), np.full((2, 3), k, np.uint8))
    netpbm.write_pgm(tmp_path / "other_f0.pgm", np.zeros((2, 2), np.uint8))
    maps = pm.read_label_maps(tmp_path, "S")
    assert [int(m[0, 0]) for m in maps] == [0, 1, 2]
    (tmp_path / pm.frame_filename("S", 1)).unlink()
    with pytest.raises(FormatError):
        pm.read_label_maps(tmp_path, "S")


# -- netpbm ------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.uint8, st.one_of(st.tuples(st.integers(1, 9), st.integers(1, 9)),
                                      st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3)))))
def test_netpbm_round_trip(img):
    assert np.array_equal(netpbm.decode(netpbm.encode(img)), img)


def test_netpbm_header_comments_and_errors():
    buf = b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02"
    assert netpbm.decode(buf).tolist() == [[1, 2]]
    for bad in (b"P3\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00", b"P5\n1", b"P6\n1 x\n255\n"):
        with pytest.raises(FormatError):
            netpbm.decode(bad)


def test_netpbm_file_kinds(tmp_path):
    netpbm.write_ppm(tmp_path / "a.ppm", np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(FormatError):
        netpbm.read_pgm(tmp_path / "a.ppm")
    with pytest.raises(FormatError):
        netpbm.write_pgm(tmp_path / "b.pgm", np.zeros((2, 2, 3), np.uint8))
