import hashlib
import json

import numpy as np
import pytest

from eppnet import parsemap as pm
from eppnet import pipeline as pl
from eppnet import skeleton_io as sio
from eppnet import synth


def _tree(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_same_seed_gives_identical_files(tmp_path):
    for d in ("a", "b"):
        synth.synthesize(tmp_path / d, classes=3, samples_per_class=3, seed=5)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    synth.synthesize(tmp_path / "c", classes=3, samples_per_class=3, seed=6)
    assert _tree(tmp_path / "a") != _tree(tmp_path / "c")


def test_motion_set_layout(motion_data):
    manifest = json.loads((motion_data / "manifest.json").read_text())
    entries = manifest["entries"]
    assert len(entries) == 64 and len(list((motion_data / "skeletons").glob("*.skeleton"))) == 64
    assert sum(e["split"] == "train" for e in entries) == 52
    assert sorted({e["label"] for e in entries}) == [0, 1, 2, 3]
    for e in entries[:4]:
        seq = sio.read_skeleton(motion_data / e["skeleton_path"])
        assert seq.sample_id == e["sample_id"] and 30 <= seq.num_frames <= 50
        maps = pm.read_label_maps(motion_data / e["parsing_dir"], e["sample_id"])
        assert len(maps) == seq.num_frames and max(int(m.max()) for m in maps) < pm.LIP_LABELS
        boxes = pm.parse_bboxes((motion_data / e["bbox_path"]).read_text(), len(maps))
        assert any(b is not None for b in boxes)


def test_desk_config_is_valid(motion_data):
    cfg = pl.PipelineConfig.load(motion_data / "config.json")
    assert cfg["T_fixed"] == 20 and cfg.modalities == list(pl.MODALITY_ORDER)
    assert len(pl.load_manifest(cfg)) == 64


def test_spurious_body_is_discarded(motion_data):
    sid = synth.sample_name(3, 0)
    seq = sio.read_skeleton(motion_data / "skeletons" / f"{sid}.skeleton")
    assert len(seq.frames[0]) == 2
    kept = sio.select_primary_bodies(seq, 1)
    assert kept.frames[0][0].body_id == 72057594037927936 + 1000 * 3 + 1


def test_complementary_pairs_share_one_modality(complementary_data):
    def skel(label, j):
        return sio.read_skeleton(complementary_data / "skeletons" / f"{synth.sample_name(j, label)}.skeleton")

    def first_map(label, j):
        sid = synth.sample_name(j, label)
        return pm.read_label_maps(complementary_data / "parsing" / sid, sid)[0]

    # labels 0 and 2 differ only in bit 1: identical skeleton motion, different clothes
    a, b = skel(0, 1), skel(2, 1)
    xa = np.stack([f[0].joints[:, :3] for f in a.frames])
    xb = np.stack([f[0].joints[:, :3] for f in b.frames])
    assert np.array_equal(xa, xb)
    assert not np.array_equal(first_map(0, 1), first_map(2, 1))
    # labels 0 and 1 differ only in bit 0: identical parsing maps
    assert np.array_equal(first_map(0, 1), first_map(1, 1))


@pytest.mark.parametrize("kw", [{"classes": 1}, {"mode": "noise"}, {"mode": synth.COMPLEMENTARY, "classes": 3},
                                {"samples_per_class": 1000}])
def test_synth_argument_errors(tmp_path, kw):
    with pytest.raises(ValueError):
        synth.synthesize(tmp_path, **kw)
