"""Turn a sequence of parsing label maps into one tiled color feature map.

    python demos/parsing_feature_map.py [out.ppm]
"""

import sys
import tempfile
from pathlib import Path

from eppnet import netpbm
from eppnet import parsemap as pm
from eppnet import synth

out = Path(tempfile.mkdtemp())
synth.synthesize(out, classes=4, samples_per_class=4, seed=0)
sid = synth.sample_name(0, 1)
maps = pm.read_label_maps(out / "parsing" / sid, sid)
boxes = pm.parse_bboxes((out / "bboxes" / f"{sid}.txt").read_text(), len(maps))

sel = pm.FrameSelection(pm.TEST_UNIFORM, 9)
print(f"{len(maps)} frames, picked", pm.select_frames(len(maps), sel).tolist())

fmap = pm.build_feature_map(maps, boxes, sel, pm.make_palette(pm.LIP_LABELS))
print("feature map", fmap.pixels.shape, "grid", fmap.grid)

# a training view: random frames plus photometric jitter
train = pm.build_feature_map(maps, boxes, pm.FrameSelection(pm.TRAIN_RANDOM, 9, seed=4),
                             pm.make_palette(pm.LIP_LABELS))
jittered = pm.augment(train.pixels, seed=4)

target = Path(sys.argv[1]) if len(sys.argv) > 1 else out / "feature_map.ppm"
netpbm.write_ppm(target, fmap.pixels)
netpbm.write_ppm(target.with_name(target.stem + "_train.ppm"), jittered)
print("wrote", target)
