"""
Reduced-resolution training and fusion
======================================

There is no full-resolution MS truth for real sensors, so training uses a
reduced-resolution copy of each scene: MS and PAN are both decimated by the
scale factor and the original MS becomes the target. This script runs the
whole pipeline on procedural scenes and compares the network with plain
bicubic upsampling. It takes a couple of minutes on one CPU core.
"""

import tempfile
from pathlib import Path

from drpnn.cli import cmd_fuse, cmd_simulate, cmd_train, desk_profile, evaluate_scenes
from drpnn.dataset_io import load_scenes, read_tensor, write_manifest, write_tensor
from drpnn.synthetic import make_dataset

work = Path(tempfile.mkdtemp(prefix="drpnn_demo_"))
print("working in", work)

# Write 12 "observed" scenes as PFT files plus a manifest, as a user
# with real imagery would.
entries = []
(work / "observed").mkdir()
for scene, split in make_dataset(12, seed=7, pan_size=256):
    write_tensor(work / "observed" / f"{scene.name}_ms.pft", scene.ms[0])
    write_tensor(work / "observed" / f"{scene.name}_pan.pft", scene.pan[0])
    entries.append({"name": scene.name, "ms": f"{scene.name}_ms.pft", "pan": f"{scene.name}_pan.pft",
                    "scale": 4, "bands": 4, "split": split})
write_manifest(work / "observed" / "manifest.json", entries)

# Degrade every scene by its own scale; truth is the original MS.
manifest = cmd_simulate(work / "observed" / "manifest.json", work / "simulated")

# The desk profile keeps the full 11-layer topology, made narrower and
# given fewer epochs so it trains in minutes.
cfg = desk_profile(str(manifest), str(work / "run"))
cfg.train.epochs = 60
checkpoint, records = cmd_train(cfg)
print("loss %.4g -> %.4g over %d epochs" % (records[0]["loss"], records[-1]["loss"], len(records)))

scenes = load_scenes(manifest)
for method, ckpt in (("drpnn", checkpoint), ("bicubic", None)):
    paths = cmd_fuse(ckpt, manifest, work / method, split="test", method=method, divisor=cfg.data.divisor)
    fused = {p.stem[:-len(method) - 1]: read_tensor(p)[None] for p in paths}
    print(f"{method:8s}", evaluate_scenes(fused, scenes).to_line())
