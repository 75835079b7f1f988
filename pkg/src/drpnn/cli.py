"""Command-line front end: simulate, train, fuse, evaluate, sweep-filters.

Run configuration is a JSON file with four sections::

    {
      "network": {"bands": 4, "layers": 11, "hidden_channels": 64,
                  "filter_size": 7, "relu_before_skip": true},
      "train":   {"epochs": 300, "batch_size": 64, "lr_body": 0.05,
                  "lr_last": 0.005, "momentum": 0.95, "decay": 0.5,
                  "decay_period": 60, "seed": 0, "reduction": "mean"},
      "data":    {"patch": 32, "stride": 16, "divisor": 1.0, "init_seed": 0},
      "paths":   {"manifest": "sim/manifest.json", "output_dir": "run"}
    }

Missing keys come from the chosen profile (``--profile``); the values shown
are the "full" profile. Relative paths resolve against the config file's
folder.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dataset_io import (
    FormatError,
    export_truecolor,
    load_scenes,
    read_tensor,
    write_manifest,
    write_tensor,
)
from .metrics import MetricError, evaluate_all, mean_report
from .model import (
    CheckpointError,
    NetworkParams,
    NetworkSpec,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from .optimizer import OptimizerState, TrainConfig, TrainingDiverged, train
from .resample import bicubic_baseline, build_input, extract_patches, wald_simulate
from .tensor_core import ConfigurationError

log = logging.getLogger("drpnn")

EXPECTED_ERRORS = (ConfigurationError, FormatError, CheckpointError, MetricError, TrainingDiverged, OSError)


@dataclass
class DataConfig:
    patch: int = 32
    stride: int = 16
    divisor: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        if self.patch < 1 or self.stride < 1 or self.divisor <= 0:
            raise ConfigurationError("patch and stride must be >= 1 and divisor > 0")


@dataclass
class RunConfig:
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    manifest: str = ""
    output_dir: str = "run"

    @classmethod
    def from_dict(cls, doc, base=None, defaults=None):
        """Build from a JSON document; keys it leaves out come from ``defaults`` (a RunConfig).

        Paths given in ``doc`` are taken relative to ``base``.
        """
        defaults = defaults if defaults is not None else cls()

        def build(kind, section, default):
            values = dict(doc.get(section, {}))
            unknown = set(values) - {f.name for f in fields(kind)}
            if unknown:
                raise ConfigurationError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
            return replace(default, **values)

        paths = dict(doc.get("paths", {}))
        unknown = set(paths) - {"manifest", "output_dir"}
        if unknown:
            raise ConfigurationError(f"unknown path keys: {sorted(unknown)}")
        if base is not None:
            paths = {k: str(Path(base) / v) if v else "" for k, v in paths.items()}
        return cls(build(NetworkSpec, "network", defaults.network), build(TrainConfig, "train", defaults.train),
                   build(DataConfig, "data", defaults.data), paths.get("manifest", defaults.manifest),
                   paths.get("output_dir", defaults.output_dir))

    def to_dict(self):
        net = asdict(self.network)
        if not isinstance(net["filter_size"], int):
            net["filter_size"] = [list(s) if isinstance(s, tuple) else s for s in net["filter_size"]]
        return {"network": net, "train": self.train.to_dict(), "data": asdict(self.data),
                "paths": {"manifest": self.manifest, "output_dir": self.output_dir}}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_config(path, defaults=None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc, base=path.parent, defaults=defaults)


def desk_profile(manifest="", output_dir="run"):
    """Small, fast settings for reflectance-scaled synthetic data on a desktop CPU.

    The divisor of 0.1 lifts reflectances (about 0..0.5) into a range where
    these learning rates make progress.
    """
    return RunConfig(
        network=NetworkSpec(bands=4, layers=11, hidden_channels=16, filter_size=3),
        train=TrainConfig(epochs=150, batch_size=4, lr_body=0.01, lr_last=0.01, momentum=0.95,
                          decay=0.5, decay_period=50),
        data=DataConfig(patch=16, stride=16, divisor=0.1),
        manifest=manifest,
        output_dir=output_dir,
    )


PROFILES = {"full": RunConfig, "desk": desk_profile}


# ---------------------------------------------------------------- simulate

def cmd_simulate(manifest, out_dir, divisor=1.0):
    """Wald-degrade every scene of ``manifest`` into ``out_dir``; returns the new manifest path."""
    out_dir = Path(out_dir)
    scenes = load_scenes(manifest, divisor)
    reduced = [(wald_simulate(scene), split) for scene, split in scenes]  # fail before writing anything
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        entries = []
        for scene, split in reduced:
            names = {k: f"{scene.name}_{k}.pft" for k in ("ms", "pan", "truth")}
            for key, fname in names.items():
                write_tensor(out_dir / fname, getattr(scene, key)[0])
                written.append(out_dir / fname)
            entries.append({"name": scene.name, **names, "scale": scene.scale, "bands": scene.bands,
                            "split": split})
        target = out_dir / "manifest.json"
        write_manifest(target, entries)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    log.info("simulated %d scenes into %s", len(entries), out_dir)
    return target


# ------------------------------------------------------------------- train

def training_pairs(scenes, data, split="train"):
    pairs = []
    for i, (scene, tag) in enumerate(scenes):
        if tag != split:
            continue
        if scene.truth is None:
            raise ConfigurationError(f"scene {scene.name!r} has no truth; run 'simulate' first")
        pairs.extend(extract_patches(scene, data.patch, data.stride, seed=[data.init_seed, i]))
    if not pairs:
        raise ConfigurationError(f"no scenes in the {split!r} split")
    return pairs


def _header(cfg):
    net = cfg.network
    return {"type": "header", "layers": net.layers, "bands": net.bands, "hidden_channels": net.hidden_channels,
            "filter_sizes": [list(s) for s in net.kernel_sizes], "relu_before_skip": net.relu_before_skip,
            "parameters": net.parameter_count(), **cfg.train.to_dict(),
            "patch": cfg.data.patch, "stride": cfg.data.stride, "divisor": cfg.data.divisor}


def _write_log(path, cfg, records):
    with open(path, "w") as fh:
        fh.write(json.dumps(_header(cfg)) + "\n")
        for r in records:
            fh.write(json.dumps({"type": "epoch", **r}) + "\n")


def read_log(path):
    lines = [json.loads(l) for l in Path(path).read_text().splitlines() if l.strip()]
    return lines[0], [l for l in lines[1:] if l.get("type") == "epoch"]


def save_training_state(prefix, params, state, spec, epoch, records):
    prefix = Path(prefix)
    save_checkpoint(params, spec, prefix.with_suffix(".drpn"))
    save_checkpoint(NetworkParams.from_arrays(state.velocity), spec, prefix.with_suffix(".velocity.drpn"))
    prefix.with_suffix(".json").write_text(json.dumps({"epoch": epoch, "step": state.step, "log": records}))


def load_training_state(prefix, spec):
    prefix = Path(prefix)
    params, _ = load_checkpoint(prefix.with_suffix(".drpn"), expect_spec=spec)
    velocity, _ = load_checkpoint(prefix.with_suffix(".velocity.drpn"), expect_spec=spec)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    return params, OptimizerState(velocity.arrays(), meta["step"]), meta["epoch"], meta["log"]


def cmd_train(cfg, resume=None, scenes=None):
    """Train on the manifest's train split; writes model.drpn, train_log.jsonl and periodic checkpoints."""
    out = Path(cfg.output_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    if scenes is None:
        if not cfg.manifest:
            raise ConfigurationError("no manifest given (paths.manifest or --manifest)")
        scenes = load_scenes(cfg.manifest, cfg.data.divisor)
    for scene, _ in scenes:
        if scene.bands != cfg.network.bands:
            raise ConfigurationError(f"scene {scene.name!r} has {scene.bands} bands, network expects "
                                     f"{cfg.network.bands}")
    pairs = training_pairs(scenes, cfg.data)

    spec = cfg.network
    records = []
    if resume:
        params, state, last_epoch, records = load_training_state(resume, spec)
        start = last_epoch + 1
        log.info("resuming after epoch %d from %s", last_epoch, resume)
    else:
        params, state, start = init_network(spec, cfg.data.init_seed), None, 0

    _write_log(out / "train_log.jsonl", cfg, records)
    log.info("%s", json.dumps(_header(cfg)))

    def on_epoch(epoch, params, state, record):
        records.append(record)
        with open(out / "train_log.jsonl", "a") as fh:
            fh.write(json.dumps({"type": "epoch", **record}) + "\n")
        log.info("epoch %d loss %.6g lr_body %.4g", epoch, record["loss"], record["lr_body"])
        if (epoch + 1) % cfg.train.decay_period == 0:
            save_training_state(ckpt_dir / f"epoch_{epoch:04d}", params, state, spec, epoch, records)

    params, _, _ = train(params, spec, cfg.train, pairs, state=state, start_epoch=start, on_epoch=on_epoch)
    save_checkpoint(params, spec, out / "model.drpn")
    return out / "model.drpn", records


# -------------------------------------------------------------------- fuse

def fuse_scene(params, spec, scene):
    if scene.bands != spec.bands:
        raise ConfigurationError(f"scene {scene.name!r} has {scene.bands} bands, checkpoint expects {spec.bands}")
    G = build_input(scene).astype(params.dtype, copy=False)
    F, _ = forward(params, spec, G)
    return F


def cmd_fuse(checkpoint, manifest, out_dir, split=None, method="drpnn", png=False, band_map=(2, 1, 0),
             divisor=1.0):
    """Fuse each scene of ``manifest`` (optionally one split); returns the written paths.

    ``divisor`` must match the one used for training; outputs are written in
    the manifest's original units.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if method == "drpnn":
        params, spec = load_checkpoint(checkpoint)
    elif method != "bicubic":
        raise ConfigurationError(f"unknown fusion method {method!r}")
    paths = []
    for scene, tag in load_scenes(manifest, divisor):
        if split and tag != split:
            continue
        fused = fuse_scene(params, spec, scene) if method == "drpnn" else bicubic_baseline(scene)
        if divisor != 1.0:
            fused = fused * np.float32(divisor)  # back to the manifest's units
        target = out_dir / f"{scene.name}_{method}.pft"
        write_tensor(target, fused[0])
        if png:
            export_truecolor(fused, band_map, target.with_suffix(".png"))
        paths.append(target)
    return paths


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(fused, reference, scale, out=None, window=32):
    """Compare two PFT images; writes a JSON report when ``out`` is given."""
    report = evaluate_all(read_tensor(fused), read_tensor(reference), scale, window)
    if out:
        Path(out).write_text(report.to_json() + "\n")
    return report


def evaluate_scenes(fused_by_name, scenes, window=32, split="test"):
    reports = []
    for scene, tag in scenes:
        if tag == split:
            reports.append(evaluate_all(fused_by_name[scene.name], scene.truth, scene.scale, window))
    return mean_report(reports)


# ----------------------------------------------------------- sweep-filters

def cmd_sweep_filters(cfg, sizes, window=32, scenes=None):
    """Train one network per filter size and score it on the test split.

    Returns rows ``(size, Q, SAM)``; a table is also written to the output dir.
    """
    for s in sizes:
        if s < 1 or s % 2 == 0:
            raise ConfigurationError(f"filter sizes must be odd, got {s}")
    if scenes is None:
        scenes = load_scenes(cfg.manifest, cfg.data.divisor)
    rows = []
    for s in sizes:
        sub = replace(cfg, network=replace(cfg.network, filter_size=s),
                      output_dir=str(Path(cfg.output_dir) / f"size{s}"))
        checkpoint, _ = cmd_train(sub, scenes=scenes)
        params, spec = load_checkpoint(checkpoint)
        fused = {sc.name: fuse_scene(params, spec, sc) for sc, tag in scenes if tag == "test"}
        rep = evaluate_scenes(fused, scenes, window)
        rows.append((s, rep.q, rep.sam_degrees))
    table = Path(cfg.output_dir) / "filter_sweep.tsv"
    table.write_text("size\tQ\tSAM\n" + "".join(f"{s}\t{q:.6f}\t{a:.6f}\n" for s, q, a in rows))
    return rows


# -------------------------------------------------------------------- main

def _run_config(args):
    cfg = PROFILES[args.profile]()
    if args.config:
        cfg = load_config(args.config, defaults=cfg)
    if getattr(args, "manifest", None):
        cfg.manifest = args.manifest
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
        cfg.data = replace(cfg.data, init_seed=args.seed)
    if args.out:
        cfg.output_dir = args.out
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="drpnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Wald-degrade a manifest of observed scenes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--divisor", type=float, default=1.0, help="divide radiometric values by this")

    for name, help_text in (("train", "train a network"), ("sweep-filters", "compare filter sizes")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config")
        p.add_argument("--profile", choices=sorted(PROFILES), default="full",
                       help="base settings; values in --config override them")
        p.add_argument("--manifest")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "train":
            p.add_argument("--resume", help="checkpoint prefix, e.g. run/checkpoints/epoch_0059")
        else:
            p.add_argument("--sizes", type=int, nargs="+", default=[3, 5, 7])
            p.add_argument("--window", type=int, default=32)

    p = sub.add_parser("fuse", help="pan-sharpen scenes with a checkpoint or the bicubic baseline")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"])
    p.add_argument("--method", choices=["drpnn", "bicubic"], default="drpnn")
    p.add_argument("--png", action="store_true", help="also write true-color PNGs")
    p.add_argument("--bands", type=int, nargs=3, default=[2, 1, 0], metavar=("R", "G", "B"))
    p.add_argument("--divisor", type=float, default=1.0)

    p = sub.add_parser("evaluate", help="score a fused image against a reference")
    p.add_argument("--fused", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--out", help="JSON report path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            print(cmd_simulate(args.manifest, args.out, args.divisor))
        elif args.command == "train":
            cfg = _run_config(args)
            checkpoint, records = cmd_train(cfg, resume=args.resume)
            print(f"{checkpoint}\tfinal_loss={records[-1]['loss']:.6g}")
        elif args.command == "fuse":
            if args.method == "drpnn" and not args.checkpoint:
                raise ConfigurationError("--checkpoint is required for method 'drpnn'")
            for path in cmd_fuse(args.checkpoint, args.manifest, args.out, args.split, args.method,
                                 args.png, tuple(args.bands), args.divisor):
                print(path)
        elif args.command == "evaluate":
            print(cmd_evaluate(args.fused, args.reference, args.scale, args.out, args.window).to_line())
        elif args.command == "sweep-filters":
            cfg = _run_config(args)
            print("size\tQ\tSAM")
            for s, q, a in cmd_sweep_filters(cfg, args.sizes, args.window):
                print(f"{s}\t{q:.4f}\t{a:.4f}")
    except EXPECTED_ERRORS as exc:
        print(f"drpnn: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
