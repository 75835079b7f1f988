"""File formats: PFT raw tensors, JSON scene manifests and true-color PNG export.

PFT layout (all little-endian)::

    bytes 0-3   magic b"PFT1"
    bytes 4-7   uint32 rank (1..4)
    next 4*rank uint32 dims
    payload     float32 values, row-major (last dim fastest)

A manifest is a JSON document::

    {"scenes": [{"name": "s01", "ms": "s01_ms.pft", "pan": "s01_pan.pft",
                 "truth": "s01_truth.pft", "scale": 4, "bands": 4,
                 "split": "train"}, ...]}

``truth`` is optional; relative paths resolve against the manifest's folder.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .resample import ScenePair
from .tensor_core import ConfigurationError

PFT_MAGIC = b"PFT1"
SPLITS = ("train", "test")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def write_tensor(path, t):
    t = np.asarray(t)
    if not 1 <= t.ndim <= 4:
        raise FormatError(f"PFT supports rank 1..4, got rank {t.ndim}")
    header = PFT_MAGIC + struct.pack(f"<{1 + t.ndim}I", t.ndim, *t.shape)
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_tensor(path):
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: file too short ({len(data)} bytes) for a PFT header")
    if data[:4] != PFT_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {PFT_MAGIC!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    if not 1 <= rank <= 4:
        raise FormatError(f"{path}: rank {rank} outside 1..4")
    head = 8 + 4 * rank
    if len(data) < head:
        raise FormatError(f"{path}: truncated dims table")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(data) - head != expected:
        raise FormatError(f"{path}: payload is {len(data) - head} bytes, dims {dims} need {expected}")
    return np.frombuffer(data, dtype="<f4", offset=head).astype(np.float32).reshape(dims)


def as_image_tensor(arr):
    """Promote a (h, w) or (c, h, w) array to (1, c, h, w)."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        return arr[None, None]
    if arr.ndim == 3:
        return arr[None]
    return arr


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def read_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("scenes"), list):
        raise FormatError(f"{path}: manifest needs a top-level 'scenes' list")
    for i, entry in enumerate(doc["scenes"]):
        missing = [k for k in ("ms", "pan", "bands") if k not in entry]
        if missing:
            raise FormatError(f"{path}: scene #{i} lacks {', '.join(missing)}")
        if entry.get("split", "train") not in SPLITS:
            raise FormatError(f"{path}: scene #{i} has split {entry['split']!r}, expected one of {SPLITS}")
    return doc


def write_manifest(path, entries):
    Path(path).write_text(json.dumps({"scenes": entries}, indent=2) + "\n")


def load_scenes(manifest_path, divisor=1.0):
    """Load and validate every scene listed in a manifest, in order.

    Returns a list of ``(ScenePair, split)``. ``divisor`` rescales all
    radiometric values (e.g. 2047 for 11-bit data).
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    out = []
    for i, entry in enumerate(read_manifest(manifest_path)["scenes"]):
        name = entry.get("name", f"scene{i}")
        try:
            ms = as_image_tensor(read_tensor(_resolve(base, entry["ms"])))
            pan = as_image_tensor(read_tensor(_resolve(base, entry["pan"])))
            truth = entry.get("truth")
            truth = as_image_tensor(read_tensor(_resolve(base, truth))) if truth else None
            if ms.shape[1] != entry["bands"]:
                raise ConfigurationError(f"ms file has {ms.shape[1]} bands, manifest declares {entry['bands']}")
            if divisor != 1.0:
                ms, pan = ms / np.float32(divisor), pan / np.float32(divisor)
                truth = None if truth is None else truth / np.float32(divisor)
            scene = ScenePair(ms=ms, pan=pan, scale=int(entry.get("scale", 4)), truth=truth, name=name)
        except (OSError, FormatError, ConfigurationError) as exc:
            raise FormatError(f"{manifest_path}: scene {name!r} ({entry['ms']}): {exc}") from exc
        out.append((scene, entry.get("split", "train")))
    return out


def percentile_stretch(band, low=1.0, high=99.0):
    """Linear stretch of one band to 0..255 between its ``low`` and ``high`` percentiles."""
    band = np.asarray(band, dtype=np.float64)
    lo, hi = np.percentile(band, [low, high])
    if hi <= lo:
        return np.full(band.shape, 128, dtype=np.uint8)
    scaled = (band - lo) / (hi - lo) * 255.0
    return np.clip(np.round(scaled), 0, 255).astype(np.uint8)


def truecolor(img, band_map=(2, 1, 0)):
    """8-bit (H, W, 3) rendering of the bands named by ``band_map`` (r, g, b)."""
    img = as_image_tensor(img)[0]
    for b in band_map:
        if not 0 <= b < img.shape[0]:
            raise ConfigurationError(f"band index {b} outside 0..{img.shape[0] - 1}")
    return np.stack([percentile_stretch(img[b]) for b in band_map], axis=-1)


def export_truecolor(img, band_map, path):
    """Write a percentile-stretched RGB PNG of three bands of ``img``."""
    rgb = truecolor(img, band_map)
    Image.fromarray(rgb, mode="RGB").save(path)
    return rgb
