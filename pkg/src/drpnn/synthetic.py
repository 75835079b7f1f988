"""Procedural multispectral/panchromatic scenes with a known spectral mixing model.

A high-resolution reflectance cube is built as a linear mix of a few material
spectra (endmembers) with spatially varying abundances and a shared
illumination/texture field. The PAN band is a fixed weighted sum of the MS
bands; the observed MS image is the cube decimated by ``scale``.
"""

import numpy as np
from scipy import ndimage

from .resample import ScenePair, bicubic_downsample

# reflectance of vegetation, bare soil, water, roofing in blue/green/red/NIR
ENDMEMBERS = np.array([
    [0.04, 0.08, 0.05, 0.45],
    [0.12, 0.18, 0.25, 0.32],
    [0.08, 0.06, 0.03, 0.01],
    [0.22, 0.24, 0.26, 0.28],
])
PAN_WEIGHTS = np.array([0.15, 0.3, 0.3, 0.25])


def _smooth_field(rng, size, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    return (f - f.mean()) / (f.std() + 1e-12)


def _abundances(rng, size, n_materials):
    # Voronoi parcels with hard borders, softened by smooth per-material fields
    n_seeds = rng.integers(6, 14)
    seeds = rng.uniform(0, size, (n_seeds, 2))
    labels = rng.integers(0, n_materials, n_seeds)
    yy, xx = np.mgrid[0:size, 0:size]
    d = (yy[None] - seeds[:, 0, None, None]) ** 2 + (xx[None] - seeds[:, 1, None, None]) ** 2
    parcel = labels[np.argmin(d, axis=0)]
    logits = np.stack([3.0 * (parcel == m) + _smooth_field(rng, size, size / 16) for m in range(n_materials)])
    logits += 0.5 * np.stack([_smooth_field(rng, size, 2.0) for _ in range(n_materials)])
    a = np.exp(logits - logits.max(axis=0))
    return a / a.sum(axis=0)


def reflectance_cube(rng, size, endmembers=ENDMEMBERS):
    """(S, size, size) high-resolution reflectance of one procedural scene."""
    bands, k = endmembers.shape[1], endmembers.shape[0]
    A = _abundances(rng, size, k)
    cube = np.einsum("km,kyx->myx", endmembers, A)
    shade = 1 + 0.15 * _smooth_field(rng, size, 1.0) + 0.1 * _smooth_field(rng, size, 4.0)
    return np.clip(cube * shade, 0.005, None)[:bands]


def make_scene(seed, pan_size=256, scale=4, name=""):
    """One observed (ms, pan) pair at full resolution, as a :class:`ScenePair`."""
    rng = np.random.default_rng(seed)
    cube = reflectance_cube(rng, pan_size)
    pan = np.tensordot(PAN_WEIGHTS, cube, axes=1)[None, None]
    ms = bicubic_downsample(cube[None], scale)
    return ScenePair(ms=ms.astype(np.float32), pan=pan.astype(np.float32), scale=scale, name=name)


def make_dataset(n_scenes, seed=0, pan_size=256, scale=4, test_fraction=0.25):
    """``n_scenes`` seeded scenes as ``(ScenePair, split)``; the last ones form the test split."""
    n_test = max(1, int(round(n_scenes * test_fraction)))
    out = []
    for i in range(n_scenes):
        scene = make_scene([seed, i], pan_size, scale, name=f"scene{i:03d}")
        out.append((scene, "test" if i >= n_scenes - n_test else "train"))
    return out
