"""Bicubic resampling, network-input construction and Wald-protocol degradation.

Both resamplers are separable: a 1-D weight matrix is built per axis from the
Keys cubic kernel (a = -0.5) with half-pixel-centred coordinates and
clamp-to-edge sampling, then applied as ``Wy @ band @ Wx.T``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .tensor_core import ConfigurationError, check_tensor

KEYS_A = -0.5


def keys_kernel(t, a=KEYS_A):
    """Keys cubic convolution kernel evaluated elementwise."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _upsample_matrix(n_in, scale):
    n_out = n_in * scale
    src = (np.arange(n_out) + 0.5) / scale - 0.5
    base = np.floor(src).astype(int)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in range(-1, 3):
        taps = base + off
        np.add.at(mat, (rows, np.clip(taps, 0, n_in - 1)), keys_kernel(src - taps))
    return mat


def _downsample_matrix(n_in, scale):
    n_out = n_in // scale
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    lo = np.floor(centers - 2 * scale).astype(int)
    for off in range(4 * scale + 2):
        taps = lo + off
        np.add.at(mat, (rows, np.clip(taps, 0, n_in - 1)), keys_kernel((taps - centers) / scale))
    return mat / mat.sum(axis=1, keepdims=True)


def _apply_separable(img, wy, wx):
    out = np.einsum("yh,nchw,xw->ncyx", wy, img.astype(np.float64), wx, optimize=True)
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)


def bicubic_upsample(img, scale):
    """Enlarge every band of ``img`` (n, c, h, w) by an integer ``scale``."""
    img = check_tensor(img, "image")
    if scale < 2:
        raise ConfigurationError(f"scale must be >= 2, got {scale}")
    _, _, h, w = img.shape
    return _apply_separable(img, _upsample_matrix(h, scale), _upsample_matrix(w, scale))


def bicubic_downsample(img, scale):
    """Anti-aliased bicubic decimation by an integer ``scale``.

    The kernel is stretched by ``scale`` (4*scale taps per axis) and its
    weights renormalised to sum to one.
    """
    img = check_tensor(img, "image")
    if scale < 2:
        raise ConfigurationError(f"scale must be >= 2, got {scale}")
    _, _, h, w = img.shape
    if h % scale or w % scale:
        raise ConfigurationError(
            f"image size {h}x{w} is not divisible by scale {scale}; "
            f"crop to {h - h % scale}x{w - w % scale} first"
        )
    return _apply_separable(img, _downsample_matrix(h, scale), _downsample_matrix(w, scale))


@dataclass
class ScenePair:
    """Co-registered multispectral and panchromatic observations.

    ``ms`` is (1, S, H/scale, W/scale), ``pan`` is (1, 1, H, W) and the
    optional ``truth`` is the reference (1, S, H, W) image.
    """

    ms: np.ndarray
    pan: np.ndarray
    scale: int = 4
    truth: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        self.ms = check_tensor(self.ms, "ms")
        self.pan = check_tensor(self.pan, "pan")
        label = f"scene {self.name!r}: " if self.name else ""
        if self.scale < 2:
            raise ConfigurationError(f"{label}scale must be >= 2, got {self.scale}")
        if self.pan.shape[:2] != (1, 1) or self.ms.shape[0] != 1:
            raise ConfigurationError(f"{label}expected ms (1, S, h, w) and pan (1, 1, H, W), "
                                     f"got {self.ms.shape} and {self.pan.shape}")
        h, w = self.ms.shape[2:]
        if self.pan.shape[2:] != (h * self.scale, w * self.scale):
            raise ConfigurationError(f"{label}pan size {self.pan.shape[2:]} is not {self.scale}x "
                                     f"the ms size {(h, w)}")
        if self.truth is not None:
            self.truth = check_tensor(self.truth, "truth")
            if self.truth.shape != (1, self.bands) + self.pan.shape[2:]:
                raise ConfigurationError(f"{label}truth shape {self.truth.shape} does not match "
                                         f"{(1, self.bands) + self.pan.shape[2:]}")

    @property
    def bands(self):
        return self.ms.shape[1]


def build_input(scene):
    """Network input: upsampled MS bands followed by the PAN band, (1, S+1, H, W)."""
    up = bicubic_upsample(scene.ms, scene.scale)
    pan = scene.pan.astype(up.dtype, copy=False)
    return np.concatenate([up, pan], axis=1)


def bicubic_baseline(scene):
    """Reference fusion that ignores PAN: plain bicubic upsampling of the MS image."""
    return bicubic_upsample(scene.ms, scene.scale)


def wald_simulate(scene):
    """Degrade an observed pair by its own scale; the original MS becomes the truth."""
    s = scene.scale
    h, w = scene.ms.shape[2:]
    if h % s or w % s:
        label = f"scene {scene.name!r}: " if scene.name else ""
        raise ConfigurationError(
            f"{label}ms size {h}x{w} is not divisible by scale {s}; crop ms to "
            f"{h - h % s}x{w - w % s} (pan to {(h - h % s) * s}x{(w - w % s) * s}) first"
        )
    return replace(
        scene,
        ms=bicubic_downsample(scene.ms, s),
        pan=bicubic_downsample(scene.pan, s),
        truth=scene.ms,
    )


def extract_patches(scene, patch, stride, seed=0):
    """Aligned (G, truth) windows of ``patch`` x ``patch`` pixels in seeded random order."""
    if scene.truth is None:
        raise ConfigurationError("extract_patches needs a scene with truth (run wald_simulate first)")
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    G = build_input(scene)
    _, _, H, W = G.shape
    if patch > H or patch > W:
        raise ConfigurationError(f"patch {patch} larger than scene {H}x{W}")
    pairs = [
        (G[:, :, y:y + patch, x:x + patch], scene.truth[:, :, y:y + patch, x:x + patch])
        for y in range(0, H - patch + 1, stride)
        for x in range(0, W - patch + 1, stride)
    ]
    order = np.random.default_rng(seed).permutation(len(pairs))
    return [pairs[i] for i in order]
