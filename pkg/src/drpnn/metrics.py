"""Reference-based fusion quality indices: Q, ERGAS, SAM and SCC.

All functions take images shaped (S, H, W) or (1, S, H, W) and compute in
float64 regardless of the input dtype.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

LAPLACIAN = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.float64)
COLUMNS = ("q", "ergas", "sam_degrees", "scc")


class MetricError(ValueError):
    """Inputs for which a metric is undefined."""


def _pair(fused, reference):
    fused = np.asarray(fused, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if fused.ndim == 4:
        if fused.shape[0] != 1:
            raise MetricError(f"expected a single image, got batch of {fused.shape[0]}")
        fused = fused[0]
    if reference.ndim == 4:
        if reference.shape[0] != 1:
            raise MetricError(f"expected a single image, got batch of {reference.shape[0]}")
        reference = reference[0]
    if fused.ndim != 3 or fused.shape != reference.shape:
        raise MetricError(f"shape mismatch: fused {fused.shape} vs reference {reference.shape}")
    return fused, reference


def q_index(fused, reference, window=32):
    """Universal image quality index averaged over non-overlapping blocks, then bands.

    Blocks with zero variance in both images score 1 if their means agree and 0
    otherwise; blocks whose means are both zero (but have variance) are skipped.
    Pixels beyond the last full block are ignored.
    """
    x, y = _pair(fused, reference)
    if window < 2:
        raise MetricError(f"window must be >= 2, got {window}")
    S, H, W = x.shape
    if window > H or window > W:
        raise MetricError(f"window {window} larger than image {H}x{W}")
    nby, nbx = H // window, W // window

    def blocks(a):
        a = a[:, :nby * window, :nbx * window]
        return a.reshape(S, nby, window, nbx, window).transpose(0, 1, 3, 2, 4).reshape(S, nby * nbx, -1)

    bx, by = blocks(x), blocks(y)
    mx, my = bx.mean(-1), by.mean(-1)
    dx, dy = bx - mx[..., None], by - my[..., None]
    vx, vy = (dx**2).mean(-1), (dy**2).mean(-1)
    cxy = (dx * dy).mean(-1)

    var_sum = vx + vy
    mean_sq = mx**2 + my**2
    q = np.full(var_sum.shape, np.nan)
    ok = (var_sum > 0) & (mean_sq > 0)
    q[ok] = 4 * cxy[ok] * mx[ok] * my[ok] / (var_sum[ok] * mean_sq[ok])
    flat = var_sum == 0
    q[flat] = np.where(mx[flat] == my[flat], 1.0, 0.0)

    per_band = []
    for s in range(S):
        valid = q[s][~np.isnan(q[s])]
        if valid.size:
            per_band.append(valid.mean())
    if not per_band:
        raise MetricError("Q undefined: every block is degenerate")
    return float(np.clip(np.mean(per_band), -1.0, 1.0))


def ergas(fused, reference, scale):
    """``100 / scale * sqrt(mean_b (RMSE_b / mean_b)^2)`` with reference band means."""
    x, y = _pair(fused, reference)
    if scale < 1:
        raise MetricError(f"scale must be positive, got {scale}")
    rmse = np.sqrt(((x - y) ** 2).mean(axis=(1, 2)))
    mu = y.mean(axis=(1, 2))
    zero = np.flatnonzero(mu == 0)
    if zero.size:
        raise MetricError(f"ERGAS undefined: reference band {int(zero[0])} has zero mean")
    return float(100.0 / scale * np.sqrt(np.mean((rmse / mu) ** 2)))


def sam(fused, reference):
    """Mean spectral angle in degrees over pixels where both spectra are non-zero."""
    x, y = _pair(fused, reference)
    if x.shape[0] < 2:
        raise MetricError("SAM needs at least 2 bands")
    dot = (x * y).sum(axis=0)
    norms = np.sqrt((x**2).sum(axis=0)) * np.sqrt((y**2).sum(axis=0))
    valid = norms > 0
    if not valid.any():
        raise MetricError("SAM undefined: every pixel has a zero spectrum")
    cos = np.clip(dot[valid] / norms[valid], -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def high_pass(band):
    """3x3 Laplacian with edge replication, so constant images map to zero."""
    return ndimage.correlate(band, LAPLACIAN, mode="nearest")


def scc(fused, reference):
    """Spatial correlation coefficient of Laplacian-filtered images, averaged over bands.

    A single-band ``reference`` (e.g. PAN) is compared against every fused band.
    Bands whose filtered reference is constant are skipped.
    """
    x = np.asarray(fused, dtype=np.float64)
    y = np.asarray(reference, dtype=np.float64)
    x = x[0] if x.ndim == 4 else x
    y = y[0] if y.ndim == 4 else y
    if y.ndim == 3 and y.shape[0] == 1 and x.ndim == 3 and x.shape[0] > 1:
        y = np.repeat(y, x.shape[0], axis=0)
    x, y = _pair(x, y)
    values = []
    for s in range(x.shape[0]):
        hx, hy = high_pass(x[s]).ravel(), high_pass(y[s]).ravel()
        hx -= hx.mean()
        hy -= hy.mean()
        ny = np.sqrt(hy @ hy)
        if ny == 0:
            continue
        nx = np.sqrt(hx @ hx)
        values.append(0.0 if nx == 0 else float(np.clip(hx @ hy / (nx * ny), -1.0, 1.0)))
    if not values:
        raise MetricError("SCC undefined: every reference band is flat after high-pass filtering")
    return float(np.mean(values))


@dataclass
class MetricsReport:
    q: float
    ergas: float
    sam_degrees: float
    scc: float
    scale: int
    bands: int
    window: int

    def values(self):
        return tuple(getattr(self, c) for c in COLUMNS)

    def to_line(self):
        """Tab-separated record in table order: Q, ERGAS, SAM, SCC, then metadata."""
        return (f"Q={self.q:.4f}\tERGAS={self.ergas:.4f}\tSAM={self.sam_degrees:.4f}\tSCC={self.scc:.4f}"
                f"\tscale={self.scale}\tbands={self.bands}\twindow={self.window}")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def evaluate_all(fused, reference, scale=4, window=32):
    x, y = _pair(fused, reference)
    return MetricsReport(
        q=q_index(x, y, window),
        ergas=ergas(x, y, scale),
        sam_degrees=sam(x, y),
        scc=scc(x, y),
        scale=int(scale),
        bands=int(x.shape[0]),
        window=int(window),
    )


def mean_report(reports):
    """Average a list of reports column by column (metadata taken from the first)."""
    if not reports:
        raise MetricError("no reports to average")
    first = reports[0]
    avg = np.mean([r.values() for r in reports], axis=0)
    return MetricsReport(*map(float, avg), scale=first.scale, bands=first.bands, window=first.window)
