"""
Quality metrics
===============

Four numbers summarise a fused image against its reference: Q (universal
image quality, 1 is perfect), ERGAS (relative global error, 0 is perfect),
SAM (mean spectral angle in degrees) and SCC (correlation of high-pass
detail). Here we see how each reacts to a few simple distortions.
"""

import numpy as np
from scipy import ndimage

from drpnn.metrics import evaluate_all, sam
from drpnn.synthetic import make_scene

ref = make_scene(1, pan_size=256).ms  # a 4-band 64x64 image
print("reference shape", ref.shape)

# Identical images hit the ideal values.
print("identical      ", evaluate_all(ref, ref).to_line())

# Blurring keeps the spectra but loses detail: SCC falls first.
blurred = ndimage.gaussian_filter(ref, (0, 0, 1.5, 1.5))
print("blurred        ", evaluate_all(blurred, ref).to_line())

# Scaling one band changes every pixel's spectral direction: SAM grows.
tinted = ref.copy()
tinted[:, 3] *= 1.2
print("NIR +20%       ", evaluate_all(tinted, ref).to_line())

# A global gain leaves every angle untouched, so SAM stays at zero.
print("gain x1.1      ", evaluate_all(1.1 * ref, ref).to_line())

# SAM is an angle between spectra: (1, 0) against (1, 1) is 45 degrees.
print("SAM((1,0),(1,1)) =", sam(np.array([1.0, 0.0]).reshape(2, 1, 1), np.array([1.0, 1.0]).reshape(2, 1, 1)))
