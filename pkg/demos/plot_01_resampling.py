"""
Bicubic resampling
==================

The network never sees a low-resolution image directly: the MS bands are
first brought up to the PAN grid with bicubic interpolation. This script
shows the two resampling directions and the properties they keep.
"""

import numpy as np

from drpnn.resample import bicubic_downsample, bicubic_upsample, keys_kernel

# The Keys cubic kernel is 1 at the origin, 0 at the other integers, and
# dips slightly negative between 1 and 2.
t = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
print("keys kernel at", t, "->", keys_kernel(t))

# Upsampling a 4x4 ramp by 4 gives a 16x16 ramp. Inside the image it is
# reproduced exactly; only the clamped border bends it.
ramp = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
up = bicubic_upsample(ramp, 4)
print("upsampled shape", up.shape)
print("row 8 of the upsampled ramp:\n", np.round(up[0, 0, 8], 3))

# Downsampling stretches the kernel by the scale factor, so it also acts as
# an anti-aliasing filter. A fine checkerboard averages out to flat grey.
checker = (np.indices((32, 32)).sum(axis=0) % 2).astype(np.float64)[None, None]
down = bicubic_downsample(checker, 4)
print("checkerboard after 4x decimation: min %.4f max %.4f" % (down.min(), down.max()))

# A constant image stays constant in both directions.
flat = np.full((1, 3, 8, 8), 0.25)
print("constant preserved:", np.allclose(bicubic_upsample(flat, 4), 0.25),
      np.allclose(bicubic_downsample(bicubic_upsample(flat, 4), 4), 0.25))
