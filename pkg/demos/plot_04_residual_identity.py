"""
Why the skip connection helps
=============================

The first stage of the network adds its output to its own input. With all
of those layers set to zero the stage is an exact identity, so training only
has to learn a correction to the upsampled MS + PAN stack. We check that,
then look at what a freshly initialised network produces.
"""

import numpy as np

from drpnn.model import NetworkSpec, forward, init_network

spec = NetworkSpec()  # 11 layers, 64 channels, 7x7 filters
print("parameters:", spec.parameter_count())
print("channels per layer:", spec.channel_plan)

rng = np.random.default_rng(0)
G = rng.random((1, spec.bands + 1, 32, 32)).astype(np.float32)

params = init_network(spec, seed=0)
for kern in params.layers[:-1]:
    kern.weights[...] = 0
    kern.bias[...] = 0
_, cache = forward(params, spec, G)
print("zeroed body, Stage-1 output == input bit for bit:", cache.stage1.tobytes() == G.tobytes())

# A random body perturbs the input, but the input is still all there.
params = init_network(spec, seed=0)
F, cache = forward(params, spec, G)
print("random body: mean |stage1 - G| = %.3f, output shape %s" % (np.abs(cache.stage1 - G).mean(), F.shape))
