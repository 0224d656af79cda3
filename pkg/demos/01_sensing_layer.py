"""
The sensing layer is the first network layer
=============================================

Build the network at the chosen operating point, look at its parameter
budget, and sense one image block by block.
"""

import numpy as np

from bcsnet import ArchSpec, build_model, param_count, sense, sensing_matrix, sensing_bias
from bcsnet.datasets import load_image

# B=16, K=2 reconstruction layers of width 16*16*8, measured at R=0.1
spec = ArchSpec(block_size=16, rate=0.1, recon_layers=2, redundancy=8)
print("measurements per block:", spec.measurements)  # floor(256 * 0.1) = 25
print("parameters:", param_count(spec))               # 4,780,569
for i, o, act in spec.layer_dims():
    print(f"  {i:5d} -> {o:5d}  {act}")

model = build_model(spec, seed=0)
phi = sensing_matrix(model)
print("sensing matrix:", phi.shape)

# Sensing = tile into 16x16 blocks, column-stack, apply layer 0 only
image = load_image("camera", 512)
ms = sense(model, image)
print("grid:", ms.grid, "measurement array:", ms.values.shape)
print("kept fraction of pixels:", ms.values.size / (image.width * image.height))

# The first block by hand: column-stack the top-left 16x16 patch
x = image.pixels[:16, :16].reshape(-1, order="F") / 255.0
print("matches layer 0:", np.allclose(phi @ x + sensing_bias(model), ms.values[0]))
