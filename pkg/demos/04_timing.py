"""
Inference time
==============

Median wall-clock of sense + reconstruct for one 512x512 image at R=0.25.
Weights do not affect the cost, so an untrained model is enough.
"""

from bcsnet import ArchSpec, build_model, time_reconstruction
from bcsnet.datasets import load_image

model = build_model(ArchSpec(16, 0.25, 2, 8), seed=0)
image = load_image("camera", 512)
runs = []
median = time_reconstruction(model, image, repetitions=7, timings=runs)
print(f"median {median:.3f}s  runs: " + ", ".join(f"{t:.3f}" for t in runs))
