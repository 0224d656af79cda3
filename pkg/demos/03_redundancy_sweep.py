"""
Sweep one hyperparameter
========================

Same seed and patch budget for every cell; only the redundancy factor
changes. A tiny budget keeps this quick, so expect noisy orderings.
"""

from bcsnet import ArchSpec, TrainConfig
from bcsnet.datasets import test_images, training_corpus
from bcsnet.pipeline import sweep, sweep_table

base = TrainConfig(
    spec=ArchSpec(16, 0.25, 2, 8),
    epochs=1,
    patch_count=5_000,
    corpus=training_corpus(),
    seed=42,
)
images = dict(list(test_images().items())[:3])
rows = sweep(base, "redundancy", [2, 4, 8], images, on_row=print)
print(sweep_table("redundancy", rows))
