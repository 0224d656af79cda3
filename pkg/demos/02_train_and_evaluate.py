"""
Train at desk scale and evaluate
================================

Joint training of sensing + reconstruction on random 16x16 patches from the
bundled training corpus, then PSNR/SSIM over the ten 512x512 test images.

The budget here (20,000 patches, 2 epochs) runs in a few minutes on one
core; the acceptance suite uses 100,000 patches for 20 epochs.
"""

import logging

from bcsnet import ArchSpec, TrainConfig, evaluate, save_model, train
from bcsnet.datasets import test_images, training_corpus

logging.basicConfig(level=logging.INFO, format="%(message)s")

config = TrainConfig(
    spec=ArchSpec(16, 0.25, 2, 8),
    learning_rate=0.005,
    batch_size=16,
    epochs=2,
    patch_count=20_000,
    corpus=training_corpus(),
    seed=42,
)
model, history = train(config)
print("epoch losses:", [f"{l:.5f}" for l in history.losses])

report = evaluate(model, test_images())
print(report.to_csv())

save_model(model, "demo_r025.bcs")
