"""Training, sensing, reconstruction, evaluation, sweeps and timing."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .imaging import (
    BlockSet,
    GrayImage,
    PatchDataset,
    assemble_blocks,
    extract_blocks,
    read_image_dir,
    sample_patches,
)
from .model import ArchSpec, BcsModel, build_model, measurement_dim, model_to_bytes, save_model
from .nn import (
    AdaGradState,
    NumericalError,
    adagrad_step,
    flatten_grads,
    layer_params,
    mse_grad,
    mse_loss,
    network_backward,
    network_forward,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    spec: ArchSpec = field(default_factory=ArchSpec)
    learning_rate: float = 0.005
    batch_size: int = 16
    epochs: int = 100
    patch_count: int = 5_000_000
    corpus: object = None
    seed: int = 42
    checkpoint_every: int = 0
    checkpoint_path: object = None
    strict_linear: bool = False

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.patch_count < 1:
            raise ValueError("batch_size, epochs and patch_count must be positive")
        if self.batch_size > self.patch_count:
            raise ValueError(
                f"batch_size {self.batch_size} exceeds patch_count {self.patch_count}"
            )
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.checkpoint_every and self.checkpoint_path is None:
            raise ValueError("checkpoint_every needs a checkpoint_path")


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    checksum: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {"epoch_loss": self.losses, "epoch_seconds": self.seconds, "sha256": self.checksum},
            indent=2,
        ) + "\n"


def model_checksum(model: BcsModel) -> str:
    return hashlib.sha256(model_to_bytes(model)).hexdigest()


def load_corpus(corpus):
    """A directory of PGM files, or an iterable of images / (name, image)."""
    if corpus is None:
        raise ValueError("no training corpus given")
    if isinstance(corpus, (str, Path)):
        path = Path(corpus)
        if not path.is_dir():
            raise FileNotFoundError(f"corpus directory {path} does not exist")
        images = [img for _, img in read_image_dir(path)]
        if not images:
            raise FileNotFoundError(f"no .pgm images in {path}")
        return images
    return [item[1] if isinstance(item, tuple) else item for item in corpus]


def _seeds(seed):
    """Independent generators for (patch sampling, init, shuffling)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def dataset_loss(model: BcsModel, dataset: PatchDataset, chunk: int = 4096) -> float:
    """Mean squared reconstruction error of ``model`` over ``dataset``."""
    total = 0.0
    for start in range(0, len(dataset), chunk):
        x = dataset.batch(slice(start, start + chunk))
        pred = model.forward(x)
        total += float(np.sum((pred - x) ** 2))
    return total / (len(dataset) * dataset.patches.shape[1])


def train(config: TrainConfig, dataset: PatchDataset | None = None, model: BcsModel | None = None):
    """Train the sensing + reconstruction network as an autoencoder.

    Each epoch reshuffles the patches, then steps AdaGrad on the mean MSE
    of every mini-batch (the target is the input patch). ``dataset`` and
    ``model`` override sampling from ``config.corpus`` and fresh init.
    Returns ``(model, history)``.
    """
    config.validate()
    spec = config.spec
    sample_rng, init_rng, shuffle_rng = _seeds(config.seed)
    if dataset is None:
        dataset = sample_patches(
            load_corpus(config.corpus), config.patch_count, spec.block_size, sample_rng,
            source=str(config.corpus) if isinstance(config.corpus, (str, Path)) else "",
        )
    if dataset.block_size != spec.block_size:
        raise ValueError(
            f"dataset block size {dataset.block_size} != spec block size {spec.block_size}"
        )
    if len(dataset) < config.batch_size:
        raise ValueError(f"dataset has {len(dataset)} patches, fewer than one batch")
    if model is None:
        model = build_model(spec, init_rng, strict_linear=config.strict_linear)

    params = layer_params(model)
    state = AdaGradState.for_params(params, config.learning_rate)
    history = TrainHistory()
    n = len(dataset)
    bs = config.batch_size
    batch_index = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, bs):
            x = dataset.batch(order[start : start + bs])
            out, cache = network_forward(model.layers, x)
            loss = mse_loss(out, x)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at batch {batch_index} (epoch {epoch + 1})")
            grads = network_backward(model.layers, cache, mse_grad(out, x))
            if model.strict_linear:
                grads[0] = (grads[0][0], np.zeros_like(grads[0][1]))
            try:
                adagrad_step(params, flatten_grads(grads), state)
            except NumericalError as exc:
                raise NumericalError(f"batch {batch_index}: {exc}") from exc
            sq_sum += loss * x.shape[0]
            batch_index += 1
        history.losses.append(sq_sum / n)
        history.seconds.append(time.perf_counter() - t0)
        log.info(
            "epoch %d/%d  loss %.6g  (%.1fs)",
            epoch + 1, config.epochs, history.losses[-1], history.seconds[-1],
        )
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_model(model, config.checkpoint_path)
    history.checksum = model_checksum(model)
    return model, history


# ---------------------------------------------------------------------------
# Measurements

MEAS_MAGIC = b"BCSMEAS\0"
MEAS_VERSION = 1
# magic, version, B, R, M, width, height, grid rows, grid cols
_MEAS_HEADER = struct.Struct("<8sIIdIIIII")


class MeasurementFormatError(ValueError):
    pass


class SpecMismatchError(ValueError):
    pass


@dataclass
class MeasurementSet:
    """Per-block measurement vectors in grid row-major order."""

    block_size: int
    rate: float
    shape: tuple
    grid: tuple
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        m = measurement_dim(self.block_size, self.rate)
        rows, cols = self.grid
        if self.values.shape != (rows * cols, m):
            raise ValueError(
                f"measurement array {self.values.shape} != ({rows * cols}, {m})"
            )

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            (self.block_size, self.rate, tuple(self.shape), tuple(self.grid))
            == (other.block_size, other.rate, tuple(other.shape), tuple(other.grid))
            and np.array_equal(self.values, other.values)
        )

    def to_bytes(self) -> bytes:
        h, w = self.shape
        rows, cols = self.grid
        head = _MEAS_HEADER.pack(
            MEAS_MAGIC, MEAS_VERSION, self.block_size, self.rate, self.m, w, h, rows, cols
        )
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> MeasurementSet:
        if data[:8] != MEAS_MAGIC:
            raise MeasurementFormatError("not a measurement file (bad magic)")
        if len(data) < _MEAS_HEADER.size:
            raise MeasurementFormatError("measurement file truncated inside the header")
        _, version, b, rate, m, w, h, rows, cols = _MEAS_HEADER.unpack_from(data)
        if version != MEAS_VERSION:
            raise MeasurementFormatError(
                f"measurement file version {version}, expected {MEAS_VERSION}"
            )
        try:
            expected_m = measurement_dim(b, rate)
        except ValueError as exc:
            raise MeasurementFormatError(str(exc)) from exc
        if m != expected_m:
            raise MeasurementFormatError(f"header M={m} but B={b}, R={rate} give {expected_m}")
        n = rows * cols * m
        if len(data) != _MEAS_HEADER.size + 8 * n:
            raise MeasurementFormatError(
                f"payload is {len(data) - _MEAS_HEADER.size} bytes, expected {8 * n}"
            )
        values = np.frombuffer(data, dtype="<f8", count=n, offset=_MEAS_HEADER.size)
        return cls(b, rate, (h, w), (rows, cols), values.reshape(rows * cols, m).copy())


def save_measurements(ms: MeasurementSet, destination):
    Path(destination).write_bytes(ms.to_bytes())


def load_measurements(source) -> MeasurementSet:
    return MeasurementSet.from_bytes(Path(source).read_bytes())


def sense(model: BcsModel, image: GrayImage) -> MeasurementSet:
    """Tile ``image`` and apply only the sensing layer to every block."""
    blocks = extract_blocks(image, model.spec.block_size)
    y, _ = network_forward(model.layers[:1], blocks.blocks)
    return MeasurementSet(model.spec.block_size, model.spec.rate, blocks.shape, blocks.grid, y)


def reconstruct(model: BcsModel, ms: MeasurementSet) -> GrayImage:
    spec = model.spec
    if (ms.block_size, ms.m) != (spec.block_size, spec.measurements) or ms.rate != spec.rate:
        raise SpecMismatchError(
            f"measurements are B={ms.block_size}, R={ms.rate}, M={ms.m}; model is "
            f"B={spec.block_size}, R={spec.rate}, M={spec.measurements}"
        )
    out, _ = network_forward(model.layers[1:], ms.values)
    blocks = BlockSet(spec.block_size, ms.grid, ms.shape, np.clip(out, 0.0, 1.0))
    return assemble_blocks(blocks)


def _named(images):
    if isinstance(images, dict):
        return list(images.items())
    out = []
    for k, item in enumerate(images):
        out.append(item if isinstance(item, tuple) else (f"image{k}", item))
    return out


def evaluate(model: BcsModel, images) -> metrics.QualityReport:
    """Sense + reconstruct each image and score it against the original."""
    report = metrics.QualityReport()
    for name, img in _named(images):
        rec = reconstruct(model, sense(model, img))
        report.add(name, metrics.psnr(img, rec), metrics.ssim(img, rec))
    return report


# ---------------------------------------------------------------------------
# Sweeps

SWEEP_AXES = {
    "block_size": ("block_size", int),
    "redundancy": ("redundancy", int),
    "layers": ("recon_layers", int),
    "rate": ("rate", float),
}


@dataclass
class SweepRow:
    value: object
    mean_psnr: float
    mean_ssim: float


class SweepError(RuntimeError):
    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def sweep(base: TrainConfig, axis: str, values, images, on_row=None):
    """Train and evaluate one model per value of ``axis``.

    All cells share the base seed and budget; patches are sampled once per
    block size. ``on_row`` is called as each row completes. A failing cell
    raises :class:`SweepError` carrying the rows finished so far.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    attr, cast = SWEEP_AXES[axis]
    values = [cast(v) for v in values]
    if not values:
        raise ValueError("no sweep values")
    specs = [replace(base.spec, **{attr: v}) for v in values]

    corpus = None
    datasets = {}
    rows = []
    for value, spec in zip(values, specs):
        try:
            b = spec.block_size
            if b not in datasets:
                if corpus is None:
                    corpus = load_corpus(base.corpus)
                sample_rng = _seeds(base.seed)[0]
                datasets[b] = sample_patches(corpus, base.patch_count, b, sample_rng)
            model, _ = train(replace(base, spec=spec), dataset=datasets[b])
            report = evaluate(model, images)
        except Exception as exc:
            raise SweepError(f"sweep cell {axis}={value} failed: {exc}", rows) from exc
        row = SweepRow(value, report.mean_psnr, report.mean_ssim)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def sweep_table(axis, rows) -> str:
    lines = [f"{axis},mean_psnr_db,mean_ssim"]
    lines += [f"{r.value},{r.mean_psnr:.4f},{r.mean_ssim:.5f}" for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Timing

def time_reconstruction(model: BcsModel, image: GrayImage, repetitions: int = 5, timings=None):
    """Median wall-clock seconds of ``reconstruct(sense(...))`` (no file I/O).

    Pass a list as ``timings`` to receive the individual measurements.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    runs = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        reconstruct(model, sense(model, image))
        runs.append(time.perf_counter() - t0)
    if timings is not None:
        timings.extend(runs)
    return float(np.median(runs))
