import numpy as np
import pytest

from bcsnet.imaging import GrayImage, PatchDataset, assemble_blocks, extract_blocks, BlockSet
from bcsnet.metrics import psnr, ssim
from bcsnet.model import ArchSpec, build_model, load_model, sensing_bias, sensing_matrix
from bcsnet.nn import NumericalError, network_forward
from bcsnet.pipeline import (
    MeasurementFormatError,
    MeasurementSet,
    SpecMismatchError,
    SweepError,
    TrainConfig,
    dataset_loss,
    evaluate,
    load_measurements,
    model_checksum,
    reconstruct,
    save_measurements,
    sense,
    sweep,
    sweep_table,
    time_reconstruction,
    train,
)


def textured(rng, h, w):
    """Smooth random field plus noise, full 8-bit range."""
    r, c = np.mgrid[0:h, 0:w]
    base = 128 + 60 * np.sin(r / 5.0 + rng.uniform(0, 6)) * np.cos(c / 7.0 + rng.uniform(0, 6))
    return GrayImage(np.clip(base + rng.normal(0, 12, (h, w)), 0, 255).round())


@pytest.fixture
def corpus(rng):
    return [textured(rng, 40, 48), textured(rng, 33, 37), textured(rng, 24, 60)]


@pytest.fixture
def tiny(corpus):
    return TrainConfig(
        spec=ArchSpec(4, 0.25, 1, 2), epochs=3, batch_size=8, patch_count=200,
        corpus=corpus, seed=7,
    )


def test_train_deterministic(tiny):
    m1, h1 = train(tiny)
    m2, h2 = train(tiny)
    assert h1.losses == h2.losses
    assert h1.checksum == h2.checksum == model_checksum(m1)
    assert m1 == m2
    assert len(h1.losses) == len(h1.seconds) == 3


def test_first_epoch_beats_untrained(tiny):
    from bcsnet.pipeline import _seeds, sample_patches

    sample_rng, init_rng, _ = _seeds(tiny.seed)
    ds = sample_patches(tiny.corpus, tiny.patch_count, 4, sample_rng)
    untrained = dataset_loss(build_model(tiny.spec, init_rng), ds)
    tiny.epochs = 1
    _, hist = train(tiny)
    assert hist.losses[0] < untrained


def test_train_reduces_loss(tiny):
    tiny.epochs = 10
    _, hist = train(tiny)
    assert hist.losses[-1] < hist.losses[0]


def test_train_validation(tiny):
    tiny.batch_size = 500
    with pytest.raises(ValueError, match="batch_size"):
        train(tiny)
    tiny.batch_size, tiny.learning_rate = 8, 0.0
    with pytest.raises(ValueError, match="learning_rate"):
        train(tiny)


def test_train_dataset_block_size_mismatch(tiny):
    ds = PatchDataset(np.zeros((50, 9), np.uint8), 3)
    with pytest.raises(ValueError, match="block size"):
        train(tiny, dataset=ds)


def test_train_nonfinite_loss_reports_batch(tiny):
    model = build_model(tiny.spec, 0)
    for layer in model.layers:
        layer.weights[:] = 1e200
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalError, match="batch 0"):
        train(tiny, model=model)


def test_train_strict_linear_keeps_zero_bias(tiny):
    tiny.strict_linear = True
    model, _ = train(tiny)
    assert not sensing_bias(model).any()
    assert model.strict_linear


def test_train_checkpoints(tiny, tmp_path):
    tiny.checkpoint_every = 2
    tiny.checkpoint_path = tmp_path / "ckpt.bcs"
    model, _ = train(tiny)
    saved = load_model(tiny.checkpoint_path)
    assert saved.spec == model.spec and saved != model  # written after epoch 2 of 3


def test_train_from_corpus_directory(tiny, corpus, tmp_path):
    from bcsnet.datasets import export

    export(tmp_path, corpus)
    a, _ = train(tiny)
    tiny.corpus = str(tmp_path)
    b, _ = train(tiny)
    assert a == b


def test_sense_shapes():
    model = build_model(ArchSpec(16, 0.25, 2, 8), 0)
    img = GrayImage(np.full((512, 512), 90, np.uint8))
    ms = sense(model, img)
    assert ms.values.shape == (1024, 64) and ms.values.size == 65_536
    assert ms.values.size / (512 * 512) == 0.25


def test_sense_zero_image_strict_linear():
    model = build_model(ArchSpec(8, 0.25, 1, 2), 3, strict_linear=True)
    ms = sense(model, GrayImage(np.zeros((20, 20), np.uint8)))
    assert ms.values.shape == (9, 16) and not ms.values.any()


def test_sense_matches_sensing_matrix(rng):
    model = build_model(ArchSpec(4, 0.3, 1, 2), 1)
    img = textured(rng, 12, 8)
    ms = sense(model, img)
    blocks = extract_blocks(img, 4).blocks
    np.testing.assert_allclose(
        ms.values, blocks @ sensing_matrix(model).T + sensing_bias(model), rtol=0, atol=1e-15
    )
    for x, y in zip(blocks, ms.values):
        np.testing.assert_allclose(sensing_matrix(model) @ x + sensing_bias(model), y, atol=1e-14)


def test_composition_identity_bit_exact(rng):
    model = build_model(ArchSpec(4, 0.25, 2, 2), 5)
    img = textured(rng, 18, 23)
    rec = reconstruct(model, sense(model, img))
    assert (rec.height, rec.width) == (18, 23)
    bs = extract_blocks(img, 4)
    full, _ = network_forward(model.layers, bs.blocks)
    direct = assemble_blocks(BlockSet(4, bs.grid, bs.shape, np.clip(full, 0, 1)))
    assert rec == direct


def test_reconstruct_spec_mismatch(rng):
    a = build_model(ArchSpec(4, 0.25, 1, 2), 0)
    b = build_model(ArchSpec(4, 0.5, 1, 2), 0)
    ms = sense(a, textured(rng, 8, 8))
    with pytest.raises(SpecMismatchError, match="R=0.25.*R=0.5"):
        reconstruct(b, ms)


def test_measurement_file_round_trip(tmp_path, rng):
    model = build_model(ArchSpec(4, 0.3, 1, 2), 2)
    ms = sense(model, textured(rng, 10, 13))
    save_measurements(ms, tmp_path / "m.bcm")
    loaded = load_measurements(tmp_path / "m.bcm")
    assert loaded == ms and loaded.shape == (10, 13) and loaded.grid == (3, 4)


def test_measurement_golden_fixture(data_dir):
    blob = (data_dir / "golden_measurements.bcm").read_bytes()
    model = load_model(data_dir / "golden_model.bcs")
    image = GrayImage(np.arange(15, dtype=np.uint8).reshape(3, 5) * 17)
    assert sense(model, image).to_bytes() == blob
    ms = MeasurementSet.from_bytes(blob)
    assert (ms.block_size, ms.rate, ms.m, ms.shape, ms.grid) == (2, 0.5, 2, (3, 5), (2, 3))
    # header: magic, version, B, R, M, width, height, rows, cols
    assert blob[:8] == b"BCSMEAS\0"
    assert np.frombuffer(blob, "<u4", 1, 8)[0] == 1
    assert np.frombuffer(blob, "<f8", 1, 16)[0] == 0.5
    assert list(np.frombuffer(blob, "<u4", 5, 24)) == [2, 5, 3, 2, 3]
    assert len(blob) == 44 + 6 * 2 * 8


def test_measurement_file_errors():
    good = MeasurementSet(2, 0.5, (2, 2), (1, 1), np.zeros((1, 2))).to_bytes()
    with pytest.raises(MeasurementFormatError, match="magic"):
        MeasurementSet.from_bytes(b"X" * 8 + good[8:])
    with pytest.raises(MeasurementFormatError, match="payload"):
        MeasurementSet.from_bytes(good[:-1])
    with pytest.raises(MeasurementFormatError, match="header"):
        MeasurementSet.from_bytes(good[:20])
    with pytest.raises(ValueError):
        MeasurementSet(2, 0.5, (2, 2), (1, 1), np.zeros((2, 2)))


def test_evaluate_report(rng):
    model = build_model(ArchSpec(4, 0.5, 1, 2), 0)
    images = {"a": textured(rng, 16, 16), "b": textured(rng, 20, 12)}
    r1 = evaluate(model, images)
    r2 = evaluate(model, images)
    assert r1.rows == r2.rows and [r.name for r in r1.rows] == ["a", "b"]
    assert r1.mean_psnr == pytest.approx(np.mean([r.psnr for r in r1.rows]))
    rec = reconstruct(model, sense(model, images["a"]))
    assert r1.rows[0].psnr == psnr(images["a"], rec)
    assert r1.rows[0].ssim == ssim(images["a"], rec)


def test_sweep_shape_and_degenerate_case(tiny, rng):
    images = {"t": textured(rng, 16, 16)}
    rows = sweep(tiny, "redundancy", [1, 2, 3], images)
    assert [r.value for r in rows] == [1, 2, 3]
    assert len(sweep_table("redundancy", rows).splitlines()) == 4
    single = sweep(tiny, "redundancy", [2], images)[0]
    model, _ = train(tiny)
    assert single.mean_psnr == evaluate(model, images).mean_psnr
    assert single.mean_psnr == rows[1].mean_psnr


def test_sweep_partial_rows_on_failure(tiny, rng):
    seen = []
    with pytest.warns(UserWarning), pytest.raises(SweepError) as info:
        sweep(tiny, "block_size", [4, 64], {"t": textured(rng, 16, 16)}, on_row=seen.append)
    assert [r.value for r in info.value.rows] == [4] and seen == info.value.rows


def test_sweep_rejects_unknown_axis(tiny):
    with pytest.raises(ValueError, match="axis"):
        sweep(tiny, "depth", [1], {})


def test_time_reconstruction():
    model = build_model(ArchSpec(16, 0.25, 2, 8), 0)
    small = GrayImage(np.full((512, 512), 77, np.uint8))
    big = GrayImage(np.full((1024, 1024), 77, np.uint8))
    runs = []
    t = time_reconstruction(model, small, 1, timings=runs)
    assert len(runs) == 1 and t == runs[0]
    runs = []
    t_small = time_reconstruction(model, small, 3, timings=runs)
    assert t_small == sorted(runs)[1]
    assert time_reconstruction(model, big, 3) >= t_small
    with pytest.raises(ValueError):
        time_reconstruction(model, small, 0)
