"""Block-based compressed sensing with a jointly trained fully-connected network."""

from .imaging import (
    BlockSet,
    GrayImage,
    PatchDataset,
    assemble_blocks,
    column_stack,
    extract_blocks,
    read_pgm,
    sample_patches,
    to_pixels,
    to_unit,
    unstack,
    write_pgm,
)
from .metrics import QualityReport, psnr, ssim
from .model import (
    ArchSpec,
    BcsModel,
    build_model,
    load_model,
    measurement_dim,
    param_count,
    save_model,
    sensing_bias,
    sensing_matrix,
)
from .nn import AdaGradState, DenseLayer, NumericalError
from .pipeline import (
    MeasurementSet,
    TrainConfig,
    TrainHistory,
    evaluate,
    load_measurements,
    reconstruct,
    save_measurements,
    sense,
    sweep,
    time_reconstruction,
    train,
)

__version__ = "0.1.0"
