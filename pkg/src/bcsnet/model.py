"""Block compressed-sensing network: architecture, sensing matrix, file codec.

Layer chain for ``ArchSpec(B, R, K, T)``::

    B*B --(identity)--> M --(relu)--> B*B*T  ... K times ... --(identity)--> B*B

with ``M = measurement_dim(B, R)``. Layer 0 is the sensing operator.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import IDENTITY, RELU, DenseLayer, init_weights, network_forward

MODEL_MAGIC = b"BCSMODEL"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Base class for model-file decoding problems."""


class CorruptHeaderError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


def measurement_dim(block_size: int, rate: float) -> int:
    """Measurements per block, ``max(1, floor(B*B*R))``."""
    if not 0.0 < rate < 1.0:
        raise ValueError(f"sensing rate must lie in (0, 1), got {rate}")
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    return max(1, math.floor(block_size * block_size * rate))


@dataclass(frozen=True)
class ArchSpec:
    block_size: int = 16
    rate: float = 0.25
    recon_layers: int = 2
    redundancy: int = 8

    def __post_init__(self):
        if self.block_size < 2:
            raise ValueError(f"block_size must be >= 2, got {self.block_size}")
        if self.recon_layers < 1:
            raise ValueError(f"recon_layers must be >= 1, got {self.recon_layers}")
        if self.redundancy < 1:
            raise ValueError(f"redundancy must be >= 1, got {self.redundancy}")
        measurement_dim(self.block_size, self.rate)

    @property
    def n_pixels(self) -> int:
        return self.block_size * self.block_size

    @property
    def measurements(self) -> int:
        return measurement_dim(self.block_size, self.rate)

    @property
    def hidden(self) -> int:
        return self.n_pixels * self.redundancy

    def layer_dims(self):
        """``(in_dim, out_dim, activation)`` for every layer."""
        dims = [(self.n_pixels, self.measurements, IDENTITY)]
        prev = self.measurements
        for _ in range(self.recon_layers):
            dims.append((prev, self.hidden, RELU))
            prev = self.hidden
        dims.append((prev, self.n_pixels, IDENTITY))
        return dims


def param_count(spec: ArchSpec) -> int:
    return sum(i * o + o for i, o, _ in spec.layer_dims())


@dataclass
class BcsModel:
    spec: ArchSpec
    layers: list = field(default_factory=list)
    strict_linear: bool = False

    def __post_init__(self):
        dims = self.spec.layer_dims()
        if len(dims) != len(self.layers):
            raise ValueError(f"expected {len(dims)} layers, got {len(self.layers)}")
        for k, ((i, o, act), layer) in enumerate(zip(dims, self.layers)):
            if (layer.in_dim, layer.out_dim, layer.activation) != (i, o, act):
                raise ValueError(
                    f"layer {k} is {layer.in_dim}->{layer.out_dim} {layer.activation}, "
                    f"expected {i}->{o} {act}"
                )
        if self.strict_linear and np.any(self.layers[0].bias != 0):
            raise ValueError("strict-linear model must have a zero sensing bias")

    @property
    def n_params(self) -> int:
        return sum(layer.size for layer in self.layers)

    def forward(self, x):
        return network_forward(self.layers, x)[0]

    def copy(self) -> BcsModel:
        layers = [
            DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers
        ]
        return BcsModel(self.spec, layers, self.strict_linear)

    def __eq__(self, other):
        if not isinstance(other, BcsModel):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.strict_linear == other.strict_linear
            and len(self.layers) == len(other.layers)
            and all(
                a.activation == b.activation
                and np.array_equal(a.weights, b.weights)
                and np.array_equal(a.bias, b.bias)
                for a, b in zip(self.layers, other.layers)
            )
        )


def build_model(spec: ArchSpec, seed=0, strict_linear: bool = False) -> BcsModel:
    """Allocate and initialize the network for ``spec``.

    Layers are initialized in order from a single generator seeded with
    ``seed``. With ``strict_linear`` the sensing bias is zero and stays
    frozen during training, so sensing is the pure linear map ``y = Phi x``.
    """
    rng = np.random.default_rng(seed)
    layers = [init_weights(i, o, rng, act) for i, o, act in spec.layer_dims()]
    if strict_linear:
        layers[0].bias[:] = 0.0
    return BcsModel(spec, layers, strict_linear)


def sensing_matrix(model: BcsModel) -> np.ndarray:
    """The learned ``M x B*B`` block sensing matrix (layer-0 weights)."""
    return model.layers[0].weights


def sensing_bias(model: BcsModel) -> np.ndarray:
    return model.layers[0].bias


# ---------------------------------------------------------------------------
# File codec
#
#   magic    8 bytes  b"BCSMODEL"
#   version  uint32 LE
#   hlen     uint32 LE  byte length of the header text
#   header   hlen bytes UTF-8, "key=value" lines (see _header_text)
#   payload  per layer: weights row-major then bias, float64 LE

def _header_text(model: BcsModel) -> str:
    s = model.spec
    lines = [
        f"block_size={s.block_size}",
        f"rate={s.rate!r}",
        f"recon_layers={s.recon_layers}",
        f"redundancy={s.redundancy}",
        f"strict_linear={int(model.strict_linear)}",
        f"n_layers={len(model.layers)}",
    ]
    for k, layer in enumerate(model.layers):
        lines.append(f"layer{k}={layer.in_dim},{layer.out_dim},{layer.activation}")
    return "\n".join(lines) + "\n"


def model_to_bytes(model: BcsModel) -> bytes:
    header = _header_text(model).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<II", MODEL_VERSION, len(header)))
    buf.write(header)
    for layer in model.layers:
        buf.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return buf.getvalue()


def _parse_header(text: str) -> dict:
    fields = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CorruptHeaderError(f"malformed header line {line!r}")
        fields[key] = value
    return fields


def model_from_bytes(data: bytes) -> BcsModel:
    if len(data) < len(MODEL_MAGIC) + 8:
        if data[: len(MODEL_MAGIC)] != MODEL_MAGIC[: len(data)]:
            raise CorruptHeaderError("not a model file (bad magic)")
        raise TruncatedFileError("model file truncated inside the preamble")
    if data[:8] != MODEL_MAGIC:
        raise CorruptHeaderError("not a model file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != MODEL_VERSION:
        raise VersionMismatchError(
            f"model file version {version}, this reader supports {MODEL_VERSION}"
        )
    start = 16
    if len(data) < start + hlen:
        raise TruncatedFileError("model file truncated inside the header")
    try:
        fields = _parse_header(data[start : start + hlen].decode("utf-8"))
        spec = ArchSpec(
            int(fields["block_size"]),
            float(fields["rate"]),
            int(fields["recon_layers"]),
            int(fields["redundancy"]),
        )
        strict = bool(int(fields["strict_linear"]))
        n_layers = int(fields["n_layers"])
        declared = []
        for k in range(n_layers):
            i, o, act = fields[f"layer{k}"].split(",")
            declared.append((int(i), int(o), act))
    except CorruptHeaderError:
        raise
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CorruptHeaderError(f"invalid model header: {exc}") from exc
    if declared != spec.layer_dims():
        raise CorruptHeaderError(
            f"layer table {declared} inconsistent with {spec}"
        )

    offset = start + hlen
    expected = offset + 8 * param_count(spec)
    if len(data) < expected:
        raise TruncatedFileError(
            f"model payload truncated: {len(data)} of {expected} bytes"
        )
    if len(data) > expected:
        raise CorruptHeaderError(f"{len(data) - expected} trailing bytes after payload")

    layers = []
    for i, o, act in declared:
        w = np.frombuffer(data, dtype="<f8", count=i * o, offset=offset)
        offset += 8 * i * o
        b = np.frombuffer(data, dtype="<f8", count=o, offset=offset)
        offset += 8 * o
        layers.append(DenseLayer(w.reshape(o, i).astype(np.float64), b.astype(np.float64), act))
    return BcsModel(spec, layers, strict)


def save_model(model: BcsModel, destination):
    """Write ``model`` to a path or binary file object."""
    data = model_to_bytes(model)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)


def load_model(source) -> BcsModel:
    if hasattr(source, "read"):
        data = source.read()
    else:
        data = Path(source).read_bytes()
    return model_from_bytes(data)
