"""PSNR and mean SSIM on 8-bit grayscale images, plus quality reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .imaging import GrayImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PEAK = 255.0


def _pixels(img):
    arr = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    return arr.astype(np.float64)


def _pair(a, b):
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def psnr(a, b) -> float:
    """``10 log10(255^2 / MSE)`` in dB; ``inf`` for identical images."""
    x, y = _pair(a, b)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(PEAK * PEAK / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalized 1-D Gaussian taps; the 2-D window is its outer product."""
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, taps):
    half = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim_map(a, b):
    """Local SSIM at every pixel where the full window fits."""
    x, y = _pair(a, b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    w = gaussian_window()
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    mu_x = _filter_valid(x, w)
    mu_y = _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mu_x * mu_x
    syy = _filter_valid(y * y, w) - mu_y * mu_y
    sxy = _filter_valid(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=255,
    valid windows only."""
    return float(np.mean(ssim_map(a, b)))


@dataclass
class QualityRow:
    name: str
    psnr: float
    ssim: float


@dataclass
class QualityReport:
    rows: list = field(default_factory=list)
    note: str = "PSNR/SSIM computed on 8-bit quantized reconstructions"

    def add(self, name, psnr_db, ssim_value):
        self.rows.append(QualityRow(name, float(psnr_db), float(ssim_value)))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else math.nan

    def to_csv(self) -> str:
        """``name,psnr_db,ssim`` rows followed by a ``mean`` row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "psnr_db", "ssim"])
        for r in self.rows:
            w.writerow([r.name, _fmt(r.psnr), _fmt(r.ssim)])
        w.writerow(["mean", _fmt(self.mean_psnr), _fmt(self.mean_ssim)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "note": self.note,
            "images": [
                {"name": r.name, "psnr_db": _jnum(r.psnr), "ssim": _jnum(r.ssim)}
                for r in self.rows
            ],
            "mean": {"psnr_db": _jnum(self.mean_psnr), "ssim": _jnum(self.mean_ssim)},
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> QualityReport:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["name", "psnr_db", "ssim"]:
            raise ValueError(f"unexpected report header {header}")
        report = cls()
        for name, p, s in reader:
            if name == "mean":
                continue
            report.add(name, float(p), float(s))
        return report

    @classmethod
    def from_json(cls, text: str) -> QualityReport:
        doc = json.loads(text)
        report = cls(note=doc.get("note", cls.note))
        for rec in doc["images"]:
            report.add(rec["name"], float(rec["psnr_db"]), float(rec["ssim"]))
        return report


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _jnum(v: float):
    # JSON has no infinity literal
    return _fmt(v) if math.isinf(v) else float(v)
