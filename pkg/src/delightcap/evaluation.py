"""Masked metrics with per-image channel-wise affine color alignment.

Metric table format (``metrics.tsv``): ``#`` header lines state the color
space and PSNR conventions, followed by a tab-separated header row
``method subject psnr ssim perceptual coverage`` and one row per image.
``psnr`` is written capped at :data:`PSNR_CAP`; ``perceptual`` is empty when no
scorer was supplied.

External perceptual scorer contract: the command is invoked as
``<cmd...> <pred.pfm> <gt.pfm> <mask.pfm>`` and must print a single float on
stdout; a nonzero exit status is an error.
"""
from __future__ import annotations

import math
import subprocess
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .io import write_pfm, write_preview

PSNR_CAP = 99.0


@dataclass
class ColorTransform:
    scale: np.ndarray
    bias: np.ndarray
    warnings: list = field(default_factory=list)

    def apply(self, image):
        return np.asarray(image, dtype=np.float64) * self.scale + self.bias

    @property
    def params(self):
        return np.concatenate([self.scale, self.bias])


@dataclass
class MetricRecord:
    method: str
    subject: str
    psnr: float
    ssim: float
    perceptual: float | None
    coverage: float

    @property
    def psnr_capped(self):
        return min(self.psnr, PSNR_CAP)


def _masked(mask, shape):
    m = np.asarray(mask) > 0.5
    if m.shape != tuple(shape[:2]):
        raise ValueError(f"mask shape {m.shape} does not match image {shape}")
    if not m.any():
        raise ValueError("empty mask")
    return m


def fit_color_transform(pred, gt, mask):
    """Per-channel least squares for ``gt ~ scale * pred + bias`` over the mask."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    m = _masked(mask, pred.shape)
    p, g = pred[m], gt[m]
    scale = np.ones(p.shape[1])
    bias = np.zeros(p.shape[1])
    notes = []
    for c in range(p.shape[1]):
        pc = p[:, c] - p[:, c].mean()
        var = float(pc @ pc)
        if var <= 1e-20 * max(1.0, float(p[:, c] @ p[:, c])):
            notes.append(f"channel {c}: constant prediction, scale fixed to 1")
            bias[c] = float((g[:, c] - p[:, c]).mean())
            continue
        scale[c] = float(pc @ (g[:, c] - g[:, c].mean())) / var
        bias[c] = float(g[:, c].mean() - scale[c] * p[:, c].mean())
        if scale[c] < 0:
            notes.append(f"channel {c}: negative scale {scale[c]:.4g}")
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return ColorTransform(scale, bias, notes)


def masked_mse(a, b, mask):
    a = np.asarray(a, dtype=np.float64)
    m = _masked(mask, a.shape)
    return float(((a[m] - np.asarray(b, dtype=np.float64)[m]) ** 2).mean())


def psnr_masked(a, b, mask, peak=1.0):
    """PSNR in dB over masked pixels; ``inf`` for identical inputs."""
    mse = masked_mse(a, b, mask)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_masked(a, b, mask, window=11, sigma=1.5, data_range=1.0):
    """Mean Gaussian-window SSIM over windows lying entirely inside the mask."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = _masked(mask, a.shape)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    h, w = m.shape
    if h < window or w < window:
        raise ValueError("no valid SSIM window: image smaller than the window")
    r = window // 2
    valid = ndimage.minimum_filter(m.astype(np.uint8), size=window, mode="constant", cval=0)
    valid = valid[r:h - r, r:w - r].astype(bool)
    if not valid.any():
        raise ValueError("no valid SSIM window inside the mask")
    g = gaussian_window(window, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    scores = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        vx = _filter_valid(x * x, g) - mx * mx
        vy = _filter_valid(y * y, g) - my * my
        cxy = _filter_valid(x * y, g) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        scores.append(s[valid])
    return float(np.concatenate(scores).mean())


class ExternalScorer:
    """Perceptual metric computed by an external program (see module docstring)."""

    def __init__(self, command):
        self.command = list(command)

    def __call__(self, pred, gt, mask):
        with tempfile.TemporaryDirectory() as tmp:
            paths = [Path(tmp) / n for n in ("pred.pfm", "gt.pfm", "mask.pfm")]
            write_pfm(paths[0], pred)
            write_pfm(paths[1], gt)
            write_pfm(paths[2], np.asarray(mask, dtype=np.float32))
            res = subprocess.run(self.command + [str(p) for p in paths], capture_output=True, text=True)
        if res.returncode != 0:
            raise RuntimeError(f"perceptual scorer failed ({res.returncode}): {res.stderr.strip()}")
        return float(res.stdout.strip().split()[-1])


def evaluate_image(pred, gt, mask, method="method", subject="", perceptual=None, align=True):
    tf = fit_color_transform(pred, gt, mask) if align else None
    aligned = tf.apply(pred) if align else np.asarray(pred, dtype=np.float64)
    m = np.asarray(mask) > 0.5
    perc = None if perceptual is None else float(perceptual(aligned * m[..., None], gt * m[..., None], m))
    rec = MetricRecord(method, subject, psnr_masked(aligned, gt, m), ssim_masked(aligned, gt, m),
                       perc, float(m.mean()))
    return rec, aligned


def summarize(records):
    out = {}
    for method in dict.fromkeys(r.method for r in records):
        rs = [r for r in records if r.method == method]
        percs = [r.perceptual for r in rs if r.perceptual is not None]
        out[method] = {
            "psnr": float(np.mean([r.psnr_capped for r in rs])),
            "ssim": float(np.mean([r.ssim for r in rs])),
            "perceptual": float(np.mean(percs)) if percs else None,
            "count": len(rs),
        }
    return out


def write_table(path, records):
    lines = ["# color space: linear", f"# psnr peak: 1.0; infinite psnr capped at {PSNR_CAP:g} dB",
             "# color alignment: per-image channel-wise scale and bias fitted over the mask",
             "method\tsubject\tpsnr\tssim\tperceptual\tcoverage"]
    for r in records:
        perc = "" if r.perceptual is None else f"{r.perceptual:.6f}"
        lines.append(f"{r.method}\t{r.subject}\t{r.psnr_capped:.4f}\t{r.ssim:.6f}\t{perc}\t{r.coverage:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path):
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        cells = line.split("\t")
        if header is None:
            header = cells
            continue
        rec = dict(zip(header, cells))
        rows.append(MetricRecord(rec["method"], rec["subject"], float(rec["psnr"]), float(rec["ssim"]),
                                 float(rec["perceptual"]) if rec["perceptual"] else None,
                                 float(rec["coverage"])))
    return rows


def comparison_grid(pred, aligned, gt, mask, image=None):
    """Row of panels: input, prediction, aligned prediction, ground truth, |difference|."""
    m = (np.asarray(mask) > 0.5)[..., None]
    panels = [] if image is None else [np.asarray(image) * m]
    panels += [np.asarray(pred) * m, aligned * m, np.asarray(gt) * m, np.abs(aligned - gt) * m * 4]
    return np.concatenate(panels, axis=1)


def evaluate_method(preds, gts, masks, method="method", subjects=None, perceptual=None,
                    out_dir=None, inputs=None):
    """Align, score and optionally write the table and preview grids of one method."""
    if not (len(preds) == len(gts) == len(masks)):
        raise ValueError(f"list length mismatch: {len(preds)} predictions, {len(gts)} ground truths, "
                         f"{len(masks)} masks")
    if subjects is None:
        subjects = [f"{i:04d}" for i in range(len(preds))]
    records = []
    grids = []
    for i, (p, g, m) in enumerate(zip(preds, gts, masks)):
        rec, aligned = evaluate_image(p, g, m, method, subjects[i], perceptual)
        records.append(rec)
        if out_dir is not None:
            grids.append(comparison_grid(p, aligned, g, m, None if inputs is None else inputs[i]))
    if out_dir is not None:
        out = Path(out_dir)
        (out / "grids").mkdir(parents=True, exist_ok=True)
        write_table(out / "metrics.tsv", records)
        for rec, grid in zip(records, grids):
            write_preview(out / "grids" / f"{method}_{rec.subject}.png", grid)
    return records, summarize(records)
