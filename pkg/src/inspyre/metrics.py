"""Saliency evaluation: MAE, max F-measure, S-measure and mean boundary accuracy."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument

BETA2 = 0.3
THRESHOLDS = np.arange(256) / 255.0
MBA_RADII = 5
MBA_DIAG_FRACTION = 0.02
_EPS = np.finfo(np.float64).eps

ALL_METRICS = ("s", "f", "mae", "mba")
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _pair(s, g) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if s.shape != g.shape:
        raise InvalidArgument(f"prediction {s.shape} and ground truth {g.shape} differ in shape")
    if s.ndim != 2:
        raise InvalidArgument(f"expected 2-D maps, got {s.ndim}-D")
    return s, g


def mae(s, g) -> float:
    s, g = _pair(s, g)
    return float(np.abs(s - g).mean())


@dataclass
class FCurve:
    precision: np.ndarray  # (256,)
    recall: np.ndarray
    f: np.ndarray


def f_curve(s, g, beta2: float = BETA2) -> FCurve:
    """Precision, recall and F_beta of ``s > t/255`` for t = 0..255.

    An empty prediction has precision 0; an empty ground truth gives F = 0
    at every threshold.
    """
    s, g = _pair(s, g)
    fg = g > 0.5
    # number of thresholds each pixel clears: t/255 < s  <=>  t < k
    k = np.searchsorted(THRESHOLDS, s.ravel(), side="left")
    hist_all = np.bincount(k, minlength=257)
    hist_fg = np.bincount(k[fg.ravel()], minlength=257)
    # positives at threshold t are the pixels with k > t
    pos = np.cumsum(hist_all[::-1])[::-1][1:257].astype(np.float64)
    tp = np.cumsum(hist_fg[::-1])[::-1][1:257].astype(np.float64)
    n_fg = float(fg.sum())
    precision = np.divide(tp, pos, out=np.zeros(256), where=pos > 0)
    recall = tp / n_fg if n_fg else np.zeros(256)
    denom = beta2 * precision + recall
    f = np.divide((1 + beta2) * precision * recall, denom, out=np.zeros(256), where=denom > 0)
    return FCurve(precision, recall, f)


def f_max(s, g, beta2: float = BETA2) -> float:
    return float(f_curve(s, g, beta2).f.max())


def _object_score(values: np.ndarray) -> float:
    m = values.mean()
    sd = values.std(ddof=1) if values.size > 1 else 0.0
    return 2 * m / (m * m + 1 + sd + _EPS)


def _block_ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    mx, my = p.mean(), g.mean()
    d = max(n - 1, 1)
    vx = ((p - mx) ** 2).sum() / d
    vy = ((g - my) ** 2).sum() / d
    cxy = ((p - mx) * (g - my)).sum() / d
    a = 4 * mx * my * cxy
    b = (mx * mx + my * my) * (vx + vy)
    if a != 0:
        return a / (b + _EPS)
    return 1.0 if b == 0 else 0.0


def s_measure(s, g, alpha: float = 0.5) -> float:
    """Structure measure: object-aware plus region-aware similarity.

    ``g`` is binarised at 0.5; ``s`` is used as a soft map.
    """
    s, g = _pair(s, g)
    fg = g > 0.5
    y = fg.mean()
    if y == 0:
        return float(1 - s.mean())
    if y == 1:
        return float(s.mean())
    s_obj = y * _object_score(s[fg]) + (1 - y) * _object_score(1 - s[~fg])

    h, w = fg.shape
    rows, cols = np.nonzero(fg)
    cy = int(np.round(rows.mean())) + 1
    cx = int(np.round(cols.mean())) + 1
    gf = fg.astype(np.float64)
    s_reg = 0.0
    for rs, cs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        block = s[rs, cs]
        s_reg += block.size / (h * w) * _block_ssim(block.ravel(), gf[rs, cs].ravel())
    return float(max(0.0, alpha * s_obj + (1 - alpha) * s_reg))


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 8-neighbour; the image frame is not a boundary."""
    m = np.pad(mask, 1, mode="edge")
    eroded = ndimage.binary_erosion(m, structure=np.ones((3, 3), bool), border_value=1)[1:-1, 1:-1]
    return mask & ~eroded


def mba_radii(h: int, w: int, n: int = MBA_RADII) -> np.ndarray:
    """``n`` radii from 1 px to 2% of the diagonal (never below 1 px)."""
    top = max(1.0, MBA_DIAG_FRACTION * float(np.hypot(h, w)))
    return np.linspace(1.0, top, n)


@dataclass
class BoundaryAccuracy:
    value: float
    per_radius: list
    radii: list
    fallback: bool = False  # ground truth had no boundary; whole-image accuracy used


def boundary_accuracy(s, g) -> BoundaryAccuracy:
    """Pixel accuracy inside bands around the GT and predicted boundaries, averaged over radii."""
    s, g = _pair(s, g)
    sb, gb = s >= 0.5, g >= 0.5
    radii = mba_radii(*gb.shape)
    correct = sb == gb
    g_edge = boundary(gb)
    if not g_edge.any():
        acc = float(correct.mean())
        return BoundaryAccuracy(acc, [acc] * len(radii), radii.tolist(), fallback=True)
    edges = g_edge | boundary(sb)
    dist = ndimage.distance_transform_edt(~edges)
    per = [float(correct[dist <= r].mean()) for r in radii]
    return BoundaryAccuracy(float(np.mean(per)), per, radii.tolist())


def mba(s, g) -> float:
    return boundary_accuracy(s, g).value


@dataclass
class MetricReport:
    metrics: tuple
    rows: list = field(default_factory=list)  # dicts: stem + metric values
    fallback_stems: list = field(default_factory=list)
    f_curve: dict | None = None  # mean precision/recall/F per threshold

    @property
    def summary(self) -> dict:
        keys = [k for k in ("s_measure", "f_max", "mae", "mba") if self.rows and k in self.rows[0]]
        return {k: float(np.mean([r[k] for r in self.rows])) for k in keys}


def evaluate_pairs(pairs, metrics=ALL_METRICS, with_curve: bool = False) -> MetricReport:
    """``pairs`` yields ``(stem, prediction, gt)`` with maps in [0, 1]."""
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise InvalidArgument(f"unknown metrics {sorted(unknown)}; choose from {ALL_METRICS}")
    report = MetricReport(tuple(metrics))
    curves = []
    for stem, s, g in pairs:
        row = {"stem": stem}
        if "s" in metrics:
            row["s_measure"] = s_measure(s, g)
        if "f" in metrics or with_curve:
            c = f_curve(s, g)
            curves.append(c)
            if "f" in metrics:
                row["f_max"] = float(c.f.max())
        if "mae" in metrics:
            row["mae"] = mae(s, g)
        if "mba" in metrics:
            b = boundary_accuracy(s, g)
            row["mba"] = b.value
            if b.fallback:
                report.fallback_stems.append(stem)
        report.rows.append(row)
    if with_curve and curves:
        report.f_curve = {
            "threshold": THRESHOLDS.tolist(),
            "precision": np.mean([c.precision for c in curves], 0).tolist(),
            "recall": np.mean([c.recall for c in curves], 0).tolist(),
            "f": np.mean([c.f for c in curves], 0).tolist(),
        }
    return report


def match_stems(pred_dir: str, gt_dir: str) -> tuple[list, list]:
    """Pair files by stem; returns ``(matched (stem, pred, gt) paths, unmatched stems)``."""
    def index(d):
        return {
            os.path.splitext(f)[0]: os.path.join(d, f)
            for f in sorted(os.listdir(d))
            if os.path.splitext(f)[1].lower() in IMAGE_EXTS
        }

    preds, gts = index(pred_dir), index(gt_dir)
    matched = [(s, preds[s], gts[s]) for s in sorted(preds.keys() & gts.keys())]
    unmatched = sorted(preds.keys() ^ gts.keys())
    return matched, unmatched
