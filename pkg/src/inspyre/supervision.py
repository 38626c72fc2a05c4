"""Stage-wise supervision: ground-truth pyramid, losses, lr schedule and the training loop."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .data import SaliencyDataset
from .errors import InvalidArgument
from .model import InSPyReNet, SaliencyPyramid, save_checkpoint
from .pyramid import DEFAULT_KERNEL, GaussianKernel2D, reduce, reflect_pad

log = logging.getLogger(__name__)

BCE_EPS = 1e-6
WEIGHT_WINDOW = 31


@dataclass
class GroundTruthPyramid:
    g0: torch.Tensor
    g1: torch.Tensor
    g2: torch.Tensor
    g3: torch.Tensor

    @property
    def stages(self) -> list:
        return [self.g0, self.g1, self.g2, self.g3]


def build_gt_pyramid(g: torch.Tensor, k: GaussianKernel2D = DEFAULT_KERNEL, mode: str = "reduce") -> GroundTruthPyramid:
    """Deconstruct ``g`` (``(B, 1, H, W)``) into four stages.

    ``mode="resize"`` replaces the REDUCE chain with bilinear downsampling of
    the full-resolution map (the no-GT-pyramid ablation).
    """
    if g.shape[-2] % 8 or g.shape[-1] % 8:
        raise InvalidArgument(f"ground truth dims must be divisible by 8, got {tuple(g.shape[-2:])}")
    if mode not in ("reduce", "resize"):
        raise InvalidArgument(f"unknown gt pyramid mode {mode!r}")
    out = [g]
    for j in (1, 2, 3):
        if mode == "reduce":
            out.append(reduce(out[-1], k))
        else:
            size = (g.shape[-2] >> j, g.shape[-1] >> j)
            out.append(F.interpolate(g, size=size, mode="bilinear", align_corners=False))
    return GroundTruthPyramid(*out)


def _check_same(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise InvalidArgument(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def boundary_weight(g: torch.Tensor, window: int = WEIGHT_WINDOW) -> torch.Tensor:
    """``1 + 5 |boxmean(g) - g|`` with a reflect-padded box window."""
    box = F.avg_pool2d(reflect_pad(g, window // 2), window, stride=1)
    return 1 + 5 * torch.abs(box - g)


def wbce(s: torch.Tensor, g: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """Boundary-weighted BCE on probabilities, weight-normalised per image, averaged over the batch."""
    _check_same(s, g, "wbce")
    w = boundary_weight(g)
    s = s.clamp(eps, 1 - eps)
    bce = -(g * torch.log(s) + (1 - g) * torch.log1p(-s))
    per_image = (w * bce).flatten(1).sum(1) / w.flatten(1).sum(1)
    return per_image.mean()


def pyramidal_consistency(
    s_coarse: torch.Tensor, s_fine: torch.Tensor, k: GaussianKernel2D = DEFAULT_KERNEL, normalize: bool = False
) -> torch.Tensor:
    """L1 distance between a stage and the REDUCE of the next finer stage.

    Summed over pixels (mean over pixels when ``normalize``), averaged over the batch.
    """
    reduced = reduce(s_fine, k)
    _check_same(s_coarse, reduced, "pyramidal consistency")
    diff = torch.abs(s_coarse - reduced).flatten(1)
    per_image = diff.mean(1) if normalize else diff.sum(1)
    return per_image.mean()


@dataclass
class LossWeights:
    eta: float = 1e-4
    lambdas: tuple = (1.0, 4.0, 16.0, 64.0)
    use_pc: bool = True
    normalize_pc: bool = False
    gt_pyramid: bool = True

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        if len(self.lambdas) != 4:
            raise InvalidArgument("need one lambda per stage (4)")


@dataclass
class LossBreakdown:
    total: torch.Tensor
    wbce: list  # stage 0..3
    pc: list  # p_j couples stage j+1 with REDUCE(stage j), j = 0..2

    def as_floats(self) -> dict:
        d = {"total": self.total.item()}
        d.update({f"wbce_{j}": t.item() for j, t in enumerate(self.wbce)})
        d.update({f"pc_{j}": t.item() for j, t in enumerate(self.pc)})
        return d


def total_loss(
    pred: SaliencyPyramid, gt: GroundTruthPyramid, w: LossWeights | None = None, k: GaussianKernel2D = DEFAULT_KERNEL
) -> LossBreakdown:
    w = w or LossWeights()
    sal = pred.saliency
    t = [wbce(s, g) for s, g in zip(sal, gt.stages)]
    if w.use_pc:
        p = [pyramidal_consistency(sal[j + 1], sal[j], k, w.normalize_pc) for j in range(3)]
    else:
        p = [sal[0].new_zeros(()) for _ in range(3)]
    total = sum(lam * tj for lam, tj in zip(w.lambdas, t)) + w.eta * sum(
        lam * pj for lam, pj in zip(w.lambdas[:3], p)
    )
    return LossBreakdown(total, t, p)


@dataclass
class TrainSchedule:
    batch_size: int = 6
    max_epochs: int = 60
    base_lr: float = 1e-5
    warmup_iters: int = 12000
    poly_power: float = 0.9
    max_iters: int | None = None  # overrides max_epochs when set
    eval_every: int = 100
    seed: int = 0

    def total_iters(self, n_samples: int) -> int:
        if self.max_iters is not None:
            return int(self.max_iters)
        return self.max_epochs * math.ceil(n_samples / self.batch_size)


def lr_at(it: int, base_lr: float, warmup_iters: int, max_iters: int, power: float = 0.9) -> float:
    """Linear warm-up times ``1 - (it / max_iters) ** power``, zero at ``max_iters``."""
    if max_iters <= 0:
        raise InvalidArgument("max_iters must be positive")
    it = min(max(it, 0), max_iters)
    ramp = min(1.0, it / warmup_iters) if warmup_iters > 0 else 1.0
    return base_lr * ramp * (1.0 - (it / max_iters) ** power)


@dataclass
class TrainResult:
    iters: int
    best_mae: float
    best_path: str
    last_path: str
    log_path: str
    history: list = field(default_factory=list)


@torch.no_grad()
def predict_dataset(model: InSPyReNet, ds: SaliencyDataset, batch_size: int = 8) -> list:
    """Stage-0 predictions as numpy arrays, model in eval mode."""
    was_training = model.training
    model.eval()
    out = []
    for i in range(0, len(ds), batch_size):
        x, _ = ds.batch(range(i, min(i + batch_size, len(ds))))
        out.extend(model(x).s0[:, 0].numpy())
    model.train(was_training)
    return out


def dataset_mae(model: InSPyReNet, ds: SaliencyDataset) -> float:
    preds = predict_dataset(model, ds)
    return float(np.mean([np.abs(p - g).mean() for p, g in zip(preds, ds.masks)]))


def _append(path: str, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    bs = min(batch_size, n)
    while True:
        perm = rng.permutation(n)
        for i in range(0, n - bs + 1, bs):
            yield perm[i : i + bs]


def train(
    model: InSPyReNet,
    dataset: SaliencyDataset,
    schedule: TrainSchedule,
    weights: LossWeights | None = None,
    out_dir: str = "run",
    augment_cfg=None,
    provenance: dict | None = None,
) -> TrainResult:
    """Adam + warm-up/poly schedule with per-iteration NDJSON loss records.

    Keeps ``best.npz`` (lowest train-set MAE at evaluation points) and
    ``last.npz``. A non-finite loss dumps the offending batch to
    ``nan_batch.npz`` and raises ``FloatingPointError``.
    """
    if len(dataset) == 0:
        raise InvalidArgument("training set is empty")
    weights = weights or LossWeights()
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train_log.ndjson")
    eval_path = os.path.join(out_dir, "eval_log.ndjson")
    for p in (log_path, eval_path):
        open(p, "w").close()
    best_path, last_path = os.path.join(out_dir, "best.npz"), os.path.join(out_dir, "last.npz")
    extra = {"provenance": provenance or {}, "schedule": asdict(schedule), "loss": asdict(weights)}

    rng = np.random.default_rng(schedule.seed)
    max_iters = schedule.total_iters(len(dataset))
    opt = torch.optim.Adam(model.parameters(), lr=0.0, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0)
    gt_mode = "reduce" if weights.gt_pyramid else "resize"
    model.train()
    best = math.inf
    history = []
    batches = _batches(len(dataset), schedule.batch_size, rng)
    t0 = time.perf_counter()
    for it in range(max_iters):
        lr = lr_at(it, schedule.base_lr, schedule.warmup_iters, max_iters, schedule.poly_power)
        for group in opt.param_groups:
            group["lr"] = lr
        idx = next(batches)
        x, g = dataset.batch(idx, rng, augment_cfg)
        losses = total_loss(model(x), build_gt_pyramid(g, model.kernel, gt_mode), weights, model.kernel)
        if not torch.isfinite(losses.total):
            dump = os.path.join(out_dir, "nan_batch.npz")
            np.savez(dump, images=x.numpy(), masks=g.numpy(), indices=np.asarray(idx), iter=it)
            raise FloatingPointError(f"non-finite loss at iteration {it}; batch saved to {dump}")
        opt.zero_grad(set_to_none=True)
        losses.total.backward()
        opt.step()
        model.clamp_thresholds()

        record = {"iter": it, "lr": lr, **losses.as_floats()}
        history.append(record)
        _append(log_path, record)

        last = it == max_iters - 1
        if (it + 1) % schedule.eval_every == 0 or last:
            mae = dataset_mae(model, dataset)
            _append(eval_path, {"iter": it, "train_mae": mae, "elapsed_s": time.perf_counter() - t0})
            log.info("iter %d  loss %.4f  train MAE %.4f", it, record["total"], mae)
            if mae < best:
                best = mae
                save_checkpoint(best_path, model, {**extra, "iter": it, "train_mae": mae})
    save_checkpoint(last_path, model, {**extra, "iter": max_iters - 1})
    return TrainResult(max_iters, best, best_path, last_path, log_path, history)
