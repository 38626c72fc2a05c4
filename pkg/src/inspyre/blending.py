"""High-resolution inference by blending a train-scale pyramid with HR Laplacian details."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidArgument
from .model import InSPyReNet, SaliencyPyramid, logit
from .pyramid import expand_to


@dataclass
class ResizePolicy:
    L: int = 1280
    skip_below: int = 512
    train_shape: tuple = (384, 384)

    def __post_init__(self):
        self.train_shape = tuple(int(v) for v in self.train_shape)
        if self.L < 32:
            raise InvalidArgument(f"L must be at least 32, got {self.L}")


@dataclass
class TransitionSchedule:
    """Structuring-element sizes for HR stages 2, 1, 0."""

    ksizes: tuple = (5, 9, 17)

    def __post_init__(self):
        self.ksizes = tuple(int(k) for k in self.ksizes)
        if len(self.ksizes) != 3 or any(k < 1 or k % 2 == 0 for k in self.ksizes):
            raise InvalidArgument(f"need three odd kernel sizes, got {self.ksizes}")
        if not self.ksizes[0] < self.ksizes[1] < self.ksizes[2]:
            raise InvalidArgument(f"kernel sizes must grow toward finer stages, got {self.ksizes}")


def target_size(h: int, w: int, L: int) -> tuple[float, float]:
    """Shorter side scaled to ``min(L, shorter)``, aspect ratio kept; not yet rounded."""
    short = min(h, w)
    scale = min(L, short) / short
    return h * scale, w * scale


def round32(v: float) -> int:
    """Nearest positive multiple of 32, ties rounded up."""
    return max(32, int(math.floor(v / 32 + 0.5)) * 32)


def plan_resize(h: int, w: int, policy: ResizePolicy) -> tuple[int, int] | None:
    """HR-pass input size, or ``None`` when the image is too small to blend."""
    if h < 1 or w < 1:
        raise InvalidArgument(f"image size must be positive, got {(h, w)}")
    if min(h, w) < policy.skip_below:
        return None
    th, tw = target_size(h, w, policy.L)
    return round32(th), round32(tw)


def ellipse(ksize: int) -> np.ndarray:
    return cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (ksize, ksize))


def transition_mask(s_e, ksize: int):
    """Grayscale dilation minus erosion with an elliptical footprint.

    Accepts a 2-D array or a ``(B, 1, H, W)`` tensor and returns the same kind.
    Pixels outside the image are ignored by both operators.
    """
    if ksize < 1 or ksize % 2 == 0:
        raise InvalidArgument(f"ksize must be odd, got {ksize}")
    fp = ellipse(ksize)

    def one(a):
        a = np.ascontiguousarray(a, dtype=np.float32)
        return cv2.dilate(a, fp) - cv2.erode(a, fp)

    if isinstance(s_e, torch.Tensor):
        arr = s_e.detach().cpu().numpy()
        out = np.stack([[one(c) for c in img] for img in arr])
        return torch.from_numpy(out).to(s_e.dtype)
    return one(np.asarray(s_e))


@dataclass
class BlendPlan:
    path: str  # "blend" or "lr"
    input_size: tuple
    lr_size: tuple
    hr_size: tuple | None = None
    ksizes: tuple = ()
    stages: list = field(default_factory=list)

    def describe(self) -> str:
        if self.path == "lr":
            return f"lr path: {self.input_size} -> {self.lr_size} -> upsample"
        return (
            f"blend path: {self.input_size}, LR {self.lr_size}, HR {self.hr_size}, "
            f"transition kernels {self.ksizes}, stages {' > '.join(self.stages)}"
        )


def _resize(x: torch.Tensor, size) -> torch.Tensor:
    size = tuple(int(v) for v in size)
    if tuple(x.shape[-2:]) == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False, antialias=True)


@torch.no_grad()
def lr_pass(model: InSPyReNet, image: torch.Tensor, train_shape) -> SaliencyPyramid:
    return model(_resize(image, train_shape))


@torch.no_grad()
def hr_pass(model: InSPyReNet, image: torch.Tensor, size) -> SaliencyPyramid:
    return model(_resize(image, size))


def lr_upsample(s0_lr: torch.Tensor, size) -> torch.Tensor:
    """Plain path: bilinear upsampling of the train-scale stage-0 map."""
    return F.interpolate(s0_lr, size=tuple(size), mode="bilinear", align_corners=False).clamp(0, 1)


def blend_pyramids(
    s0_lr: torch.Tensor, hr: SaliencyPyramid, schedule: TransitionSchedule, kernel
) -> torch.Tensor:
    """Run the HR reconstruction chain seeded by the LR stage-0 map.

    Only ``hr.u2``, ``hr.u1``, ``hr.u0`` are read from the HR pyramid.
    Returns the blended map on the HR stage-0 grid.
    """
    u2 = hr.u2
    stage3 = (math.ceil(u2.shape[-2] / 2), math.ceil(u2.shape[-1] / 2))
    r = F.interpolate(s0_lr, size=stage3, mode="bilinear", align_corners=False).clamp(0, 1)
    for u, ksize in zip((u2, hr.u1, hr.u0), schedule.ksizes):
        r_e = expand_to(logit(r), u.shape[-2:], kernel)
        t = transition_mask(torch.sigmoid(r_e), ksize)
        r = torch.sigmoid(r_e + t * u)
    return r


@torch.no_grad()
def blend(
    image: torch.Tensor,
    model: InSPyReNet,
    policy: ResizePolicy | None = None,
    schedule: TransitionSchedule | None = None,
) -> tuple[torch.Tensor, BlendPlan]:
    """Saliency for ``image`` (``(1, 3, H, W)`` in [0, 1]) at its own resolution."""
    policy = policy or ResizePolicy()
    schedule = schedule or TransitionSchedule()
    if image.dim() != 4 or image.shape[0] != 1 or image.shape[1] != 3:
        raise InvalidArgument(f"expected a (1, 3, H, W) image, got {tuple(image.shape)}")
    model.eval()
    h, w = image.shape[-2:]
    lr = lr_pass(model, image, policy.train_shape)
    hr_size = plan_resize(h, w, policy)
    if hr_size is None:
        plan = BlendPlan("lr", (h, w), policy.train_shape)
        return lr_upsample(lr.s0, (h, w)), plan
    hr = hr_pass(model, image, hr_size)
    out = blend_pyramids(lr.s0, hr, schedule, model.kernel)
    plan = BlendPlan(
        "blend",
        (h, w),
        policy.train_shape,
        hr_size,
        schedule.ksizes,
        ["LR S3", "LR S2", "LR S1", "LR S0", "HR U2", "HR U1", "HR U0"],
    )
    return _resize_out(out, (h, w)), plan


def _resize_out(x: torch.Tensor, size) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False).clamp(0, 1)


@torch.no_grad()
def predict_plain(image: torch.Tensor, model: InSPyReNet, train_shape) -> torch.Tensor:
    """Train-scale forward pass and bilinear upsampling; the non-blended baseline."""
    model.eval()
    return lr_upsample(lr_pass(model, image, train_shape).s0, image.shape[-2:])
