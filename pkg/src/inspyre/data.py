"""Synthetic salient-object dataset, PNG I/O and training-time augmentation."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass

import cv2
import numpy as np
import torch
from PIL import Image, ImageDraw, ImageEnhance

from .errors import InvalidArgument

SHAPES = ("disk", "rounded_rect", "star", "blob")
MANIFEST = "manifest.json"


@dataclass
class SynthSpec:
    n_images: int = 8
    size: int = 128
    shapes: tuple = SHAPES
    max_shapes: int = 3
    textured: bool = True
    seed: int = 0
    supersample: int = 4
    fg_range: tuple = (0.05, 0.6)

    def __post_init__(self):
        self.shapes = tuple(self.shapes)
        self.fg_range = tuple(self.fg_range)
        if self.size <= 0 or self.size % 32:
            raise InvalidArgument(f"image size must be a positive multiple of 32, got {self.size}")
        if self.n_images < 1:
            raise InvalidArgument("n_images must be >= 1")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise InvalidArgument(f"shapes must be drawn from {SHAPES}, got {self.shapes}")
        if not 1 <= self.max_shapes <= 3:
            raise InvalidArgument("max_shapes must be in 1..3")


@dataclass
class AugmentConfig:
    scale_range: tuple = (0.75, 1.25)
    max_rotation: float = 10.0
    contrast: tuple = (0.8, 1.2)
    sharpness: tuple = (0.8, 1.2)
    brightness: tuple = (0.8, 1.2)


@dataclass
class AugmentDraw:
    scale: float = 1.0
    angle: float = 0.0
    shift: tuple = (0.0, 0.0)
    contrast: float = 1.0
    sharpness: float = 1.0
    brightness: float = 1.0


# ---------------------------------------------------------------------------
# shape rendering


def _polygon_disk(cx, cy, r, n=96):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], 1)


def _polygon_star(cx, cy, r, rng):
    points = int(rng.integers(5, 8))
    inner = r * rng.uniform(0.45, 0.65)
    rot = rng.uniform(0, 2 * np.pi)
    t = rot + np.arange(2 * points) * np.pi / points
    rad = np.where(np.arange(2 * points) % 2 == 0, r, inner)
    return np.stack([cx + rad * np.cos(t), cy + rad * np.sin(t)], 1)


def _polygon_blob(cx, cy, r, rng, n_ctrl=None, samples=24):
    """Closed piecewise cubic Bezier through jittered polar control points."""
    n_ctrl = n_ctrl or int(rng.integers(5, 9))
    t = np.linspace(0, 2 * np.pi, n_ctrl, endpoint=False)
    t = t + rng.uniform(-0.25, 0.25, n_ctrl) * (2 * np.pi / n_ctrl)
    rad = r * rng.uniform(0.65, 1.0, n_ctrl)
    pts = np.stack([cx + rad * np.cos(t), cy + rad * np.sin(t)], 1)
    out = []
    for i in range(n_ctrl):
        p0, p1, p2, p3 = (pts[(i + k - 1) % n_ctrl] for k in range(4))
        # Catmull-Rom tangents turned into Bezier handles
        b1 = p1 + (p2 - p0) / 6
        b2 = p2 - (p3 - p1) / 6
        s = np.linspace(0, 1, samples, endpoint=False)[:, None]
        out.append((1 - s) ** 3 * p1 + 3 * (1 - s) ** 2 * s * b1 + 3 * (1 - s) * s**2 * b2 + s**3 * p2)
    return np.concatenate(out)


def _draw_shape(draw, kind, cx, cy, r, rng, ss):
    if kind == "disk":
        draw.ellipse([(cx - r) * ss, (cy - r) * ss, (cx + r) * ss, (cy + r) * ss], fill=255)
    elif kind == "rounded_rect":
        aspect = rng.uniform(0.6, 1.0)
        hw, hh = r, r * aspect
        if rng.random() < 0.5:
            hw, hh = hh, hw
        rad = min(hw, hh) * rng.uniform(0.2, 0.5)
        draw.rounded_rectangle(
            [(cx - hw) * ss, (cy - hh) * ss, (cx + hw) * ss, (cy + hh) * ss], radius=rad * ss, fill=255
        )
    else:
        poly = _polygon_star(cx, cy, r, rng) if kind == "star" else _polygon_blob(cx, cy, r, rng)
        draw.polygon([tuple(p) for p in poly * ss], fill=255)


def render_alpha(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Anti-aliased coverage in [0, 1] of 1..max_shapes shapes.

    Every extra shape is placed so it covers the first shape's centre, which
    keeps unions of disks a single hole-free component.
    """
    size, ss = spec.size, spec.supersample
    canvas = Image.new("L", (size * ss, size * ss), 0)
    draw = ImageDraw.Draw(canvas)
    n = int(rng.integers(1, spec.max_shapes + 1))
    r0 = rng.uniform(0.15, 0.3) * size
    cx0, cy0 = rng.uniform(r0 + 2, size - r0 - 2, 2)
    for i in range(n):
        kind = spec.shapes[int(rng.integers(len(spec.shapes)))]
        if i == 0:
            cx, cy, r = cx0, cy0, r0
        else:
            r = rng.uniform(0.1, 0.22) * size
            ang = rng.uniform(0, 2 * np.pi)
            d = rng.uniform(0, 0.4) * r
            cx, cy = cx0 + d * np.cos(ang), cy0 + d * np.sin(ang)
        _draw_shape(draw, kind, cx, cy, r, rng, ss)
    alpha = np.asarray(canvas.resize((size, size), Image.BOX), dtype=np.float64) / 255.0
    return alpha


def _texture(size, rng, base, amp):
    """Smooth colour field: low-frequency cosines plus fine stripes."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        fx, fy = rng.uniform(1, 4, 2)
        ph = rng.uniform(0, 2 * np.pi, 2)
        low = np.cos(2 * np.pi * fx * xx + ph[0]) * np.cos(2 * np.pi * fy * yy + ph[1])
        img[..., c] = base[c] + amp * low
    k = rng.uniform(8, 20)
    th = rng.uniform(0, np.pi)
    stripes = np.sin(2 * np.pi * k * (xx * np.cos(th) + yy * np.sin(th)))
    img += 0.5 * amp * stripes[..., None]
    return img


def render_pair(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = spec.fg_range
    for _ in range(100):
        alpha = render_alpha(spec, rng)
        gt = alpha >= 0.5
        if lo <= gt.mean() <= hi:
            break
    else:
        raise RuntimeError("could not draw a mask with the requested foreground fraction")
    fg_col = rng.uniform(0.55, 1.0, 3)
    bg_col = rng.uniform(0.0, 0.45, 3)
    if rng.random() < 0.5:
        fg_col, bg_col = bg_col, fg_col
    if spec.textured:
        bg = _texture(spec.size, rng, bg_col, 0.12)
        fg = _texture(spec.size, rng, fg_col, 0.06)
    else:
        bg = np.broadcast_to(bg_col, (spec.size, spec.size, 3))
        fg = np.broadcast_to(fg_col, (spec.size, spec.size, 3))
    img = fg * alpha[..., None] + bg * (1 - alpha[..., None])
    img = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    return img, gt.astype(np.float32)


# ---------------------------------------------------------------------------
# file I/O


def _atomic_save(img: Image.Image, path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_map(path: str, m) -> None:
    """Write a [0, 1] map as 8-bit grayscale, value ``round(255 * m)``."""
    if isinstance(m, torch.Tensor):
        m = m.detach().cpu().numpy()
    m = np.asarray(m, dtype=np.float64).squeeze()
    if m.ndim != 2:
        raise InvalidArgument(f"save_map expects a single-channel map, got shape {m.shape}")
    q = np.clip(np.round(m * 255), 0, 255).astype(np.uint8)
    _atomic_save(Image.fromarray(q, mode="L"), path)


def save_image(path: str, img: np.ndarray) -> None:
    _atomic_save(Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB"), path)


def load_map(path: str) -> np.ndarray:
    """Grayscale PNG -> float32 map in [0, 1]."""
    try:
        with Image.open(path) as im:
            a = np.asarray(im.convert("L"), dtype=np.float32)
    except (OSError, ValueError) as e:
        raise OSError(f"cannot read map {path}: {e}") from e
    return a / 255.0


def load_image(path: str) -> np.ndarray:
    """Any image file -> uint8 RGB array ``(H, W, 3)``."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise OSError(f"cannot read image {path}: {e}") from e


def load_pair(image_path: str, mask_path: str) -> tuple[np.ndarray, np.ndarray]:
    img = load_image(image_path)
    gt = load_map(mask_path)
    if gt.shape != img.shape[:2]:
        raise InvalidArgument(f"{image_path} and {mask_path} differ in size")
    return img, gt


def file_sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def generate(spec: SynthSpec, root: str) -> str:
    """Render ``spec.n_images`` pairs under ``root``; returns the manifest path.

    Each image uses its own stream seeded by ``(seed, index)`` so the output
    does not depend on generation order.
    """
    img_dir, mask_dir = os.path.join(root, "images"), os.path.join(root, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    pairs = []
    for i in range(spec.n_images):
        rng = np.random.default_rng([spec.seed, i])
        img, gt = render_pair(spec, rng)
        stem = f"{i:05d}"
        save_image(os.path.join(img_dir, stem + ".png"), img)
        save_map(os.path.join(mask_dir, stem + ".png"), gt)
        pairs.append({"stem": stem, "image": f"images/{stem}.png", "mask": f"masks/{stem}.png"})
    manifest = {"spec": asdict(spec), "pairs": pairs}
    path = os.path.join(root, MANIFEST)
    fd, tmp = tempfile.mkstemp(dir=root, suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2)
    os.replace(tmp, path)
    return path


def list_pairs(root: str) -> list[tuple[str, str, str]]:
    """``(stem, image_path, mask_path)`` for every matched stem under ``root``."""
    img_dir, mask_dir = os.path.join(root, "images"), os.path.join(root, "masks")
    if not os.path.isdir(img_dir) or not os.path.isdir(mask_dir):
        raise FileNotFoundError(f"{root} must contain images/ and masks/")
    imgs = {os.path.splitext(f)[0]: f for f in os.listdir(img_dir)}
    masks = {os.path.splitext(f)[0]: f for f in os.listdir(mask_dir)}
    return [
        (s, os.path.join(img_dir, imgs[s]), os.path.join(mask_dir, masks[s]))
        for s in sorted(imgs.keys() & masks.keys())
    ]


@dataclass
class SaliencyDataset:
    stems: list
    images: list  # uint8 (H, W, 3)
    masks: list  # float32 (H, W) in {0, 1}

    @classmethod
    def from_dir(cls, root: str) -> "SaliencyDataset":
        pairs = list_pairs(root)
        if not pairs:
            raise FileNotFoundError(f"no image/mask pairs under {root}")
        stems, images, masks = [], [], []
        for stem, ip, mp in pairs:
            img, gt = load_pair(ip, mp)
            stems.append(stem)
            images.append(img)
            masks.append((gt >= 0.5).astype(np.float32))
        return cls(stems, images, masks)

    def __len__(self):
        return len(self.stems)

    def batch(self, indices, rng=None, augment_cfg: AugmentConfig | None = None):
        imgs, gts = [], []
        for i in indices:
            img, gt = self.images[i], self.masks[i]
            if augment_cfg is not None:
                img, gt = augment(img, gt, augment_cfg, rng)
            imgs.append(img)
            gts.append(gt)
        return to_tensor_images(np.stack(imgs)), torch.from_numpy(np.stack(gts)[:, None].astype(np.float32))


def to_tensor_images(imgs: np.ndarray) -> torch.Tensor:
    """uint8 ``(B, H, W, 3)`` or ``(H, W, 3)`` -> float ``(B, 3, H, W)`` in [0, 1]."""
    imgs = np.asarray(imgs)
    if imgs.ndim == 3:
        imgs = imgs[None]
    return torch.from_numpy(imgs.astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()


# ---------------------------------------------------------------------------
# augmentation


def draw_augmentation(cfg: AugmentConfig, rng: np.random.Generator, size) -> AugmentDraw:
    h, w = size
    scale = float(rng.uniform(*cfg.scale_range))
    angle = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
    # crop window stays inside the scaled image when zooming in
    mx, my = max(0.0, (scale - 1) * w / 2), max(0.0, (scale - 1) * h / 2)
    shift = (float(rng.uniform(-mx, mx)) if mx else 0.0, float(rng.uniform(-my, my)) if my else 0.0)
    return AugmentDraw(
        scale,
        angle,
        shift,
        float(rng.uniform(*cfg.contrast)),
        float(rng.uniform(*cfg.sharpness)),
        float(rng.uniform(*cfg.brightness)),
    )


def apply_augmentation(img: np.ndarray, gt: np.ndarray, d: AugmentDraw) -> tuple[np.ndarray, np.ndarray]:
    """Scale/rotate/crop jointly (GT by nearest neighbour), then photometric jitter on the image."""
    h, w = gt.shape
    if d.scale != 1.0 or d.angle != 0.0 or d.shift != (0.0, 0.0):
        m = cv2.getRotationMatrix2D(((w - 1) / 2, (h - 1) / 2), d.angle, d.scale)
        m[:, 2] += d.shift
        img = cv2.warpAffine(img, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101)
        gt = cv2.warpAffine(
            gt.astype(np.float32), m, (w, h), flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_REFLECT_101
        )
        gt = (gt >= 0.5).astype(np.float32)
    if (d.contrast, d.sharpness, d.brightness) != (1.0, 1.0, 1.0):
        pil = Image.fromarray(img)
        for enhancer, factor in (
            (ImageEnhance.Contrast, d.contrast),
            (ImageEnhance.Sharpness, d.sharpness),
            (ImageEnhance.Brightness, d.brightness),
        ):
            if factor != 1.0:
                pil = enhancer(pil).enhance(factor)
        img = np.asarray(pil)
    return img, gt


def augment(img, gt, cfg: AugmentConfig, rng: np.random.Generator):
    return apply_augmentation(img, gt, draw_augmentation(cfg, rng, gt.shape))
