"""InSPyReNet assembly: encoder, stage-3 decoder, SICA heads, inverse pyramid."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidArgument
from .pyramid import expand_to, make_gaussian_kernel
from .sica import SICA, SicaConfig, conv_bn_relu

CHECKPOINT_VERSION = 1
PROB_CLAMP = 1e-4


@dataclass
class ModelConfig:
    widths: tuple = (16, 32, 64, 128)
    decoder_width: int = 16
    train_h: int = 384
    train_w: int = 384
    kernel_size: int = 7
    kernel_sigma: float = 1.0
    pred_pyramid: bool = True
    stop_grad: bool = True
    scale_logits: bool = True
    squash_laplacian: bool = True
    coarse_resize: str = "bilinear"  # or "expand"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != 4:
            raise InvalidArgument(f"encoder needs exactly 4 stage widths, got {self.widths}")
        if self.coarse_resize not in ("bilinear", "expand"):
            raise InvalidArgument(f"unknown coarse_resize mode {self.coarse_resize!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class SaliencyPyramid:
    """Saliency maps ``s3..s0`` (probabilities) and Laplacian maps ``u2..u0`` (logit residuals)."""

    s3: torch.Tensor
    s2: torch.Tensor
    s1: torch.Tensor
    s0: torch.Tensor
    u2: torch.Tensor
    u1: torch.Tensor
    u0: torch.Tensor

    @property
    def saliency(self) -> list:
        """Finest first: ``[s0, s1, s2, s3]``."""
        return [self.s0, self.s1, self.s2, self.s3]

    @property
    def laplacians(self) -> list:
        return [self.u0, self.u1, self.u2]


def logit(p: torch.Tensor) -> torch.Tensor:
    p = p.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    return torch.log(p) - torch.log1p(-p)


class Encoder(nn.Module):
    """Plain strided conv net with features at strides 4, 8, 16, 32."""

    def __init__(self, widths, in_channels: int = 3):
        super().__init__()
        w0, w1, w2, w3 = widths
        self.stem = nn.Sequential(
            conv_bn_relu(in_channels, max(w0 // 2, 8), 3, stride=2),
            conv_bn_relu(max(w0 // 2, 8), w0, 3, stride=2),
        )
        self.stages = nn.ModuleList(
            nn.Sequential(conv_bn_relu(cin, cout, 3, stride=2), conv_bn_relu(cout, cout, 3))
            for cin, cout in ((w0, w1), (w1, w2), (w2, w3))
        )

    def forward(self, x):
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats


class InitialDecoder(nn.Module):
    """Fuses the stride-8/16/32 features into the stage-3 saliency logits."""

    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(conv_bn_relu(3 * width, width, 3), conv_bn_relu(width, width, 3))
        self.out = nn.Conv2d(width, 1, 3, padding=1)

    def forward(self, f8, f16, f32):
        size = f8.shape[-2:]
        up = lambda t: F.interpolate(t, size=size, mode="bilinear", align_corners=False)
        return self.out(self.body(torch.cat([f8, up(f16), up(f32)], dim=1)))


class InSPyReNet(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        d = cfg.decoder_width
        self.kernel = make_gaussian_kernel(cfg.kernel_size, cfg.kernel_sigma)
        self.encoder = Encoder(cfg.widths)
        self.reducers = nn.ModuleList(conv_bn_relu(w, d, 1) for w in cfg.widths)
        self.decoder = InitialDecoder(d)
        self.sica = nn.ModuleDict(
            {
                str(j): SICA(
                    SicaConfig(j, d, cfg.train_h, cfg.train_w, cfg.scale_logits, cfg.squash_laplacian)
                )
                for j in (2, 1, 0)
            }
        )

    def encode(self, image: torch.Tensor) -> list:
        if image.dim() != 4 or image.shape[-2] % 32 or image.shape[-1] % 32:
            raise InvalidArgument(
                f"image must be (B, 3, H, W) with H, W divisible by 32, got {tuple(image.shape)}"
            )
        return self.encoder(image)

    def reduce_channels(self, feats: list) -> list:
        return [r(f) for r, f in zip(self.reducers, feats)]

    def initial_decode(self, reduced: list) -> torch.Tensor:
        """Stage-3 saliency probabilities at stride 8."""
        return torch.sigmoid(self.decoder(*reduced[1:]))

    def clamp_thresholds(self) -> None:
        for m in self.sica.values():
            m.clamp_thresholds()

    def _to_grid(self, m: torch.Tensor, size) -> torch.Tensor:
        if self.cfg.coarse_resize == "expand":
            return expand_to(m, size, self.kernel)
        return F.interpolate(m, size=size, mode="bilinear", align_corners=False)

    def forward(self, image: torch.Tensor) -> SaliencyPyramid:
        cfg = self.cfg
        h, w = image.shape[-2:]
        reduced = self.reduce_channels(self.encode(image))
        s_prev = self.initial_decode(reduced)
        f4 = reduced[0]
        sal, lap = {3: s_prev}, {}
        u_prev = None
        sg = (lambda t: t.detach()) if cfg.stop_grad else (lambda t: t)
        for j in (2, 1, 0):
            size = (h // 2**j, w // 2**j)
            x = f4 if j == 2 else F.interpolate(f4, size=size, mode="bilinear", align_corners=False)
            s_in = sg(self._to_grid(s_prev, size))
            u_in = None if u_prev is None else sg(self._to_grid(u_prev, size))
            u = self.sica[str(j)](x, s_in, u_in)
            if cfg.pred_pyramid:
                s = torch.sigmoid(expand_to(logit(sg(s_prev)), size, self.kernel) + u)
            else:
                s = torch.sigmoid(u)
            sal[j], lap[j] = s, u
            s_prev, u_prev = s, u
        return SaliencyPyramid(sal[3], sal[2], sal[1], sal[0], lap[2], lap[1], lap[0])


def _atomic_write(path: str, write) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_checkpoint(path: str, model: InSPyReNet, extra: dict | None = None) -> None:
    """Write parameters and buffers as 32-bit arrays plus a JSON metadata blob."""
    arrays = {}
    for name, t in model.state_dict().items():
        a = t.detach().cpu().numpy()
        arrays[name] = a.astype(np.int32) if a.dtype.kind in "iu" else a.astype(np.float32)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.cfg),
        "extra": extra or {},
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)

    def write(tmp):
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)

    _atomic_write(path, write)


class CheckpointError(RuntimeError):
    pass


def load_checkpoint(path: str) -> tuple[InSPyReNet, dict]:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {meta.get('format_version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    model = InSPyReNet(ModelConfig.from_dict(meta["model_config"]))
    state = model.state_dict()
    loaded = {}
    for name, ref in state.items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint {path} is missing {name}")
        loaded[name] = torch.from_numpy(arrays[name]).to(ref.dtype).reshape(ref.shape)
    model.load_state_dict(loaded)
    model.eval()
    return model, meta
