"""Scale Invariant Context Attention (SICA).

A per-stage attention decoder in the OCR style: soft context regions are cut
out of the coarser stage's saliency (and Laplacian) maps with learnable
thresholds, pooled into one vector per region at the *training* grid size, and
used as keys/values for a per-pixel softmax attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidArgument

THRESHOLD_EPS = 1e-3


def conv_bn_relu(cin: int, cout: int, k: int = 1, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


@dataclass
class SicaConfig:
    stage: int
    channels: int
    train_h: int = 384
    train_w: int = 384
    scale_logits: bool = True
    squash_laplacian: bool = True

    def __post_init__(self):
        if self.stage not in (0, 1, 2):
            raise InvalidArgument(f"SICA runs on stages 2, 1, 0; got {self.stage}")
        if self.train_h % self.stride or self.train_w % self.stride:
            raise InvalidArgument(
                f"training shape {self.train_h}x{self.train_w} is not divisible by stride {self.stride}"
            )

    @property
    def stride(self) -> int:
        return 2**self.stage

    @property
    def num_context(self) -> int:
        return 3 if self.stage == 2 else 5

    @property
    def train_grid(self) -> tuple[int, int]:
        return self.train_h // self.stride, self.train_w // self.stride


def compute_context_maps(S, U, theta_s, theta_u=None, stage: int = 2, squash_u: bool = False) -> torch.Tensor:
    """Foreground/background/uncertainty maps, ``(B, K, H, W)``.

    Order is ``[S_f, S_b, S_u]`` on stage 2 and ``[S_f, S_b, S_u, U_f, U_b]``
    elsewhere. ``S_u`` is clamped at zero so every map is a valid weight.
    ``U`` is a logit-domain residual; pass ``squash_u=True`` to threshold
    ``sigmoid(U)`` so ``theta_u`` lives on the same (0, 1) scale as ``theta_s``.
    """
    if stage == 2 and U is not None:
        raise InvalidArgument("stage 2 has no coarser Laplacian map")
    if stage != 2 and U is None:
        raise InvalidArgument(f"stage {stage} needs the coarser Laplacian map")
    maps = [
        torch.clamp(S - theta_s, min=0),
        torch.clamp(theta_s - S, min=0),
        torch.clamp(theta_s - torch.abs(S - theta_s), min=0),
    ]
    if U is not None:
        if squash_u:
            U = torch.sigmoid(U)
        maps += [torch.clamp(U - theta_u, min=0), torch.clamp(theta_u - U, min=0)]
    return torch.cat(maps, dim=1)


def region_representation(x: torch.Tensor, c: torch.Tensor, train_grid) -> torch.Tensor:
    """Context-weighted spatial sums ``f[b, k] = sum_xy c_k(x, y) x(x, y)``.

    Both inputs are bilinearly resampled to ``train_grid`` first (only when
    they are not already that size), so the result is ``(B, K, C)`` with
    statistics independent of the inference resolution.
    """
    if x.shape[-2:] != c.shape[-2:]:
        raise InvalidArgument(f"features {tuple(x.shape)} and context {tuple(c.shape)} are not aligned")
    grid = tuple(train_grid)
    if tuple(x.shape[-2:]) != grid:
        x = F.interpolate(x, size=grid, mode="bilinear", align_corners=False)
        c = F.interpolate(c, size=grid, mode="bilinear", align_corners=False)
    return torch.einsum("bkhw,bchw->bkc", c, x)


def attention_weights(query: torch.Tensor, keys: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    """Softmax over regions of ``query(x, y) . keys[k]``; ``(B, K, H, W)``."""
    logits = torch.einsum("bchw,bkc->bkhw", query, keys) * scale
    return torch.softmax(logits, dim=1)


def mix_regions(w: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    """``sum_l w_l(x, y) values[l]`` -> ``(B, C, H, W)``."""
    return torch.einsum("bkhw,bkc->bchw", w, values)


class _VectorTransform(nn.Module):
    """1x1 conv + BN + ReLU applied to a ``(B, K, C)`` stack of region vectors."""

    def __init__(self, channels: int):
        super().__init__()
        self.block = conv_bn_relu(channels, channels, 1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        # (B, K, C) -> (B, C, K, 1) so the conv/BN act per vector
        out = self.block(f.permute(0, 2, 1).unsqueeze(-1))
        return out.squeeze(-1).permute(0, 2, 1)


class SICA(nn.Module):
    def __init__(self, cfg: SicaConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.t_x = conv_bn_relu(c, c, 1)
        self.t_f = _VectorTransform(c)
        self.t_f_value = _VectorTransform(c)
        self.t_y = conv_bn_relu(c, c, 1)
        self.head = nn.Sequential(
            conv_bn_relu(2 * c, c, 3),
            conv_bn_relu(c, c, 3),
            nn.Conv2d(c, 1, 3, padding=1),
        )
        self.theta_s = nn.Parameter(torch.tensor(0.5))
        self.theta_u = nn.Parameter(torch.tensor(0.5)) if cfg.stage != 2 else None
        self.last_region: torch.Tensor | None = None

    @torch.no_grad()
    def clamp_thresholds(self) -> None:
        self.theta_s.clamp_(THRESHOLD_EPS, 1 - THRESHOLD_EPS)
        if self.theta_u is not None:
            self.theta_u.clamp_(THRESHOLD_EPS, 1 - THRESHOLD_EPS)

    def context_maps(self, S, U=None) -> torch.Tensor:
        return compute_context_maps(
            S, U, self.theta_s, self.theta_u, self.cfg.stage, squash_u=self.cfg.squash_laplacian
        )

    def region_representation(self, x, c) -> torch.Tensor:
        return region_representation(x, c, self.cfg.train_grid)

    def attention(self, x, f) -> torch.Tensor:
        scale = 1 / math.sqrt(self.cfg.channels) if self.cfg.scale_logits else 1.0
        return attention_weights(self.t_x(x), self.t_f(f), scale)

    def enhance(self, x, w, f) -> torch.Tensor:
        return self.t_y(mix_regions(w, self.t_f_value(f)))

    def forward(self, x, s_coarse, u_coarse=None) -> torch.Tensor:
        """Laplacian saliency map (unbounded residual, 1 channel) at ``x``'s size."""
        if x.dim() != 4 or x.shape[1] != self.cfg.channels:
            raise InvalidArgument(f"expected (B, {self.cfg.channels}, H, W) features, got {tuple(x.shape)}")
        for name, m in (("saliency", s_coarse), ("laplacian", u_coarse)):
            if m is not None and m.shape[-2:] != x.shape[-2:]:
                raise InvalidArgument(
                    f"{name} map {tuple(m.shape[-2:])} does not match features {tuple(x.shape[-2:])}"
                )
        c = self.context_maps(s_coarse, u_coarse)
        f = self.region_representation(x, c)
        self.last_region = f.detach()
        w = self.attention(x, f)
        y = self.enhance(x, w, f)
        return self.head(torch.cat([x, y], dim=1))
