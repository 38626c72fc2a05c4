"""Gaussian / Laplacian image pyramid primitives (EXPAND, REDUCE).

All operators accept maps shaped ``(H, W)``, ``(C, H, W)`` or ``(B, C, H, W)``
and return the same rank. They are written in torch so the model and the
losses can backpropagate through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidArgument


@dataclass(frozen=True)
class GaussianKernel2D:
    size: int
    sigma: float
    weights: np.ndarray  # (size, size) float64, sums to 1

    def tensor(self, channels: int = 1, dtype=torch.float32, device=None) -> torch.Tensor:
        k = torch.as_tensor(self.weights, dtype=dtype, device=device)
        return k.expand(channels, 1, self.size, self.size).contiguous()


def gaussian_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def make_gaussian_kernel(size: int = 7, sigma: float = 1.0) -> GaussianKernel2D:
    """Separable 2-D Gaussian, the outer product of a normalized 1-D kernel."""
    if int(size) != size or size < 3 or size % 2 == 0:
        raise InvalidArgument(f"kernel size must be an odd integer >= 3, got {size}")
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    g = gaussian_1d(int(size), float(sigma))
    return GaussianKernel2D(int(size), float(sigma), np.outer(g, g))


DEFAULT_KERNEL = make_gaussian_kernel(7, 1.0)


def reflect_indices(n: int, pad: int, device=None) -> torch.Tensor:
    """Indices of a length-``n`` axis padded by ``pad`` on both sides.

    Reflection excludes the edge sample (``d c b | a b c d | c b a``) and folds
    repeatedly, so pads wider than the axis are allowed for ``n >= 2``.
    """
    if n < 2:
        raise InvalidArgument("reflect padding needs at least 2 samples along each axis")
    idx = torch.arange(-pad, n + pad, device=device)
    period = 2 * (n - 1)
    idx = torch.remainder(idx, period)
    return torch.where(idx >= n, period - idx, idx)


def reflect_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    h, w = x.shape[-2:]
    x = x.index_select(-2, reflect_indices(h, pad, x.device))
    return x.index_select(-1, reflect_indices(w, pad, x.device))


def _as4d(x) -> tuple[torch.Tensor, int]:
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    ndim = x.dim()
    if ndim == 2:
        x = x[None, None]
    elif ndim == 3:
        x = x[None]
    elif ndim != 4:
        raise InvalidArgument(f"expected a 2-, 3- or 4-D map, got shape {tuple(x.shape)}")
    return x, ndim


def _restore(x: torch.Tensor, ndim: int) -> torch.Tensor:
    if ndim == 2:
        return x[0, 0]
    if ndim == 3:
        return x[0]
    return x


def _filter(x: torch.Tensor, k: GaussianKernel2D, gain: float = 1.0) -> torch.Tensor:
    c = x.shape[1]
    weight = k.tensor(c, dtype=x.dtype, device=x.device)
    if gain != 1.0:
        weight = weight * gain
    return F.conv2d(reflect_pad(x, k.size // 2), weight, groups=c)


def reduce(x, k: GaussianKernel2D = DEFAULT_KERNEL) -> torch.Tensor:
    """Blur then keep even rows/columns; output is ceil(H/2) x ceil(W/2)."""
    x, ndim = _as4d(x)
    if x.shape[-2] < 2 or x.shape[-1] < 2:
        raise InvalidArgument(f"cannot REDUCE a map of size {tuple(x.shape[-2:])}")
    return _restore(_filter(x, k)[..., ::2, ::2], ndim)


def expand(x, k: GaussianKernel2D = DEFAULT_KERNEL) -> torch.Tensor:
    """Zero-interleave to 2H x 2W, then blur with 4x gain."""
    x, ndim = _as4d(x)
    b, c, h, w = x.shape
    up = x.new_zeros(b, c, 2 * h, 2 * w)
    up[..., ::2, ::2] = x
    return _restore(_filter(up, k, gain=4.0), ndim)


def _crop_to(x: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    h, w = hw
    if x.shape[-2] - h not in (0, 1) or x.shape[-1] - w not in (0, 1):
        raise InvalidArgument(
            f"expanded size {tuple(x.shape[-2:])} is incompatible with target {hw}"
        )
    return x[..., :h, :w]


def expand_to(x, hw: tuple[int, int], k: GaussianKernel2D = DEFAULT_KERNEL) -> torch.Tensor:
    """EXPAND followed by the odd-dimension crop (drops at most one row/col)."""
    return _crop_to(expand(x, k), tuple(hw))


@dataclass
class LaplacianDecomposition:
    levels: list  # detail maps, finest first
    base: torch.Tensor


def max_levels(h: int, w: int) -> int:
    n = 0
    while h >= 2 and w >= 2:
        h, w = (h + 1) // 2, (w + 1) // 2
        n += 1
    return n


def decompose(x, levels: int, k: GaussianKernel2D = DEFAULT_KERNEL) -> LaplacianDecomposition:
    x, ndim = _as4d(x)
    if levels < 1:
        raise InvalidArgument(f"levels must be >= 1, got {levels}")
    if levels > max_levels(*x.shape[-2:]):
        raise InvalidArgument(
            f"{levels} levels is too many for a {tuple(x.shape[-2:])} map"
        )
    details = []
    cur = x
    for _ in range(levels):
        low = reduce(cur, k)
        details.append(_restore(cur - expand_to(low, cur.shape[-2:], k), ndim))
        cur = low
    return LaplacianDecomposition(details, _restore(cur, ndim))


def reconstruct(d: LaplacianDecomposition, k: GaussianKernel2D = DEFAULT_KERNEL) -> torch.Tensor:
    cur = d.base
    for detail in reversed(d.levels):
        cur = expand_to(cur, detail.shape[-2:], k) + detail
    return cur
