"""Straight-line reference implementations used as test oracles.

Nothing here imports from ``inspyre``; every routine is a literal per-pixel
evaluation written independently of the vectorized code paths.
"""

import math

import numpy as np


def reflect(i, n):
    # d c b | a b c d | c b a, folding as often as needed
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return period - i if i >= n else i


def gaussian_kernel_bruteforce(size, sigma):
    half = (size - 1) / 2
    k = np.zeros((size, size))
    for a in range(size):
        for b in range(size):
            k[a, b] = math.exp(-((a - half) ** 2 + (b - half) ** 2) / (2 * sigma**2))
    return k / k.sum()


def reduce_oracle(x, kernel):
    """G'(x, y) = sum_mn g(m, n) G(2x + m, 2y + n), reflect at borders."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape
    r = kernel.shape[0] // 2
    out = np.zeros(((h + 1) // 2, (w + 1) // 2))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            s = 0.0
            for m in range(-r, r + 1):
                for n in range(-r, r + 1):
                    s += kernel[m + r, n + r] * x[reflect(2 * i + m, h), reflect(2 * j + n, w)]
            out[i, j] = s
    return out


def expand_oracle(x, kernel):
    """S_e(x, y) = 4 sum_mn g(m, n) S((x - m) / 2, (y - n) / 2).

    Coordinates are reflected on the 2x lattice; half-integer source
    coordinates contribute nothing.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape
    H, W = 2 * h, 2 * w
    r = kernel.shape[0] // 2
    out = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            s = 0.0
            for m in range(-r, r + 1):
                for n in range(-r, r + 1):
                    p, q = reflect(i - m, H), reflect(j - n, W)
                    if p % 2 or q % 2:
                        continue
                    s += kernel[m + r, n + r] * x[p // 2, q // 2]
            out[i, j] = 4 * s
    return out


def hybrid_pyramid(details_src, base_src, levels, kernel):
    """Classic Burt-Adelson hybrid: details of one image on the base of another."""
    def down(a):
        return reduce_oracle(a, kernel)

    def up(a, shape):
        return expand_oracle(a, kernel)[: shape[0], : shape[1]]

    details = []
    cur = np.asarray(details_src, dtype=np.float64)
    for _ in range(levels):
        low = down(cur)
        details.append(cur - up(low, cur.shape))
        cur = low
    base = np.asarray(base_src, dtype=np.float64)
    for _ in range(levels):
        base = down(base)
    out = base
    for d in reversed(details):
        out = up(out, d.shape) + d
    return out


def ellipse_footprint(ksize):
    """Footprint of an axis-aligned ellipse inscribed in a ksize x ksize box.

    Same rasterization rule as OpenCV's MORPH_ELLIPSE: for each row the
    half-width is round(c * sqrt(1 - dy^2 / r^2)).
    """
    r = ksize // 2
    fp = np.zeros((ksize, ksize), dtype=bool)
    for i in range(ksize):
        dy = i - r
        if r == 0:
            half = 0
        else:
            t = 1.0 - dy * dy / (r * r)
            half = int(math.floor(r * math.sqrt(t) + 0.5)) if t > 0 else 0
        fp[i, r - half : r + half + 1] = True
    return fp


def max_minus_min_oracle(x, footprint):
    """Sliding-window (max - min) over in-bounds footprint pixels."""
    x = np.asarray(x)
    h, w = x.shape
    kh, kw = footprint.shape
    cy, cx = kh // 2, kw // 2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            vals = [
                x[i + a - cy, j + b - cx]
                for a in range(kh)
                for b in range(kw)
                if footprint[a, b] and 0 <= i + a - cy < h and 0 <= j + b - cx < w
            ]
            out[i, j] = max(vals) - min(vals)
    return out


def box_mean_reflect(x, size):
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape
    r = size // 2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            s = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    s += x[reflect(i + a, h), reflect(j + b, w)]
            out[i, j] = s / (size * size)
    return out


def wbce_oracle(s, g, eps=1e-6):
    s = np.clip(np.asarray(s, dtype=np.float64), eps, 1 - eps)
    g = np.asarray(g, dtype=np.float64)
    weight = 1 + 5 * np.abs(box_mean_reflect(g, 31) - g)
    num = 0.0
    den = 0.0
    for i in range(s.shape[0]):
        for j in range(s.shape[1]):
            bce = -(g[i, j] * math.log(s[i, j]) + (1 - g[i, j]) * math.log(1 - s[i, j]))
            num += weight[i, j] * bce
            den += weight[i, j]
    return num / den


def f_beta_oracle(s, g, beta2=0.3):
    s = np.asarray(s, dtype=np.float64).ravel()
    g = np.asarray(g).ravel() > 0.5
    if not g.any():
        return 0.0
    best = 0.0
    for t in range(256):
        pred = s > t / 255
        tp = float(np.sum(pred & g))
        p = tp / pred.sum() if pred.sum() else 0.0
        r = tp / g.sum()
        f = (1 + beta2) * p * r / (beta2 * p + r) if p + r > 0 else 0.0
        best = max(best, f)
    return best


def s_measure_oracle(pred, gt, alpha=0.5):
    """Structure measure as a direct loop over regions and quadrants."""
    pred = [[float(v) for v in row] for row in np.asarray(pred, dtype=np.float64)]
    gt = [[bool(v > 0.5) for v in row] for row in np.asarray(gt)]
    h, w = len(gt), len(gt[0])
    eps = np.finfo(np.float64).eps
    n_fg = sum(sum(r) for r in gt)
    mean_gt = n_fg / (h * w)
    mean_pred = sum(sum(r) for r in pred) / (h * w)
    if mean_gt == 0:
        return 1.0 - mean_pred
    if mean_gt == 1:
        return mean_pred

    def obj_score(vals):
        n = len(vals)
        m = sum(vals) / n
        sd = math.sqrt(sum((v - m) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        return 2 * m / (m * m + 1 + sd + eps)

    fg_vals = [pred[i][j] for i in range(h) for j in range(w) if gt[i][j]]
    bg_vals = [1 - pred[i][j] for i in range(h) for j in range(w) if not gt[i][j]]
    s_obj = mean_gt * obj_score(fg_vals) + (1 - mean_gt) * obj_score(bg_vals)

    ys = [i for i in range(h) for j in range(w) if gt[i][j]]
    xs = [j for i in range(h) for j in range(w) if gt[i][j]]
    cx = int(round(sum(xs) / len(xs))) + 1
    cy = int(round(sum(ys) / len(ys))) + 1

    def ssim(rows, cols):
        p = [pred[i][j] for i in rows for j in cols]
        g = [1.0 if gt[i][j] else 0.0 for i in rows for j in cols]
        n = len(p)
        if n == 0:
            return 0.0
        mx, my = sum(p) / n, sum(g) / n
        d = max(n - 1, 1)
        vx = sum((a - mx) ** 2 for a in p) / d
        vy = sum((b - my) ** 2 for b in g) / d
        cxy = sum((a - mx) * (b - my) for a, b in zip(p, g)) / d
        a_ = 4 * mx * my * cxy
        b_ = (mx * mx + my * my) * (vx + vy)
        if a_ != 0:
            return a_ / (b_ + eps)
        if b_ == 0:
            return 1.0
        return 0.0

    area = h * w
    quads = [
        (range(0, cy), range(0, cx)),
        (range(0, cy), range(cx, w)),
        (range(cy, h), range(0, cx)),
        (range(cy, h), range(cx, w)),
    ]
    weights = [len(r) * len(c) / area for r, c in quads]
    s_reg = sum(wt * ssim(r, c) for wt, (r, c) in zip(weights, quads))
    return max(0.0, alpha * s_obj + (1 - alpha) * s_reg)


def central_difference(fn, x, step=1e-5):
    """Gradient of scalar ``fn`` at float64 array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(x)
        flat[i] = orig - step
        fm = fn(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return grad


def count_components(mask, connectivity=4):
    """Connected components of a boolean mask by explicit flood fill."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if connectivity == 8:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    n = 0
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or seen[i, j]:
                continue
            n += 1
            stack = [(i, j)]
            seen[i, j] = True
            while stack:
                a, b = stack.pop()
                for da, db in steps:
                    p, q = a + da, b + db
                    if 0 <= p < h and 0 <= q < w and mask[p, q] and not seen[p, q]:
                        seen[p, q] = True
                        stack.append((p, q))
    return n


def euler_characteristic(mask):
    """Components (8-connected) minus holes (4-connected background not touching the border)."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(~mask, 1, constant_values=True)
    holes = count_components(padded, 4) - 1
    return count_components(mask, 8) - holes


def boundary_oracle(mask):
    """Foreground pixels with at least one in-bounds background 8-neighbour."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    p, q = i + a, j + b
                    if 0 <= p < h and 0 <= q < w and not mask[p, q]:
                        out[i, j] = True
    return out


def band_accuracy_oracle(pred_bin, gt_bin, radius):
    """Accuracy over pixels within ``radius`` (Euclidean) of either boundary."""
    edges = np.argwhere(boundary_oracle(gt_bin) | boundary_oracle(pred_bin))
    h, w = gt_bin.shape
    hit = total = 0
    for i in range(h):
        for j in range(w):
            d2 = ((edges - (i, j)) ** 2).sum(1).min()
            if d2 <= radius * radius:
                total += 1
                hit += pred_bin[i, j] == gt_bin[i, j]
    return hit / total
