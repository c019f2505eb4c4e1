"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports from odcgan; each function is written from the
definition of the operation it checks.
"""

from collections import deque

import numpy as np


def conv_params(cin, cout, k=4):
    return k * k * cin * cout + cout


def bn_params(c):
    return 2 * c


def generator_param_count(ch):
    """Closed-form parameter count of the 8+8 encoder-decoder."""
    n = len(ch)
    total = conv_params(3, ch[0])  # first encoder: no norm
    for i in range(1, n):
        total += conv_params(ch[i - 1], ch[i])
        if i < n - 1:  # bottleneck: no norm
            total += bn_params(ch[i])
    cin = ch[-1]
    for i in range(n - 1):
        cout = ch[n - 2 - i]
        total += conv_params(cin, cout) + bn_params(cout)
        cin = 2 * cout
    return total + conv_params(cin, 1)


def discriminator_param_count(ch, cin=4):
    total = 0
    for i, cout in enumerate(ch):
        total += conv_params(cin, cout)
        if 0 < i < len(ch) - 1:
            total += bn_params(cout)
        cin = cout
    return total


def naive_conv2d(x, w, b, stride, pad):
    """Direct convolution. x: CxHxW, w: OxCxKxK."""
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for i in range(oh):
            for j in range(ow):
                acc = b[oc]
                for ic in range(c):
                    for u in range(k):
                        for v in range(k):
                            acc += w[oc, ic, u, v] * xp[ic, i * stride + u, j * stride + v]
                out[oc, i, j] = acc
    return out


def naive_bilinear(img, out_h, out_w):
    """Half-pixel-centre bilinear resampling of an HxW(xC) array, no antialiasing."""
    h, w = img.shape[:2]
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        sy = max((i + 0.5) * h / out_h - 0.5, 0.0)
        y0 = min(int(np.floor(sy)), h - 1)
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(out_w):
            sx = max((j + 0.5) * w / out_w - 0.5, 0.0)
            x0 = min(int(np.floor(sx)), w - 1)
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


def min_filter(mask, fp):
    """Erosion as a min over the footprint; outside the image counts as 0."""
    h, w = mask.shape
    r = fp.shape[0] // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            val = 1
            for u in range(fp.shape[0]):
                for v in range(fp.shape[1]):
                    if not fp[u, v]:
                        continue
                    y, x = i + u - r, j + v - r
                    if not (0 <= y < h and 0 <= x < w) or mask[y, x] == 0:
                        val = 0
                        break
                if val == 0:
                    break
            out[i, j] = val
    return out


def max_filter(mask, fp):
    h, w = mask.shape
    r = fp.shape[0] // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            val = 0
            for u in range(fp.shape[0]):
                for v in range(fp.shape[1]):
                    y, x = i + u - r, j + v - r
                    if fp[u, v] and 0 <= y < h and 0 <= x < w and mask[y, x]:
                        val = 1
            out[i, j] = val
    return out


def opening(mask, fp, iterations=1):
    m = mask.astype(np.uint8)
    for _ in range(iterations):
        m = min_filter(m, fp)
    for _ in range(iterations):
        m = max_filter(m, fp)
    return m


def flood_fill_largest(mask):
    """Largest 8-connected component by BFS; ties to earliest raster seed."""
    h, w = mask.shape
    seen = np.zeros((h, w), bool)
    best = []
    for i in range(h):
        for j in range(w):
            if mask[i, j] and not seen[i, j]:
                comp, q = [], deque([(i, j)])
                seen[i, j] = True
                while q:
                    y, x = q.popleft()
                    comp.append((y, x))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                q.append((ny, nx))
                if len(comp) > len(best):
                    best = comp
    out = np.zeros((h, w), np.uint8)
    for y, x in best:
        out[y, x] = 1
    return out


def loop_counts(pred, gt):
    tp = tn = fp = fn = 0
    for p, g in zip(np.asarray(pred).ravel().tolist(), np.asarray(gt).ravel().tolist()):
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def loop_metrics(pred, gt):
    """All five metrics from per-pixel counting with the empty-vs-empty rule."""
    tp, tn, fp, fn = loop_counts(pred, gt)

    def div(a, b, vacuous):
        if b == 0:
            return 1.0 if vacuous else 0.0
        return a / b

    return {
        "accuracy": div(tp + tn, tp + tn + fp + fn, True),
        "dice": div(2 * tp, 2 * tp + fp + fn, True),
        "jaccard": div(tp, tp + fp + fn, True),
        "sensitivity": div(tp, tp + fn, fp == 0),
        "specificity": div(tn, tn + fp, fn == 0),
    }


def np_generator_loss(scores, pred, gt, lam, eps=1e-7):
    s = np.clip(scores, eps, 1 - eps)
    return np.mean(-np.log(s)) + lam * np.mean(np.abs(gt - pred))


def np_discriminator_loss(real, fake, eps=1e-7):
    return np.mean(-np.log(np.clip(real, eps, 1 - eps))) + np.mean(-np.log(np.clip(1 - fake, eps, 1 - eps)))


def central_diff(f, x, h=1e-4):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def _shifted(mask, fp, reduce, init):
    """Combine the footprint-shifted copies of a zero-padded mask."""
    h, w = mask.shape
    r = fp.shape[0] // 2
    padded = np.zeros((h + 2 * r, w + 2 * r), np.uint8)
    padded[r:r + h, r:r + w] = mask
    out = np.full((h, w), init, np.uint8)
    for u, v in zip(*np.nonzero(fp)):
        out = reduce(out, padded[u:u + h, v:v + w])
    return out


def shift_opening(mask, fp, iterations=1):
    """Opening as repeated min then max over shifted copies."""
    m = mask.astype(np.uint8)
    for _ in range(iterations):
        m = _shifted(m, fp, np.minimum, 1)
    for _ in range(iterations):
        m = _shifted(m, fp, np.maximum, 0)
    return m
