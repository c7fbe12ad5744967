"""Brute-force reference implementations used as test oracles.

These are written independently of the package code paths they check:
explicit loops, finite differences and exhaustive enumeration only.
"""

from __future__ import annotations

import math

import numpy as np


def naive_conv2d(x, k, stride=1, padding=0):
    n, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + w] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for a in range(kh):
                            for d in range(kw):
                                acc += xp[b, c, i * stride + a, j * stride + d] * k[o, c, a, d]
                    out[b, o, i, j] = acc
    return out


def naive_conv2d_transpose(x, k, stride=1, padding=0, output_padding=0):
    """Scatter every input pixel times the kernel into the output, then crop."""
    n, cin, h, w = x.shape
    _, cout, kh, kw = k.shape
    hf = (h - 1) * stride + kh + output_padding
    wf = (w - 1) * stride + kw + output_padding
    full = np.zeros((n, cout, hf, wf))
    for b in range(n):
        for c in range(cin):
            for i in range(h):
                for j in range(w):
                    full[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw] += x[b, c, i, j] * k[c]
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    return full[:, :, padding:padding + ho, padding:padding + wo]


def numerical_grad(f, arrays, h=1e-5):
    """Central finite differences of scalar ``f(*arrays)`` w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + h
            fp = f(*arrays)
            a[idx] = old - h
            fm = f(*arrays)
            a[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def pairwise_auc(scores, is_inlier):
    pos = [s for s, t in zip(scores, is_inlier) if t]
    neg = [s for s, t in zip(scores, is_inlier) if not t]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def recount_confusion(scores, is_inlier, tau):
    tp = fp = tn = fn = 0
    for s, t in zip(scores, is_inlier):
        pred_target = s > tau
        if pred_target and t:
            tp += 1
        elif pred_target and not t:
            fp += 1
        elif not pred_target and t:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def recount_f1(scores, is_inlier, tau):
    tp, fp, tn, fn = recount_confusion(scores, is_inlier, tau)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def grid_eer(scores, is_inlier, n_thresholds=100_000, samples_per_segment=2000):
    """EER from a dense threshold sweep.

    (FPR, FNR) is evaluated on ``n_thresholds`` evenly spaced thresholds; the
    distinct points, in threshold order, form a polyline which is densely
    resampled, and the sample closest to the FPR == FNR diagonal is returned.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(is_inlier, dtype=bool)
    lo, hi = scores.min(), scores.max()
    span = hi - lo if hi > lo else 1.0
    taus = np.linspace(lo - 0.01 * span, hi + 0.01 * span, n_thresholds)
    pos, neg = np.sort(scores[truth]), np.sort(scores[~truth])
    # accepted as target iff score > tau
    fpr = 1.0 - np.searchsorted(neg, taus, side="right") / len(neg)
    fnr = np.searchsorted(pos, taus, side="right") / len(pos)
    pts = np.stack([fpr, fnr], axis=1)
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    best, best_gap = None, math.inf
    t = np.linspace(0.0, 1.0, samples_per_segment)[:, None]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = a + t * (b - a)
        gap = np.abs(seg[:, 0] - seg[:, 1])
        i = int(np.argmin(gap))
        if gap[i] < best_gap:
            best_gap, best = gap[i], seg[i].mean()
    return float(best)


def adam_trace(grad_fn, w0, lr, steps, beta1=0.5, beta2=0.999, eps=1e-8):
    """Textbook scalar Adam with explicit bias-corrected moments."""
    w, m, v, out = w0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(w)
    return out
