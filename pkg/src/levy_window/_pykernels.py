"""Pure numpy fallback for the compiled inner loops in ``_ckernels.pyx``."""

import numpy as np

# rows of z per block in the trig sums; bounds the temporary (rows x nodes) matrix
_BLOCK = 256


def _trig_sum(fn, u, amp, phase, z):
    z = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty(z.shape[0])
    for start in range(0, z.shape[0], _BLOCK):
        zz = z[start:start + _BLOCK]
        out[start:start + _BLOCK] = fn(np.outer(zz, u) + phase) @ amp
    return out


def cos_sum(u, amp, phase, z):
    return _trig_sum(np.cos, u, amp, phase, z)


def sin_sum(u, amp, phase, z):
    return _trig_sum(np.sin, u, amp, phase, z)


def cms_transform(v, w, alpha, beta):
    t = 0.0 if alpha == 2.0 else np.tan(np.pi * alpha / 2.0)
    b = np.arctan(beta * t) / alpha if (beta != 0.0 and alpha != 2.0) else 0.0
    s = (1.0 + beta * beta * t * t) ** (1.0 / (2.0 * alpha))
    va = alpha * (v + b)
    return (s * np.sin(va) / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - va) / w) ** ((1.0 - alpha) / alpha))


def central_mass_counts(x, horizons, delta):
    counts = np.empty(len(horizons), dtype=np.int64)
    centers = np.empty(len(horizons))
    for j, h in enumerate(horizons):
        r = x[h:] - x[:-h]
        centers[j] = np.median(r)
        counts[j] = np.count_nonzero(np.abs(r - centers[j]) <= delta)
    return counts, centers


def horizon_mad(x, horizons):
    out = np.empty(len(horizons))
    for j, h in enumerate(horizons):
        r = x[h:] - x[:-h]
        out[j] = np.median(np.abs(r - np.median(r)))
    return out
