"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported.  Setting ``LEVY_WINDOW_PURE_PYTHON=1`` forces the
fallback (used by the benchmark and the backend-equivalence tests).
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("LEVY_WINDOW_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels
        BACKEND = "python"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def cos_sum(u, amp, phase, z):
    """``out[i] = sum_k amp[k] * cos(u[k] * z[i] + phase[k])``."""
    return _impl.cos_sum(_f64(u), _f64(amp), _f64(phase), _f64(z))


def sin_sum(u, amp, phase, z):
    """``out[i] = sum_k amp[k] * sin(u[k] * z[i] + phase[k])``."""
    return _impl.sin_sum(_f64(u), _f64(amp), _f64(phase), _f64(z))


def cms_transform(v, w, alpha, beta):
    """Chambers-Mallows-Stuck map from (uniform angle, unit exponential) to Z."""
    return _impl.cms_transform(_f64(v), _f64(w), float(alpha), float(beta))


def central_mass_counts(x, horizons, delta):
    """Per horizon h, the median of the overlapping returns and the count within ``delta`` of it."""
    h = np.ascontiguousarray(horizons, dtype=np.int64)
    return _impl.central_mass_counts(_f64(x), h, float(delta))


def horizon_mad(x, horizons):
    """Per horizon h, median absolute deviation of the overlapping h-step returns."""
    h = np.ascontiguousarray(horizons, dtype=np.int64)
    return _impl.horizon_mad(_f64(x), h)
