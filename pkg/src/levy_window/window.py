"""Tail-index estimation from central masses and location of the scaling window.

The probability that an ``tau``-step return lands within ``delta`` of its
center decays like ``tau**(-1/alpha)`` on the window, so the slope of
``log P0`` on ``log tau`` estimates ``-1/alpha``.  The window edges are the
kinks of a continuous piecewise-affine fit to ``log S_tau``.
"""

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .exceptions import (
    DataError,
    DomainError,
    EstimationError,
    FitInfeasibleError,
    NotALevyWindowError,
)
from .market import build_returns, log_grid, robust_scale, scale_curve
from .stable import StableParams, stable_quantile

RANGE_TOL = 1e-9
# the slope must sit this many standard errors below -1/2 to declare a window
SIGNIFICANCE_Z = 2.0
DEFAULT_DAY_SECONDS = 23400.0


@dataclass(frozen=True)
class CentralMassCurve:
    horizons: np.ndarray
    delta: float
    p0_hat: np.ndarray
    centers: np.ndarray
    n_obs: np.ndarray
    dropped: tuple = ()

    @property
    def y_values(self):
        return np.log(self.p0_hat)

    @property
    def log_horizons(self):
        return np.log(self.horizons.astype(float))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    alpha_hat: float
    se_slope: float
    se_alpha: float
    in_range: bool
    se_method: str = "sandwich"
    n_horizons: int = 0


@dataclass(frozen=True)
class WindowEstimate:
    """Kinks of the segment fit, in base steps."""

    tau_uv_hat: float
    tau_ir_hat: float
    segment_slopes: tuple
    sse: float
    alpha_hat_scale: float
    pieces: int = 3
    span: tuple = ()
    se_middle_slope: float = float("nan")
    spans_full_range: bool = False
    coefficients: tuple = ()


@dataclass
class IdentifyConfig:
    delta_factor: float = 0.25
    tau_lo: float = 1.0
    tau_hi: float = None
    per_decade: int = 8
    grid_anchor: float = None
    span_lo: float = None
    span_hi: float = None
    pieces: int = 3
    functional: str = "mad"
    se_method: str = "bootstrap"
    replicates: int = 500
    block_len: int = None
    day_seconds: float = DEFAULT_DAY_SECONDS
    min_cm_size: int = 100
    min_scale_size: int = 16
    refit_in_window: bool = True
    min_window_points: int = 6
    seed: int = 0
    threads: int = None


@dataclass(frozen=True)
class Identification:
    slope_fit: SlopeFit
    window: WindowEstimate
    central_mass: CentralMassCurve
    scale: object
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.slope_fit
        yield self.window


# --------------------------------------------------------------------------
# central mass and slope

def central_mass(grid, delta, min_size=100):
    """Fraction of overlapping returns within ``delta`` of the per-horizon median.

    Horizons where no return falls inside the band are dropped with a warning.
    """
    if not (math.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be positive, got {delta!r}")
    sizes = grid.sample_sizes()
    if np.any(sizes < min_size):
        j = int(np.argmax(sizes < min_size))
        raise DataError(
            f"horizon {grid.horizons[j]} has {sizes[j]} returns, fewer than the floor {min_size}"
        )
    counts, centers = _kernels.central_mass_counts(grid.log_prices, grid.horizons, delta)
    keep = counts > 0
    dropped = tuple(int(h) for h in grid.horizons[~keep])
    if dropped:
        warnings.warn(f"dropping horizons with empty central band: {dropped}", stacklevel=2)
    if not keep.any():
        raise EstimationError("every horizon has an empty central band; increase delta")
    return CentralMassCurve(
        horizons=grid.horizons[keep].copy(),
        delta=float(delta),
        p0_hat=counts[keep] / sizes[keep],
        centers=centers[keep],
        n_obs=sizes[keep].copy(),
        dropped=dropped,
    )


def _ols(x, y):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    return slope, intercept, resid, xc, sxx


def _check_design(x):
    if len(x) < 3:
        raise FitInfeasibleError(f"need at least 3 horizons for the slope fit, got {len(x)}")
    xc = x - x.mean()
    if not float(xc @ xc) > 0:
        raise FitInfeasibleError("degenerate horizon design (all log horizons equal)")


def _slope_in_range(slope):
    return bool(-1.0 + RANGE_TOL < slope < -0.5 - RANGE_TOL)


def fit_slope(curve, *, se_slope=None, se_method="sandwich"):
    """OLS of ``log P0`` on ``log tau`` with ``alpha_hat = -1 / slope``.

    Without ``se_slope`` the heteroskedasticity-robust (HC0) sandwich standard
    error is reported; :func:`bootstrap_slope` supplies the block-bootstrap one.
    """
    x, y = curve.log_horizons, curve.y_values
    _check_design(x)
    slope, intercept, resid, xc, sxx = _ols(x, y)
    if not slope < 0:
        raise NotALevyWindowError(f"central masses do not decay with horizon (slope {slope:.4g})")
    if se_slope is None:
        se_slope = math.sqrt(float(np.sum(xc ** 2 * resid ** 2))) / sxx
        se_method = "sandwich"
    return SlopeFit(
        slope=slope,
        intercept=intercept,
        alpha_hat=-1.0 / slope,
        se_slope=float(se_slope),
        se_alpha=float(se_slope) / slope ** 2,
        in_range=_slope_in_range(slope),
        se_method=se_method,
        n_horizons=len(x),
    )


# --------------------------------------------------------------------------
# segment fit

def _segment_design(x, kinks):
    cols = [np.ones_like(x), x] + [np.maximum(x - k, 0.0) for k in kinks]
    return np.column_stack(cols)


def _lstsq_sse(a, y):
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    r = y - a @ coef
    return float(r @ r), coef


def _candidate_pairs(m, pieces):
    if pieces == 3:
        return [(i, j) for i in range(1, m - 2) for j in range(i + 1, m - 1)]
    return [(0, j) for j in range(1, m - 1)]


def two_segment_fit(curve, span=None, *, pieces=3, min_span_points=8):
    """Continuous piecewise-affine least squares of ``log S_tau`` on ``log tau``.

    With ``pieces=3`` both kinks are searched exhaustively over ordered pairs
    of grid points (each segment keeps at least two points).  ``pieces=2``
    fits only the upper kink and puts ``tau_uv_hat`` at the lower span edge.
    Ties in the objective go to the widest window.
    """
    if pieces not in (2, 3):
        raise DomainError(f"pieces must be 2 or 3, got {pieces}")
    h = np.asarray(curve.horizons, dtype=float)
    g = np.asarray(curve.g_values, dtype=float)
    lo, hi = (h[0], h[-1]) if span is None else span
    if not lo < hi:
        raise DomainError(f"span must satisfy tau_lo < tau_hi, got {span}")
    sel = (h >= lo) & (h <= hi)
    h, g = h[sel], g[sel]
    if len(h) < min_span_points:
        raise FitInfeasibleError(
            f"span [{lo:g}, {hi:g}] holds {len(h)} grid horizons, need {min_span_points}"
        )
    x = np.log(h)
    m = len(x)
    pairs = _candidate_pairs(m, pieces)
    if not pairs:
        raise FitInfeasibleError("too few points for two points per segment")

    fits = []
    for i, j in pairs:
        kinks = (x[i], x[j]) if pieces == 3 else (x[j],)
        sse, coef = _lstsq_sse(_segment_design(x, kinks), g)
        fits.append((sse, i, j, coef))
    sse_min = min(f[0] for f in fits)
    tol = 1e-12 + 1e-9 * sse_min
    tied = [f for f in fits if f[0] <= sse_min + tol]
    sse, i, j, coef = max(tied, key=lambda f: (x[f[2]] - x[f[1]], -f[1]))

    if pieces == 3:
        slopes = (coef[1], coef[1] + coef[2], coef[1] + coef[2] + coef[3])
        contrast = np.array([0.0, 1.0, 1.0, 0.0])
        kinks = (x[i], x[j])
    else:
        slopes = (coef[1], coef[1], coef[1] + coef[2])
        contrast = np.array([0.0, 1.0, 0.0])
        kinks = (x[j],)
    a = _segment_design(x, kinks)
    resid = g - a @ coef
    bread = np.linalg.pinv(a.T @ a)
    meat = (a * resid[:, None] ** 2).T @ a
    var_mid = float(contrast @ bread @ meat @ bread @ contrast)
    full = (i == 1 and j == m - 2) if pieces == 3 else (j == m - 2)
    return WindowEstimate(
        tau_uv_hat=float(h[i]),
        tau_ir_hat=float(h[j]),
        segment_slopes=tuple(float(s) for s in slopes),
        sse=float(sse),
        alpha_hat_scale=1.0 / float(slopes[1]) if slopes[1] != 0 else float("inf"),
        pieces=pieces,
        span=(float(h[0]), float(h[-1])),
        se_middle_slope=math.sqrt(max(var_mid, 0.0)),
        spans_full_range=bool(full),
        coefficients=tuple(float(c) for c in coef),
    )


def middle_slope(horizons, g, window):
    """Middle-segment slope of ``g`` refitted with the kinks held at ``window``."""
    x = np.log(np.asarray(horizons, dtype=float))
    lo, hi = window.span
    sel = (np.asarray(horizons) >= lo) & (np.asarray(horizons) <= hi)
    x, g = x[sel], np.asarray(g)[sel]
    if window.pieces == 3:
        a = _segment_design(x, (math.log(window.tau_uv_hat), math.log(window.tau_ir_hat)))
        _, coef = _lstsq_sse(a, g)
        return float(coef[1] + coef[2])
    a = _segment_design(x, (math.log(window.tau_ir_hat),))
    _, coef = _lstsq_sse(a, g)
    return float(coef[1])


# --------------------------------------------------------------------------
# block bootstrap

def default_block_len(step, n, max_horizon, day_seconds=DEFAULT_DAY_SECONDS):
    """One trading day of base steps (timestamps read as seconds), at least the
    longest horizon and at most a twentieth of the sample."""
    day = int(round(day_seconds / step)) if step < day_seconds else 1
    return int(max(1, min(max(day, int(max_horizon)), n // 20)))


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("LEVY_WINDOW_THREADS", "")
        threads = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, int(threads))


def _block_resample(inc, block_len, rng):
    n = len(inc)
    n_blocks = -(-n // block_len)
    starts = rng.integers(0, n - block_len + 1, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_len)).ravel()[:n]
    return np.concatenate(([0.0], np.cumsum(inc[idx])))


def bootstrap_slope(log_prices, horizons, delta, *, replicates=500, block_len=None, seed=0,
                    threads=None, window=None, step=1.0, day_seconds=DEFAULT_DAY_SECONDS,
                    functional="mad", scale_horizons=None):
    """Moving-block bootstrap of the whole pipeline.

    Each replicate resamples blocks of increments, rebuilds the central masses
    with the same ``delta`` and refits the slope.  With ``window`` given, the
    scale curve is rebuilt too and the middle-segment slope refitted at the
    fixed kinks.  Returns ``(slopes, middle_slopes)``; replicate ``k`` uses
    the ``k``-th spawned child of ``seed`` so the result does not depend on
    the number of threads.
    """
    x = np.asarray(log_prices, dtype=float)
    horizons = np.asarray(horizons, dtype=np.int64)
    inc = np.diff(x)
    if block_len is None:
        block_len = default_block_len(step, len(inc), horizons.max(), day_seconds)
    block_len = int(block_len)
    if not 1 <= block_len <= len(inc):
        raise DomainError(f"block length {block_len} outside [1, {len(inc)}]")
    children = np.random.SeedSequence(seed).spawn(int(replicates))
    logh = np.log(horizons.astype(float))
    sizes = len(x) - horizons
    s_h = horizons if scale_horizons is None else np.asarray(scale_horizons, dtype=np.int64)

    def one(child):
        xb = _block_resample(inc, block_len, np.random.default_rng(child))
        counts, _ = _kernels.central_mass_counts(xb, horizons, delta)
        keep = counts > 0
        slope = float("nan")
        if keep.sum() >= 3:
            slope = _ols(logh[keep], np.log(counts[keep] / sizes[keep]))[0]
        mid = float("nan")
        if window is not None:
            if functional == "mad":
                s = _kernels.horizon_mad(xb, s_h)
            else:
                s = np.array([robust_scale(xb[h:] - xb[:-h], functional) for h in s_h])
            if np.all(s > 0):
                mid = middle_slope(s_h, np.log(s), window)
        return slope, mid

    workers = resolve_threads(threads)
    if workers == 1:
        out = [one(c) for c in children]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, children))
    out = np.array(out, dtype=float).reshape(-1, 2)
    return out[:, 0], out[:, 1]


def _subset_curve(cm, mask):
    return CentralMassCurve(horizons=cm.horizons[mask], delta=cm.delta, p0_hat=cm.p0_hat[mask],
                            centers=cm.centers[mask], n_obs=cm.n_obs[mask], dropped=cm.dropped)


def _nan_sd(a):
    a = a[np.isfinite(a)]
    return float(np.std(a, ddof=1)) if a.size >= 2 else float("nan")


# --------------------------------------------------------------------------
# pipeline

def identify(series, config=None):
    """Central-mass slope first, then the segment fit of the scale curve.

    Returns an :class:`Identification`, which unpacks as ``(slope_fit, window)``.
    """
    cfg = config or IdentifyConfig()
    n = len(series.log_prices)
    if n < cfg.min_cm_size + 2:
        raise DataError(f"series of {n} points is too short for estimation")
    tau_hi = cfg.tau_hi if cfg.tau_hi is not None else max(cfg.tau_lo * 10, (n - 1) // 50)
    tau_hi = min(tau_hi, n - 1 - cfg.min_cm_size)
    horizons = log_grid(cfg.tau_lo, tau_hi, cfg.per_decade, cfg.grid_anchor)
    grid = build_returns(series, horizons)

    s_min = robust_scale(grid.returns[0], "mad")
    if not s_min > 0:
        raise DataError("returns at the smallest horizon have zero dispersion")
    delta = cfg.delta_factor * s_min
    cm = central_mass(grid, delta, cfg.min_cm_size)
    sc = scale_curve(grid, cfg.functional, cfg.min_scale_size)
    span = (cfg.span_lo if cfg.span_lo is not None else horizons[0],
            cfg.span_hi if cfg.span_hi is not None else horizons[-1])
    full_fit = fit_slope(cm)
    window = two_segment_fit(sc, span, pieces=cfg.pieces)

    # the slope is only meaningful on the window; refit there once it is located
    used = cm
    if cfg.refit_in_window:
        inside = (cm.horizons >= window.tau_uv_hat) & (cm.horizons <= window.tau_ir_hat)
        if inside.sum() >= cfg.min_window_points:
            used = _subset_curve(cm, inside)

    se_mid = window.se_middle_slope
    if cfg.se_method == "bootstrap" and cfg.replicates >= 2:
        slopes, mids = bootstrap_slope(
            series.log_prices, used.horizons, delta, replicates=cfg.replicates,
            block_len=cfg.block_len, seed=cfg.seed, threads=cfg.threads, window=window,
            step=series.step, day_seconds=cfg.day_seconds, functional=cfg.functional,
            scale_horizons=sc.horizons,
        )
        sf = fit_slope(used, se_slope=_nan_sd(slopes), se_method="bootstrap")
        se_mid = _nan_sd(mids)
    elif cfg.se_method in ("sandwich", "bootstrap"):
        sf = fit_slope(used)
    else:
        raise DomainError(f"unknown se_method {cfg.se_method!r}")

    inv_alpha = -sf.slope
    mid = window.segment_slopes[1]
    combined = math.sqrt(sf.se_slope ** 2 + se_mid ** 2)
    diagnostics = {
        "in_range": sf.in_range,
        "middle_slope_in_range": bool(0.5 < mid < 1.0),
        "inconsistent": bool(abs(inv_alpha - mid) > 2.0 * combined),
        "spans_full_range": window.spans_full_range,
        "se_middle_slope": se_mid,
        "delta": delta,
        "dropped_horizons": list(cm.dropped),
        "slope_horizons": used.horizons.tolist(),
        "full_grid_slope": full_fit.slope,
        "full_grid_alpha_hat": full_fit.alpha_hat,
        "slope_below_gaussian": bool(sf.slope + SIGNIFICANCE_Z * sf.se_slope < -0.5),
        "levy_window": bool(
            sf.in_range and 0.5 < mid < 1.0 and sf.slope + SIGNIFICANCE_Z * sf.se_slope < -0.5
        ),
    }
    return Identification(slope_fit=sf, window=window, central_mass=cm, scale=sc,
                          diagnostics=diagnostics)


def fit_stable_params(series, alpha, tau0=1):
    """Scale and drift of ``R_tau = mu*tau + sigma*tau**(1/alpha)*Z`` at the anchor.

    ``sigma`` comes from the MAD of ``tau0``-step returns (symmetric driver,
    so MAD(Z) = Q_Z(3/4)); ``mu`` is the mean base-step increment.
    """
    alpha = min(float(alpha), 2.0)
    tau0 = int(tau0)
    x = series.log_prices
    if not 1 <= tau0 < len(x):
        raise DomainError(f"anchor horizon {tau0} outside the series")
    r = x[tau0:] - x[:-tau0]
    mad = robust_scale(r, "mad")
    if not mad > 0:
        raise DataError(f"zero dispersion at the anchor horizon {tau0}")
    mad_z = float(stable_quantile(StableParams(alpha), 0.75))
    sigma = mad / (tau0 ** (1.0 / alpha) * mad_z)
    mu = float(np.mean(np.diff(x)))
    return StableParams(alpha=alpha, beta=0.0, sigma=sigma, mu=mu)


def identification_report(result):
    """Plain-dict view of an :class:`Identification` for JSON output."""
    return {
        "slope_fit": asdict(result.slope_fit),
        "window": asdict(result.window),
        "central_mass": {
            "horizons": result.central_mass.horizons.tolist(),
            "p0_hat": result.central_mass.p0_hat.tolist(),
            "centers": result.central_mass.centers.tolist(),
            "delta": result.central_mass.delta,
        },
        "scale_curve": {
            "horizons": np.asarray(result.scale.horizons).tolist(),
            "s_values": result.scale.s_values.tolist(),
            "functional": result.scale.functional,
        },
        "diagnostics": result.diagnostics,
    }
