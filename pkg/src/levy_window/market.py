"""Log-price ingestion, overlapping multi-horizon returns and robust scale curves."""

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import _kernels
from .exceptions import DataError, DegenerateScaleError, DomainError
from .stable import StableParams, stable_quantile, stable_sample

SPACING_RTOL = 1e-9
DEFAULT_MIN_SCALE_SAMPLE = 16


@dataclass(frozen=True)
class PriceSeries:
    """Equally spaced log prices ``X_t``.

    ``step`` is the sampling interval in the units of ``timestamps``.
    """

    timestamps: np.ndarray
    log_prices: np.ndarray
    step: float

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        x = np.asarray(self.log_prices, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "log_prices", x)
        if t.ndim != 1 or x.ndim != 1 or t.shape != x.shape:
            raise DataError("timestamps and log_prices must be 1-d arrays of equal length")
        if len(t) < 2:
            raise DataError("a price series needs at least 2 observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise DataError("timestamps and log prices must be finite")
        if not (self.step > 0):
            raise DataError(f"step must be positive, got {self.step!r}")
        bad = _spacing_violation(t, self.step)
        if bad is not None:
            raise DataError(f"timestamps are not equally spaced at index {bad}")

    def __len__(self):
        return len(self.log_prices)


def _spacing_violation(t, step):
    d = np.diff(t)
    bad = np.flatnonzero((d <= 0) | (np.abs(d - step) > SPACING_RTOL * step))
    return int(bad[0]) + 1 if bad.size else None


class _OverlappingReturns(Sequence):
    """Lazy per-horizon views ``X[h:] - X[:-h]``; nothing is stored per horizon."""

    def __init__(self, x, steps):
        self._x = x
        self._steps = steps

    def __len__(self):
        return len(self._steps)

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[i] for i in range(*j.indices(len(self)))]
        h = int(self._steps[j])
        return self._x[h:] - self._x[:-h]


@dataclass(frozen=True)
class HorizonGrid:
    """Horizons ``tau_j`` (in base steps) with their overlapping returns."""

    horizons: np.ndarray
    log_prices: np.ndarray = field(repr=False)
    step: float = 1.0

    @property
    def log_horizons(self):
        return np.log(self.horizons.astype(float))

    @property
    def returns(self):
        return _OverlappingReturns(self.log_prices, self.horizons)

    def sample_sizes(self):
        return len(self.log_prices) - self.horizons


@dataclass(frozen=True)
class ScaleCurve:
    """``S_tau`` per horizon and ``g = log S_tau``."""

    horizons: np.ndarray
    s_values: np.ndarray
    functional: str = "mad"

    @property
    def g_values(self):
        return np.log(self.s_values)

    @property
    def log_horizons(self):
        return np.log(np.asarray(self.horizons, dtype=float))


def build_returns(series, horizons):
    """Overlapping returns ``R_tau(t_k) = X_{t_k + tau} - X_{t_k}`` for each horizon.

    Horizons are integer numbers of base steps, strictly increasing, and
    shorter than the series.
    """
    h = np.asarray(horizons, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise DomainError("horizons must be a non-empty 1-d array")
    if np.any(h < 1) or np.any(np.abs(h - np.round(h)) > 1e-9):
        raise DomainError("horizons must be positive integer multiples of the base step")
    h = np.round(h).astype(np.int64)
    if np.any(np.diff(h) <= 0):
        raise DomainError("horizons must be strictly increasing")
    n = len(series.log_prices)
    if h[-1] >= n:
        raise DomainError(f"horizon {h[-1]} steps exceeds the series span of {n - 1} steps")
    return HorizonGrid(horizons=h, log_prices=series.log_prices, step=series.step)


def log_grid(tau_lo, tau_hi, per_decade=8, anchor=None):
    """Integer horizons spaced ``per_decade`` per factor of ten on [tau_lo, tau_hi].

    With ``anchor`` set, the geometric grid passes through that horizon.
    """
    if not (1 <= tau_lo < tau_hi):
        raise DomainError(f"need 1 <= tau_lo < tau_hi, got ({tau_lo}, {tau_hi})")
    base = float(anchor) if anchor is not None else 1.0
    k_lo = math.floor(per_decade * math.log10(tau_lo / base) - 1e-9)
    k_hi = math.ceil(per_decade * math.log10(tau_hi / base) + 1e-9)
    k = np.arange(k_lo, k_hi + 1)
    taus = np.unique(np.round(base * 10.0 ** (k / per_decade)).astype(np.int64))
    return taus[(taus >= tau_lo) & (taus <= tau_hi)]


def _iqr(r):
    q25, q75 = np.percentile(r, [25, 75])
    return q75 - q25


def scale_curve(grid, functional="mad", min_size=DEFAULT_MIN_SCALE_SAMPLE):
    """Robust scale ``S_tau`` of the overlapping returns at every grid horizon.

    ``functional`` is ``"mad"`` (median absolute deviation about the median,
    no consistency constant) or ``"iqr"``.
    """
    functional = functional.lower()
    if functional not in ("mad", "iqr"):
        raise DomainError(f"unknown scale functional {functional!r}")
    sizes = grid.sample_sizes()
    if np.any(sizes < min_size):
        j = int(np.argmax(sizes < min_size))
        raise DataError(
            f"horizon {grid.horizons[j]} has {sizes[j]} returns, fewer than the floor {min_size}"
        )
    if functional == "mad":
        s = _kernels.horizon_mad(grid.log_prices, grid.horizons)
    else:
        s = np.array([_iqr(r) for r in grid.returns])
    if np.any(~(s > 0)):
        j = int(np.argmax(~(s > 0)))
        raise DegenerateScaleError(f"zero dispersion of returns at horizon {grid.horizons[j]}")
    return ScaleCurve(horizons=grid.horizons.copy(), s_values=s, functional=functional)


def robust_scale(r, functional="mad"):
    """Scale functional of a single return sample."""
    r = np.asarray(r, dtype=float)
    if functional == "mad":
        return float(np.median(np.abs(r - np.median(r))))
    if functional == "iqr":
        return float(_iqr(r))
    raise DomainError(f"unknown scale functional {functional!r}")


# --------------------------------------------------------------------------
# synthetic paths

def _saturating_weights(alpha, sigma, tau_ir, n_levels):
    """Weights of the multiscale construction whose scale**alpha is piecewise linear in tau.

    Component j contributes ``w_j * min(tau, T_j)`` to ``scale(tau)**alpha`` with
    ``T_j = tau_ir * 2**j``.  Matching ``A(T_j) = sigma**alpha * tau_ir * (T_j / tau_ir)**(alpha/2)``
    at every node makes ``scale(tau) = sigma * tau**(1/alpha)`` exactly for
    ``tau <= tau_ir`` and close to ``sqrt(tau)`` growth beyond.
    """
    nodes = np.maximum(np.round(tau_ir * 2.0 ** np.arange(n_levels)), 1.0)
    a = sigma ** alpha * tau_ir * (nodes / tau_ir) ** (alpha / 2.0)
    slopes = np.empty(n_levels)
    slopes[0] = a[0] / nodes[0]
    slopes[1:] = np.diff(a) / np.diff(nodes)
    w = slopes - np.append(slopes[1:], 0.0)
    return nodes.astype(np.int64), w


def _noise_scale(alpha, sigma, tau_uv):
    """Gaussian level-noise sd whose return MAD matches the stable MAD at tau_uv."""
    mad_z = float(stable_quantile(StableParams(alpha), 0.75))
    mad_unit_normal = 0.6744897501960817
    return mad_z * sigma * tau_uv ** (1.0 / alpha) / (mad_unit_normal * math.sqrt(2.0))


def simulate_two_regime(params, tau_uv, tau_ir, n, seed, *, mode="two_regime", step=1.0, start=0.0):
    """Synthetic log-price path with ``n`` increments (``n + 1`` prices).

    ``mode="window"`` draws iid increments ``mu + sigma * Z``, so returns obey
    the stable scaling law at every horizon.

    ``mode="two_regime"`` builds the stable part from saturating components
    (exact ``tau**(1/alpha)`` scale up to ``tau_ir``, roughly ``sqrt(tau)``
    beyond) and adds iid Gaussian noise to the log price whose return MAD
    equals the stable MAD at ``tau_uv``; below ``tau_uv`` the noise dominates.
    The saturating components are symmetric, so ``beta`` only acts in window mode.
    """
    if not (0 < tau_uv < tau_ir):
        raise DomainError(f"need 0 < tau_uv < tau_ir, got ({tau_uv}, {tau_ir})")
    n = int(n)
    if n < 1000:
        raise DomainError(f"n must be at least 1000, got {n}")
    if mode not in ("window", "two_regime"):
        raise DomainError(f"unknown simulation mode {mode!r}")
    ss = np.random.SeedSequence(seed)
    alpha, sigma = params.alpha, params.sigma
    if mode == "window":
        inc = sigma * stable_sample(params, n, ss.spawn(1)[0])
    else:
        n_levels = max(2, int(math.ceil(math.log2(max(n / tau_ir, 2.0)))) + 2)
        nodes, w = _saturating_weights(alpha, sigma, float(tau_ir), n_levels)
        children = ss.spawn(n_levels + 1)
        sym = StableParams(alpha)
        inc = np.zeros(n)
        for j in range(n_levels):
            lag = int(nodes[j])
            z = stable_sample(sym, n + lag, children[j])
            inc += (w[j] / 2.0) ** (1.0 / alpha) * (z[lag:] - z[:-lag])
    inc += params.mu
    x = np.concatenate(([0.0], np.cumsum(inc)))
    if mode == "two_regime":
        noise_rng = np.random.default_rng(children[-1])
        x += _noise_scale(alpha, sigma, float(tau_uv)) * noise_rng.standard_normal(n + 1)
    t = start + step * np.arange(n + 1, dtype=float)
    return PriceSeries(timestamps=t, log_prices=x, step=float(step))


# --------------------------------------------------------------------------
# CSV

def _parse_time(text, line):
    s = text.strip()
    try:
        return float(int(s))
    except ValueError:
        pass
    try:
        v = float(s)
    except ValueError:
        pass
    else:
        if math.isfinite(v):
            return v
        raise DataError(f"non-finite timestamp {text!r}", line)
    try:
        dt = datetime.fromisoformat(s[:-1] + "+00:00" if s.endswith("Z") else s)
    except ValueError:
        raise DataError(f"unparseable timestamp {text!r}", line) from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def read_csv(source):
    """Read a ``timestamp,price`` or ``timestamp,log_price`` CSV into a PriceSeries.

    ``source`` is a path or an open text stream.  Raw prices must be strictly
    positive and are log-transformed.  Malformed rows, non-increasing
    timestamps and gaps in the spacing raise :class:`DataError` with the
    offending line number.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return read_csv(fh)
    reader = csv.reader(source)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataError("empty input", 1) from None
    if len(header) != 2 or header[0] != "timestamp" or header[1] not in ("price", "log_price"):
        raise DataError(f"header must be 'timestamp,price' or 'timestamp,log_price', got {header}", 1)
    raw = header[1] == "price"
    times, values = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"expected 2 fields, got {len(row)}", line)
        t = _parse_time(row[0], line)
        try:
            v = float(row[1])
        except ValueError:
            raise DataError(f"unparseable value {row[1]!r}", line) from None
        if not math.isfinite(v):
            raise DataError(f"non-finite value {row[1]!r}", line)
        if raw:
            if v <= 0:
                raise DataError(f"price must be strictly positive, got {v}", line)
            v = math.log(v)
        if times:
            if t <= times[-1][0]:
                raise DataError("timestamps must be strictly increasing", line)
            if len(times) >= 2:
                step = times[1][0] - times[0][0]
                if abs((t - times[-1][0]) - step) > SPACING_RTOL * step:
                    raise DataError(
                        f"gap or irregular spacing: interval {t - times[-1][0]:g} vs step {step:g}", line
                    )
        times.append((t, line))
        values.append(v)
    if len(values) < 2:
        raise DataError("a price series needs at least 2 observations")
    t = np.array([x[0] for x in times])
    return PriceSeries(timestamps=t, log_prices=np.array(values), step=float(t[1] - t[0]))


def _fmt_time(t):
    return str(int(t)) if float(t).is_integer() and abs(t) < 2 ** 53 else repr(float(t))


def write_csv(series, dest=None):
    """Write ``timestamp,log_price`` rows; returns the text when ``dest`` is None."""
    buf = io.StringIO()
    buf.write("timestamp,log_price\n")
    for t, x in zip(series.timestamps, series.log_prices):
        buf.write(f"{_fmt_time(t)},{float(x):.17g}\n")
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return None
