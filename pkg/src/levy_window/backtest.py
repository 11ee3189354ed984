"""Exception-rate backtests of horizon-propagated VaR and drawdown thresholds.

Thresholds are fixed from the training part of the series: the empirical
anchor quantile of ``tau0``-step returns is carried to other horizons with
``(tau/tau0)**(1/alpha)`` (stable mode) or ``(tau/tau0)**(1/2)`` (Gaussian
mode), around the fitted linear drift.  Exceptions are counted over the
overlapping returns of the test part.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DataError, DomainError, FitInfeasibleError
from .metrics import DriftSpec, kelly
from .window import fit_stable_params

MODES = ("levy", "gaussian")


@dataclass(frozen=True)
class BacktestResult:
    tau: float
    q: float
    n_obs: int
    n_exceptions: int
    exception_rate: float
    binomial_se: float
    z_score: float
    mode: str
    metric: str = "var"
    threshold: float = float("nan")
    nominal_rate: float = float("nan")
    block_se: float = float("nan")
    degenerate_threshold: bool = False


def _split(x, split, train_frac):
    if split == "in_sample":
        return x, x
    if split != "train_test":
        raise DomainError(f"split must be 'train_test' or 'in_sample', got {split!r}")
    if not 0.0 < train_frac < 1.0:
        raise DomainError(f"train fraction must lie in (0, 1), got {train_frac!r}")
    cut = int(round(train_frac * (len(x) - 1)))
    return x[: cut + 1], x[cut:]


def _anchor_quantile(train, tau0, level):
    r = train[tau0:] - train[:-tau0]
    if len(r) < 2:
        raise DataError(f"training sample too short for anchor horizon {tau0}")
    return float(np.quantile(r, level)), float(np.mean(np.diff(train)))


def propagate_quantile(q0, mu, tau, tau0, exponent):
    """Carry an anchor return quantile to horizon ``tau`` around the linear drift."""
    return mu * tau + (tau / tau0) ** exponent * (q0 - mu * tau0)


def _block_se(indicator, block_len, replicates, seed):
    n = len(indicator)
    block_len = max(1, min(int(block_len), n))
    rng = np.random.default_rng(seed)
    n_blocks = -(-n // block_len)
    csum = np.concatenate(([0], np.cumsum(indicator)))
    means = np.empty(replicates)
    for b in range(replicates):
        starts = rng.integers(0, n - block_len + 1, size=n_blocks)
        total = np.sum(csum[starts + block_len] - csum[starts])
        means[b] = total / (n_blocks * block_len)
    return float(np.std(means, ddof=1))


def _check_horizons(horizons, tau0):
    h = np.asarray(horizons, dtype=float)
    if h.ndim != 1 or h.size == 0 or np.any(h < 1) or np.any(np.abs(h - np.round(h)) > 1e-9):
        raise DomainError("horizons must be positive integers in base steps")
    if tau0 < 1 or abs(tau0 - round(tau0)) > 1e-9:
        raise DomainError(f"anchor horizon must be a positive integer, got {tau0!r}")
    return np.round(h).astype(np.int64), int(round(tau0))


def _window_check(window, tau0):
    if window is None:
        return
    lo, hi = (window.tau_uv_hat, window.tau_ir_hat) if hasattr(window, "tau_uv_hat") else window
    if not lo <= tau0 <= hi:
        raise DomainError(f"anchor horizon {tau0} outside the fitted window [{lo:g}, {hi:g}]")


def _run(series, alpha, tau0, nominal, horizons, modes, split, train_frac, min_obs, block_se,
         replicates, seed, metric, quantile_level, event):
    horizons, tau0 = _check_horizons(horizons, tau0)
    train, test = _split(np.asarray(series.log_prices, dtype=float), split, train_frac)
    q0, mu = _anchor_quantile(train, tau0, quantile_level)
    exponents = {"levy": 1.0 / alpha, "gaussian": 0.5}
    out = []
    for mode in modes:
        if mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
        for h in horizons:
            r = test[h:] - test[:-h]
            n = len(r)
            if n < min_obs:
                raise DataError(f"horizon {h} has {n} test returns, fewer than {min_obs}")
            qt = propagate_quantile(q0, mu, float(h), float(tau0), exponents[mode])
            hits, threshold, degenerate = event(r, qt)
            k = int(np.count_nonzero(hits))
            rate = k / n
            se = math.sqrt(nominal * (1.0 - nominal) / n)
            bse = _block_se(hits.astype(float), max(h, 1), replicates, seed) if block_se else float("nan")
            out.append(BacktestResult(
                tau=float(h), q=float(quantile_level if metric == "var" else 1.0 - quantile_level),
                n_obs=n, n_exceptions=k, exception_rate=rate, binomial_se=se,
                z_score=(rate - nominal) / se, mode=mode, metric=metric, threshold=threshold,
                nominal_rate=nominal, block_se=bse, degenerate_threshold=degenerate,
            ))
    return out


def backtest_var(series, alpha, tau0, q, horizons, *, modes=MODES, window=None, split="train_test",
                 train_frac=0.5, min_obs=100, block_se=False, replicates=200, seed=0):
    """Count ``R_tau <= -VaR_tau(q)`` per horizon for each propagation mode.

    ``binomial_se`` treats the overlapping exceedances as independent and is a
    lower bound; ``block_se=True`` adds a moving-block bootstrap SE with
    blocks of length ``tau``.
    """
    if not 0.0 < q < 0.5:
        raise DomainError(f"tail level must lie in (0, 1/2), got {q!r}")
    _window_check(window, tau0)

    def event(r, qt):
        return r <= qt, -qt, False

    return _run(series, alpha, tau0, q, horizons, modes, split, train_frac, min_obs, block_se,
                replicates, seed, "var", q, event)


def backtest_drawdown(series, alpha, tau0, q, horizons, *, modes=MODES, window=None,
                      split="train_test", train_frac=0.5, min_obs=100, block_se=False,
                      replicates=200, seed=0):
    """Count ``D_tau = (-R_tau)_+ > DD_tau^(q)``; ``q`` is the non-breach level.

    A threshold clamped at zero counts ``D_tau > 0`` and sets ``degenerate_threshold``.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {q!r}")
    _window_check(window, tau0)

    def event(r, qt):
        threshold = max(-qt, 0.0)
        d = np.maximum(-r, 0.0)
        return d > threshold, threshold, bool(-qt <= 0.0)

    return _run(series, alpha, tau0, 1.0 - q, horizons, modes, split, train_frac, min_obs, block_se,
                replicates, seed, "drawdown", 1.0 - q, event)


def kelly_scaling_check(source, q, horizons, *, alpha=None, tau0=1, drift=None):
    """OLS slope of ``log f*`` on ``log tau`` from quadrature Kelly fractions.

    ``source`` is either a StableParams or a PriceSeries; a series needs
    ``alpha`` and is reduced to parameters at ``tau0``.
    """
    taus = np.asarray(horizons, dtype=float)
    if taus.size < 3:
        raise FitInfeasibleError(f"need at least 3 horizons, got {taus.size}")
    if hasattr(source, "log_prices"):
        if alpha is None:
            raise DomainError("alpha is required when a series is given")
        params = fit_stable_params(source, alpha, tau0)
    else:
        params = source
    drift = drift or DriftSpec()
    fs = np.array([kelly(params, drift, t, q).f_star for t in taus])
    if np.any(fs <= 0):
        raise FitInfeasibleError("non-positive Kelly fraction; the drift edge must be positive")
    slope = float(np.polyfit(np.log(taus), np.log(fs), 1)[0])
    return {"slope": slope, "expected": 1.0 - 2.0 / params.alpha, "taus": taus.tolist(),
            "f_star": fs.tolist()}


def results_to_rows(results):
    return [asdict(r) for r in results]


def results_to_csv(results):
    rows = results_to_rows(results)
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
