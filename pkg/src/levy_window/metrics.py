"""Horizon-correct risk and performance metrics.

Every metric is propagated from the anchor horizon ``tau0`` with the stable
law ``R_tau = mu_tau + sigma * tau**(1/alpha) * Z`` and compared with a
Gaussian surrogate matched at ``tau0`` but propagated with ``sqrt(tau)``.
The difference (``bias``) is driven by the exponent gap
``(tau/tau0)**(1/alpha) - (tau/tau0)**(1/2)``.

Losses (VaR, ES, drawdowns) are reported as positive magnitudes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .exceptions import DomainError, EstimationError, MomentDivergenceError
from .stable import (
    _gauss_legendre,
    _neg_part_moment,
    _pdf,
    abs_p_moment,
    integrate,
    normal_abs_moment,
    normal_tail_mean,
    stable_cdf,
    stable_quantile,
    tail_mean,
    truncated_second_moment,
)


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``mu_tau`` and riskless benchmark ``r_tau`` as functions of horizon.

    By default ``mu_tau = params.mu * tau`` and ``r_tau = r * tau``.  A table
    ``(taus, values)`` replaces either with linear interpolation through
    ``(0, 0)``.
    """

    mu: float = None
    r: float = 0.0
    mu_table: tuple = None
    r_table: tuple = None

    def mu_tau(self, params, tau):
        if self.mu_table is not None:
            return _interp(self.mu_table, tau)
        rate = params.mu if self.mu is None else self.mu
        return rate * tau

    def r_tau(self, tau):
        if self.r_table is not None:
            return _interp(self.r_table, tau)
        return self.r * tau


def _interp(table, tau):
    taus, vals = (np.asarray(a, dtype=float) for a in table)
    return float(np.interp(tau, np.concatenate(([0.0], taus)), np.concatenate(([0.0], vals))))


@dataclass(frozen=True)
class AnchorConstants:
    tau0: float
    q: float
    Theta0_q: float
    Xi0_q: float
    sigma_G: float
    Theta_p: float = float("nan")
    Theta_Ap: float = float("nan")
    p: float = float("nan")


@dataclass(frozen=True)
class MetricValue:
    metric: str
    tau: float
    level: float
    levy: float
    gaussian: float
    bias: float
    matched_sigma_G: float
    matching: str
    warnings: tuple = ()
    raw: dict = field(default_factory=dict)

    def row(self):
        return {
            "tau": self.tau,
            "level_or_order": self.level,
            "levy": self.levy,
            "gaussian": self.gaussian,
            "bias": self.bias,
            "matched_sigma_G": self.matched_sigma_G,
            "matching": self.matching,
            "warnings": list(self.warnings),
            **self.raw,
        }


@dataclass(frozen=True)
class KellyResult:
    f_star: float
    f_max: float
    foc_residual: float
    binding: bool
    mode: str = "quadrature"


# --------------------------------------------------------------------------
# helpers

def exponent_gap(alpha, tau, tau0):
    """``(tau/tau0)**(1/alpha) - (tau/tau0)**(1/2)``."""
    r = tau / tau0
    return r ** (1.0 / alpha) - math.sqrt(r)


def inverse_exponent_gap(alpha, tau, tau0):
    """``(tau/tau0)**(-1/alpha) - (tau/tau0)**(-1/2)``."""
    r = tau / tau0
    return r ** (-1.0 / alpha) - 1.0 / math.sqrt(r)


def _check_tau(tau, tau0):
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"horizon must be positive, got {tau!r}")
    if not (math.isfinite(tau0) and tau0 > 0):
        raise DomainError(f"anchor horizon must be positive, got {tau0!r}")


def _check_level(q, upper=1.0, closed=False):
    ok = 0.0 < q <= upper if closed else 0.0 < q < upper
    if not ok:
        raise DomainError(f"level must lie in (0, {upper:g}{']' if closed else ')'}, got {q!r}")


def _window_warnings(tau, window):
    if window is None:
        return ()
    lo, hi = window
    if tau < lo:
        return (f"horizon {tau:g} below the fitted window [{lo:g}, {hi:g}]; extrapolated",)
    if tau > hi:
        return (f"horizon {tau:g} above the fitted window [{lo:g}, {hi:g}]; extrapolated",)
    return ()


def _stable_scale(params, tau, window=None, beyond_ir="levy"):
    """``sigma * tau**(1/alpha)``, or ``sqrt(tau)`` continuation past the window top."""
    if beyond_ir == "sqrt" and window is not None and tau > window[1]:
        top = window[1]
        return params.sigma * top ** (1.0 / params.alpha) * math.sqrt(tau / top)
    if beyond_ir not in ("levy", "sqrt"):
        raise DomainError(f"beyond_ir must be 'levy' or 'sqrt', got {beyond_ir!r}")
    return params.sigma * tau ** (1.0 / params.alpha)


def _drift(drift):
    return DriftSpec() if drift is None else drift


# --------------------------------------------------------------------------
# anchor constants

def anchor_constants(params, tau0, q, p=None, active_params=None):
    """tau0-matched constants for VaR, ES and the p-norm ratios."""
    _check_tau(tau0, tau0)
    _check_level(q, 0.5, closed=True)
    s0 = params.sigma * tau0 ** (1.0 / params.alpha)
    theta0 = s0 * float(stable_quantile(params, q))
    xi0 = s0 * tail_mean(params, q)
    sigma_g = theta0 / (math.sqrt(tau0) * float(special.ndtri(q)))
    theta_p = theta_ap = float("nan")
    if p is not None:
        theta_p = s0 * _abs_moment(params, p) ** (1.0 / p)
        if active_params is not None:
            sa = active_params.sigma * tau0 ** (1.0 / active_params.alpha)
            theta_ap = sa * _abs_moment(active_params, p) ** (1.0 / p)
    return AnchorConstants(tau0=float(tau0), q=float(q), Theta0_q=theta0, Xi0_q=xi0,
                           sigma_G=sigma_g, Theta_p=theta_p, Theta_Ap=theta_ap,
                           p=float("nan") if p is None else float(p))


def _abs_moment(params, p):
    return abs_p_moment(params, p)


# --------------------------------------------------------------------------
# VaR and ES

def var(params, drift, tau, q, *, tau0=1.0, window=None, beyond_ir="levy"):
    """Value-at-Risk ``-mu_tau - sigma*tau**(1/alpha)*Q_Z(q)`` and its quantile-matched surrogate."""
    _check_tau(tau, tau0)
    _check_level(q, 0.5, closed=True)
    d = _drift(drift)
    mu_t = d.mu_tau(params, tau)
    qz = float(stable_quantile(params, q))
    scale = _stable_scale(params, tau, window, beyond_ir)
    levy = -mu_t - scale * qz
    zq = float(special.ndtri(q))
    if zq == 0.0:
        # median level: the surrogate scale is not identified and its quantile term is 0
        sigma_g, gauss = float("nan"), -mu_t
    else:
        sigma_g = params.sigma * tau0 ** (1.0 / params.alpha) * qz / (math.sqrt(tau0) * zq)
        gauss = -mu_t - sigma_g * math.sqrt(tau) * zq
    return MetricValue("var", float(tau), float(q), levy, gauss, levy - gauss, sigma_g,
                       "quantile", _window_warnings(tau, window),
                       {"levy_quantile": mu_t + scale * qz, "gaussian_quantile": -gauss})


def var_bias_closed_form(params, tau, q, tau0=1.0):
    """``-Theta0(q) * gap``: positive above the anchor for q < 1/2."""
    theta0 = params.sigma * tau0 ** (1.0 / params.alpha) * float(stable_quantile(params, q))
    return -theta0 * exponent_gap(params.alpha, tau, tau0)


def es(params, drift, tau, q, *, tau0=1.0, window=None, beyond_ir="levy", mz=None):
    """Expected shortfall ``-mu_tau - sigma*tau**(1/alpha)*m_Z(q)`` and its ES-matched surrogate."""
    _check_tau(tau, tau0)
    _check_level(q, 0.5, closed=True)
    d = _drift(drift)
    mu_t = d.mu_tau(params, tau)
    mz = tail_mean(params, q) if mz is None else mz
    mn = float(normal_tail_mean(q))
    scale = _stable_scale(params, tau, window, beyond_ir)
    levy = -mu_t - scale * mz
    sigma_g = params.sigma * tau0 ** (1.0 / params.alpha) * abs(mz) / (math.sqrt(tau0) * mn)
    gauss = -mu_t + sigma_g * math.sqrt(tau) * mn
    return MetricValue("es", float(tau), float(q), levy, gauss, levy - gauss, sigma_g,
                       "tail_mean", _window_warnings(tau, window), {"levy_tail_mean": mz})


def es_bias_closed_form(params, tau, q, tau0=1.0, mz=None):
    """``-Xi0(q) * gap``."""
    mz = tail_mean(params, q) if mz is None else mz
    xi0 = params.sigma * tau0 ** (1.0 / params.alpha) * mz
    return -xi0 * exponent_gap(params.alpha, tau, tau0)


# --------------------------------------------------------------------------
# p-Sharpe and p-information ratio

def _p_ratio(name, params, numerator, tau, p, tau0, window, beyond_ir, c_zp):
    _check_tau(tau, tau0)
    if not p > 1.0:
        raise DomainError(f"order p must exceed 1, got {p!r}")
    if p >= params.alpha:
        raise MomentDivergenceError(f"p = {p} is not below alpha = {params.alpha}")
    c_zp = _abs_moment(params, p) if c_zp is None else c_zp
    c_np = normal_abs_moment(p)
    scale = _stable_scale(params, tau, window, beyond_ir)
    theta_p = params.sigma * tau0 ** (1.0 / params.alpha) * c_zp ** (1.0 / p)
    sigma_g = theta_p / (math.sqrt(tau0) * c_np ** (1.0 / p))
    levy = numerator / (scale * c_zp ** (1.0 / p))
    gauss = numerator / (sigma_g * math.sqrt(tau) * c_np ** (1.0 / p))
    return MetricValue(name, float(tau), float(p), levy, gauss, levy - gauss, sigma_g,
                       "p_norm", _window_warnings(tau, window), {"Theta_p": theta_p})


def sharpe_p(params, drift, tau, p, *, tau0=1.0, window=None, beyond_ir="levy", c_zp=None):
    """``(mu_tau - r_tau) / ||R_tau - E R_tau||_p`` with the p-norm-matched surrogate."""
    d = _drift(drift)
    num = d.mu_tau(params, tau) - d.r_tau(tau)
    return _p_ratio("sharpe_p", params, num, tau, p, tau0, window, beyond_ir, c_zp)


def info_ratio_p(active_params, active_drift, tau, p, *, tau0=1.0, window=None, beyond_ir="levy",
                 c_zp=None):
    """p-information ratio of an active return fitted as its own stable series."""
    d = _drift(active_drift)
    num = d.mu_tau(active_params, tau)
    return _p_ratio("info_ratio_p", active_params, num, tau, p, tau0, window, beyond_ir, c_zp)


def ratio_bias_closed_form(params, numerator, tau, p, tau0=1.0, c_zp=None):
    """``numerator / Theta_p * [(tau/tau0)**(-1/alpha) - (tau/tau0)**(-1/2)]``."""
    c_zp = _abs_moment(params, p) if c_zp is None else c_zp
    theta_p = params.sigma * tau0 ** (1.0 / params.alpha) * c_zp ** (1.0 / p)
    return numerator / theta_p * inverse_exponent_gap(params.alpha, tau, tau0)


# --------------------------------------------------------------------------
# Kelly

def _excess_location_scale(params, drift, tau):
    d = _drift(drift)
    return d.mu_tau(params, tau) - d.r_tau(tau), params.sigma * tau ** (1.0 / params.alpha)


@dataclass(frozen=True)
class _TrimmedLaw:
    """Quadrature rule for X = loc + scale*Z with Z conditioned on |Z| <= c."""

    x: np.ndarray
    w: np.ndarray


def _trimmed_law(params, loc, scale, c, panels=48):
    # panels graded toward both ends, where 1 + f X can approach zero
    t = np.linspace(0.0, 1.0, panels + 1)
    s = 0.5 - 0.5 * np.cos(np.pi * t)
    edges = -c + 2.0 * c * s
    gx, gw = _gauss_legendre(16)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    z = ((a + b)[:, None] * 0.5 + half[:, None] * gx).ravel()
    w = (half[:, None] * gw).ravel() * _pdf(params.alpha, params.beta, z)
    w /= w.sum()
    return _TrimmedLaw(x=loc + scale * z, w=w)


def _weighted_quantile(x, w, q):
    order = np.argsort(x, kind="stable")
    xs, cw = x[order], np.cumsum(w[order])
    idx = int(np.searchsorted(cw, q * cw[-1] - 1e-15, side="left"))
    return float(xs[min(idx, len(xs) - 1)])


def _solve_foc(x, w, f_max):
    """Root of the decreasing map h(f) = sum w x / (1 + f x) on [0, f_max]."""

    def h(f):
        den = 1.0 + f * x
        if np.any(den <= 0):
            return -math.inf
        return float(np.sum(w * x / den))

    h0 = h(0.0)
    # a zero edge computed by quadrature lands at roundoff level, not exactly 0
    if h0 <= 64 * np.finfo(float).eps * float(np.sum(w * np.abs(x))):
        return 0.0, h0, False
    h_top = h(f_max)
    if h_top >= 0:
        return f_max, h_top, True
    lo, hi = 0.0, f_max
    for f in np.linspace(0.0, f_max, 65)[1:]:
        if h(f) < 0:
            hi = f
            break
        lo = f
    # h is -inf where 1 + f x vanishes; bisect on sign until the bracket is finite
    for _ in range(200):
        if math.isfinite(h(hi)):
            break
        mid = 0.5 * (lo + hi)
        if h(mid) >= 0:
            lo = mid
        else:
            hi = mid
    f_star = optimize.brentq(h, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return f_star, h(f_star), False


def _check_concave(x, w, f_max):
    fs = np.linspace(0.0, f_max, 9)[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.array([np.sum(w * np.log1p(f * x)) for f in fs])
    d2 = np.diff(g, 2)
    if np.any(d2[np.isfinite(d2)] > 1e-12 * (1.0 + np.max(np.abs(g[np.isfinite(g)])))):
        raise EstimationError("log-growth is not concave on the feasible set; check the inputs")


def kelly(params, drift, tau, q, *, sample=None, weights=None, f_cap=1.0, f_max=None):
    """VaR-constrained log-optimal fraction.

    Quadrature mode (no ``sample``) maximizes ``E log(1 + f X)`` for the
    excess return ``X = mu_tau - r_tau + sigma*tau**(1/alpha)*Z`` with ``Z``
    restricted to ``|Z| <= |Q_Z(q)|``, the event on which the bound
    ``f <= 1/|VaR_tau(q)|`` rules out ruin.  Sample mode averages over the
    given excess returns (optionally weighted), keeping points at or above
    the VaR level.  A non-positive VaR leaves ``[0, f_cap]`` as feasible set.
    """
    _check_level(q, 0.5)
    if tau <= 0:
        raise DomainError(f"horizon must be positive, got {tau!r}")
    if sample is None:
        loc, scale = _excess_location_scale(params, drift, tau)
        qz = float(stable_quantile(params, q))
        c = abs(qz)
        law = _trimmed_law(params, loc, scale, c)
        x, w = law.x, law.w
        var_level = -(loc + scale * qz)
        mode = "quadrature"
    else:
        x = np.asarray(sample, dtype=float).ravel()
        if x.size == 0:
            raise DomainError("empty sample")
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape or np.any(w < 0) or not w.sum() > 0:
            raise DomainError("weights must be non-negative, match the sample and not all vanish")
        w = w / w.sum()
        var_level = -_weighted_quantile(x, w, q)
        mode = "sample"
    if f_max is None:
        f_max = 1.0 / var_level if var_level > 0 else f_cap
    if not f_max > 0:
        raise DomainError(f"f_max must be positive, got {f_max!r}")
    keep = x >= -1.0 / f_max
    x, w = x[keep], w[keep] / w[keep].sum()
    _check_concave(x, w, f_max)
    f_star, resid, binding = _solve_foc(x, w, f_max)
    return KellyResult(f_star=float(f_star), f_max=float(f_max), foc_residual=float(resid),
                       binding=bool(binding), mode=mode)


def kelly_approx(params, drift, tau, q, *, k_q=None):
    """Leading-order fraction ``(mu_tau - r_tau) / (K_q * sigma**2 * tau**(2/alpha))``."""
    _check_level(q, 0.5)
    loc, scale = _excess_location_scale(params, drift, tau)
    k_q = truncated_second_moment(params, q) if k_q is None else k_q
    return loc / (k_q * scale ** 2)


def log_growth(params, drift, tau, f, *, q=None):
    """``E log(1 + f X)`` for ``f >= 0``.

    ``q=None`` uses the untrimmed law, whose support is unbounded below, so any
    ``f > 0`` puts positive probability on ``1 + f X <= 0`` and the value is
    ``-inf``.  With ``q`` set the law is trimmed as in :func:`kelly`.
    """
    if f < 0:
        raise DomainError(f"fraction must be non-negative, got {f!r}")
    if f == 0:
        return 0.0
    loc, scale = _excess_location_scale(params, drift, tau)
    if q is None:
        ruin = float(stable_cdf(params, (-1.0 / f - loc) / scale))
        return -math.inf if ruin > 0 else float("nan")
    c = abs(float(stable_quantile(params, q)))
    law = _trimmed_law(params, loc, scale, c)
    den = 1.0 + f * law.x
    if np.any(den <= 0):
        return -math.inf
    return float(np.sum(law.w * np.log(den)))


# --------------------------------------------------------------------------
# drawdown

def _normal_neg_part_moment(p, shift):
    """``E(-N - shift)_+**p`` for standard normal ``N``."""
    if shift == 0.0:
        return 0.5 * normal_abs_moment(p)
    upper = -shift
    lo = min(upper, 0.0) - 40.0
    val, _ = integrate(lambda z: (upper - z) ** p * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
                       lo, upper)
    return val


def drawdown_p(params, drift, tau, p, *, tau0=1.0, window=None, beyond_ir="levy"):
    """``||(-R_tau)_+||_p`` with the drift term kept exactly.

    The surrogate is matched to the zero-drift p-norm at ``tau0`` and carries
    the same drift.
    """
    _check_tau(tau, tau0)
    if not (0.0 < p < params.alpha):
        if p >= params.alpha:
            raise MomentDivergenceError(f"p = {p} is not below alpha = {params.alpha}")
        raise DomainError(f"order p must be positive, got {p!r}")
    d = _drift(drift)
    mu_t = d.mu_tau(params, tau)
    scale = _stable_scale(params, tau, window, beyond_ir)
    d_n = (0.5 * normal_abs_moment(p)) ** (1.0 / p)
    if params.alpha == 2.0:
        # Z ~ N(0, 2): use the normal path so the surrogate comparison is exact
        s2 = math.sqrt(2.0) * scale
        levy = s2 * _normal_neg_part_moment(p, mu_t / s2) ** (1.0 / p)
        d_z = math.sqrt(2.0) * d_n
    else:
        levy = scale * _neg_part_moment(params.alpha, params.beta, p, mu_t / scale) ** (1.0 / p)
        d_z = _neg_part_moment(params.alpha, params.beta, p, 0.0) ** (1.0 / p)
    sigma_g = params.sigma * tau0 ** (1.0 / params.alpha) * d_z / (math.sqrt(tau0) * d_n)
    sg = sigma_g * math.sqrt(tau)
    gauss = sg * _normal_neg_part_moment(p, mu_t / sg) ** (1.0 / p)
    return MetricValue("drawdown_p", float(tau), float(p), levy, gauss, levy - gauss, sigma_g,
                       "neg_part_p_norm", _window_warnings(tau, window), {"d_Zp": d_z})


def drawdown_quantile(params, drift, tau, q, *, tau0=1.0, window=None, beyond_ir="levy"):
    """``(-mu_tau - sigma*tau**(1/alpha)*Q_Z(1-q))_+``; ``q`` is the non-breach level."""
    _check_tau(tau, tau0)
    _check_level(q)
    d = _drift(drift)
    mu_t = d.mu_tau(params, tau)
    lvl = 1.0 - q
    qz = float(stable_quantile(params, lvl))
    zq = float(special.ndtri(lvl))
    scale = _stable_scale(params, tau, window, beyond_ir)
    raw_levy = -mu_t - scale * qz
    sigma_g = params.sigma * tau0 ** (1.0 / params.alpha) * qz / (math.sqrt(tau0) * zq) \
        if zq != 0 else params.sigma * tau0 ** (1.0 / params.alpha) / math.sqrt(tau0)
    raw_gauss = -mu_t - sigma_g * math.sqrt(tau) * zq
    levy, gauss = max(raw_levy, 0.0), max(raw_gauss, 0.0)
    warn = _window_warnings(tau, window)
    if raw_levy <= 0:
        warn = warn + ("levy drawdown quantile clamped at 0",)
    return MetricValue("drawdown_quantile", float(tau), float(q), levy, gauss, levy - gauss,
                       sigma_g, "quantile", warn,
                       {"levy_unclamped": raw_levy, "gaussian_unclamped": raw_gauss})


# --------------------------------------------------------------------------
# report

def risk_report(params, drift, taus, *, tau0=1.0, levels=(0.01, 0.05), orders=(1.1,),
                window=None, beyond_ir="levy", active_params=None, active_drift=None,
                dd_levels=(0.95,), kelly_level=0.05):
    """All metrics on a horizon grid as JSON-ready rows.

    Constants that depend only on the driver (quantiles, tail means,
    p-moments) are computed once per level or order.
    """
    d = _drift(drift)
    out = {"var": [], "es": [], "sharpe_p": [], "info_ratio_p": [], "drawdown_p": [],
           "drawdown_quantile": [], "kelly": []}
    mz = {q: tail_mean(params, q) for q in levels}
    czp = {}
    for p in orders:
        if p < params.alpha and p > 1.0:
            czp[p] = _abs_moment(params, p)
    for tau in taus:
        tau = float(tau)
        for q in levels:
            out["var"].append(var(params, d, tau, q, tau0=tau0, window=window, beyond_ir=beyond_ir).row())
            out["es"].append(es(params, d, tau, q, tau0=tau0, window=window, beyond_ir=beyond_ir,
                                mz=mz[q]).row())
        for p in orders:
            if p in czp:
                out["sharpe_p"].append(sharpe_p(params, d, tau, p, tau0=tau0, window=window,
                                                beyond_ir=beyond_ir, c_zp=czp[p]).row())
            if 0 < p < params.alpha:
                out["drawdown_p"].append(drawdown_p(params, d, tau, p, tau0=tau0, window=window,
                                                    beyond_ir=beyond_ir).row())
            if active_params is not None and 1.0 < p < active_params.alpha:
                out["info_ratio_p"].append(info_ratio_p(active_params, active_drift, tau, p, tau0=tau0,
                                                        window=window, beyond_ir=beyond_ir).row())
        for q in dd_levels:
            out["drawdown_quantile"].append(drawdown_quantile(params, d, tau, q, tau0=tau0, window=window,
                                                              beyond_ir=beyond_ir).row())
        if kelly_level is not None:
            res = kelly(params, d, tau, kelly_level)
            out["kelly"].append({
                "tau": tau, "level_or_order": kelly_level, "f_star": res.f_star, "f_max": res.f_max,
                "foc_residual": res.foc_residual, "binding": res.binding,
                "f_approx": kelly_approx(params, d, tau, kelly_level),
            })
    return out
