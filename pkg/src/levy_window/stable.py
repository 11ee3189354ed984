"""Standardized alpha-stable driver.

The driver ``Z`` has characteristic function

    phi(u) = exp(-|u|**alpha * (1 - 1j * beta * tan(pi * alpha / 2) * sign(u)))

so ``E[Z] = 0`` for ``alpha > 1`` and the ``alpha = 2`` member is ``N(0, 2)``.

Density and distribution function are obtained by direct quadrature of the
inversion integrals on ``|z| <= TAIL_CUTOFF``; beyond that the asymptotic
power-law expansion of the tails is used.  Moments that need an integral
over ``z`` use an adaptive Gauss-Kronrod rule on the core plus the same
expansion integrated term by term in the tails.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import _kernels
from .exceptions import DomainError, MomentDivergenceError, QuadratureError

TAIL_CUTOFF = 50.0
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-8

_GL_ORDER = 16
_GRADING_RATIO = 0.15
_GRADING_LEVELS = 14
_MAX_SERIES_TERMS = 40


@dataclass(frozen=True)
class StableParams:
    """Driver parameters plus the location/scale map ``R_tau = mu*tau + sigma*tau**(1/alpha)*Z``.

    ``alpha = 2`` is admitted as the Gaussian boundary; ``beta`` is then ignored.
    """

    alpha: float
    beta: float = 0.0
    sigma: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        _check_driver(self.alpha, self.beta)
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")

    def scale_at(self, tau):
        """Scale ``sigma * tau**(1/alpha)`` of the return over horizon ``tau``."""
        return self.sigma * np.asarray(tau, dtype=float) ** (1.0 / self.alpha)


@dataclass(frozen=True)
class TailConstants:
    q: float
    QZ_q: float
    mZ_q: float
    c_q: float
    K_q: float


@dataclass(frozen=True)
class MomentConstants:
    p: float
    c_Zp: float
    d_Zp: float
    c_Np: float


def _check_driver(alpha, beta):
    if not (isinstance(alpha, (int, float, np.floating)) and math.isfinite(alpha)):
        raise DomainError(f"alpha must be a finite number, got {alpha!r}")
    if not (1.0 < alpha <= 2.0):
        raise DomainError(f"alpha must lie in (1, 2], got {alpha!r}")
    if not (math.isfinite(beta) and -1.0 <= beta <= 1.0):
        raise DomainError(f"beta must lie in [-1, 1], got {beta!r}")


def _skew(alpha, beta):
    """Coefficient of ``i*sign(u)*|u|**alpha`` in the log characteristic function."""
    if alpha == 2.0 or alpha == 1.0 or beta == 0.0:
        return 0.0
    return beta * math.tan(math.pi * alpha / 2.0)


# --------------------------------------------------------------------------
# inversion quadrature in u

@lru_cache(maxsize=None)
def _gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _panel_rule(edges):
    x, w = _gauss_legendre(_GL_ORDER)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u = (mid[:, None] + half[:, None] * x).ravel()
    wt = (half[:, None] * w).ravel()
    return u, wt


@lru_cache(maxsize=512)
def _inversion_rule(alpha, beta, level, floor):
    """Nodes, pdf/cdf amplitudes and phases for |z| <= 4 * 2**level.

    The integrand is cut where exp(-u**alpha) drops below ``floor``.  Panels
    are geometrically graded toward u = 0 (u**alpha is not smooth there) and
    at most one oscillation period wide elsewhere.
    """
    upper = (-math.log(floor)) ** (1.0 / alpha)
    if alpha == 1.0:
        drift = 2.0 * abs(beta) / math.pi * (abs(math.log(upper)) + 1.0)
    else:
        drift = abs(_skew(alpha, beta)) * alpha * upper ** (alpha - 1.0)
    omega = 4.0 * 2.0 ** level + drift
    h = min(0.5, 2.0 * math.pi / omega)
    first = min(h, upper)
    graded = first * _GRADING_RATIO ** np.arange(_GRADING_LEVELS, 0, -1)
    n_uniform = max(1, int(math.ceil((upper - first) / h)))
    uniform = np.linspace(first, upper, n_uniform + 1)
    edges = np.concatenate(([0.0], graded, uniform))
    u, w = _panel_rule(edges)

    if alpha == 1.0:
        phase = 2.0 * beta / math.pi * u * np.log(u)
    else:
        phase = -_skew(alpha, beta) * u ** alpha
    decay = np.exp(-(u ** alpha))
    amp_pdf = w * decay / math.pi
    amp_cdf = amp_pdf / u
    for arr in (u, amp_pdf, amp_cdf, phase):
        arr.setflags(write=False)
    return u, amp_pdf, amp_cdf, phase


def _levels(z):
    lev = np.ceil(np.log2(np.maximum(np.abs(z), 4.0) / 4.0))
    return np.maximum(lev, 0).astype(int)


def _core(alpha, beta, z, kind, floor):
    out = np.empty_like(z)
    levels = _levels(z)
    for lev in np.unique(levels):
        sel = levels == lev
        u, amp_pdf, amp_cdf, phase = _inversion_rule(alpha, beta, int(lev), floor)
        if kind == "pdf":
            out[sel] = _kernels.cos_sum(u, amp_pdf, phase, z[sel])
        else:
            out[sel] = 0.5 + _kernels.sin_sum(u, amp_cdf, phase, z[sel])
    return out


# --------------------------------------------------------------------------
# asymptotic tails

@lru_cache(maxsize=512)
def _tail_coefficients(alpha, beta):
    """Coefficients a_k of f(x) ~ sum_k a_k x**(-k*alpha - 1) as x -> +inf."""
    k = np.arange(1, _MAX_SERIES_TERMS + 1, dtype=float)
    if alpha == 2.0:
        coef = np.zeros_like(k)
        bound_log = np.zeros_like(k)
    else:
        if alpha == 1.0:
            if beta != 0.0:
                raise DomainError("the alpha = 1 tail expansion is only available for beta = 0")
            psi = 0.0
        else:
            psi = math.atan(_skew(alpha, beta))
        log_lam = -math.log(math.cos(psi))
        bound_log = k * log_lam + special.gammaln(k * alpha + 1.0) - special.gammaln(k + 1.0)
        sign = np.where(k % 2 == 1, 1.0, -1.0)
        coef = sign * np.exp(bound_log) * np.sin(k * (math.pi * alpha / 2.0 + psi)) / math.pi
    coef.setflags(write=False)
    bound_log.setflags(write=False)
    return coef, bound_log


def _series_terms(alpha, beta, x_min):
    """Number of expansion terms to use for arguments >= x_min (optimal truncation)."""
    _, bound_log = _tail_coefficients(alpha, beta)
    k = np.arange(1, _MAX_SERIES_TERMS + 1)
    mag = bound_log - k * alpha * math.log(x_min)
    return int(np.argmin(mag)) + 1


def _tail_side(alpha, beta, side):
    return (alpha, beta) if side > 0 else (alpha, -beta)


def _tail_pdf(alpha, beta, x, side):
    """Density at side * x for x >= TAIL_CUTOFF."""
    a, b = _tail_side(alpha, beta, side)
    coef, _ = _tail_coefficients(a, b)
    n = _series_terms(a, b, float(np.min(x)))
    k = np.arange(1, n + 1)
    return (coef[:n] * x[:, None] ** (-(k * alpha) - 1.0)).sum(axis=1)


def _tail_power_moment(alpha, beta, x0, s, side):
    """Integral of t**s * f(side * t) over t in [x0, inf), x0 >= TAIL_CUTOFF, s < alpha."""
    a, b = _tail_side(alpha, beta, side)
    coef, _ = _tail_coefficients(a, b)
    n = _series_terms(a, b, x0)
    k = np.arange(1, n + 1)
    return float(np.sum(coef[:n] * x0 ** (s - k * alpha) / (k * alpha - s)))


def _tail_sf(alpha, beta, x, side):
    a, b = _tail_side(alpha, beta, side)
    coef, _ = _tail_coefficients(a, b)
    n = _series_terms(a, b, float(np.min(x)))
    k = np.arange(1, n + 1)
    return (coef[:n] * x[:, None] ** (-(k * alpha)) / (k * alpha)).sum(axis=1)


# --------------------------------------------------------------------------
# density and distribution function on arbitrary arrays

def _floor(abs_tol):
    return min(1e-16, abs_tol * 1e-6)


def _pdf(alpha, beta, z, abs_tol=DEFAULT_ABS_TOL):
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    out = np.empty_like(flat)
    core = np.abs(flat) <= TAIL_CUTOFF
    if core.any():
        out[core] = _core(alpha, beta, flat[core], "pdf", _floor(abs_tol))
    for side in (1, -1):
        sel = (side * flat) > TAIL_CUTOFF
        if sel.any():
            out[sel] = _tail_pdf(alpha, beta, np.abs(flat[sel]), side)
    return np.maximum(out, 0.0).reshape(z.shape)


def _cdf(alpha, beta, z, abs_tol=DEFAULT_ABS_TOL):
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    out = np.empty_like(flat)
    core = np.abs(flat) <= TAIL_CUTOFF
    if core.any():
        out[core] = _core(alpha, beta, flat[core], "cdf", _floor(abs_tol))
    right = flat > TAIL_CUTOFF
    if right.any():
        out[right] = 1.0 - _tail_sf(alpha, beta, flat[right], 1)
    left = flat < -TAIL_CUTOFF
    if left.any():
        out[left] = _tail_sf(alpha, beta, -flat[left], -1)
    return np.clip(out, 0.0, 1.0).reshape(z.shape)


def _quantile(alpha, beta, q, tol=1e-13, max_iter=200):
    """Vectorized bracketing + safeguarded Newton inversion of the CDF."""
    q = np.asarray(q, dtype=float)
    flat = q.ravel().copy()
    gauss = math.sqrt(2.0) * special.ndtri(flat)
    cauchy = np.tan(math.pi * (flat - 0.5))
    lo = np.minimum(gauss, cauchy) - 1.0
    hi = np.maximum(gauss, cauchy) + 1.0
    step = np.ones_like(flat)
    for _ in range(200):
        bad = _cdf(alpha, beta, lo) > flat
        if not bad.any():
            break
        lo[bad] -= step[bad]
        step[bad] *= 2.0
    step = np.ones_like(flat)
    for _ in range(200):
        bad = _cdf(alpha, beta, hi) < flat
        if not bad.any():
            break
        hi[bad] += step[bad]
        step[bad] *= 2.0

    x = np.clip(np.where(alpha >= 1.5, gauss, cauchy), lo, hi)
    active = np.ones(flat.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        resid = _cdf(alpha, beta, xi) - flat[idx]
        conv = np.abs(resid) <= tol
        below = resid < 0
        lo[idx[below]] = xi[below]
        hi[idx[~below]] = xi[~below]
        dens = _pdf(alpha, beta, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xi - resid / dens
        lo_i, hi_i = lo[idx], hi[idx]
        ok = np.isfinite(newton) & (newton > lo_i) & (newton < hi_i)
        nxt = np.where(ok, newton, 0.5 * (lo_i + hi_i))
        narrow = (hi_i - lo_i) <= 4e-16 * np.maximum(1.0, np.abs(xi))
        x[idx] = np.where(conv, xi, nxt)
        active[idx[conv | narrow]] = False
    return x.reshape(q.shape)


# --------------------------------------------------------------------------
# adaptive Gauss-Kronrod (7, 15) on batches of intervals

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_KRONROD_X = np.concatenate((-_XGK[:-1], _XGK[::-1]))
_KRONROD_W = np.concatenate((_WGK[:-1], _WGK[::-1]))
_GAUSS_W = np.zeros(15)
_GAUSS_W[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate((_WG[:-1], _WG[::-1]))


def integrate(fn, a, b, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL, max_intervals=4000):
    """Adaptive G7-K15 quadrature of a vectorized ``fn`` over [a, b].

    Every pass evaluates all newly created subintervals in one call to ``fn``
    and bisects those whose error estimate is not negligible against the
    global tolerance.  Raises :class:`QuadratureError` if the interval budget
    is exhausted before the error estimate meets the tolerance.
    """
    if a == b:
        return 0.0, 0.0
    edges = np.linspace(a, b, 9)
    new_lo, new_hi = edges[:-1], edges[1:]
    lo = np.empty(0)
    hi = np.empty(0)
    val = np.empty(0)
    err = np.empty(0)
    while True:
        mid = 0.5 * (new_lo + new_hi)
        half = 0.5 * (new_hi - new_lo)
        x = mid[:, None] + half[:, None] * _KRONROD_X
        f = np.asarray(fn(x.ravel()), dtype=float).reshape(x.shape)
        k = half * (f @ _KRONROD_W)
        g = half * (f @ _GAUSS_W)
        lo = np.concatenate((lo, new_lo))
        hi = np.concatenate((hi, new_hi))
        val = np.concatenate((val, k))
        err = np.concatenate((err, np.abs(k - g)))

        total = float(np.sum(val))
        tol = max(abs_tol, rel_tol * abs(total))
        if not np.all(np.isfinite(val)):
            raise QuadratureError("integrand produced non-finite values")
        if float(np.sum(err)) <= tol:
            return total, float(np.sum(err))
        width = hi - lo
        resolvable = width > 64 * np.finfo(float).eps * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        split = (err > tol / (2.0 * len(err))) & resolvable
        if not split.any():
            # remaining error sits in intervals at the floating-point resolution limit
            return total, float(np.sum(err))
        if len(err) + split.sum() > max_intervals:
            raise QuadratureError(
                f"quadrature did not converge: error {np.sum(err):.3g} > tolerance {tol:.3g}"
            )
        centre = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate((lo[split], centre))
        new_hi = np.concatenate((centre, hi[split]))
        keep = ~split
        lo, hi, val, err = lo[keep], hi[keep], val[keep], err[keep]


# --------------------------------------------------------------------------
# moments

def _neg_part_moment(alpha, beta, p, shift=0.0, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """E[(-Z - shift)_+ ** p] for 0 < p < alpha."""
    upper = -shift
    reach = max(TAIL_CUTOFF, 2.0 * abs(shift))

    def integrand(z):
        return (upper - z) ** p * _pdf(alpha, beta, z)

    core, _ = integrate(integrand, -reach, upper, abs_tol, rel_tol)
    # (t - shift)**p = sum_j binom(p, j) (-shift)**j t**(p - j) with |shift| / t <= 1/2
    tail = 0.0
    for j in range(60):
        c = special.binom(p, j) * (-shift) ** j
        if c == 0.0:
            if j > 0 and shift == 0.0:
                break
            continue
        term = c * _tail_power_moment(alpha, beta, reach, p - j, -1)
        tail += term
        if abs(term) < 1e-18 * max(1.0, abs(tail)):
            break
    return core + tail


def _partial_first_moment(alpha, beta, x, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """E[Z 1{Z <= x}]."""
    if x <= -TAIL_CUTOFF:
        return -_tail_power_moment(alpha, beta, -x, 1.0, -1)
    left = -_tail_power_moment(alpha, beta, TAIL_CUTOFF, 1.0, -1)
    top = min(x, TAIL_CUTOFF)
    core, _ = integrate(lambda z: z * _pdf(alpha, beta, z), -TAIL_CUTOFF, top, abs_tol, rel_tol)
    extra = 0.0
    if x > TAIL_CUTOFF:
        extra = (_tail_power_moment(alpha, beta, TAIL_CUTOFF, 1.0, 1)
                 - _tail_power_moment(alpha, beta, x, 1.0, 1))
    return left + core + extra


# --------------------------------------------------------------------------
# public operations

def _as_output(values, like):
    return float(values) if np.ndim(like) == 0 else values


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("z must be finite")
    return z


def _check_q(q, upper=1.0):
    q = np.asarray(q, dtype=float)
    if not np.all((q > 0.0) & (q < upper)):
        raise DomainError(f"probability level must lie in (0, {upper:g}), got {q!r}")
    return q


def stable_pdf(params, z, *, abs_tol=DEFAULT_ABS_TOL):
    """Density of the standardized driver at ``z`` (scalar or array)."""
    z = _check_z(z)
    return _as_output(_pdf(params.alpha, params.beta, z, abs_tol), z)


def stable_cdf(params, z, *, abs_tol=DEFAULT_ABS_TOL):
    """Distribution function of the standardized driver at ``z``."""
    z = _check_z(z)
    return _as_output(_cdf(params.alpha, params.beta, z, abs_tol), z)


def stable_quantile(params, q):
    """Quantile ``Q_Z(q)``; ``F_Z(Q_Z(q)) = q`` to 1e-9 or better."""
    q = _check_q(q)
    return _as_output(_quantile(params.alpha, params.beta, q), q)


def stable_sample(params, n, seed):
    """``n`` iid draws of the standardized driver via Chambers-Mallows-Stuck.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`; the
    same seed always yields the same array.
    """
    n = int(n)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, n)
    w = rng.standard_exponential(n)
    return _kernels.cms_transform(v, w, params.alpha, params.beta)


def tail_mean(params, q, *, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """``m_Z(q) = E[Z 1{Z <= Q_Z(q)}] / q``."""
    q = float(_check_q(q))
    x = float(_quantile(params.alpha, params.beta, q))
    return _partial_first_moment(params.alpha, params.beta, x, abs_tol, rel_tol) / q


def truncated_second_moment(params, q, *, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """``K_q = E[Z**2 1{|Z| <= c_q}]`` with ``c_q = |Q_Z(q)|``, q in (0, 1/2)."""
    q = float(_check_q(q, 0.5))
    c = abs(float(_quantile(params.alpha, params.beta, q)))
    a, b = params.alpha, params.beta
    top = min(c, TAIL_CUTOFF)
    value, _ = integrate(lambda z: z * z * _pdf(a, b, z), -top, top, abs_tol, rel_tol)
    if c > TAIL_CUTOFF:
        for side in (1, -1):
            seg, _ = integrate(lambda t: t * t * _tail_pdf(a, b, t, side), TAIL_CUTOFF, c,
                               abs_tol, rel_tol)
            value += seg
    return value


def _check_order(params, p):
    if not (math.isfinite(p) and p > 0):
        raise DomainError(f"moment order must be positive, got {p!r}")
    if p >= params.alpha:
        raise MomentDivergenceError(
            f"E|Z|^p diverges for p = {p} >= alpha = {params.alpha}"
        )


def abs_p_moment(params, p, *, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """``c_{Z,p} = E|Z - EZ|**p`` for 0 < p < alpha (EZ = 0 in this parameterization)."""
    _check_order(params, p)
    a, b = params.alpha, params.beta
    return (_neg_part_moment(a, b, p, 0.0, abs_tol, rel_tol)
            + _neg_part_moment(a, -b, p, 0.0, abs_tol, rel_tol))


def neg_part_p_moment(params, p, *, shift=0.0, abs_tol=DEFAULT_ABS_TOL, rel_tol=DEFAULT_REL_TOL):
    """``d_{Z,p} = (E(-Z - shift)_+**p)**(1/p)``; ``shift = 0`` gives the driver constant."""
    _check_order(params, p)
    m = _neg_part_moment(params.alpha, params.beta, p, float(shift), abs_tol, rel_tol)
    return m ** (1.0 / p)


def normal_tail_mean(q):
    """Magnitude ``phi(Phi^-1(q)) / q`` of the standard normal left-tail mean."""
    q = _check_q(q)
    return _as_output(np.exp(-0.5 * special.ndtri(q) ** 2) / math.sqrt(2 * math.pi) / q, q)


def normal_abs_moment(p):
    """``E|N|**p`` for a standard normal ``N``."""
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


def normal_neg_part_norm(p):
    """``(E(-N)_+**p)**(1/p)`` for a standard normal ``N``."""
    return (0.5 * normal_abs_moment(p)) ** (1.0 / p)


def tail_constants(params, q):
    qz = float(stable_quantile(params, q))
    return TailConstants(
        q=float(q),
        QZ_q=qz,
        mZ_q=tail_mean(params, q),
        c_q=abs(qz),
        K_q=truncated_second_moment(params, q) if q < 0.5 else float("nan"),
    )


def moment_constants(params, p):
    return MomentConstants(
        p=float(p),
        c_Zp=abs_p_moment(params, p),
        d_Zp=neg_part_p_moment(params, p),
        c_Np=normal_abs_moment(p),
    )


def stable_table(params, z):
    """Rows ``(z, pdf, cdf)`` for tabulation and external validation."""
    z = _check_z(np.atleast_1d(z))
    return np.column_stack((z, _pdf(params.alpha, params.beta, z), _cdf(params.alpha, params.beta, z)))
