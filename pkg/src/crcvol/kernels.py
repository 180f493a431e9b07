"""Low-level numerical kernels.

Contents:

* closed-form log-price exponent coefficients of the stochastic-volatility
  diffusion (complex Riccati flow, kept in the numerically stable branch so
  no exponent ever overflows for bounded arguments), with finite-time
  explosion detection;
* time-bucketed lognormal-jump cumulant with martingale compensation;
* Black-Scholes price and a normalized Black solver (log-space Householder
  iteration with bracketing) used for implied vols;
* rational inverse normal CDF (Acklam coefficients plus one Halley polish).

The scalar kernels are written once; when the numba backend is active they
are compiled at definition and wrapped in compiled batch loops. The numpy
API keeps vectorized twins of the transform coefficients and python batch
loops for the scalar solvers. ``numba_api`` / ``numpy_api`` expose both
implementations (the former is None without numba) so benchmarks and
equivalence tests can compare them; module-level names bind the selected
backend.
"""

import cmath
import math
from types import SimpleNamespace

import numpy as np

from ._backend import USE_NUMBA

if USE_NUMBA:
    from numba import njit as _njit

    def _jit(fn):
        return _njit(cache=True)(fn)

else:

    def _jit(fn):
        return fn


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi
# sentinel upper edge for the open-ended last jump bucket
_OPEN_EDGE = 1e308


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------


@_jit
def _pole_in_window(d, gnum, gden, tau):
    """True when the Riccati solution has a pole at some time in (0, tau].

    Poles solve exp(-d t) = gden/gnum. Since |exp(-d t)| <= 1 for Re(d) >= 0
    and t >= 0, a root needs |gnum| >= |gden|. With Re(d) > 0 the modulus
    pins a unique candidate time and the phase must line up there; with a
    purely imaginary d the modulus is constant and roots form an arithmetic
    progression.
    """
    absn = abs(gnum)
    absd = abs(gden)
    if absd == 0.0 or absn == 0.0:
        return False
    if absn < absd * (1.0 - 1e-12):
        return False
    dr = d.real
    di = d.imag
    lng = math.log(absn / absd)
    ainv = cmath.phase(gden / gnum)
    if dr > 0.0:
        ts = lng / dr
        if ts <= 0.0 or ts > tau * (1.0 + 1e-12):
            return False
        resid = -di * ts - ainv
        resid -= _TWO_PI * math.floor(resid / _TWO_PI + 0.5)
        return abs(resid) <= 1e-7 * (1.0 + abs(di) * ts)
    if di == 0.0:
        return False
    if abs(lng) > 1e-9:
        return False
    per = _TWO_PI / abs(di)
    t_any = -ainv / di
    t0 = t_any - per * math.floor(t_any / per)
    if t0 <= 0.0:
        t0 += per
    return t0 <= tau * (1.0 + 1e-12)


@_jit
def _riccati_scalar(z, tau, kappa, theta, sigma, rho, r, q):
    """Log-price exponent coefficients (drift part, variance part) at clock tau.

    z is the exponent argument: the transform evaluated is
    E[exp(z * X_tau)] = exp(phi + psi * v0 + z * x0) for the pure-diffusion
    model started at (x0, v0). Returns (phi, psi, blown); blown marks a
    finite-time explosion at or before tau, in which case phi/psi are zeroed.
    """
    s2 = sigma * sigma
    a0 = 0.5 * z * (z - 1.0)
    b = kappa - rho * sigma * z
    d = cmath.sqrt(b * b - 2.0 * s2 * a0)
    gden = b + d
    # b - d in a cancellation-free form unless b + d itself degenerates
    if abs(gden) <= 1e-14 * (abs(b) + abs(d)):
        gnum = b - d
    else:
        gnum = 2.0 * s2 * a0 / gden
    two_d = 2.0 * d
    if two_d == 0.0:
        return 0j, 0j, True
    ed = cmath.exp(-d * tau)
    denom = gden - gnum * ed
    if denom == 0.0:
        return 0j, 0j, True
    psi = 2.0 * a0 * (1.0 - ed) / denom
    # log(denom / 2d) = log1p(w) with w = gnum (1 - ed) / 2d, since
    # denom - 2d = gnum (1 - ed) exactly; the series branch avoids the
    # cancellation that the kappa*theta/sigma^2 factor would amplify
    w = gnum * (1.0 - ed) / two_d
    aw = abs(w)
    if aw < 1e-4:
        lg = w * (1.0 + w * (-0.5 + w * (1.0 / 3.0 + w * (-0.25 + 0.2 * w))))
    else:
        lg = cmath.log(denom / two_d)
    phi = (kappa * theta / s2) * (gnum * tau - 2.0 * lg) + ((r - q) * tau) * z
    blown = _pole_in_window(d, gnum, gden, tau)
    if not (
        math.isfinite(psi.real)
        and math.isfinite(psi.imag)
        and math.isfinite(phi.real)
        and math.isfinite(phi.imag)
    ):
        blown = True
    if blown:
        return 0j, 0j, True
    return phi, psi, False


@_jit
def _cumulant_scalar(z, tau, lam, nus, deltas, edges):
    """Bucketed lognormal-jump exponent at argument z, compensated so the
    value vanishes identically at z = 1 (martingale) and z = 0.

    ``edges`` holds the bucket left edges plus a final right edge; the last
    bucket extends beyond it. Returns (value, blown).
    """
    out = 0.0j
    if lam > 0.0 and tau > 0.0:
        nb = nus.shape[0]
        for bi in range(nb):
            lo = edges[bi]
            hi = edges[bi + 1] if bi + 1 < nb else _OPEN_EDGE
            dt = min(tau, hi) - lo
            if dt <= 0.0:
                continue
            zd = z * deltas[bi]
            term = cmath.exp(z * nus[bi] + 0.5 * zd * zd) - 1.0
            comp = z * math.expm1(nus[bi] + 0.5 * deltas[bi] * deltas[bi])
            out += (lam * dt) * (term - comp)
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        return 0.0j, True
    return out, False


@_jit
def _norm_cdf(x):
    return 0.5 * math.erfc(-x * _INV_SQRT2)


@_jit
def _norm_pdf(x):
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@_jit
def _bs_scalar(spot, strike, tau, vol, r, q, is_call):
    """Black-Scholes price. vol <= 0 or tau <= 0 degrades to discounted intrinsic."""
    fwd_leg = spot * math.exp(-q * tau)
    strike_leg = strike * math.exp(-r * tau)
    if tau <= 0.0 or vol <= 0.0:
        if is_call:
            return max(fwd_leg - strike_leg, 0.0)
        return max(strike_leg - fwd_leg, 0.0)
    st = vol * math.sqrt(tau)
    d1 = math.log(fwd_leg / strike_leg) / st + 0.5 * st
    d2 = d1 - st
    if is_call:
        return fwd_leg * _norm_cdf(d1) - strike_leg * _norm_cdf(d2)
    return strike_leg * _norm_cdf(-d2) - fwd_leg * _norm_cdf(-d1)


@_jit
def _phi_inv(p):
    """Inverse standard normal CDF: rational approximation plus one Halley step."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    a0 = -3.969683028665376e01
    a1 = 2.209460984245205e02
    a2 = -2.759285104469687e02
    a3 = 1.383577518672690e02
    a4 = -3.066479806614716e01
    a5 = 2.506628277459239e00
    b0 = -5.447609879822406e01
    b1 = 1.615858368580409e02
    b2 = -1.556989798598866e02
    b3 = 6.680131188771972e01
    b4 = -1.328068155288572e01
    c0 = -7.784894002430293e-03
    c1 = -3.223964580411365e-01
    c2 = -2.400758277161838e00
    c3 = -2.549732539343734e00
    c4 = 4.374664141464968e00
    c5 = 2.938163982698783e00
    d0 = 7.784695709041462e-03
    d1 = 3.224671290700398e-01
    d2 = 2.445134137142996e00
    d3 = 3.754408661907416e00
    plow = 0.02425
    if p < plow:
        qq = math.sqrt(-2.0 * math.log(p))
        x = (((((c0 * qq + c1) * qq + c2) * qq + c3) * qq + c4) * qq + c5) / (
            (((d0 * qq + d1) * qq + d2) * qq + d3) * qq + 1.0
        )
    elif p <= 1.0 - plow:
        qq = p - 0.5
        rr = qq * qq
        x = (
            (((((a0 * rr + a1) * rr + a2) * rr + a3) * rr + a4) * rr + a5)
            * qq
            / (((((b0 * rr + b1) * rr + b2) * rr + b3) * rr + b4) * rr + 1.0)
        )
    else:
        qq = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((c0 * qq + c1) * qq + c2) * qq + c3) * qq + c4) * qq + c5) / (
            (((d0 * qq + d1) * qq + d2) * qq + d3) * qq + 1.0
        )
    e = _norm_cdf(x) - p
    u = e / _norm_pdf(x)
    x -= u / (1.0 + 0.5 * x * u)
    return x


def _norm_black(x, s):
    """Normalized Black call in forward units: log-moneyness x = ln(F/K),
    total deviation s = vol * sqrt(tau)."""
    h = x / s
    t = 0.5 * s
    return 0.5 * math.erfc(-(h + t) * _INV_SQRT2) - math.exp(-x) * 0.5 * math.erfc(
        -(h - t) * _INV_SQRT2
    )


@_jit
def _iv_scalar(price, spot, strike, tau, r, q, is_call):
    """Implied vol via bracketed log-space Householder iteration.

    Returns (vol, status): status 0 ok, 1 price at/below the lower
    no-arbitrage bound, 2 at/above the upper bound, 3 no convergence.
    The quote is normalized to forward units, mapped to the out-of-the-money
    call via parity (which keeps the target in (0, 1) and the iteration well
    conditioned on both wings), then solved for the total deviation s with a
    seed from the wing asymptotic or the rational inverse CDF.
    """
    df_r = math.exp(-r * tau)
    fwd = spot * math.exp((r - q) * tau)
    scale = df_r * fwd
    btgt = price / scale
    ex = strike / fwd  # e^{-x}
    if not is_call:
        btgt = btgt + 1.0 - ex  # put -> call parity in normalized units
    x = -math.log(ex)
    if x > 0.0:
        # in-the-money call: solve the complementary out-of-the-money put,
        # rescaled to a call at mirrored log-moneyness
        btgt = (btgt - (1.0 - ex)) * math.exp(x)
        x = -x
    lo_bound = max(1.0 - ex, 0.0) if x == 0.0 else 0.0
    if btgt <= lo_bound:
        return 0.0, 1
    if btgt >= 1.0:
        return 0.0, 2

    s_lo = 1e-12
    s_hi = 80.0
    s_atm = 2.0 * _phi_inv(0.5 * (btgt + 1.0))  # exact at x = 0
    if x == 0.0:
        s = s_atm
    elif btgt >= 0.05:
        s = s_atm + 0.5 * math.sqrt(-x)
    else:
        # wing asymptotic b ~ pdf(z) |x| / z^3, z = |x|/s; useless near the
        # money, so never start below the at-the-money seed
        ax = -x
        z0 = math.sqrt(-2.0 * math.log(btgt))
        arg = btgt * z0 * z0 * z0 / (ax * _INV_SQRT_2PI * math.exp(0.5 * ax))
        if 0.0 < arg < 1.0:
            z0 = math.sqrt(-2.0 * math.log(arg))
        s = max(ax / z0, s_atm)
    if s < s_lo:
        s = s_lo
    if s > s_hi:
        s = s_hi

    ln_t = math.log(btgt)
    ok = False
    for _ in range(60):
        h = x / s
        t = 0.5 * s
        dplus = h + t
        bval = _norm_cdf(dplus) - math.exp(-x) * _norm_cdf(h - t)
        vega = _norm_pdf(dplus)
        if bval > btgt:
            s_hi = s
        else:
            s_lo = s
        # no usable curvature on the underflow plateaus at either end
        if bval <= 0.0 or vega <= 1e-300 or 1.0 - bval <= 1e-15:
            s = 0.5 * (s_lo + s_hi)
            continue
        fval = math.log(bval) - ln_t
        if abs(fval) < 5e-14:
            ok = True
            break
        hp = 0.5 - h / s  # d(dplus)/ds
        b2 = -dplus * vega * hp
        b3 = vega * (hp * hp * (dplus * dplus - 1.0) - 2.0 * x * dplus / (s * s * s))
        lh1 = vega / bval
        lh2 = b2 / bval - lh1 * lh1
        lh3 = b3 / bval - 3.0 * lh1 * (b2 / bval) + 2.0 * lh1 * lh1 * lh1
        nu_n = -fval / lh1
        hdenom = 1.0 + (lh2 / lh1) * nu_n + (lh3 / (6.0 * lh1)) * nu_n * nu_n
        if hdenom == 0.0:
            s_new = s + nu_n
        else:
            s_new = s + nu_n * (1.0 + 0.5 * (lh2 / lh1) * nu_n) / hdenom
        if not (s_lo < s_new < s_hi) or not math.isfinite(s_new):
            s_new = 0.5 * (s_lo + s_hi)
        s = s_new
    if not ok and s_hi - s_lo < 1e-13 * (1.0 + s_hi):
        ok = True
    if not ok:
        return 0.0, 3
    return s / math.sqrt(tau), 0


# ---------------------------------------------------------------------------
# numpy vectorized twins for the transform coefficients
# ---------------------------------------------------------------------------


def _principal_mod_np(x):
    return x - _TWO_PI * np.floor(x / _TWO_PI + 0.5)


def _pole_in_window_np(d, gnum, gden, tau):
    out = np.zeros(d.shape, dtype=np.bool_)
    absn = np.abs(gnum)
    absd = np.abs(gden)
    cand = (absd > 0.0) & (absn > 0.0) & (absn >= absd * (1.0 - 1e-12))
    if not np.any(cand):
        return out
    dn = d[cand]
    gn = gnum[cand]
    gd = gden[cand]
    dr = dn.real
    di = dn.imag
    lng = np.log(np.abs(gn) / np.abs(gd))
    ainv = np.angle(gd / gn)
    sub = np.zeros(dn.shape, dtype=np.bool_)

    pos = dr > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = np.where(pos, lng / np.where(pos, dr, 1.0), np.inf)
    in_win = pos & (ts > 0.0) & (ts <= tau * (1.0 + 1e-12))
    if np.any(in_win):
        resid = np.abs(_principal_mod_np(-di * ts - ainv))
        sub |= in_win & (resid <= 1e-7 * (1.0 + np.abs(di) * ts))

    circ = (dr == 0.0) & (di != 0.0) & (np.abs(lng) <= 1e-9)
    if np.any(circ):
        di_safe = np.where(circ, di, 1.0)
        per = _TWO_PI / np.abs(di_safe)
        t0 = np.mod(np.where(circ, -ainv / di_safe, 0.0), per)
        t0 = np.where(t0 <= 0.0, t0 + per, t0)
        sub |= circ & (t0 <= tau * (1.0 + 1e-12))

    out[cand] = sub
    return out


def _riccati_batch_np(z, tau, kappa, theta, sigma, rho, r, q):
    z = np.asarray(z, dtype=np.complex128)
    s2 = sigma * sigma
    a0 = 0.5 * z * (z - 1.0)
    b = kappa - rho * sigma * z
    d = np.sqrt(b * b - 2.0 * s2 * a0)
    gden = b + d
    degen = np.abs(gden) <= 1e-14 * (np.abs(b) + np.abs(d))
    gden_safe = np.where(degen, 1.0, gden)
    gnum = np.where(degen, b - d, 2.0 * s2 * a0 / gden_safe)
    ed = np.exp(-d * tau)
    denom = gden - gnum * ed
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = 2.0 * a0 * (1.0 - ed) / denom
        # log(denom / 2d) = log1p(w), w = gnum (1 - ed) / 2d; series branch
        # avoids cancellation amplified by kappa*theta/sigma^2
        w = gnum * (1.0 - ed) / (2.0 * d)
        small = np.abs(w) < 1e-4
        series = w * (1.0 + w * (-0.5 + w * (1.0 / 3.0 + w * (-0.25 + 0.2 * w))))
        direct = np.log(np.where(small, 1.0, denom / (2.0 * d)))
        lg = np.where(small, series, direct)
        phi = (kappa * theta / s2) * (gnum * tau - 2.0 * lg) + ((r - q) * tau) * z
    blown = _pole_in_window_np(d, gnum, gden, tau)
    blown |= ~(np.isfinite(psi) & np.isfinite(phi))
    psi = np.where(blown, 0.0, psi)
    phi = np.where(blown, 0.0, phi)
    return phi, psi, blown


def _cumulant_batch_np(z, tau, lam, nus, deltas, edges):
    z = np.asarray(z, dtype=np.complex128)
    out = np.zeros(z.shape, dtype=np.complex128)
    if lam > 0.0 and tau > 0.0:
        nb = len(nus)
        for bi in range(nb):
            lo = edges[bi]
            hi = edges[bi + 1] if bi + 1 < nb else _OPEN_EDGE
            dt = min(tau, hi) - lo
            if dt <= 0.0:
                continue
            zd = z * deltas[bi]
            term = np.exp(z * nus[bi] + 0.5 * zd * zd) - 1.0
            comp = z * math.expm1(nus[bi] + 0.5 * deltas[bi] * deltas[bi])
            out += (lam * dt) * (term - comp)
    blown = ~np.isfinite(out)
    out = np.where(blown, 0.0, out)
    return out, blown


# ---------------------------------------------------------------------------
# batch loops over the scalar solvers
# ---------------------------------------------------------------------------


def _iv_batch_py(prices, spot, strikes, tau, r, q, is_call):
    prices = np.asarray(prices, dtype=np.float64)
    strikes = np.asarray(strikes, dtype=np.float64)
    vols = np.empty(prices.shape, dtype=np.float64)
    status = np.empty(prices.shape, dtype=np.int64)
    fp, fk = prices.ravel(), strikes.ravel()
    fv, fs = vols.ravel(), status.ravel()
    for i in range(fp.shape[0]):
        fv[i], fs[i] = _iv_scalar(fp[i], spot, fk[i], tau, r, q, is_call)
    return vols, status


def _bs_batch_py(spot, strikes, tau, vols, r, q, is_call):
    strikes = np.asarray(strikes, dtype=np.float64)
    vols = np.broadcast_to(np.asarray(vols, dtype=np.float64), strikes.shape)
    out = np.empty(strikes.shape, dtype=np.float64)
    fk, fv, fo = strikes.ravel(), vols.ravel(), out.ravel()
    for i in range(fk.shape[0]):
        fo[i] = _bs_scalar(spot, fk[i], tau, fv[i], r, q, is_call)
    return out


# ---------------------------------------------------------------------------
# backend assembly
# ---------------------------------------------------------------------------

_scalars = SimpleNamespace(
    pole_in_window=_pole_in_window,
    riccati_scalar=_riccati_scalar,
    cumulant_scalar=_cumulant_scalar,
    bs_scalar=_bs_scalar,
    iv_scalar=_iv_scalar,
    phi_inv=_phi_inv,
    norm_cdf=_norm_cdf,
    norm_pdf=_norm_pdf,
    norm_black=_norm_black,
)


def _build_numpy_api():
    return SimpleNamespace(
        name="numpy",
        scalars=_scalars,
        riccati_batch=_riccati_batch_np,
        cumulant_batch=lambda z, tau, lam, nus, deltas, edges: _cumulant_batch_np(
            z,
            tau,
            lam,
            np.asarray(nus, dtype=np.float64),
            np.asarray(deltas, dtype=np.float64),
            np.asarray(edges, dtype=np.float64),
        ),
        iv_batch=_iv_batch_py,
        bs_batch=_bs_batch_py,
    )


def _build_numba_api():
    @_jit
    def riccati_batch(z, tau, kappa, theta, sigma, rho, r, q):
        n = z.shape[0]
        phi = np.empty(n, dtype=np.complex128)
        psi = np.empty(n, dtype=np.complex128)
        blown = np.empty(n, dtype=np.bool_)
        for i in range(n):
            p, s, bl = _riccati_scalar(z[i], tau, kappa, theta, sigma, rho, r, q)
            phi[i] = p
            psi[i] = s
            blown[i] = bl
        return phi, psi, blown

    @_jit
    def cumulant_batch(z, tau, lam, nus, deltas, edges):
        n = z.shape[0]
        out = np.empty(n, dtype=np.complex128)
        blown = np.empty(n, dtype=np.bool_)
        for i in range(n):
            v, bl = _cumulant_scalar(z[i], tau, lam, nus, deltas, edges)
            out[i] = v
            blown[i] = bl
        return out, blown

    @_jit
    def iv_batch(prices, spot, strikes, tau, r, q, is_call):
        n = prices.shape[0]
        vols = np.empty(n, dtype=np.float64)
        status = np.empty(n, dtype=np.int64)
        for i in range(n):
            v, st = _iv_scalar(prices[i], spot, strikes[i], tau, r, q, is_call)
            vols[i] = v
            status[i] = st
        return vols, status

    @_jit
    def bs_batch(spot, strikes, tau, vols, r, q, is_call):
        n = strikes.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = _bs_scalar(spot, strikes[i], tau, vols[i], r, q, is_call)
        return out

    def as_c(arr, dtype):
        return np.ascontiguousarray(arr, dtype=dtype)

    return SimpleNamespace(
        name="numba",
        scalars=_scalars,
        riccati_batch=lambda z, tau, k, th, sg, rh, r, q: riccati_batch(
            as_c(z, np.complex128), tau, k, th, sg, rh, r, q
        ),
        cumulant_batch=lambda z, tau, lam, nus, deltas, edges: cumulant_batch(
            as_c(z, np.complex128),
            tau,
            lam,
            as_c(nus, np.float64),
            as_c(deltas, np.float64),
            as_c(edges, np.float64),
        ),
        iv_batch=lambda prices, spot, strikes, tau, r, q, is_call: iv_batch(
            as_c(prices, np.float64), spot, as_c(strikes, np.float64), tau, r, q, is_call
        ),
        bs_batch=lambda spot, strikes, tau, vols, r, q, is_call: bs_batch(
            spot,
            as_c(strikes, np.float64),
            tau,
            as_c(np.broadcast_to(vols, np.shape(strikes)), np.float64),
            r,
            q,
            is_call,
        ),
    )


numpy_api = _build_numpy_api()
numba_api = _build_numba_api() if USE_NUMBA else None
active = numba_api if USE_NUMBA else numpy_api

riccati_batch = active.riccati_batch
cumulant_batch = active.cumulant_batch
iv_batch = active.iv_batch
bs_batch = active.bs_batch
bs_scalar = _bs_scalar
iv_scalar = _iv_scalar
norm_black = _norm_black
phi_inv = _phi_inv
