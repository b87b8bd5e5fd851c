"""Random variate generators for the conditional posterior families.

All samplers take an explicit :class:`numpy.random.Generator`; nothing here
touches global random state.  Streams for independent chains are derived with
:func:`make_rng`, which spawns children of a :class:`numpy.random.SeedSequence`.

The generalized inverse Gaussian sampler follows Hoermann & Leydold (2014):
the density ``x**(zeta - 1) * exp(-(chi / x + varrho * x) / 2)`` is reduced to
the standardized two-parameter form ``x**(lam - 1) * exp(-omega/2 (x + 1/x))``
with ``lam = |zeta|`` and ``omega = sqrt(chi * varrho)``, which is sampled by
one of three rejection schemes depending on ``(lam, omega)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import linalg, special

from .errors import FactorizationError, ValidationError

__all__ = [
    "GigParams",
    "make_rng",
    "sample_gig",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_bernoulli",
    "sample_mvn_precision",
]


def make_rng(seed, *keys):
    """Independent PCG64 stream identified by ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams, so each
    chain or replication can own one without sharing state.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


class GigParams(NamedTuple):
    """Parameters of GIG(zeta, chi, varrho)."""

    zeta: float
    chi: float
    varrho: float

    def check(self):
        _check_gig(np.asarray(self.zeta, float), np.asarray(self.chi, float),
                   np.asarray(self.varrho, float))


def _check_gig(zeta, chi, varrho):
    if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(chi)) and np.all(np.isfinite(varrho))):
        raise ValidationError("GIG parameters must be finite")
    if np.any(chi < 0) or np.any(varrho < 0):
        raise ValidationError("GIG parameters chi and varrho must be nonnegative")
    if np.any((chi == 0) & (varrho == 0)):
        raise ValidationError("GIG parameters chi and varrho cannot both be zero")
    if np.any((chi == 0) & (zeta <= 0)):
        raise ValidationError("GIG with chi = 0 requires zeta > 0")
    if np.any((varrho == 0) & (zeta >= 0)):
        raise ValidationError("GIG with varrho = 0 requires zeta < 0")


def _mode(lam, omega):
    # written to avoid cancellation for lam < 1
    out = np.empty_like(lam)
    big = lam >= 1.0
    lb, ob = lam[big], omega[big]
    out[big] = (np.sqrt((lb - 1.0) ** 2 + ob**2) + (lb - 1.0)) / ob
    ls, os_ = lam[~big], omega[~big]
    out[~big] = os_ / (np.sqrt((1.0 - ls) ** 2 + os_**2) + (1.0 - ls))
    return out


def _rou_noshift(lam, omega, rng):
    """Ratio-of-uniforms with the minimal bounding rectangle, no mode shift."""
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _mode(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + np.sqrt((lam + 1.0) ** 2 + omega**2)) / omega
    um = np.exp(0.5 * (lam + 1.0) * np.log(ym) - s * (ym + 1.0 / ym) - nc)

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    while todo.size:
        u = um[todo] * rng.random(todo.size)
        v = rng.random(todo.size)
        x = u / v
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (x > 0) & (np.log(v) <= t[todo] * np.log(x) - s[todo] * (x + 1.0 / x) - nc[todo])
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _rou_shift(lam, omega, rng):
    """Ratio-of-uniforms with the rectangle shifted by the mode."""
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _mode(lam, omega)
    nc = t * np.log(xm) - s * (xm + 1.0 / xm)

    # extrema of (x - xm) sqrt(f(x)) are roots of y^3 + a y^2 + b y + c
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    fi = np.arccos(np.clip(-q / (2.0 * np.sqrt(-(p**3) / 27.0)), -1.0, 1.0))
    fak = 2.0 * np.sqrt(-p / 3.0)
    y1 = fak * np.cos(fi / 3.0) - a / 3.0
    y2 = fak * np.cos(fi / 3.0 + 4.0 / 3.0 * np.pi) - a / 3.0
    uplus = (y1 - xm) * np.exp(t * np.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * np.exp(t * np.log(y2) - s * (y2 + 1.0 / y2) - nc)

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    while todo.size:
        u = uminus[todo] + rng.random(todo.size) * (uplus[todo] - uminus[todo])
        v = rng.random(todo.size)
        x = u / v + xm[todo]
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (x > 0) & (np.log(v) <= t[todo] * np.log(x) - s[todo] * (x + 1.0 / x) - nc[todo])
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _log1p_over(lam, c):
    """log1p(lam * c) / lam, with the lam -> 0 limit c."""
    lc = lam * c
    small = np.abs(lc) < 1e-5
    safe = np.where(small, 1.0, lam)
    series = c * (1.0 - lc / 2.0 + lc * lc / 3.0)
    return np.where(small, series, np.log1p(np.where(small, 0.0, lc)) / safe)


def _concave_hat(lam, omega, rng):
    """Rejection from a three-piece hat; used for 0 <= lam < 1 and small omega."""
    xm = _mode(lam, omega)
    x0 = omega / (1.0 - lam)
    two_om = 2.0 / omega
    k0 = np.exp((lam - 1.0) * np.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    A0 = k0 * x0

    far = x0 >= two_om
    k1 = np.where(far, 0.0, np.exp(-omega))
    # (two_om**lam - x0**lam) / lam, stable down to lam = 0 and subnormal lam
    span = np.log(two_om) - np.log(x0)
    with np.errstate(over="ignore", invalid="ignore"):
        A1_mid = k1 * x0**lam * span * special.exprel(lam * span)
    A1 = np.where(far, 0.0, A1_mid)
    k2 = np.where(far, x0 ** (lam - 1.0), two_om ** (lam - 1.0))
    tail_start = np.maximum(x0, two_om)
    A2 = k2 * two_om * np.exp(-0.5 * omega * tail_start)
    Atot = A0 + A1 + A2

    out = np.empty_like(lam)
    todo = np.arange(lam.size)
    while todo.size:
        lm, om = lam[todo], omega[todo]
        a0, a1 = A0[todo], A1[todo]
        v = Atot[todo] * rng.random(todo.size)
        x = np.empty(todo.size)
        log_hx = np.empty(todo.size)

        s0 = v <= a0
        x[s0] = x0[todo][s0] * v[s0] / a0[s0]
        log_hx[s0] = np.log(k0[todo][s0])

        s1 = ~s0 & (v - a0 <= a1)
        if np.any(s1):
            v1 = (v - a0)[s1]
            l1, o1, kk1 = lm[s1], om[s1], k1[todo][s1]
            x0s = x0[todo][s1]
            # inverts the x**(lam-1) piece: x0 * (1 + lam c)**(1/lam)
            xs = x0s * np.exp(_log1p_over(l1, v1 / (kk1 * x0s**l1)))
            x[s1] = xs
            log_hx[s1] = np.log(kk1) + (l1 - 1.0) * np.log(xs)

        s2 = ~s0 & ~s1
        if np.any(s2):
            v2 = (v - a0 - a1)[s2]
            o2, kk2 = om[s2], k2[todo][s2]
            arg = np.exp(-0.5 * o2 * tail_start[todo][s2]) - o2 / (2.0 * kk2) * v2
            with np.errstate(divide="ignore", invalid="ignore"):
                x[s2] = -2.0 / o2 * np.log(np.maximum(arg, 0.0))
            log_hx[s2] = np.log(kk2) - 0.5 * o2 * x[s2]

        u = rng.random(todo.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = np.isfinite(x) & (x > 0) & (
                np.log(u) + log_hx <= (lm - 1.0) * np.log(x) - 0.5 * om * (x + 1.0 / x)
            )
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _standard_gig(lam, omega, rng):
    """Draw from the standardized GIG with ``lam >= 0`` and ``omega > 0``."""
    out = np.empty_like(lam)
    shift = (lam > 2.0) | (omega > 3.0)
    noshift = ~shift & ((lam >= 1.0 - 2.25 * omega**2) | (omega > 0.2))
    hat = ~shift & ~noshift
    # fixed evaluation order keeps the stream consumption deterministic
    for mask, fn in ((shift, _rou_shift), (noshift, _rou_noshift), (hat, _concave_hat)):
        if np.any(mask):
            out[mask] = fn(lam[mask], omega[mask], rng)
    return out


def sample_gig(zeta, chi, varrho, rng, size=None):
    """Draw from GIG(zeta, chi, varrho).

    The density is proportional to ``x**(zeta-1) exp(-(chi/x + varrho*x)/2)``.
    Arguments broadcast against each other (and ``size``).  The boundary
    cases ``chi = 0`` (Gamma) and ``varrho = 0`` (inverse Gamma) are sampled
    exactly.

    Returns
    -------
    float or ndarray
    """
    zeta_a, chi_a, rho_a = np.broadcast_arrays(
        np.asarray(zeta, float), np.asarray(chi, float), np.asarray(varrho, float)
    )
    if size is not None:
        shape = (size,) if np.isscalar(size) else tuple(size)
        zeta_a, chi_a, rho_a = (np.broadcast_to(a, shape) for a in (zeta_a, chi_a, rho_a))
    _check_gig(zeta_a, chi_a, rho_a)
    scalar = zeta_a.ndim == 0
    z, c, r = (np.atleast_1d(a).ravel() for a in (zeta_a, chi_a, rho_a))

    out = np.empty(z.size)
    gam = c == 0
    inv = r == 0
    gen = ~gam & ~inv
    if np.any(gam):
        # x^(zeta-1) exp(-varrho x / 2): Gamma(zeta, rate varrho/2)
        out[gam] = rng.gamma(z[gam], 2.0 / r[gam])
    if np.any(inv):
        out[inv] = 1.0 / rng.gamma(-z[inv], 2.0 / c[inv])
    if np.any(gen):
        zg, cg, rg = z[gen], c[gen], r[gen]
        lam = np.abs(zg)
        omega = np.sqrt(cg * rg)
        alpha = np.sqrt(cg / rg)
        x = _standard_gig(lam, omega, rng)
        out[gen] = np.where(zg < 0, alpha / x, alpha * x)
    if scalar:
        return float(out[0])
    return out.reshape(zeta_a.shape)


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draw in shape-rate form (mean ``shape / rate``)."""
    shape = np.asarray(shape, float)
    rate = np.asarray(rate, float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ValidationError("Gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Inverse-Gamma draw: the reciprocal of a Gamma(shape, rate=scale) draw.

    The mean is ``scale / (shape - 1)`` for ``shape > 1``.
    """
    shape = np.asarray(shape, float)
    scale = np.asarray(scale, float)
    if np.any(~(shape > 0)) or np.any(~(scale > 0)):
        raise ValidationError("inverse-Gamma shape and scale must be positive")
    g = rng.gamma(shape, 1.0 / scale, size=size)
    with np.errstate(divide="ignore"):
        # a Gamma underflow to 0 maps to inf rather than raising
        return np.reciprocal(g) if np.ndim(g) else float(np.reciprocal(np.float64(g)))


def sample_bernoulli(p, rng, size=None):
    """0/1 draws with success probability ``p``."""
    p = np.asarray(p, float)
    if np.any(~((p >= 0) & (p <= 1))):
        raise ValidationError("Bernoulli probability must lie in [0, 1]")
    u = rng.random(size=p.shape if size is None else size)
    out = (u < p).astype(np.int8)
    return int(out) if out.ndim == 0 else out


JITTER_START = 1e-10
JITTER_MAX = 1e-6


def cholesky_jitter(P):
    """Lower Cholesky factor of ``P``, adding diagonal jitter if needed.

    Jitter starts at ``1e-10 * mean(diag(P))`` and grows tenfold up to
    ``1e-6 * mean(diag(P))``.
    """
    try:
        return linalg.cholesky(P, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(P)))
    if not (math.isfinite(scale) and scale > 0):
        raise FactorizationError("precision matrix has a non-positive or non-finite diagonal")
    eps = JITTER_START
    eye = np.eye(P.shape[0])
    while eps <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cholesky(P + eps * scale * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            eps *= 10.0
    raise FactorizationError("precision matrix is not positive definite after maximal jitter")


def sample_mvn_precision(b, P, rng, chol=None):
    """Draw from ``N(P^{-1} b, P^{-1})`` using a Cholesky factorization of ``P``.

    Parameters
    ----------
    b : ndarray, shape (K,)
        Linear term; the mean is ``P^{-1} b``.
    P : ndarray, shape (K, K)
        Symmetric positive-definite precision matrix.
    rng : numpy.random.Generator
    chol : ndarray, optional
        Precomputed lower Cholesky factor of ``P``.
    """
    b = np.asarray(b, float)
    L = cholesky_jitter(np.asarray(P, float)) if chol is None else chol
    # P = L L': mean solves L L' m = b, noise solves L' e = z
    w = linalg.solve_triangular(L, b, lower=True, check_finite=False)
    z = rng.standard_normal(b.shape[0])
    return linalg.solve_triangular(L, w + z, lower=True, trans="T", check_finite=False)
