"""Shrinkage priors on the regression coefficients.

Each prior keeps a small latent state and exposes two operations: an updater
that redraws the latent scales given the current coefficients, and a map from
the state to the diagonal of the prior covariance used by the coefficient draw.

Available priors
----------------
none
    Fixed diffuse variance for every coefficient.
ssvs
    Two-component spike-and-slab Gaussian mixture with Bernoulli indicators.
ng
    Normal-Gamma global-local prior.
dl
    Dirichlet-Laplace global-local prior.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.special import expit

from .distributions import sample_bernoulli, sample_gamma, sample_gig
from .errors import CalibrationError, ValidationError

__all__ = [
    "PriorConfig",
    "NgState",
    "DlState",
    "SsvsState",
    "NoneState",
    "CHI_FLOOR",
    "ABS_BETA_FLOOR",
    "init_prior_state",
    "update_prior",
    "prior_diag",
    "ng_update",
    "ng_prior_diag",
    "dl_update",
    "dl_prior_diag",
    "ssvs_calibrate",
    "ssvs_inclusion_prob",
    "ssvs_update",
    "ssvs_prior_diag",
    "none_prior_diag",
    "prior_label",
]

PRIOR_KINDS = ("none", "ssvs", "ng", "dl")

CHI_FLOOR = 1e-16
ABS_BETA_FLOOR = 1e-10
PHI_FLOOR = 1e-12
# keeps 1/variance and its square representable
VARIANCE_FLOOR = 1e-150


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters for all priors; only those of ``kind`` are used.

    ``dl_a=None`` means the default ``1/K`` with ``K`` the number of shrunk
    coefficients.  ``ng_variance`` selects how NG local scales map to prior
    variances: ``"psi"`` uses ``psi_r`` directly (the value the GIG/Gamma
    conditionals are derived for), ``"scaled"`` uses ``2 psi_r / lambda2``.
    """

    kind: str = "ng"
    ng_theta: float = 0.1
    ng_d0: float = 0.01
    ng_d1: float = 0.01
    ng_variance: str = "psi"
    dl_a: float | None = None
    ssvs_omega: float = 0.5
    ssvs_spike_mult: float = 0.01
    ssvs_slab_mult: float = 100.0
    ssvs_pre_iter: int = 1000
    ssvs_pre_burn: int = 500
    none_variance: float = 1000.0
    shrink_intercept: bool = True

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValidationError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        for name in ("ng_theta", "ng_d0", "ng_d1", "ssvs_spike_mult", "ssvs_slab_mult", "none_variance"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive number, got {v!r}")
        if self.dl_a is not None and not (0 < self.dl_a <= 1):
            raise ValidationError(f"dl_a must lie in (0, 1], got {self.dl_a!r}")
        if not (0 < self.ssvs_omega <= 1):
            raise ValidationError(f"ssvs_omega must lie in (0, 1], got {self.ssvs_omega!r}")
        if self.ssvs_spike_mult >= self.ssvs_slab_mult:
            raise ValidationError("ssvs_spike_mult must be smaller than ssvs_slab_mult")
        if self.ng_variance not in ("psi", "scaled"):
            raise ValidationError(f"ng_variance must be 'psi' or 'scaled', got {self.ng_variance!r}")
        if not 0 < self.ssvs_pre_burn < self.ssvs_pre_iter:
            raise ValidationError("SSVS pre-run needs 0 < ssvs_pre_burn < ssvs_pre_iter")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValidationError(f"unknown prior settings: {sorted(unknown)}")
        return cls(**d)

    def dl_a_for(self, k):
        return 1.0 / k if self.dl_a is None else float(self.dl_a)


def prior_label(cfg):
    """Human-readable column label such as ``NG (θ = 1)``."""
    if cfg.kind == "none":
        return "None"
    if cfg.kind == "ssvs":
        return "SSVS"
    if cfg.kind == "ng":
        return f"NG (θ = {cfg.ng_theta:g})"
    a = "1/K" if cfg.dl_a is None else f"{cfg.dl_a:g}"
    return f"DL (a = {a})"


@dataclass
class NoneState:
    k: int


@dataclass
class NgState:
    psi: np.ndarray
    lambda2: float


@dataclass
class DlState:
    varphi: np.ndarray
    phi: np.ndarray
    tau: float


@dataclass
class SsvsState:
    delta: np.ndarray
    s0: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        if np.any(self.s0 <= 0) or np.any(self.s0 >= self.s1):
            raise ValidationError("SSVS scales must satisfy 0 < s0 < s1 elementwise")


def init_prior_state(cfg, k, s0=None, s1=None):
    """Starting latent state for ``k`` shrunk coefficients."""
    if cfg.kind == "none":
        return NoneState(k)
    if cfg.kind == "ng":
        return NgState(psi=np.ones(k), lambda2=1.0)
    if cfg.kind == "dl":
        return DlState(varphi=np.ones(k), phi=np.full(k, 1.0 / k), tau=1.0)
    if s0 is None or s1 is None:
        raise ValidationError("SSVS prior needs calibrated scales s0 and s1")
    return SsvsState(delta=np.ones(k, dtype=np.int8), s0=np.asarray(s0, float), s1=np.asarray(s1, float))


# --- Normal-Gamma ---------------------------------------------------------


def ng_update(beta, state, cfg, rng):
    """Redraw local scales ``psi`` then the global ``lambda2``."""
    beta = np.asarray(beta, float)
    k = beta.size
    theta = cfg.ng_theta
    chi = np.maximum(beta**2, CHI_FLOOR)
    psi = sample_gig(np.full(k, theta - 0.5), chi, np.full(k, theta * state.lambda2), rng)
    lambda2 = float(sample_gamma(cfg.ng_d0 + theta * k, cfg.ng_d1 + 0.5 * theta * psi.sum(), rng))
    return NgState(psi=psi, lambda2=lambda2)


def ng_gig_params(beta, state, cfg):
    """``(zeta, chi, varrho)`` of the local-scale conditional, for inspection."""
    beta = np.asarray(beta, float)
    return (cfg.ng_theta - 0.5, np.maximum(beta**2, CHI_FLOOR), cfg.ng_theta * state.lambda2)


def ng_prior_diag(state, cfg):
    if cfg.ng_variance == "scaled":
        return 2.0 * state.psi / state.lambda2
    return state.psi.copy()


# --- Dirichlet-Laplace ----------------------------------------------------


def dl_update(beta, state, cfg, rng):
    """Blocked draw of ``(phi, tau, varphi)`` given the coefficients.

    ``phi`` is drawn with ``tau`` and ``varphi`` integrated out (normalized
    GIG auxiliaries), then ``tau`` given ``phi``, then ``varphi`` given both.
    Drawing in this order samples the three blocks jointly from their
    conditional posterior.
    """
    absb = np.maximum(np.abs(np.asarray(beta, float)), ABS_BETA_FLOOR)
    k = absb.size
    a = cfg.dl_a_for(k)

    t = sample_gig(np.full(k, a - 1.0), 2.0 * absb, np.ones(k), rng)
    phi = t / t.sum()
    if np.any(phi < PHI_FLOOR):
        phi = np.maximum(phi, PHI_FLOOR)
        phi /= phi.sum()

    tau = sample_gig(k * (a - 1.0), 2.0 * float(np.sum(absb / phi)), 1.0, rng)

    mu = phi * tau / absb
    varphi = 1.0 / sample_gig(np.full(k, -0.5), np.ones(k), mu**-2.0, rng)
    return DlState(varphi=varphi, phi=phi, tau=tau)


def dl_prior_diag(state, cfg=None):
    return state.varphi * state.phi**2 * state.tau**2


# --- SSVS -----------------------------------------------------------------


def ssvs_calibrate(beta_draws, cfg):
    """Spike and slab variances from a preliminary unshrunk posterior sample.

    Parameters
    ----------
    beta_draws : ndarray, shape (T, K)
        Draws from a no-shrinkage run; their marginal variances estimate
        ``diag(Sigma_hat)``.

    Returns
    -------
    s0, s1 : ndarray
    """
    draws = np.asarray(beta_draws, float)
    if draws.ndim != 2 or draws.shape[0] < 2:
        raise CalibrationError("need a (T, K) array of at least two draws")
    return ssvs_scales(np.var(draws, axis=0, ddof=1), cfg)


def ssvs_scales(diag_sigma, cfg):
    d = np.asarray(diag_sigma, float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise CalibrationError("posterior variance estimate has a non-positive or non-finite diagonal")
    return cfg.ssvs_spike_mult * d, cfg.ssvs_slab_mult * d


def ssvs_log_odds(beta, s0, s1, omega):
    """Log posterior odds of slab versus spike; ``s0``, ``s1`` are variances."""
    beta = np.asarray(beta, float)
    b2 = beta**2
    with np.errstate(divide="ignore"):
        log_u1 = math.log(omega) - 0.5 * np.log(s1) - 0.5 * b2 / s1
        log_u0 = np.log1p(-omega) - 0.5 * np.log(s0) - 0.5 * b2 / s0
    return log_u1 - log_u0


def ssvs_inclusion_prob(beta, s0, s1, omega):
    return expit(ssvs_log_odds(beta, s0, s1, omega))


def ssvs_update(beta, state, cfg, rng):
    p = ssvs_inclusion_prob(beta, state.s0, state.s1, cfg.ssvs_omega)
    delta = sample_bernoulli(np.atleast_1d(p), rng)
    return replace(state, delta=delta)


def ssvs_prior_diag(state, cfg=None):
    return np.where(state.delta == 1, state.s1, state.s0)


def none_prior_diag(k, cfg):
    return np.full(int(k), float(cfg.none_variance))


# --- dispatch -------------------------------------------------------------


def shrunk_index(cfg, k):
    """Indices of the coefficients the prior applies to (intercept is column 0)."""
    return np.arange(k) if cfg.shrink_intercept else np.arange(1, k)


def update_prior(state, beta_shrunk, cfg, rng):
    if isinstance(state, NgState):
        return ng_update(beta_shrunk, state, cfg, rng)
    if isinstance(state, DlState):
        return dl_update(beta_shrunk, state, cfg, rng)
    if isinstance(state, SsvsState):
        return ssvs_update(beta_shrunk, state, cfg, rng)
    return state


def prior_diag(state, cfg):
    """Prior variances for the shrunk coefficients, floored to stay invertible."""
    if isinstance(state, NgState):
        d = ng_prior_diag(state, cfg)
    elif isinstance(state, DlState):
        d = dl_prior_diag(state, cfg)
    elif isinstance(state, SsvsState):
        d = ssvs_prior_diag(state, cfg)
    else:
        d = none_prior_diag(state.k, cfg)
    return np.maximum(d, VARIANCE_FLOOR)
