"""Metropolis-within-Gibbs sampler for the shrinkage MESS model.

Model::

    exp(rho W) y = X beta + eps,    eps ~ N(0, sigma2 I)

Each sweep draws ``sigma2``, then the prior's latent scales, then ``beta``,
then ``rho`` (a random-walk Metropolis step).  The proposal scale for ``rho``
is adapted during the first half of the burn-in and frozen afterwards.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property

import numpy as np

from .distributions import cholesky_jitter, make_rng, sample_inverse_gamma, sample_mvn_precision
from .errors import ChainAbortedError, NumericalError, ValidationError
from .priors import (
    PriorConfig,
    init_prior_state,
    prior_diag,
    prior_label,
    shrunk_index,
    ssvs_calibrate,
    update_prior,
)
from .spatial import SpatialWeights, mess_apply, sar_equivalent

__all__ = [
    "ModelData",
    "SamplerConfig",
    "Tuner",
    "ChainState",
    "PosteriorDraws",
    "SummaryRow",
    "residuals",
    "draw_sigma2",
    "draw_beta",
    "log_post_rho",
    "mh_step_rho",
    "tune_proposal",
    "init_chain",
    "sweep",
    "run_mcmc",
    "calibrate_ssvs",
    "fit",
    "summarize",
]


@dataclass(frozen=True, eq=False)
class ModelData:
    """Response, design (intercept in column 0) and spatial weights."""

    y: np.ndarray
    X: np.ndarray
    W: SpatialWeights
    column_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1:
            raise ValidationError(f"y must be a vector, got shape {y.shape}")
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValidationError(f"X must have shape ({y.size}, K), got {X.shape}")
        if self.W.n != y.size:
            raise ValidationError(f"weights have n={self.W.n} but there are {y.size} observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValidationError("y and X must be finite")
        if not np.all(X[:, 0] == 1.0):
            raise ValidationError("first column of X must be the constant 1")
        names = tuple(self.column_names) or ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError(f"{len(names)} column names for {X.shape[1]} columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self):
        return self.y.size

    @property
    def k(self):
        return self.X.shape[1]

    @cached_property
    def xtx(self):
        return self.X.T @ self.X

    def with_response(self, y):
        return ModelData(y, self.X, self.W, self.column_names)


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, hyperparameters of ``sigma2`` and ``rho``, and MH tuning.

    ``rho_prior_var`` is the variance ``c`` of the ``N(0, c)`` prior on rho;
    ``sigma_a`` and ``sigma_b`` are the inverse-Gamma shape and scale.
    ``fixed_rho`` holds rho at a given value (a dogmatic prior) and skips
    the Metropolis step.
    """

    n_iter: int = 2000
    n_burn: int = 1000
    thin: int = 1
    rho_prior_var: float = 10.0
    sigma_a: float = 0.01
    sigma_b: float = 0.01
    initial_proposal_sd: float = 0.1
    target_accept: tuple = (0.2, 0.4)
    tune_every: int = 50
    tune_factor: float = 1.1
    seed: int = 0
    fixed_rho: float | None = None

    def __post_init__(self):
        if not (0 <= self.n_burn < self.n_iter):
            raise ValidationError(f"need 0 <= n_burn < n_iter, got {self.n_burn}, {self.n_iter}")
        if self.thin < 1:
            raise ValidationError(f"thin must be >= 1, got {self.thin}")
        for name in ("rho_prior_var", "sigma_a", "sigma_b", "initial_proposal_sd"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        lo, hi = self.target_accept
        if not 0 <= lo < hi <= 1:
            raise ValidationError(f"invalid target acceptance interval {self.target_accept}")
        if self.tune_every < 1 or not self.tune_factor > 1:
            raise ValidationError("tune_every must be >= 1 and tune_factor > 1")
        if self.fixed_rho is not None and not math.isfinite(self.fixed_rho):
            raise ValidationError("fixed_rho must be finite")
        object.__setattr__(self, "target_accept", (float(lo), float(hi)))

    @property
    def n_keep(self):
        return -(-(self.n_iter - self.n_burn) // self.thin)

    def to_dict(self):
        d = asdict(self)
        d["target_accept"] = list(self.target_accept)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown sampler settings: {sorted(unknown)}")
        d = dict(d)
        if "target_accept" in d:
            d["target_accept"] = tuple(d["target_accept"])
        return cls(**d)


@dataclass
class Tuner:
    sd: float
    accepts: int = 0
    proposals: int = 0
    total_accepts: int = 0
    total_proposals: int = 0
    history: list = field(default_factory=list)

    def record(self, accepted):
        self.accepts += int(accepted)
        self.proposals += 1
        self.total_accepts += int(accepted)
        self.total_proposals += 1


@dataclass
class ChainState:
    beta: np.ndarray
    sigma2: float
    rho: float
    prior_state: object
    tuner: Tuner
    rng: np.random.Generator
    sy: np.ndarray
    """Cached ``exp(rho W) y`` for the current ``rho``."""


@dataclass
class PosteriorDraws:
    column_names: tuple
    beta: np.ndarray
    sigma2: np.ndarray
    rho: np.ndarray
    accept_rate: float
    wall_time: float
    proposal_sd: list
    prior_variance_mean: np.ndarray
    config: dict

    @property
    def n_draws(self):
        return self.sigma2.size

    def to_csv(self, path):
        """One row per retained draw: design columns, then sigma2 and rho."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(list(self.column_names) + ["sigma2", "rho"])
            for b, s, r in zip(self.beta, self.sigma2, self.rho):
                out.writerow([repr(float(v)) for v in b] + [repr(float(s)), repr(float(r))])


# --- conditional draws ----------------------------------------------------


def residuals(data, beta, rho, sy=None):
    """``exp(rho W) y - X beta``; pass ``sy`` to reuse a cached filter."""
    if sy is None:
        sy = mess_apply(data.W, rho, data.y)
    return sy - data.X @ np.asarray(beta, float)


def draw_sigma2(eps, cfg, rng):
    eps = np.asarray(eps, float)
    shape = cfg.sigma_a + 0.5 * eps.size
    with np.errstate(over="ignore"):
        scale = cfg.sigma_b + 0.5 * float(eps @ eps)
    if not math.isfinite(scale):
        raise NumericalError("residual sum of squares is not finite")
    return float(sample_inverse_gamma(shape, scale, rng))


def beta_precision(data, sigma2, prior_var):
    """Posterior precision ``diag(1/prior_var) + X'X / sigma2``."""
    P = data.xtx / sigma2
    idx = np.diag_indices_from(P)
    P[idx] += 1.0 / np.asarray(prior_var, float)
    return P


def draw_beta(data, rho, sigma2, prior_var, rng, sy=None):
    """Gaussian draw of ``beta`` given ``rho``, ``sigma2`` and the prior variances.

    The prior mean is zero, so the linear term is ``X' exp(rho W) y / sigma2``.
    """
    if sy is None:
        sy = mess_apply(data.W, rho, data.y)
    P = beta_precision(data, sigma2, prior_var)
    b = data.X.T @ sy / sigma2
    return sample_mvn_precision(b, P, rng, chol=cholesky_jitter(P))


def log_post_rho(data, beta, sigma2, rho, cfg, sy=None, xb=None):
    """Unnormalized log conditional of ``rho``.

    The Jacobian ``log det exp(rho W) = rho tr(W)`` vanishes because ``W``
    has a zero diagonal.
    """
    if sy is None:
        sy = mess_apply(data.W, rho, data.y)
    if xb is None:
        xb = data.X @ beta
    e = sy - xb
    return -0.5 * float(e @ e) / sigma2 - 0.5 * rho * rho / cfg.rho_prior_var


def mh_step_rho(data, beta, sigma2, rho, proposal_sd, cfg, rng, sy=None):
    """One random-walk Metropolis update of ``rho``.

    Returns
    -------
    rho : float
    accepted : bool
    sy : ndarray
        ``exp(rho W) y`` for the returned ``rho``.
    """
    if sy is None:
        sy = mess_apply(data.W, rho, data.y)
    xb = data.X @ beta
    prop = rho + proposal_sd * rng.standard_normal()
    u = rng.random()
    try:
        sy_prop = mess_apply(data.W, prop, data.y)
    except NumericalError:
        return rho, False, sy
    log_ratio = log_post_rho(data, beta, sigma2, prop, cfg, sy_prop, xb) - log_post_rho(
        data, beta, sigma2, rho, cfg, sy, xb
    )
    if u == 0.0 or math.log(u) < log_ratio:
        return prop, True, sy_prop
    return rho, False, sy


def tune_proposal(tuner, within_tuning, cfg):
    """Adjust the proposal scale once a window of ``tune_every`` proposals is full.

    Outside the tuning phase the scale is frozen and the tuner is returned
    unchanged.
    """
    if not within_tuning or tuner.proposals < cfg.tune_every:
        return tuner
    rate = tuner.accepts / tuner.proposals
    lo, hi = cfg.target_accept
    if rate < lo:
        tuner.sd /= cfg.tune_factor
    elif rate > hi:
        tuner.sd *= cfg.tune_factor
    tuner.accepts = 0
    tuner.proposals = 0
    tuner.history.append(tuner.sd)
    return tuner


# --- chain driver ---------------------------------------------------------


def init_chain(data, prior_cfg, sampler_cfg, rng, ssvs_scales=None):
    """Neutral starting values: ``beta = 0``, ``sigma2 = 1``, ``rho = 0`` unless fixed."""
    idx = shrunk_index(prior_cfg, data.k)
    rho = 0.0 if sampler_cfg.fixed_rho is None else float(sampler_cfg.fixed_rho)
    s0, s1 = ssvs_scales if ssvs_scales is not None else (None, None)
    state = init_prior_state(prior_cfg, idx.size, s0=s0, s1=s1)
    return ChainState(
        beta=np.zeros(data.k),
        sigma2=1.0,
        rho=rho,
        prior_state=state,
        tuner=Tuner(sd=sampler_cfg.initial_proposal_sd),
        rng=rng,
        sy=mess_apply(data.W, rho, data.y),
    )


def full_prior_variance(state, prior_cfg, k):
    idx = shrunk_index(prior_cfg, k)
    d = np.full(k, float(prior_cfg.none_variance))
    d[idx] = prior_diag(state.prior_state, prior_cfg)
    return d


def sweep(state, data, prior_cfg, sampler_cfg, trace=None):
    """Advance the chain by one full Gibbs sweep, in place.

    Returns whether the ``rho`` proposal was accepted.
    """
    rng = state.rng
    eps = state.sy - data.X @ state.beta
    state.sigma2 = draw_sigma2(eps, sampler_cfg, rng)
    if trace is not None:
        trace.append("sigma2")

    idx = shrunk_index(prior_cfg, data.k)
    state.prior_state = update_prior(state.prior_state, state.beta[idx], prior_cfg, rng)
    if trace is not None:
        trace.append("prior")

    d = full_prior_variance(state, prior_cfg, data.k)
    state.beta = draw_beta(data, state.rho, state.sigma2, d, rng, sy=state.sy)
    if trace is not None:
        trace.append("beta")

    accepted = False
    if sampler_cfg.fixed_rho is None:
        state.rho, accepted, state.sy = mh_step_rho(
            data, state.beta, state.sigma2, state.rho, state.tuner.sd, sampler_cfg, rng, sy=state.sy
        )
        state.tuner.record(accepted)
    if trace is not None:
        trace.append("rho")
    return accepted


def _check_finite(state, t):
    ok = (
        math.isfinite(state.sigma2)
        and state.sigma2 > 0
        and math.isfinite(state.rho)
        and np.all(np.isfinite(state.beta))
    )
    if not ok:
        raise ChainAbortedError(f"non-finite chain state at sweep {t}", sweep=t)


def run_mcmc(data, prior_cfg, sampler_cfg, rng=None, ssvs_scales=None, trace=None):
    """Run one chain and collect the retained draws.

    Parameters
    ----------
    data : ModelData
    prior_cfg : PriorConfig
    sampler_cfg : SamplerConfig
    rng : numpy.random.Generator, optional
        Defaults to a stream derived from ``sampler_cfg.seed``.
    ssvs_scales : tuple of ndarray, optional
        Calibrated ``(s0, s1)``; required for the SSVS prior.
    trace : list, optional
        Receives the update tags of every sweep, in execution order.

    Returns
    -------
    PosteriorDraws
    """
    if rng is None:
        rng = make_rng(sampler_cfg.seed)
    cfg = sampler_cfg
    start = time.perf_counter()
    state = init_chain(data, prior_cfg, cfg, rng, ssvs_scales)
    n_keep = cfg.n_keep
    k = data.k
    beta_out = np.empty((n_keep, k))
    sigma_out = np.empty(n_keep)
    rho_out = np.empty(n_keep)
    var_sum = np.zeros(k)
    tune_until = cfg.n_burn // 2
    post_acc = 0
    j = 0
    for t in range(cfg.n_iter):
        try:
            accepted = sweep(state, data, prior_cfg, cfg, trace=trace)
        except NumericalError as exc:
            raise ChainAbortedError(f"chain aborted at sweep {t}: {exc}", sweep=t) from exc
        _check_finite(state, t)
        if t < tune_until:
            tune_proposal(state.tuner, True, cfg)
        if t >= cfg.n_burn:
            post_acc += accepted
            if (t - cfg.n_burn) % cfg.thin == 0:
                beta_out[j] = state.beta
                sigma_out[j] = state.sigma2
                rho_out[j] = state.rho
                var_sum += full_prior_variance(state, prior_cfg, k)
                j += 1
    return PosteriorDraws(
        column_names=data.column_names,
        beta=beta_out,
        sigma2=sigma_out,
        rho=rho_out,
        accept_rate=post_acc / (cfg.n_iter - cfg.n_burn),
        wall_time=time.perf_counter() - start,
        proposal_sd=[cfg.initial_proposal_sd] + list(state.tuner.history),
        prior_variance_mean=var_sum / n_keep,
        config={"prior": prior_cfg.to_dict(), "sampler": cfg.to_dict()},
    )


def calibrate_ssvs(data, prior_cfg, sampler_cfg, rng):
    """Spike/slab variances from a short unshrunk pre-run on the same data."""
    pre_prior = PriorConfig(kind="none", none_variance=prior_cfg.none_variance)
    pre_cfg = SamplerConfig(
        **{
            **sampler_cfg.to_dict(),
            "n_iter": prior_cfg.ssvs_pre_iter,
            "n_burn": prior_cfg.ssvs_pre_burn,
            "thin": 1,
            "target_accept": sampler_cfg.target_accept,
        }
    )
    draws = run_mcmc(data, pre_prior, pre_cfg, rng=rng)
    idx = shrunk_index(prior_cfg, data.k)
    return ssvs_calibrate(draws.beta[:, idx], prior_cfg)


def fit(data, prior_cfg, sampler_cfg, rng=None, trace=None):
    """Run a chain, calibrating SSVS scales first when that prior is selected.

    For SSVS the pre-run is included in the reported wall time.
    """
    if rng is None:
        rng = make_rng(sampler_cfg.seed)
    if prior_cfg.kind != "ssvs":
        return run_mcmc(data, prior_cfg, sampler_cfg, rng=rng, trace=trace)
    start = time.perf_counter()
    scales = calibrate_ssvs(data, prior_cfg, sampler_cfg, rng)
    draws = run_mcmc(data, prior_cfg, sampler_cfg, rng=rng, ssvs_scales=scales, trace=trace)
    draws.wall_time = time.perf_counter() - start
    draws.config["ssvs_s0"] = scales[0].tolist()
    draws.config["ssvs_s1"] = scales[1].tolist()
    return draws


# --- summaries ------------------------------------------------------------


@dataclass
class SummaryRow:
    name: str
    mean: float
    median: float
    sd: float
    lower: float
    upper: float
    significant: bool


def summarize_draws(name, x, cred_level=0.8):
    x = np.asarray(x, float)
    tail = 0.5 * (1.0 - cred_level)
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return SummaryRow(
        name=name,
        mean=float(np.mean(x)),
        median=float(np.median(x)),
        sd=sd,
        lower=float(lo),
        upper=float(hi),
        significant=bool(lo > 0 or hi < 0),
    )


def summarize(draws, cred_level=0.8):
    """Posterior summary table with equal-tailed credible intervals.

    Returns a dict with ``rows`` (coefficients, then ``sigma2`` and ``rho``),
    the credible level and ``xi``, the SAR-equivalent of the posterior mean
    of ``rho``.
    """
    if not 0 < cred_level < 1:
        raise ValidationError(f"cred_level must lie in (0, 1), got {cred_level}")
    rows = [summarize_draws(n, draws.beta[:, j], cred_level) for j, n in enumerate(draws.column_names)]
    rows.append(summarize_draws("sigma2", draws.sigma2, cred_level))
    rho_row = summarize_draws("rho", draws.rho, cred_level)
    rows.append(rho_row)
    return {"rows": rows, "cred_level": cred_level, "xi": sar_equivalent(rho_row.mean)}


def summary_json(draws, summary, label):
    return {
        "prior": label,
        "cred_level": summary["cred_level"],
        "n_draws": draws.n_draws,
        "accept_rate": draws.accept_rate,
        "wall_time_seconds": draws.wall_time,
        "proposal_sd_trajectory": draws.proposal_sd,
        "xi_sar_equivalent": summary["xi"],
        "parameters": [asdict(r) for r in summary["rows"]],
        "config": draws.config,
    }


def format_table(summary, label):
    """Plain-text table: mean, SD and a ``*`` for credible-interval significance."""
    rows = summary["rows"]
    width = max(12, max(len(r.name) for r in rows) + 2)
    pct = round(summary["cred_level"] * 100)
    lines = [
        f"{'Variable':<{width}}{label:>24}",
        f"{'':<{width}}{'Mean':>12}{'SD':>12}",
    ]
    lines.append("-" * (width + 24))
    for r in rows:
        if r.name == "sigma2":
            lines.append("-" * (width + 24))
        star = "*" if r.significant else " "
        lines.append(f"{r.name:<{width}}{r.mean:>11.3f}{star}{r.sd:>12.3f}")
    lines.append("-" * (width + 24))
    lines.append(f"{'xi = 1 - exp(rho)':<{width}}{summary['xi']:>11.3f}")
    lines.append(f"* {pct}% equal-tailed credible interval excludes zero")
    return "\n".join(lines) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ += ["summary_json", "format_table", "write_json", "prior_label"]
