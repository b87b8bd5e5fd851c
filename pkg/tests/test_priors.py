import math

import numpy as np
import pytest
from scipy import special, stats

from mess_shrink.distributions import make_rng, sample_gamma, sample_gig
from mess_shrink.errors import CalibrationError, ValidationError
from mess_shrink.priors import (
    VARIANCE_FLOOR,
    DlState,
    NgState,
    NoneState,
    PriorConfig,
    SsvsState,
    dl_update,
    init_prior_state,
    ng_gig_params,
    ng_update,
    prior_diag,
    prior_label,
    shrunk_index,
    ssvs_calibrate,
    ssvs_inclusion_prob,
    ssvs_log_odds,
    update_prior,
)

from oracles import batch_means_se


class TestConfig:
    def test_defaults(self):
        c = PriorConfig()
        assert c.kind == "ng" and c.ng_theta == 0.1 and c.ng_d0 == c.ng_d1 == 0.01
        assert c.dl_a_for(40) == 1 / 40

    @pytest.mark.parametrize(
        "kw",
        [
            {"kind": "horseshoe"},
            {"ng_theta": 0.0},
            {"dl_a": 1.5},
            {"ssvs_omega": 0.0},
            {"ssvs_spike_mult": 200.0},
            {"ng_variance": "other"},
            {"ssvs_pre_burn": 1000},
            {"none_variance": float("inf")},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            PriorConfig(**kw)

    def test_dict_roundtrip(self):
        c = PriorConfig(kind="dl", dl_a=0.5)
        assert PriorConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ValidationError):
            PriorConfig.from_dict({"bogus": 1})

    def test_labels(self):
        assert prior_label(PriorConfig(kind="ng", ng_theta=1)) == "NG (θ = 1)"
        assert prior_label(PriorConfig(kind="dl")) == "DL (a = 1/K)"
        assert prior_label(PriorConfig(kind="dl", dl_a=0.5)) == "DL (a = 0.5)"
        assert prior_label(PriorConfig(kind="none")) == "None"


class TestNormalGamma:
    def test_gig_parameters(self):
        cfg = PriorConfig(ng_theta=0.3)
        z, chi, rho = ng_gig_params(np.array([0.0, 2.0]), NgState(np.ones(2), 4.0), cfg)
        assert z == pytest.approx(-0.2)
        assert chi.tolist() == [1e-16, 4.0]
        assert rho == pytest.approx(1.2)

    def test_matches_explicit_conditionals(self):
        cfg = PriorConfig(ng_theta=0.7, ng_d0=2.0, ng_d1=3.0)
        beta = np.array([0.5, -1.0, 0.0, 3.0])
        state = NgState(np.ones(4), 2.0)
        new = ng_update(beta, state, cfg, make_rng(4))
        rng = make_rng(4)
        psi = sample_gig(np.full(4, 0.7 - 0.5), np.maximum(beta**2, 1e-16), np.full(4, 0.7 * 2.0), rng)
        lam = sample_gamma(2.0 + 0.7 * 4, 3.0 + 0.5 * 0.7 * psi.sum(), rng)
        assert np.array_equal(new.psi, psi) and new.lambda2 == lam

    def test_prior_only_gibbs_recovers_prior(self):
        # beta_r | psi ~ N(0, psi), psi_r ~ G(theta, theta lambda2 / 2), lambda2 ~ G(d0, d1)
        theta, d0, d1, k = 1.0, 3.0, 2.0, 4
        cfg = PriorConfig(ng_theta=theta, ng_d0=d0, ng_d1=d1)
        rng = make_rng(10)
        state = NgState(np.ones(k), 1.0)
        n = 20_000
        log_lam, psi0 = np.empty(n), np.empty(n)
        for t in range(n):
            beta = rng.standard_normal(k) * np.sqrt(state.psi)
            state = ng_update(beta, state, cfg, rng)
            log_lam[t] = math.log(state.lambda2)
            psi0[t] = state.psi[0]
        target = special.digamma(d0) - math.log(d1)
        assert abs(log_lam.mean() - target) < 4 * batch_means_se(log_lam)
        # E[psi] = E[2 / lambda2] = 2 d1 / (d0 - 1)
        assert abs(psi0.mean() - 2 * d1 / (d0 - 1)) < 4 * batch_means_se(psi0)

    def test_scaled_variance_mode(self):
        st = NgState(np.array([1.0, 2.0]), 4.0)
        assert prior_diag(st, PriorConfig(ng_variance="scaled")).tolist() == [0.5, 1.0]
        assert prior_diag(st, PriorConfig()).tolist() == [1.0, 2.0]
        scaled = PriorConfig(ng_variance="scaled")
        assert prior_diag(NgState(np.array([1.0]), 2.0), scaled).tolist() == [1.0]
        assert prior_diag(NgState(np.array([0.5, 2.0]), 1.0), scaled).tolist() == [1.0, 4.0]


class TestDirichletLaplace:
    def test_state_invariants(self):
        cfg = PriorConfig(kind="dl")
        rng = make_rng(1)
        beta = np.array([0.0, 1e-300, 2.0, -3.0, 1e-5])
        state = init_prior_state(cfg, 5)
        for _ in range(200):
            state = dl_update(beta, state, cfg, rng)
            assert np.isclose(state.phi.sum(), 1.0, atol=1e-12)
            assert np.all(state.phi > 0) and state.tau > 0 and np.all(state.varphi > 0)
            assert np.all(np.isfinite(prior_diag(state, cfg)))

    def test_prior_only_gibbs_recovers_prior(self):
        # phi ~ Dir(a), tau ~ G(K a, 1/2), varphi_r ~ Exp(1/2), beta_r ~ N(0, varphi phi^2 tau^2)
        a, k = 0.5, 4
        cfg = PriorConfig(kind="dl", dl_a=a)
        rng = make_rng(12)
        state = init_prior_state(cfg, k)
        n = 12_000
        log_tau, log_phi0 = np.empty(n), np.empty(n)
        for t in range(n):
            beta = rng.standard_normal(k) * np.sqrt(prior_diag(state, cfg))
            state = dl_update(beta, state, cfg, rng)
            log_tau[t] = math.log(state.tau)
            log_phi0[t] = math.log(state.phi[0])
        target_tau = special.digamma(k * a) + math.log(2.0)
        target_phi = special.digamma(a) - special.digamma(k * a)
        assert abs(log_tau.mean() - target_tau) < 4 * batch_means_se(log_tau)
        assert abs(log_phi0.mean() - target_phi) < 4 * batch_means_se(log_phi0)


class TestSsvs:
    def test_calibration(self):
        draws = np.random.default_rng(0).standard_normal((500, 3)) * [1.0, 2.0, 3.0]
        s0, s1 = ssvs_calibrate(draws, PriorConfig(kind="ssvs"))
        v = draws.var(axis=0, ddof=1)
        assert np.allclose(s0, 0.01 * v) and np.allclose(s1, 100 * v)
        with pytest.raises(CalibrationError):
            ssvs_calibrate(np.ones((10, 2)), PriorConfig(kind="ssvs"))

    def test_log_odds_against_normal_densities(self):
        beta = np.array([0.0, 0.05, -0.3, 2.0])
        s0, s1, w = np.full(4, 0.01), np.full(4, 4.0), 0.3
        num = w * stats.norm.pdf(beta, scale=np.sqrt(s1))
        den = (1 - w) * stats.norm.pdf(beta, scale=np.sqrt(s0))
        assert np.allclose(ssvs_log_odds(beta, s0, s1, w), np.log(num / den), rtol=1e-12)
        assert np.allclose(ssvs_inclusion_prob(beta, s0, s1, w), num / (num + den), rtol=1e-10)

    def test_omega_one(self):
        p = ssvs_inclusion_prob(np.array([0.0]), np.array([0.01]), np.array([1.0]), 1.0)
        assert p[0] == 1.0

    def test_prior_only_gibbs_inclusion_rate(self):
        cfg = PriorConfig(kind="ssvs", ssvs_omega=0.3)
        state = init_prior_state(cfg, 3, s0=np.full(3, 0.5), s1=np.full(3, 2.0))
        rng = make_rng(5)
        n = 20_000
        inc = np.empty(n)
        for t in range(n):
            beta = rng.standard_normal(3) * np.sqrt(prior_diag(state, cfg))
            state = update_prior(state, beta, cfg, rng)
            inc[t] = state.delta.mean()
        assert abs(inc.mean() - 0.3) < 4 * batch_means_se(inc)

    def test_scale_order(self):
        with pytest.raises(ValidationError):
            SsvsState(np.ones(2, dtype=np.int8), np.array([1.0, 1.0]), np.array([0.5, 2.0]))
        with pytest.raises(ValidationError):
            init_prior_state(PriorConfig(kind="ssvs"), 2)


def test_none_prior():
    cfg = PriorConfig(kind="none", none_variance=50.0)
    st = init_prior_state(cfg, 3)
    assert isinstance(st, NoneState)
    assert update_prior(st, np.zeros(3), cfg, make_rng(0)) is st
    assert prior_diag(st, cfg).tolist() == [50.0] * 3


def test_variance_floor():
    st = DlState(varphi=np.array([1e-200, 1.0]), phi=np.array([0.5, 0.5]), tau=1.0)
    d = prior_diag(st, PriorConfig(kind="dl"))
    assert d[0] == VARIANCE_FLOOR and d[1] == 0.25


def test_shrunk_index():
    assert shrunk_index(PriorConfig(), 4).tolist() == [0, 1, 2, 3]
    assert shrunk_index(PriorConfig(shrink_intercept=False), 4).tolist() == [1, 2, 3]
