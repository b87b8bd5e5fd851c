import math

import numpy as np
import pytest

from mess_shrink.distributions import make_rng
from mess_shrink.errors import ValidationError
from mess_shrink.priors import PriorConfig
from mess_shrink.sampler import SamplerConfig
from mess_shrink.simstudy import (
    METRICS,
    DgpConfig,
    ReplicationResult,
    StudyReport,
    aggregate,
    default_scenarios,
    generate_dataset,
    read_study_csv,
    report_tables,
    rmse_draws,
    rmse_point,
    run_study,
)
from mess_shrink.spatial import mess_apply

TINY = SamplerConfig(n_iter=120, n_burn=60)


class TestDgp:
    def test_invalid(self):
        with pytest.raises(ValidationError):
            DgpConfig(k=10, q=10)
        with pytest.raises(ValidationError):
            DgpConfig(n=1)

    def test_sparsity_many(self):
        for i in range(1000):
            k, q = [(50, 10), (100, 20), (12, 3), (8, 0)][i % 4]
            ds = generate_dataset(DgpConfig(n=30, k=k, q=q), make_rng(i))
            assert np.count_nonzero(ds.beta_true[1:]) == q
            assert ds.beta_true[0] != 0
            assert np.all(ds.beta_true[1 + q :] == 0)

    def test_block_variances(self):
        # first q/2 slopes have variance 1, the next q/2 and the intercept variance 5
        small, big, icpt = [], [], []
        for i in range(3000):
            b = generate_dataset(DgpConfig(n=10, k=12, q=10, knn=2), make_rng(77, i)).beta_true
            small.extend(b[1:6])
            big.extend(b[6:11])
            icpt.append(b[0])
        assert np.var(small) == pytest.approx(1.0, rel=0.05)
        assert np.var(big) == pytest.approx(5.0, rel=0.05)
        assert np.var(icpt) == pytest.approx(5.0, rel=0.1)

    def test_rho_prior(self):
        rhos = [generate_dataset(DgpConfig(n=10, k=3, q=1, knn=2), make_rng(5, i)).rho_true for i in range(4000)]
        assert np.var(rhos) == pytest.approx(3.0, rel=0.07)

    def test_rho_zero_is_identity(self):
        ds = generate_dataset(DgpConfig(k=20, q=4, rho_true=0.0), make_rng(1))
        assert np.array_equal(ds.data.y, ds.data.X @ ds.beta_true + ds.eps)

    def test_filter_inversion(self):
        for i in range(20):
            ds = generate_dataset(DgpConfig(k=20, q=4), make_rng(2, i))
            resid = mess_apply(ds.data.W, ds.rho_true, ds.data.y) - ds.data.X @ ds.beta_true
            assert np.max(np.abs(resid - ds.eps)) < 1e-8

    def test_neighbors(self):
        ds = generate_dataset(DgpConfig(k=5, q=2, knn=5), make_rng(0))
        assert np.all(np.diff(ds.data.W.matrix.indptr) == 5)
        assert np.all((ds.coords >= 0) & (ds.coords <= 1))


class TestRmse:
    def test_point(self):
        assert rmse_point([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse_point([3.0, 4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))
        assert rmse_point(1.2, 1.0) == pytest.approx(0.2)

    def test_draws(self):
        assert rmse_draws(np.ones((5, 2)), [1.0, 1.0]) == 0.0
        assert rmse_draws(np.array([0.9, 1.1]), 1.0) == pytest.approx(0.1)
        d = np.array([[0.2, 0.4], [-0.2, -0.4]])
        assert rmse_draws(d, [0.0, 0.0]) == pytest.approx(0.3)

    def test_average_of_roots(self):
        d = np.array([[1.0, 0.0], [1.0, 0.0]])
        # roots 1 and 0 average to 0.5; the root of the mean would be sqrt(0.5)
        assert rmse_draws(d, [0.0, 0.0]) == pytest.approx(0.5)


def _results(vals, prior="NG", failed=None):
    out = []
    for r, v in enumerate(vals):
        m = {k: v for k in METRICS}
        out.append(ReplicationResult(0, r, prior, m, 1.0 + r, bool(failed and failed[r])))
    return out


class TestAggregate:
    def test_ssvs_failures_excluded(self):
        scen = [(DgpConfig(k=10, q=2), [PriorConfig(kind="ssvs"), PriorConfig(kind="ng")])]
        raw = _results([1.0, 50.0, 3.0], "SSVS", [False, True, False]) + _results([1.0, 2.0, 3.0], "NG")
        rep = aggregate(scen, 3, raw)
        ss = rep.cell("K=10,q=2", "SSVS")
        assert ss["failures"] == 1 and ss["used"] == 2 and ss["rmse_beta"] == 2.0
        ng = rep.cell("K=10,q=2", "NG")
        assert ng["failures"] == 0 and ng["rmse_beta"] == 2.0

    def test_other_priors_keep_capped_runs(self):
        scen = [(DgpConfig(k=10, q=2), [PriorConfig(kind="none")])]
        raw = _results([1.0, 40.0], "None", [False, True])
        c = aggregate(scen, 2, raw).cell("K=10,q=2", "None")
        assert c["failures"] == 1 and c["used"] == 2 and c["rmse_sigma2"] == pytest.approx(20.5)

    def test_relative_time(self):
        scen = [(DgpConfig(k=10, q=2), [PriorConfig(kind="none"), PriorConfig(kind="ng")])]
        raw = [ReplicationResult(0, 0, "None", {k: 1.0 for k in METRICS}, 2.0, False)]
        raw.append(ReplicationResult(0, 0, "NG", {k: 1.0 for k in METRICS}, 5.0, False))
        rep = aggregate(scen, 1, raw)
        assert rep.cell("K=10,q=2", "None")["relative_time"] == 1.0
        assert rep.cell("K=10,q=2", "NG")["relative_time"] == 2.5


class TestStudy:
    def scenarios(self):
        priors = [PriorConfig(kind=k, ssvs_pre_iter=80, ssvs_pre_burn=40) for k in ("none", "ssvs", "ng", "dl")]
        return [(DgpConfig(n=30, k=8, q=2), priors), (DgpConfig(n=30, k=12, q=4), priors[2:])]

    def test_deterministic_and_worker_independent(self, tmp_path):
        a = run_study(self.scenarios(), 2, 11, TINY, workers=1)
        b = run_study(self.scenarios(), 2, 11, TINY, workers=2)
        a.write_csv(tmp_path / "a.csv")
        b.write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        a.write_raw_csv(tmp_path / "ra.csv")
        b.write_raw_csv(tmp_path / "rb.csv")
        assert (tmp_path / "ra.csv").read_bytes() == (tmp_path / "rb.csv").read_bytes()

    def test_shape_and_reread(self, tmp_path):
        rep = run_study(self.scenarios(), 1, 3, TINY, workers=1)
        assert len(rep.raw) == 6
        for c in rep.cells.values():
            assert all(c[m] >= 0 for m in METRICS)
            assert c["relative_time"] >= 1.0 or c["relative_time"] == pytest.approx(1.0)
        rep.write_csv(tmp_path / "s.csv")
        back = read_study_csv(tmp_path / "s.csv")
        for key, cell in rep.cells.items():
            for m in METRICS:
                assert back.cells[key][m] == cell[m]

    def test_replications_positive(self):
        with pytest.raises(ValidationError):
            run_study(self.scenarios(), 0, 1, TINY)

    def test_default_grid(self):
        grid = default_scenarios()
        assert len(grid) == 8
        assert {(d.k, d.q) for d, _ in grid} == {(k, q) for k in (50, 100, 150, 200) for q in (10, 20)}


def _report(values):
    """``values[(label, prior)] = {metric: v}`` with a shared K/q per label."""
    scen, priors, cells = [], {}, {}
    for (label, prior), v in values.items():
        if label not in priors:
            scen.append({"label": label, "k": int(label.split(",")[0][2:]), "q": 10})
            priors[label] = []
        priors[label].append(prior)
        cells[(label, prior)] = dict(v)
    return StudyReport(scen, priors, 1, cells)


class TestReportTables:
    def test_empty(self):
        rep = StudyReport([], {}, 0, {})
        assert report_tables(rep, "csv") == "K,q,prior,beta,sigma2,rho\n"
        assert report_tables(rep, "text").splitlines()[0].split() == ["K", "q", "prior", "beta", "sigma2", "rho"]

    def test_single_cell(self):
        rep = _report({("K=50,q=10", "NG"): {"rmse_beta": 0.0123, "rmse_sigma2": 0.5, "rmse_rho": 0.01}})
        line = report_tables(rep, "csv").splitlines()[1]
        assert line == "50,10,NG,**0.0123**,**0.5000**,**0.0100**"

    def test_bold_matches_scan(self):
        rng = np.random.default_rng(4)
        vals = {}
        for label in ("K=50,q=10", "K=100,q=10"):
            for p in ("None", "SSVS", "NG", "DL"):
                vals[(label, p)] = {m: float(rng.random()) for m in ("rmse_beta", "rmse_sigma2", "rmse_rho")}
        rep = _report(vals)
        lines = report_tables(rep, "csv").splitlines()[1:]
        for j, m in enumerate(("rmse_beta", "rmse_sigma2", "rmse_rho")):
            for label in ("K=50,q=10", "K=100,q=10"):
                k = label.split(",")[0][2:]
                best = min(("None", "SSVS", "NG", "DL"), key=lambda p: vals[(label, p)][m])
                for ln in lines:
                    f = ln.split(",")
                    if f[0] == k:
                        assert f[3 + j].startswith("**") == (f[2] == best)

    def test_cap_and_time(self):
        rep = _report(
            {
                ("K=100,q=10", "None"): {"rmse_beta": 0.4, "rmse_sigma2": 37.0, "rmse_rho": 0.2, "relative_time": 1.0},
                ("K=100,q=10", "NG"): {"rmse_beta": 0.01, "rmse_sigma2": 0.3, "rmse_rho": 0.003, "relative_time": 1.8},
            }
        )
        text = report_tables(rep, "csv")
        assert ",>10," in text and "**1.00**" in text and "1.80" in text

    def test_bad_format(self):
        with pytest.raises(ValidationError):
            report_tables(StudyReport([], {}, 0, {}), "html")
