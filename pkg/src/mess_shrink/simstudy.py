"""Synthetic MESS data and the RMSE comparison harness.

A replication draws one dataset and fits every configured prior to that same
dataset.  Seeds are derived from ``(base_seed, scenario, replication)`` so
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import make_rng
from .errors import NumericalError, ValidationError
from .priors import PriorConfig
from .sampler import ModelData, SamplerConfig, fit
from .spatial import build_knn_weights, mess_apply

__all__ = [
    "DgpConfig",
    "SyntheticDataset",
    "StudyReport",
    "generate_dataset",
    "rmse_point",
    "rmse_draws",
    "score_draws",
    "run_study",
    "report_tables",
    "default_scenarios",
    "SIGMA2_CAP",
    "METRICS",
]

SIGMA2_CAP = 10.0
METRICS = ("rmse_beta", "rmse_sigma2", "rmse_rho", "rmse_dr_beta", "rmse_dr_sigma2", "rmse_dr_rho")


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process settings; ``k`` counts the intercept column.

    ``rho_true`` pins the spatial parameter instead of drawing it.
    """

    n: int = 100
    k: int = 50
    q: int = 10
    sigma2_true: float = 1.0
    rho_prior_sd: float = math.sqrt(3.0)
    knn: int = 5
    seed: int = 0
    rho_true: float | None = None

    def __post_init__(self):
        if self.n < 2 or self.k < 1:
            raise ValidationError("n must be >= 2 and k >= 1")
        if not 0 <= self.q < self.k:
            raise ValidationError(f"need 0 <= q < k, got q={self.q}, k={self.k}")
        if not self.sigma2_true > 0 or not self.rho_prior_sd > 0:
            raise ValidationError("sigma2_true and rho_prior_sd must be positive")

    @property
    def label(self):
        return f"K={self.k},q={self.q}"


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    data: ModelData
    coords: np.ndarray
    beta_true: np.ndarray
    rho_true: float
    sigma2_true: float
    eps: np.ndarray


def generate_dataset(cfg, rng=None):
    """Draw one synthetic dataset.

    Covariates are standard normal, locations uniform on the unit square with
    a ``knn``-nearest-neighbor ``W``.  The intercept and the slopes
    ``q//2+1 .. q`` are ``N(0, 5)``, slopes ``1 .. q//2`` are ``N(0, 1)``, and
    all remaining slopes are exactly zero.  The response is
    ``exp(-rho) W (Z beta + eps)`` with ``rho ~ N(0, rho_prior_sd**2)``.
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    n, k, q = cfg.n, cfg.k, cfg.q
    Z = np.empty((n, k))
    Z[:, 0] = 1.0
    Z[:, 1:] = rng.standard_normal((n, k - 1))
    coords = rng.random((n, 2))
    W = build_knn_weights(coords, cfg.knn)

    beta = np.zeros(k)
    small = q // 2
    beta[1 : 1 + small] = rng.standard_normal(small)
    beta[1 + small : 1 + q] = math.sqrt(5.0) * rng.standard_normal(q - small)
    beta[0] = math.sqrt(5.0) * rng.standard_normal()
    rho = cfg.rho_prior_sd * rng.standard_normal()
    if cfg.rho_true is not None:
        rho = float(cfg.rho_true)
    eps = math.sqrt(cfg.sigma2_true) * rng.standard_normal(n)
    y = mess_apply(W, -rho, Z @ beta + eps)

    names = ("intercept",) + tuple(f"z{j}" for j in range(1, k))
    return SyntheticDataset(
        data=ModelData(y, Z, W, names),
        coords=coords,
        beta_true=beta,
        rho_true=float(rho),
        sigma2_true=float(cfg.sigma2_true),
        eps=eps,
    )


def rmse_point(estimate, truth):
    """Root mean squared deviation of a point estimate from the truth."""
    e = np.atleast_1d(np.asarray(estimate, float)) - np.atleast_1d(np.asarray(truth, float))
    return float(np.sqrt(np.mean(e**2)))


def rmse_draws(draws, truth):
    """Per-coefficient root mean squared deviation over draws, averaged over coefficients.

    ``draws`` has shape ``(T, K)`` (or ``(T,)`` for a scalar parameter).
    """
    d = np.asarray(draws, float)
    if d.ndim == 1:
        d = d[:, None]
    t = np.atleast_1d(np.asarray(truth, float))
    per_coef = np.sqrt(np.mean((d - t[None, :]) ** 2, axis=0))
    return float(np.mean(per_coef))


def score_draws(draws, ds):
    """All six RMSE metrics for one fitted chain; point estimates are medians."""
    return {
        "rmse_beta": rmse_point(np.median(draws.beta, axis=0), ds.beta_true),
        "rmse_sigma2": rmse_point(np.median(draws.sigma2), ds.sigma2_true),
        "rmse_rho": rmse_point(np.median(draws.rho), ds.rho_true),
        "rmse_dr_beta": rmse_draws(draws.beta, ds.beta_true),
        "rmse_dr_sigma2": rmse_draws(draws.sigma2, ds.sigma2_true),
        "rmse_dr_rho": rmse_draws(draws.rho, ds.rho_true),
    }


def default_scenarios(ks=(50, 100, 150, 200), qs=(10, 20), n=100, knn=5, priors=None):
    if priors is None:
        priors = [PriorConfig(kind=kd) for kd in ("none", "ssvs", "ng", "dl")]
    return [(DgpConfig(n=n, k=k, q=q, knn=knn), list(priors)) for k in ks for q in qs]


def prior_name(cfg):
    return {"none": "None", "ssvs": "SSVS", "ng": "NG", "dl": "DL"}[cfg.kind]


@dataclass
class ReplicationResult:
    scenario: int
    replication: int
    prior: str
    metrics: dict
    wall_time: float
    failed: bool
    error: str = ""


@dataclass
class StudyReport:
    """Aggregated study results.

    ``cells[(scenario_label, prior)]`` holds the mean metrics across
    replications plus ``failures``, ``used`` and ``relative_time``.
    """

    scenarios: list
    priors: dict
    replications: int
    cells: dict = field(default_factory=dict)
    raw: list = field(default_factory=list)

    def cell(self, scenario, prior):
        return self.cells[(scenario, prior)]

    def to_long_rows(self):
        """``(scenario, k, q, prior, metric, value)`` rows; timing is excluded."""
        rows = []
        for sc in self.scenarios:
            for p in self.priors[sc["label"]]:
                c = self.cells[(sc["label"], p)]
                for m in METRICS + ("failures", "used"):
                    rows.append((sc["label"], sc["k"], sc["q"], p, m, c[m]))
        return rows

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["scenario", "k", "q", "prior", "metric", "value"])
            for row in self.to_long_rows():
                out.writerow(list(row[:5]) + [_fmt_value(row[5])])

    def write_raw_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["scenario", "replication", "prior", "failed"] + list(METRICS))
            for r in self.raw:
                label = self.scenarios[r.scenario]["label"]
                out.writerow(
                    [label, r.replication, r.prior, int(r.failed)]
                    + [_fmt_value(r.metrics.get(m, math.nan)) for m in METRICS]
                )

    def timing(self):
        return {
            f"{sc}|{p}": {"mean_seconds": c["mean_time"], "relative_time": c["relative_time"]}
            for (sc, p), c in self.cells.items()
        }


def _fmt_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _replication_task(args):
    s_idx, dgp, priors, r, base_seed, sampler_cfg = args
    ds_rng = make_rng(base_seed, s_idx, r, 0)
    ds = generate_dataset(dgp, ds_rng)
    out = []
    for p_idx, pcfg in enumerate(priors):
        rng = make_rng(base_seed, s_idx, r, p_idx + 1)
        start = time.perf_counter()
        try:
            draws = fit(ds.data, pcfg, sampler_cfg, rng=rng)
            metrics = score_draws(draws, ds)
            elapsed = draws.wall_time
            failed = not math.isfinite(metrics["rmse_sigma2"]) or metrics["rmse_sigma2"] > SIGMA2_CAP
            err = ""
        except NumericalError as exc:
            metrics = {m: math.nan for m in METRICS}
            elapsed = time.perf_counter() - start
            failed = True
            err = str(exc)
        out.append(ReplicationResult(s_idx, r, prior_name(pcfg), metrics, elapsed, failed, err))
    return out


def _workers():
    env = os.environ.get("MESS_SHRINK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"MESS_SHRINK_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_study(scenarios, replications, base_seed, sampler_cfg=None, workers=None):
    """Fit every prior of every scenario on ``replications`` fresh datasets.

    A replication counts as failed for a prior when its chain aborts or its
    ``sigma2`` RMSE is non-finite or above ``SIGMA2_CAP``.  Failed SSVS
    replications are left out of the averages; for the other priors only
    aborted chains (which have no metrics) are left out.

    Parameters
    ----------
    scenarios : list of (DgpConfig, list of PriorConfig)
    replications : int
    base_seed : int
    sampler_cfg : SamplerConfig, optional
    workers : int, optional
        Process count; defaults to ``MESS_SHRINK_THREADS`` or the CPU count.
    """
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    sampler_cfg = sampler_cfg or SamplerConfig()
    workers = workers or _workers()
    tasks = [
        (s_idx, dgp, priors, r, base_seed, sampler_cfg)
        for s_idx, (dgp, priors) in enumerate(scenarios)
        for r in range(replications)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
            chunks = list(ex.map(_replication_task, tasks))
    else:
        chunks = [_replication_task(t) for t in tasks]
    raw = [r for chunk in chunks for r in chunk]
    return aggregate(scenarios, replications, raw)


def aggregate(scenarios, replications, raw):
    sc_info = [{"label": d.label, "k": d.k, "q": d.q} for d, _ in scenarios]
    priors = {d.label: [prior_name(p) for p in ps] for d, ps in scenarios}
    report = StudyReport(scenarios=sc_info, priors=priors, replications=replications, raw=raw)
    for s_idx, (dgp, plist) in enumerate(scenarios):
        times = {}
        for p in priors[dgp.label]:
            rows = [r for r in raw if r.scenario == s_idx and r.prior == p]
            failures = sum(r.failed for r in rows)
            if p == "SSVS":
                keep = [r for r in rows if not r.failed]
            else:
                keep = [r for r in rows if math.isfinite(r.metrics["rmse_beta"])]
            cell = {m: (float(np.mean([r.metrics[m] for r in keep])) if keep else math.nan) for m in METRICS}
            cell["failures"] = failures
            cell["used"] = len(keep)
            cell["mean_time"] = float(np.mean([r.wall_time for r in rows]))
            report.cells[(dgp.label, p)] = cell
            times[p] = cell["mean_time"]
        fastest = min(times.values())
        for p, t in times.items():
            report.cells[(dgp.label, p)]["relative_time"] = t / fastest if fastest > 0 else 1.0
    return report


def read_study_csv(path, timing=None):
    """Rebuild the rows needed by :func:`report_tables` from a long-format CSV."""
    cells, scen, priors = {}, {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["scenario", "k", "q", "prior", "metric", "value"]
        if reader.fieldnames != expected:
            raise ValidationError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            label, prior = row["scenario"], row["prior"]
            scen.setdefault(label, {"label": label, "k": int(row["k"]), "q": int(row["q"])})
            plist = priors.setdefault(label, [])
            if prior not in plist:
                plist.append(prior)
            val = float(row["value"])
            if row["metric"] in ("failures", "used"):
                val = int(val)
            cells.setdefault((label, prior), {})[row["metric"]] = val
    if timing:
        for key, t in timing.items():
            label, prior = key.split("|", 1)
            if (label, prior) in cells:
                cells[(label, prior)]["relative_time"] = t["relative_time"]
    reps = max((c.get("used", 0) + 0 for c in cells.values()), default=0)
    return StudyReport(scenarios=list(scen.values()), priors=priors, replications=reps, cells=cells)


TABLE_COLUMNS = {
    "point": (("rmse_beta", "beta"), ("rmse_sigma2", "sigma2"), ("rmse_rho", "rho")),
    "draws": (("rmse_dr_beta", "beta"), ("rmse_dr_sigma2", "sigma2"), ("rmse_dr_rho", "rho")),
}


def report_tables(report, fmt="text", kind="point", timing=True):
    """Render the scenario-by-prior grid; per-scenario minima are wrapped in ``**``.

    ``fmt`` is ``"text"`` (aligned columns) or ``"csv"``.  ``kind`` selects
    point-estimate (``"point"``) or draw-based (``"draws"``) RMSEs.  Mean
    ``sigma2`` errors above the cap are shown as ``>10``.  The relative time
    column is shown when ``timing`` is set and the report carries timings.
    """
    cols = TABLE_COLUMNS[kind]
    has_time = timing and any("relative_time" in c for c in report.cells.values())
    header = ["K", "q", "prior"] + [c[1] for c in cols] + (["time"] if has_time else [])
    body = []
    for sc in report.scenarios:
        plist = report.priors.get(sc["label"], [])
        values = {}
        for metric, _ in cols + ((("relative_time", "time"),) if has_time else ()):
            vals = [report.cells[(sc["label"], p)].get(metric, math.nan) for p in plist]
            finite = [v for v in vals if math.isfinite(v)]
            best = min(finite) if finite else None
            values[metric] = [(v, best is not None and v == best) for v in vals]
        for i, p in enumerate(plist):
            row = [str(sc["k"]), str(sc["q"]), p]
            for metric, _ in cols + ((("relative_time", "time"),) if has_time else ()):
                v, is_best = values[metric][i]
                row.append(_cell_text(metric, v, is_best))
            body.append(row)
    if fmt == "csv":
        lines = [",".join(header)] + [",".join(r) for r in body]
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValidationError(f"unknown table format {fmt!r}")
    rows = [header] + body
    widths = [max(len(r[j]) for r in rows) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j != 2 else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def _cell_text(metric, v, is_best):
    if not math.isfinite(v):
        return "n/a"
    if metric.endswith("sigma2") and v > SIGMA2_CAP:
        text = f">{SIGMA2_CAP:g}"
    elif metric == "relative_time":
        text = f"{v:.2f}"
    else:
        text = f"{v:.4f}"
    return f"**{text}**" if is_best else text
