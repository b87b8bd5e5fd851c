"""``mess-shrink`` command-line interface.

Subcommands: ``simulate``, ``fit``, ``study`` and ``report``.  Settings are
resolved as command-line flag, then ``--config`` file entry, then default.
Exit status is 0 on success, 1 on invalid input and 2 on a numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distributions import make_rng
from .errors import NumericalError, ValidationError
from .ingest import IngestOptions, ingest_csv, write_numeric_csv
from .priors import PriorConfig, prior_label
from .sampler import SamplerConfig, fit, format_table, summarize, summary_json, write_json
from .simstudy import (
    DgpConfig,
    default_scenarios,
    generate_dataset,
    read_study_csv,
    report_tables,
    run_study,
)
from .spatial import write_weights

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

DEFAULTS = {
    "seed": 0,
    "out_dir": ".",
    "iters": 2000,
    "burn": 1000,
    "thin": 1,
    "knn": 5,
    "prior": "ng",
    "ng_theta": 0.1,
    "dl_a": None,
    "durbin": False,
    "cred_level": 0.8,
    "n": 100,
    "k": 50,
    "q": 10,
    "rho": None,
    "replications": 10,
    "ks": [50, 100, 150, 200],
    "qs": [10, 20],
    "priors": ["none", "ssvs", "ng", "dl"],
    "workers": None,
    "y": None,
    "x": None,
    "coords": None,
    "weights": None,
    "input": None,
    "format": "text",
    "kind": "point",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _dl_a(text):
    if text == "auto":
        return None
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None
    return v


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _prior_list(text):
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in out if t not in ("none", "ssvs", "ng", "dl")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown priors {bad}")
    return out


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p, chain=True):
    p.add_argument("--config", help="key=value settings file; flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    if chain:
        p.add_argument("--iters", type=int, help="total MCMC iterations")
        p.add_argument("--burn", type=int, help="burn-in iterations")
        p.add_argument("--thin", type=int)


def _prior_flags(p):
    p.add_argument("--ng-theta", type=float)
    p.add_argument("--dl-a", type=_dl_a, help="number in (0, 1] or 'auto' for 1/K")


def build_parser():
    parser = _Parser(prog="mess-shrink", description="Shrinkage estimation of MESS models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write one synthetic dataset")
    _common(p, chain=False)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int, help="columns including the intercept")
    p.add_argument("--q", type=int, help="nonzero slopes")
    p.add_argument("--rho", type=float, help="fix rho instead of drawing it")
    p.add_argument("--knn", type=int)

    p = sub.add_parser("fit", help="fit one model to CSV data")
    _common(p)
    _prior_flags(p)
    p.add_argument("--prior", choices=("none", "ssvs", "ng", "dl"))
    p.add_argument("--y")
    p.add_argument("--x")
    p.add_argument("--coords")
    p.add_argument("--weights")
    p.add_argument("--knn", type=int)
    p.add_argument("--durbin", action="store_const", const=True)
    p.add_argument("--cred-level", type=float)

    p = sub.add_parser("study", help="run the simulation study grid")
    _common(p)
    _prior_flags(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--ks", type=_int_list, help="comma-separated K values")
    p.add_argument("--qs", type=_int_list, help="comma-separated q values")
    p.add_argument("--priors", type=_prior_list, help="comma-separated prior kinds")
    p.add_argument("--n", type=int)
    p.add_argument("--knn", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="render tables from a study CSV")
    p.add_argument("--config")
    p.add_argument("--input", help="study.csv; defaults to OUT_DIR/study.csv")
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=("text", "csv"))
    p.add_argument("--kind", choices=("point", "draws"))
    return parser


def read_config_file(path, parser, command):
    """Parse ``key = value`` lines, converting values with the subcommand's flag types."""
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: line {lineno} is not of the form key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("config", "help"):
                raise ValidationError(f"{path}: line {lineno}: unknown setting {key!r} for {command}")
            act = actions[dest]
            try:
                if act.const is True:
                    out[dest] = _bool(value)
                elif act.type is not None:
                    out[dest] = act.type(value)
                else:
                    out[dest] = value
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
            if act.choices is not None and out[dest] not in act.choices:
                raise ValidationError(f"{path}: line {lineno}: {key} must be one of {list(act.choices)}")
    return out


def _subparser(parser, command):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise AssertionError("no subcommands")


def resolve(args, parser):
    """Merge defaults, config file and explicit flags (in increasing priority)."""
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    sub = _subparser(parser, args.command)
    settings = {a.dest: DEFAULTS[a.dest] for a in sub._actions if a.dest in DEFAULTS}
    if args.config:
        settings.update(read_config_file(args.config, parser, args.command))
    settings.update(given)
    return settings


def _prior_cfg(s, kind=None):
    return PriorConfig(kind=kind or s["prior"], ng_theta=s["ng_theta"], dl_a=s["dl_a"])


def _sampler_cfg(s):
    return SamplerConfig(n_iter=s["iters"], n_burn=s["burn"], thin=s["thin"], seed=s["seed"])


def _out_dir(s):
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(out, command, settings, **extra):
    payload = {"command": command, "settings": settings, "version": __version__}
    payload.update(extra)
    write_json(out / "config.json", payload)


def cmd_simulate(s):
    dgp = DgpConfig(n=s["n"], k=s["k"], q=s["q"], knn=s["knn"], seed=s["seed"], rho_true=s["rho"])
    ds = generate_dataset(dgp, make_rng(s["seed"]))
    out = _out_dir(s)
    ids = [str(i + 1) for i in range(dgp.n)]
    write_numeric_csv(out / "y.csv", ["y"], ds.data.y, ids)
    write_numeric_csv(out / "X.csv", ds.data.column_names, ds.data.X, ids)
    write_numeric_csv(out / "coords.csv", ["x", "y"], ds.coords, ids)
    write_weights(out / "weights.csv", ds.data.W)
    truth_names = list(ds.data.column_names) + ["sigma2", "rho"]
    truth = np.concatenate([ds.beta_true, [ds.sigma2_true, ds.rho_true]])
    with open(out / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("parameter,value\n")
        for name, v in zip(truth_names, truth):
            fh.write(f"{name},{float(v)!r}\n")
    _echo(out, "simulate", s, dgp=dgp.__dict__)
    return EXIT_OK


def cmd_fit(s):
    for key in ("y", "x"):
        if not s[key]:
            raise ValidationError(f"fit needs --{key}")
    if bool(s["coords"]) == bool(s["weights"]):
        raise ValidationError("fit needs exactly one of --coords or --weights")
    for key in ("y", "x", "coords", "weights"):
        if s[key] and not Path(s[key]).is_file():
            raise ValidationError(f"--{key} file not found: {s[key]}")
    data = ingest_csv(s["y"], s["x"], s["coords"] or s["weights"], IngestOptions(knn=s["knn"], durbin=s["durbin"]))
    prior = _prior_cfg(s)
    sampler = _sampler_cfg(s)
    out = _out_dir(s)
    _echo(out, "fit", s, prior=prior.to_dict(), sampler=sampler.to_dict())
    draws = fit(data, prior, sampler, rng=make_rng(s["seed"]))
    summary = summarize(draws, s["cred_level"])
    label = prior_label(prior)
    draws.to_csv(out / "draws.csv")
    write_json(out / "summary.json", summary_json(draws, summary, label))
    (out / "table.txt").write_text(format_table(summary, label), encoding="utf-8")
    return EXIT_OK


def cmd_study(s):
    priors = [_prior_cfg(s, kind) for kind in s["priors"]]
    scenarios = default_scenarios(ks=s["ks"], qs=s["qs"], n=s["n"], knn=s["knn"], priors=priors)
    sampler = _sampler_cfg(s)
    out = _out_dir(s)
    _echo(out, "study", s, sampler=sampler.to_dict(), priors=[p.to_dict() for p in priors])
    report = run_study(scenarios, s["replications"], s["seed"], sampler, workers=s["workers"])
    report.write_csv(out / "study.csv")
    report.write_raw_csv(out / "replications.csv")
    write_json(out / "timing.json", report.timing())
    _write_tables(report, out)
    return EXIT_OK


def _write_tables(report, out):
    for kind in ("point", "draws"):
        (out / f"table_{kind}.txt").write_text(report_tables(report, "text", kind), encoding="utf-8")
        # wall times live in timing.json so the CSVs stay reproducible
        (out / f"table_{kind}.csv").write_text(report_tables(report, "csv", kind, timing=False), encoding="utf-8")


def cmd_report(s):
    src = Path(s["input"]) if s["input"] else Path(s["out_dir"]) / "study.csv"
    if not src.is_file():
        raise ValidationError(f"study file not found: {src}")
    timing_path = src.with_name("timing.json")
    timing = json.loads(timing_path.read_text(encoding="utf-8")) if timing_path.is_file() else None
    report = read_study_csv(src, timing)
    sys.stdout.write(report_tables(report, s["format"], s["kind"]))
    if s["input"] and s["out_dir"] != ".":
        _write_tables(report, _out_dir(s))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "study": cmd_study, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = resolve(args, parser)
        return COMMANDS[args.command](settings)
    except ValidationError as exc:
        print(f"mess-shrink: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"mess-shrink: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"mess-shrink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
