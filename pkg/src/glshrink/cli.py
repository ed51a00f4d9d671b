"""Command-line entry point: ``glshrink {estimate,test,simulate,verify,plot}``.

Failures exit nonzero and print one JSON object on stderr::

    {"status": "error", "subcommand": ..., "error": ..., "message": ..., "problems": [...]}
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_config, env_overrides, load_document
from .empirical import estimate_tau
from .experiments import run_experiment
from .fullbayes import TauGridConfig, fit_full_bayes, testing_uniform_prior
from .kernel import kappa_moments
from .multitest import DecisionSet, TwoGroupsModel, bayes_oracle, rule_fixed_tau
from .plotting import plot_report
from .report import read_risk_csv, write_risk_csv
from .verify import run_all

EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", metavar="U64", type=lambda s: int(s, 0), help="root seed")
    common.add_argument("--threads", metavar="N", type=int, help="worker threads")
    common.add_argument("--scenario", metavar="NAME", help="simulation scenario")

    p = _Parser(prog="glshrink", description="Global-local shrinkage estimation, testing and simulation.")
    p.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", parents=[common], help="posterior means for a data vector")
    est.add_argument("--data", metavar="PATH", help="one observation per row")
    est.add_argument("--method", choices=("eb", "fb"))

    tst = sub.add_parser("test", parents=[common], help="multiple-testing decisions for a data vector")
    tst.add_argument("--data", metavar="PATH")
    tst.add_argument("--rule", choices=("fixed_tau", "eb", "fb", "oracle"))
    tst.add_argument("--tau", type=float)
    tst.add_argument("--p", type=float)
    tst.add_argument("--psi2", type=float)

    sub.add_parser("simulate", parents=[common], help="run an experiment scenario to a report CSV")
    sub.add_parser("verify", parents=[common], help="run the quick property suites")

    plt_ = sub.add_parser("plot", parents=[common], help="SVG charts from a report CSV")
    plt_.add_argument("--input", metavar="CSV", required=True)
    return p


def _resolve(args, extra: dict | None = None):
    """flags > environment > file."""
    file_doc = load_document(args.config) if args.config else {}
    overrides = env_overrides()
    for key in ("seed", "threads", "out", "scenario"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    doc = json.loads(json.dumps(file_doc))  # plain dict copy
    for dotted, v in (extra or {}).items():
        if v is None:
            continue
        head, _, tail = dotted.partition(".")
        if tail:
            doc.setdefault(head, {})[tail] = v
        else:
            doc[head] = v
    # the manifest hash covers the file only, not flags or environment
    return replace(build_config(doc, overrides), raw=file_doc), overrides


def read_data(path) -> np.ndarray:
    """First column (or the column named ``x``) of a CSV or whitespace-free list of numbers."""
    values = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("%s: no data" % path)
    col = 0
    start = 0
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        header = [h.strip() for h in rows[0]]
        col = header.index("x") if "x" in header else 0
        start = 1
    for i, row in enumerate(rows[start:], start=start + 1):
        if not row or not "".join(row).strip():
            continue
        try:
            values.append(float(row[col]))
        except (ValueError, IndexError):
            raise ValueError("%s: line %d: not a number: %r" % (path, i, row))
    X = np.asarray(values)
    if X.size == 0:
        raise ValueError("%s: no data" % path)
    if not np.all(np.isfinite(X)):
        raise ValueError("%s: non-finite observation" % path)
    return X


def _write_manifest(out: Path, cfg, command: str, outputs: list, overrides: dict, extra: dict | None = None):
    manifest = {
        "tool": "glshrink",
        "version": __version__,
        "subcommand": command,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config_hash": cfg.config_hash,
        "root_seed": cfg.experiment.seed,
        "overrides": {k: str(v) for k, v in sorted(overrides.items())},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v) -> str:
    return "%.17g" % v


def cmd_estimate(args) -> int:
    cfg, overrides = _resolve(args, {"data": args.data, "estimate.method": args.method})
    if cfg.data is None:
        raise ConfigError(["estimate needs input data (--data or data = ... in the config)"])
    X = read_data(cfg.data)
    spec = cfg.experiment.spec()
    n = X.size
    if cfg.estimate_method == "eb":
        tau = estimate_tau(X, cfg.experiment.eb)
        mom = kappa_moments(X, tau, spec)
        est, var, weight = mom.w * X, mom.w + X * X * mom.var_kappa, mom.w
        info = {"tau_hat": tau}
    else:
        grid = TauGridConfig(cfg.experiment.tau_grid, cfg.experiment.threads)
        fit = fit_full_bayes(X, cfg.experiment.estimation_prior(n), spec, grid)
        est, var, weight = fit.posterior_mean(), fit.posterior_variance(), fit.shrinkage_weight()
        info = {"tau_posterior_mean": fit.posterior.mean()}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "estimates.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "x", "estimate", "posterior_variance", "shrinkage_weight"))
        for i in range(n):
            w.writerow((i, _fmt(X[i]), _fmt(est[i]), _fmt(var[i]), _fmt(weight[i])))
    _write_manifest(out, cfg, "estimate", [path], overrides, {"method": cfg.estimate_method, **info})
    print(json.dumps({"status": "ok", "subcommand": "estimate", "rows": n, "output": str(path), **info}))
    return 0


def cmd_test(args) -> int:
    cfg, overrides = _resolve(args, {"data": args.data, "test.rule": args.rule, "test.tau": args.tau,
                                     "test.p": args.p, "test.psi2": args.psi2})
    if cfg.data is None:
        raise ConfigError(["test needs input data (--data or data = ... in the config)"])
    X = read_data(cfg.data)
    spec = cfg.experiment.spec()
    n = X.size
    rule = cfg.test_rule
    weight = None
    info = {}
    if rule == "oracle":
        dec = bayes_oracle(X, TwoGroupsModel(n, cfg.test_p, cfg.test_psi2))
    elif rule == "fb":
        prior = testing_uniform_prior(n, cfg.experiment.c_n)
        grid = TauGridConfig(cfg.experiment.test_tau_grid, cfg.experiment.threads)
        weight = fit_full_bayes(X, prior, spec, grid).shrinkage_weight()
        dec = DecisionSet(weight > 0.5, "fb")
        info["alpha_n"] = prior.hi
    else:
        tau = cfg.test_tau if rule == "fixed_tau" else estimate_tau(X, cfg.experiment.eb)
        weight = kappa_moments(X, tau, spec).w
        dec = rule_fixed_tau(X, tau, spec, tag=rule)
        info["tau"] = tau
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "decisions.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "x", "reject", "shrinkage_weight", "rule"))
        for i in range(n):
            w.writerow((i, _fmt(X[i]), int(dec.rejections[i]), "" if weight is None else _fmt(weight[i]),
                        dec.rule_tag))
    _write_manifest(out, cfg, "test", [path], overrides, {"rule": rule, **info})
    print(json.dumps({"status": "ok", "subcommand": "test", "rejections": int(dec.rejections.sum()),
                      "output": str(path)}))
    return 0


def cmd_simulate(args) -> int:
    cfg, overrides = _resolve(args)
    if cfg.scenario is None:
        raise ConfigError(["simulate needs a scenario (--scenario, HSHRINK_SCENARIO or scenario = ...)"])
    report = run_experiment(cfg.experiment).sorted()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    write_risk_csv(report, path)
    figures = plot_report(report, out)
    _write_manifest(out, cfg, "simulate", [path, *figures], overrides,
                    {"scenario": cfg.scenario, "runtimes_seconds": report.timings})
    print(json.dumps({"status": "ok", "subcommand": "simulate", "rows": len(report),
                      "output": str(path), "figures": [str(f) for f in figures]}))
    return 0


def cmd_verify(args) -> int:
    results = run_all()
    for r in results:
        print("%-30s %s  %s (%.2fs)" % (r.name, "PASS" if r.passed else "FAIL", r.detail, r.seconds))
    ok = all(r.passed for r in results)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(json.dumps(
            [{"suite": r.name, "passed": r.passed, "detail": r.detail} for r in results], indent=2) + "\n")
    return 0 if ok else EXIT_FAILURE


def cmd_plot(args) -> int:
    report = read_risk_csv(args.input)
    out = Path(args.out or env_overrides().get("out") or Path(args.input).parent)
    paths = plot_report(report, out)
    print(json.dumps({"status": "ok", "subcommand": "plot", "figures": [str(p) for p in paths]}))
    return 0


COMMANDS = {"estimate": cmd_estimate, "test": cmd_test, "simulate": cmd_simulate,
            "verify": cmd_verify, "plot": cmd_plot}


def _fail(command, exc, code) -> int:
    payload = {"status": "error", "subcommand": command, "error": type(exc).__name__,
               "message": str(exc).splitlines()[0] if str(exc) else type(exc).__name__,
               "problems": getattr(exc, "problems", [])}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    command = None
    try:
        args = _parser().parse_args(argv)
        command = args.command
        return COMMANDS[command](args)
    except UsageError as exc:
        return _fail(command, exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail(command, exc, EXIT_USAGE)
    except Exception as exc:
        return _fail(command, exc, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
