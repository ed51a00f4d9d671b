"""TOML run configuration.

Schema (every key optional unless the subcommand needs it)::

    scenario = "mse_eb"        # simulate only; see experiments.SCENARIOS
    seed = 0                   # root seed, unsigned 64-bit
    threads = 1
    out = "out"
    data = "x.csv"             # estimate / test input, one value per row

    [experiment]  n_grid = [500, 2000, 8000]   replicates = 20
    [truth]       beta = 0.4  q_scale = 1.0  q_n = 10  signal = 7.0
    [prior]       name = "horseshoe"  a, b (tpb)  alpha, eta (gdp)
    [tau_prior]   kind = "half_cauchy"  grid = 200  test_grid = 24  c_n = 1.0
    [eb]          c1 = 2.0  c2 = 1.0
    [estimate]    method = "eb"
    [test]        rule = "eb"  tau = 0.1  p = 0.1  psi2 = 4.0
    [contraction] method = "eb"  M = [20.0]  draws = 1000
    [testing]     p = [0.01, 0.02]  C = [4.0]  eps = 1.0  psi2 = []  eta, delta, rho

Violations are collected across the whole file and reported together.
Environment variables ``HSHRINK_SEED``, ``HSHRINK_THREADS``, ``HSHRINK_OUT``
and ``HSHRINK_SCENARIO`` override the file; command-line flags override both.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import tomli

from .experiments import SCENARIOS, ExperimentConfig, InvalidExperiment, make_config

ENV_OVERRIDES = {"seed": "HSHRINK_SEED", "threads": "HSHRINK_THREADS", "out": "HSHRINK_OUT",
                 "scenario": "HSHRINK_SCENARIO"}
RULES = ("fixed_tau", "eb", "fb", "oracle")
PRIOR_PARAMS = {"horseshoe": (), "tpb": ("a", "b"), "gdp": ("alpha", "eta")}

_num = (int, float)
_numlist = ("list", _num)
_intlist = ("list", int)

# dotted key -> (type, ExperimentConfig field or None)
SCHEMA = {
    "scenario": (str, "scenario"),
    "seed": (int, "seed"),
    "threads": (int, "threads"),
    "out": (str, None),
    "data": (str, None),
    "experiment.n_grid": (_intlist, "n_grid"),
    "experiment.replicates": (int, "replicates"),
    "truth.beta": (_num, "beta"),
    "truth.q_scale": (_num, "q_scale"),
    "truth.q_n": (int, "q_n"),
    "truth.signal": (_num, "signal"),
    "prior.name": (str, "prior"),
    "prior.a": (_num, None),
    "prior.b": (_num, None),
    "prior.alpha": (_num, None),
    "prior.eta": (_num, None),
    "tau_prior.kind": (str, "tau_prior"),
    "tau_prior.grid": (int, "tau_grid"),
    "tau_prior.test_grid": (int, "test_tau_grid"),
    "tau_prior.c_n": (_num, "c_n"),
    "eb.c1": (_num, "c1"),
    "eb.c2": (_num, "c2"),
    "estimate.method": (str, None),
    "test.rule": (str, None),
    "test.tau": (_num, None),
    "test.p": (_num, None),
    "test.psi2": (_num, None),
    "contraction.method": (str, "method"),
    "contraction.M": (_numlist, "M_list"),
    "contraction.draws": (int, "draws"),
    "testing.p": (_numlist, "p_list"),
    "testing.C": (_numlist, "C_list"),
    "testing.eps": (_num, "eps"),
    "testing.psi2": (_numlist, "psi2_list"),
    "testing.eta": (_num, "eta"),
    "testing.delta": (_num, "delta"),
    "testing.rho": (_num, "rho"),
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    scenario: str | None = None
    out: str = "out"
    data: str | None = None
    estimate_method: str = "eb"
    test_rule: str = "eb"
    test_tau: float | None = None
    test_p: float | None = None
    test_psi2: float | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form; independent of key order and layout."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = prefix + k
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _type_ok(value, kind) -> bool:
    if isinstance(kind, tuple) and kind and kind[0] == "list":
        return isinstance(value, list) and all(_type_ok(v, kind[1]) for v in value)
    if isinstance(value, bool):
        return False
    return isinstance(value, kind)


def _type_name(kind) -> str:
    if isinstance(kind, tuple) and kind and kind[0] == "list":
        return "list of " + _type_name(kind[1])
    if kind == _num:
        return "number"
    return kind.__name__


def load_document(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(["config file not found: %s" % path])
    except tomli.TOMLDecodeError as exc:
        msg = str(exc)
        if "overwrite" in msg:
            msg = "duplicate key: " + msg
        raise ConfigError(["%s: %s" % (path, msg)])


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, var in ENV_OVERRIDES.items():
        if var in environ and environ[var] != "":
            out[key] = environ[var]
    return out


def _coerce_override(key: str, value, problems: list):
    kind = SCHEMA[key][0]
    if isinstance(value, str) and kind is int:
        try:
            return int(value, 0)
        except ValueError:
            problems.append("%s: expected an integer, got %r" % (key, value))
            return None
    return value


def build_config(doc: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed document plus overrides; raises ConfigError listing every problem."""
    problems: list[str] = []
    flat = _flatten(doc)
    for key in sorted(flat):
        if key not in SCHEMA:
            problems.append("unknown key %r" % key)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        value = _coerce_override(key, value, problems)
        if value is not None:
            flat[key] = value
    for key in sorted(flat):
        if key in SCHEMA and not _type_ok(flat[key], SCHEMA[key][0]):
            problems.append("%s: expected %s, got %r" % (key, _type_name(SCHEMA[key][0]), flat[key]))
            flat[key] = None
    get = lambda k, default=None: default if flat.get(k) is None else flat[k]

    scenario = get("scenario")
    if scenario is not None and scenario not in SCENARIOS:
        problems.append("scenario must be one of %s, got %r" % (", ".join(SCENARIOS), scenario))
        scenario = None

    prior = get("prior.name", "horseshoe")
    params = {}
    if prior not in PRIOR_PARAMS:
        problems.append("prior.name must be one of %s, got %r" % (", ".join(PRIOR_PARAMS), prior))
        prior = "horseshoe"
    for p in ("a", "b", "alpha", "eta"):
        if get("prior." + p) is not None:
            if p in PRIOR_PARAMS[prior]:
                params[p] = float(get("prior." + p))
            else:
                problems.append("prior.%s does not apply to prior %r" % (p, prior))
    if prior == "tpb" and len(params) < 2:
        problems.append("prior tpb needs prior.a and prior.b")
    if any(v <= 0 for v in params.values()):
        problems.append("prior parameters must be positive")

    kw = {}
    for key, (_, fname) in SCHEMA.items():
        if fname is None or fname in ("scenario", "prior") or get(key) is None:
            continue
        v = get(key)
        kw[fname] = tuple(v) if isinstance(v, list) else v
    kw["prior_params"] = params
    kw["prior"] = prior
    base = scenario or "mse_eb"
    experiment = None
    try:
        experiment = make_config(base, **kw)
    except InvalidExperiment as exc:
        problems.extend(exc.problems)

    method = get("estimate.method", "eb")
    if method not in ("eb", "fb"):
        problems.append("estimate.method must be 'eb' or 'fb', got %r" % (method,))
    rule = get("test.rule", "eb")
    if rule not in RULES:
        problems.append("test.rule must be one of %s, got %r" % (", ".join(RULES), rule))
    tau = get("test.tau")
    if tau is not None and not 0 < tau <= 1:
        problems.append("test.tau must lie in (0, 1], got %r" % (tau,))
    if rule == "fixed_tau" and tau is None:
        problems.append("test.rule 'fixed_tau' needs test.tau")
    tp, tpsi = get("test.p"), get("test.psi2")
    if tp is not None and not 0 < tp < 1:
        problems.append("test.p must lie in (0, 1), got %r" % (tp,))
    if tpsi is not None and not tpsi > 0:
        problems.append("test.psi2 must be positive, got %r" % (tpsi,))
    if rule == "oracle" and (tp is None or tpsi is None):
        problems.append("test.rule 'oracle' needs test.p and test.psi2")

    if problems:
        raise ConfigError(problems)
    raw = dict(doc)
    return RunConfig(experiment=experiment, scenario=scenario, out=get("out", "out"),
                     data=get("data"), estimate_method=method, test_rule=rule, test_tau=tau,
                     test_p=tp, test_psi2=tpsi, raw=raw)


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    return build_config(load_document(path), overrides)
