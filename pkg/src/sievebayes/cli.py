"""Command-line harness: one study per invocation, results written as CSV and JSON.

Every subcommand writes ``results.csv``, ``summary.json`` and ``manifest.json``
into the output directory.  Exit status is 0 on success, 2 when the
configuration (or an input data file) is invalid and 1 when the study itself
fails; in the nonzero cases a JSON error record is printed to stderr.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from ._accel import backend
from .core import default_threads, fmt17, read_observations, stream
from .densities import catalog_lookup
from .errors import DataFileError, SieveBayesError

log = logging.getLogger("sievebayes")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

STUDIES = ("approx-error", "posterior", "rate-study", "barron-chi2", "barron-clt",
           "lower-bound", "gauss-rate")
FAMILIES = ("histogram", "polygon", "bernstein")
U64 = 2 ** 64

# Per-study defaults.  A field set to None is not used by that study, and a
# config that supplies it is rejected.
DEFAULTS = {
    "approx-error": dict(density="quartic_c3", family="polygon",
                         k_list=[8, 16, 32, 64, 128, 256, 512], options={"metric": "sup"}),
    "posterior": dict(density=None, family="histogram",
                      prior={"kind": "geometric", "rate": 1.0, "k_max": 64, "m0": 1.0},
                      options={"data": None, "draws": 2000}),
    "rate-study": dict(density="holder(1)", family="histogram",
                       prior={"kind": "geometric", "rate": 1.0, "k_max": 64, "m0": 1.0},
                       n_list=[100, 200, 400, 800, 1600, 3200, 6400], reps=50,
                       options={"draws": 2000}),
    "barron-chi2": dict(density="quartic_c3", n_list=[10 * 2 ** i for i in range(3, 15)],
                        reps=200, options={"beta": 2.0, "c": 1.0}),
    "barron-clt": dict(density="quartic_c3", reps=500,
                       options={"x": 0.5, "n": 100_000, "alpha": 0.05}),
    "lower-bound": dict(density="quartic_c3", family="polygon", k_list=[8, 16, 32, 64, 128],
                        options={"m_factor": 64}),
    "gauss-rate": dict(density="normal", n_list=[25, 50, 100, 200, 400], reps=20,
                       prior={"k_max": 4, "rate": 1.0, "b": 0.125, "delta": 2.0, "nu": 2.0,
                              "lam": 1.0},
                       options={"draws": 2000}),
}

MIN_REPS = {"rate-study": 10, "gauss-rate": 10, "barron-chi2": 1, "barron-clt": 1}


@dataclass
class StudyConfig:
    """Full description of one study run; JSON round-trips losslessly."""

    study: str
    density: str | None = None
    family: str | None = None
    prior: dict = field(default_factory=dict)
    n_list: list | None = None
    k_list: list | None = None
    reps: int | None = None
    seed: int = 0
    out: str = "out"
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError([{"field": u, "message": "unknown field"} for u in unknown])
        if "study" not in d:
            raise ConfigError([{"field": "study", "message": "missing"}])
        return cls(**copy.deepcopy(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([{"field": "<document>", "message": f"invalid JSON: {exc}"}])
        if not isinstance(d, dict):
            raise ConfigError([{"field": "<document>", "message": "expected a JSON object"}])
        return cls.from_dict(d)


class ConfigError(SieveBayesError, ValueError):
    """Invalid configuration; ``errors`` is a list of {field, message[, line]} records."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in self.errors))


# ---------------------------------------------------------------------------
# resolution and validation
# ---------------------------------------------------------------------------

def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_real(v):
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(float(v))


class _Checker:
    def __init__(self):
        self.errors = []

    def fail(self, name, message, **extra):
        self.errors.append({"field": name, "message": message, **extra})

    def real(self, name, v, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False):
        if not _is_real(v):
            self.fail(name, f"expected a finite real, got {v!r}")
            return False
        v = float(v)
        bad_lo = v <= lo if lo_open else v < lo
        bad_hi = v >= hi if hi_open else v > hi
        if bad_lo or bad_hi:
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            self.fail(name, f"value {v!r} outside {lb}{lo:g}, {hi:g}{rb}")
            return False
        return True

    def integer(self, name, v, lo=None, hi=None):
        if not _is_int(v):
            self.fail(name, f"expected an integer, got {v!r}")
            return False
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            self.fail(name, f"value {v} outside [{lo}, {hi if hi is not None else 'inf'}]")
            return False
        return True

    def int_list(self, name, v, increasing, min_len=2, hi=None):
        if not isinstance(v, list) or not all(_is_int(x) for x in v):
            self.fail(name, "expected a list of integers")
            return False
        if len(v) < min_len:
            self.fail(name, f"needs at least {min_len} entries for a slope fit")
            return False
        if any(x < 1 for x in v):
            self.fail(name, "entries must be positive")
            return False
        if increasing and any(b <= a for a, b in zip(v, v[1:])):
            self.fail(name, "entries must be strictly increasing")
            return False
        if not increasing and len(set(v)) != len(v):
            self.fail(name, "entries must be distinct")
            return False
        if hi is not None and max(v) > hi:
            self.fail(name, f"entries must be <= {hi}")
            return False
        return True


def _merge(defaults: dict, given: dict, name: str, chk: _Checker) -> dict:
    if not isinstance(given, dict):
        chk.fail(name, "expected a JSON object")
        return dict(defaults)
    for key in sorted(set(given) - set(defaults)):
        chk.fail(f"{name}.{key}", "unknown key for this study")
    out = dict(defaults)
    out.update({k: v for k, v in given.items() if k in defaults})
    return out


def resolve(raw: dict, study: str, seed=None, out=None, quick=False) -> StudyConfig:
    """Fill per-study defaults into ``raw``, apply overrides and validate.

    Raises ConfigError listing every invalid field.
    """
    chk = _Checker()
    raw = dict(raw or {})
    if raw.get("study", study) != study:
        chk.fail("study", f"config is for {raw['study']!r} but subcommand is {study!r}")
    raw.pop("study", None)
    known = {f.name for f in fields(StudyConfig)}
    for key in sorted(set(raw) - known):
        chk.fail(key, "unknown field")
    spec = DEFAULTS[study]
    vals = {"study": study}
    for name in ("density", "family", "n_list", "k_list", "reps"):
        if name in spec:
            vals[name] = copy.deepcopy(raw.get(name, spec[name]))
        elif raw.get(name) is not None:
            chk.fail(name, f"not used by {study}")
    for name in ("prior", "options"):
        if name in spec:
            vals[name] = _merge(spec[name], raw.get(name, {}), name, chk)
        elif raw.get(name):
            chk.fail(name, f"not used by {study}")
    vals["seed"] = raw.get("seed", 0) if seed is None else seed
    vals["out"] = raw.get("out", os.path.join("out", study)) if out is None else out
    if quick:
        _apply_quick(study, vals)
    cfg = StudyConfig(**vals)
    _validate(cfg, chk)
    if chk.errors:
        raise ConfigError(chk.errors)
    return cfg


def _apply_quick(study, vals):
    """Scale reps and sample sizes down by 10."""
    if _is_int(vals.get("reps")):
        vals["reps"] = max(MIN_REPS.get(study, 1), vals["reps"] // 10)
    ns = vals.get("n_list")
    if isinstance(ns, list) and all(_is_int(n) for n in ns):
        vals["n_list"] = sorted({max(1, n // 10) for n in ns})
    opts = vals.get("options", {})
    if _is_int(opts.get("n")):
        opts["n"] = max(1, opts["n"] // 10)


def _validate(cfg: StudyConfig, chk: _Checker):
    study = cfg.study
    if not _is_int(cfg.seed) or not 0 <= cfg.seed < U64:
        chk.fail("seed", f"expected an integer in [0, 2^64), got {cfg.seed!r}")
    if not isinstance(cfg.out, str) or not cfg.out:
        chk.fail("out", "expected a nonempty path")
    f0 = None
    if study != "posterior":
        try:
            f0 = catalog_lookup(cfg.density)
        except (SieveBayesError, ValueError, TypeError) as exc:
            chk.fail("density", str(exc))
    if cfg.family is not None and cfg.family not in FAMILIES:
        chk.fail("family", f"expected one of {FAMILIES}, got {cfg.family!r}")
    if cfg.reps is not None:
        chk.integer("reps", cfg.reps, lo=MIN_REPS.get(study, 1))
    o, p = cfg.options, cfg.prior

    if study in ("approx-error", "lower-bound"):
        chk.int_list("k_list", cfg.k_list, increasing=False)
    if study in ("rate-study", "barron-chi2", "gauss-rate"):
        chk.int_list("n_list", cfg.n_list, increasing=True,
                     hi=500 if study == "gauss-rate" else None)
    if f0 is not None and study != "gauss-rate" and not f0.on_unit_interval:
        chk.fail("density", f"{f0.name} is not supported on [0, 1]")
        f0 = None

    if study == "approx-error":
        if o["metric"] not in ("sup", "L1"):
            chk.fail("options.metric", "expected 'sup' or 'L1'")
    elif study in ("posterior", "rate-study"):
        if p["kind"] not in ("geometric", "superexp"):
            chk.fail("prior.kind", "expected 'geometric' or 'superexp'")
        chk.real("prior.rate", p["rate"], lo=0.0, lo_open=True)
        chk.integer("prior.k_max", p["k_max"], lo=1, hi=4096)
        chk.real("prior.m0", p["m0"], lo=0.0, lo_open=True)
        if cfg.family != "histogram":
            chk.integer("options.draws", o["draws"], lo=100)
        elif not _is_int(o["draws"]):
            chk.fail("options.draws", "expected an integer")
    elif study == "barron-chi2":
        chk.real("options.beta", o["beta"], lo=0.0, hi=2.0, lo_open=True)
        chk.real("options.c", o["c"], lo=0.0, lo_open=True)
        if f0 is not None and not f0.reciprocal_integrable:
            chk.fail("density", f"{f0.name}: 1/f0 is not integrable")
    elif study == "barron-clt":
        chk.real("options.x", o["x"], lo=0.0, hi=1.0, lo_open=True, hi_open=True)
        chk.integer("options.n", o["n"], lo=1)
        chk.real("options.alpha", o["alpha"], lo=0.0, hi=1.0, lo_open=True)
        if f0 is not None and f0.d2 is None:
            chk.fail("density", f"{f0.name} has no second-derivative metadata")
    elif study == "lower-bound":
        chk.integer("options.m_factor", o["m_factor"], lo=8)
        if f0 is not None and cfg.family == "polygon" and f0.f3_interval is None:
            chk.fail("density", f"{f0.name}: f0'' is not bounded away from zero on any interval")
    elif study == "gauss-rate":
        chk.integer("prior.k_max", p["k_max"], lo=1, hi=16)
        for key in ("rate", "b", "nu", "lam"):
            chk.real(f"prior.{key}", p[key], lo=0.0, lo_open=True)
        chk.real("prior.delta", p["delta"], lo=0.0, hi=2.0, lo_open=True)
        chk.integer("options.draws", o["draws"], lo=500)

    if study == "posterior":
        if cfg.density is not None:
            chk.fail("density", "posterior reads observations from options.data")
        path = o.get("data")
        if not isinstance(path, str) or not path:
            chk.fail("options.data", "path to an observation file is required")
        else:
            try:
                x = read_observations(path, support=(0.0, 1.0))
            except DataFileError as exc:
                chk.fail("options.data", str(exc), line=exc.line)
            except OSError as exc:
                chk.fail("options.data", f"cannot read {path}: {exc.strerror}")
            else:
                if x.size == 0:
                    chk.fail("options.data", f"{path}: no observations")


# ---------------------------------------------------------------------------
# study runners; each returns (header, rows, summary, extra tables)
# ---------------------------------------------------------------------------

def _sieve_prior(p):
    from .sieve import DirichletSpec, ModelSizePrior, SievePrior
    return SievePrior(ModelSizePrior(p["kind"], float(p["rate"]), int(p["k_max"])),
                      DirichletSpec(float(p["m0"])))


def _study_rows(res):
    return [(x, e, s) for x, e, s in res.rows()]


def run_approx_error(cfg, threads):
    from .basis import approx_error
    from .core import StudyResult
    f0 = catalog_lookup(cfg.density)
    metric = cfg.options["metric"]
    d = [approx_error(cfg.family, f0, k, metric) for k in cfg.k_list]
    res = StudyResult.from_table("k", cfg.k_list, d, np.zeros(len(d)), study="approx-error",
                                 density=f0.name, family=cfg.family, metric=metric)
    return ["k", "distance", "stderr"], _study_rows(res), res.summary(), {}


def run_posterior(cfg, threads):
    from .sieve import posterior
    x = read_observations(cfg.options["data"], support=(0.0, 1.0))
    post = posterior(x, _sieve_prior(cfg.prior), cfg.family, stream(cfg.seed, 0),
                     int(cfg.options["draws"]))
    rows = [(int(k), float(p), float(lm))
            for k, p, lm in zip(post.k_values, post.k_posterior, post.log_marginals)]
    grid = np.linspace(0.0, 1.0, 1025)
    dens = post.bayes_density(grid)
    summary = {"study": "posterior", "family": cfg.family, "n": int(x.size),
               "map_k": post.map_k,
               "posterior_mean_k": float(post.k_values @ post.k_posterior),
               "low_ess_k": post.diagnostics.get("low_ess_k", [])}
    extra = {"density": (["x", "density"], [(float(g), float(v)) for g, v in zip(grid, dens)])}
    return ["k", "posterior", "log_marginal"], rows, summary, extra


def run_rate_study(cfg, threads):
    from .sieve import l1_risk_study
    res = l1_risk_study(catalog_lookup(cfg.density), _sieve_prior(cfg.prior), cfg.family,
                        cfg.n_list, cfg.reps, cfg.seed, threads, int(cfg.options["draws"]))
    return ["n", "l1_risk", "stderr"], _study_rows(res), res.summary(), {}


def run_barron_chi2(cfg, threads):
    from .barron import chi2_risk_study
    o = cfg.options
    res = chi2_risk_study(catalog_lookup(cfg.density), float(o["beta"]), cfg.n_list, cfg.reps,
                          cfg.seed, threads, float(o["c"]))
    return ["n", "chi2_risk", "stderr"], _study_rows(res), res.summary(), {}


def run_barron_clt(cfg, threads):
    from .barron import clt_study
    o = cfg.options
    r = clt_study(catalog_lookup(cfg.density), float(o["x"]), int(o["n"]), cfg.reps, cfg.seed,
                  threads, float(o["alpha"]))
    rows = [(i, float(e)) for i, e in enumerate(r.errors)]
    summary = {"study": "barron-clt", "density": cfg.density, "x": o["x"], "n": o["n"],
               "k_n": r.k_n, "mean": r.mean, "variance": r.variance,
               "target_mean": r.target_mean, "target_variance": r.target_variance,
               "coverage": r.coverage, "alpha": o["alpha"], "interval_width": "plug-in",
               "slope": None, "slope_stderr": None}
    return ["replicate", "standardized_error"], rows, summary, {}


def run_lower_bound(cfg, threads):
    from .best_approx import lower_bound_study
    res = lower_bound_study(catalog_lookup(cfg.density), cfg.k_list, cfg.family,
                            int(cfg.options["m_factor"]))
    return ["k", "l1_distance", "stderr"], _study_rows(res), res.summary(), {}


def run_gauss_rate(cfg, threads):
    from .gaussian import GaussianSievePrior, contraction_study
    p = cfg.prior
    prior = GaussianSievePrior(int(p["k_max"]), float(p["rate"]), float(p["b"]),
                               float(p["delta"]), float(p["nu"]), float(p["lam"]))
    res = contraction_study(catalog_lookup(cfg.density), cfg.n_list, cfg.reps, cfg.seed,
                            threads, prior, int(cfg.options["draws"]))
    return ["n", "l1_risk", "stderr"], _study_rows(res), res.summary(), {}


RUNNERS = {
    "approx-error": run_approx_error,
    "posterior": run_posterior,
    "rate-study": run_rate_study,
    "barron-chi2": run_barron_chi2,
    "barron-clt": run_barron_clt,
    "lower-bound": run_lower_bound,
    "gauss-rate": run_gauss_rate,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _cell(v):
    if _is_int(v):
        return str(int(v))
    return fmt17(v)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_cell(v) for v in row])


def jsonable(v):
    """Convert numpy scalars/arrays to plain JSON values; non-finite floats become null."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if _is_int(v):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def run(cfg: StudyConfig, threads: int | None = None) -> int:
    """Run the study described by a validated config and write all artifacts."""
    threads = default_threads() if threads is None else threads
    os.makedirs(cfg.out, exist_ok=True)
    paths = {"results": os.path.join(cfg.out, "results.csv"),
             "summary": os.path.join(cfg.out, "summary.json"),
             "manifest": os.path.join(cfg.out, "manifest.json")}
    manifest = {"version": __version__, "backend": backend(), "threads": threads,
                "config": cfg.to_dict(), "files": {}}
    t0 = time.perf_counter()
    try:
        header, rows, summary, extra = RUNNERS[cfg.study](cfg, threads)
        write_table(paths["results"], header, rows)
        manifest["files"]["results"] = paths["results"]
        for name, (h, r) in extra.items():
            p = os.path.join(cfg.out, f"{name}.csv")
            write_table(p, h, r)
            manifest["files"][name] = p
        _dump(paths["summary"], summary)
        manifest["files"]["summary"] = paths["summary"]
    except (SieveBayesError, ArithmeticError, ValueError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        record = {"status": "error", "exit_code": EXIT_RUNTIME, "kind": "runtime",
                  "error_type": type(exc).__name__, "message": str(exc)}
        cert = getattr(exc, "certificate", None)
        if cert:
            record["certificate"] = cert
        manifest.update(status="failed", error=record,
                        wall_clock_seconds=time.perf_counter() - t0)
        manifest["files"]["manifest"] = paths["manifest"]
        _dump(paths["manifest"], manifest)
        print(json.dumps(jsonable(record)), file=sys.stderr)
        return EXIT_RUNTIME
    manifest.update(status="ok", wall_clock_seconds=time.perf_counter() - t0,
                    slope=summary.get("slope"), slope_stderr=summary.get("slope_stderr"))
    manifest["files"]["manifest"] = paths["manifest"]
    _dump(paths["manifest"], manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _u64(text):
    v = int(text, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON study configuration")
    common.add_argument("--seed", type=_u64, help="64-bit seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for replicates (default: all CPUs)")
    common.add_argument("--quick", action="store_true",
                        help="divide reps and sample sizes by 10")
    parser = argparse.ArgumentParser(prog="sievebayes",
                                     description="Sieve-prior density estimation studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="study", required=True, metavar="STUDY")
    helps = {
        "approx-error": "approximation error of histogram/polygon/Bernstein projections",
        "posterior": "sieve posterior for observations in a data file",
        "rate-study": "L1 risk of the sieve Bayes estimator versus n",
        "barron-chi2": "chi-square risk of the smoothed Barron estimator versus n",
        "barron-clt": "standardized errors of the smoothed Barron estimator at a point",
        "lower-bound": "best L1 approximation error versus k (exact LP)",
        "gauss-rate": "L1 risk of the Gaussian-mixture sieve versus n",
    }
    for name in STUDIES:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "posterior":
            sp.add_argument("--data", metavar="PATH",
                            help="observation file (sets options.data)")
    return parser


def _config_failure(errors) -> int:
    record = {"status": "error", "exit_code": EXIT_CONFIG, "kind": "config", "errors": errors}
    print(json.dumps(jsonable(record)), file=sys.stderr)
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            return _config_failure([{"field": "--config", "message": str(exc)}])
        except json.JSONDecodeError as exc:
            return _config_failure([{"field": "<document>", "message": f"invalid JSON: {exc}"}])
        if not isinstance(raw, dict):
            return _config_failure([{"field": "<document>", "message": "expected a JSON object"}])
    if getattr(args, "data", None):
        raw.setdefault("options", {})
        raw["options"] = dict(raw["options"], data=args.data)
    try:
        cfg = resolve(raw, args.study, seed=args.seed, out=args.out, quick=args.quick)
    except ConfigError as exc:
        return _config_failure(exc.errors)
    return run(cfg, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
