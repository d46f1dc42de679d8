"""Command-line front end.

Runs are described by a plain-text ``key = value`` document with sections;
command-line flags override individual keys::

    [manifold]
    name = hyperboloid
    dim = 2

    [field]
    name = indicator_ball
    radius = 1

    [run]
    lambda = 0.1, 1, 10
    seed = 0

Exit codes: 0 success, 1 a check failed, 2 bad configuration, 3 infeasible
computation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, replace

import numpy as np

from .applications import NotCartanHadamardError, hj_demo, sphere_counterexample
from .envelope import EnvelopeParams, InfeasibleError, ParameterError, envelope_results
from .fields import FieldError, builtin_field
from .manifolds import GeometryError, make_model
from .verification import lambda_sweep, reports_to_json, run_bundle

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
THREADS_ENV = "RIEMOREAU_THREADS"
BUNDLES = ("main-corollary", "cartan-hadamard", "localization", "symmetry", "c1")
FORMATS = ("csv", "json")

# field parameters that hold a point or vector rather than a scalar
VECTOR_KEYS = {"center", "start", "end", "coeffs", "base", "direction"}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v) + 0.0, ".17g")  # + 0.0 turns -0.0 into 0.0


def _fmt_list(vs):
    return ", ".join(_fmt(v) for v in vs)


@dataclass(frozen=True)
class RunConfig:
    manifold: str = "hyperboloid"
    dim: int = 2
    field: str = "indicator_ball"
    field_params: tuple = ()
    lambdas: tuple = (1.0,)
    center: tuple | None = None
    radius: float = 1.0
    samples: int = 20
    points: tuple = ()
    grid_density: float = 8.0
    seed: int = 0
    atol: float = 1e-7
    rtol: float = 1e-7
    refine_tol: float = 1e-10
    bundle: str = "main-corollary"
    times: tuple = (0.25, 0.5, 0.75, 1.0)
    hj_step: float = 1e-4
    epsilon: float = 0.5
    output: str = "-"
    format: str | None = None
    threads: int | None = None

    # -- serialization --------------------------------------------------
    def to_text(self):
        """Emit a document that :meth:`from_text` parses back to an equal config."""
        out = ["[manifold]", f"name = {self.manifold}", f"dim = {self.dim}", "",
               "[field]", f"name = {self.field}"]
        for key, val in self.field_params:
            out.append(f"{key} = {_fmt_list(val) if isinstance(val, tuple) else _fmt(val)}")
        out += ["", "[run]", f"lambda = {_fmt_list(self.lambdas)}", f"seed = {self.seed}",
                f"grid = {_fmt(self.grid_density)}"]
        if self.threads is not None:
            out.append(f"threads = {self.threads}")
        out += ["", "[region]", f"radius = {_fmt(self.radius)}", f"samples = {self.samples}"]
        if self.center is not None:
            out.append(f"center = {_fmt_list(self.center)}")
        if self.points:
            out.append("points = " + "; ".join(_fmt_list(p) for p in self.points))
        out += ["", "[tolerances]", f"atol = {_fmt(self.atol)}", f"rtol = {_fmt(self.rtol)}",
                f"refine_tol = {_fmt(self.refine_tol)}", "",
                "[check]", f"bundle = {self.bundle}", "",
                "[hj]", f"times = {_fmt_list(self.times)}", f"step = {_fmt(self.hj_step)}", "",
                "[counterexample]", f"epsilon = {_fmt(self.epsilon)}", "",
                "[output]", f"path = {self.output}"]
        if self.format is not None:
            out.append(f"format = {self.format}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("expected a [section] header before any key", exc.lineno) from None
        except configparser.ParsingError as exc:
            line = exc.errors[0][0]
            bad = text.splitlines()[line - 1].strip()
            raise ConfigError(f"cannot parse {bad!r} (expected key = value)", line) from None
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(str(exc).splitlines()[0], line) from None
        lines = _key_lines(text)
        known = {
            "manifold": {"name", "dim"},
            "run": {"lambda", "seed", "grid", "threads"},
            "region": {"center", "radius", "samples", "points"},
            "tolerances": {"atol", "rtol", "refine_tol"},
            "check": {"bundle"},
            "hj": {"times", "step"},
            "counterexample": {"epsilon"},
            "output": {"path", "format"},
        }
        for sec in parser.sections():
            if sec != "field" and sec not in known:
                raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))
            for key in parser[sec]:
                if sec != "field" and key not in known[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)))

        kw = {}

        def get(sec, key, conv, dest):
            if parser.has_option(sec, key):
                raw = parser.get(sec, key)
                try:
                    kw[dest] = conv(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}", lines.get((sec, key))) from None

        get("manifold", "name", str.strip, "manifold")
        get("manifold", "dim", int, "dim")
        get("run", "lambda", _floats, "lambdas")
        get("run", "seed", int, "seed")
        get("run", "grid", float, "grid_density")
        get("run", "threads", int, "threads")
        get("region", "center", _floats, "center")
        get("region", "radius", float, "radius")
        get("region", "samples", int, "samples")
        get("region", "points", _points, "points")
        get("tolerances", "atol", float, "atol")
        get("tolerances", "rtol", float, "rtol")
        get("tolerances", "refine_tol", float, "refine_tol")
        get("check", "bundle", str.strip, "bundle")
        get("hj", "times", _floats, "times")
        get("hj", "step", float, "hj_step")
        get("counterexample", "epsilon", float, "epsilon")
        get("output", "path", str.strip, "output")
        get("output", "format", str.strip, "format")
        if parser.has_section("field"):
            params = []
            for key in parser["field"]:
                if key == "name":
                    kw["field"] = parser.get("field", key).strip()
                    continue
                raw = parser.get("field", key)
                try:
                    val = _floats(raw) if key in VECTOR_KEYS else float(raw)
                except ValueError as exc:
                    raise ConfigError(f"[field] {key}: {exc}", lines.get(("field", key))) from None
                params.append((key, val))
            kw["field_params"] = tuple(params)
        cfg = cls(**kw)
        cfg.validate(lines)
        return cfg

    def validate(self, lines=None):
        """Check numeric ranges and names before any computation."""
        lines = lines or {}

        def fail(msg, sec, key):
            raise ConfigError(msg, lines.get((sec, key)))

        if not self.lambdas:
            fail("at least one lambda is required", "run", "lambda")
        for lam in self.lambdas:
            if not (lam > 0 and math.isfinite(lam)):
                fail(f"lambda must be positive and finite, got {lam:g}", "run", "lambda")
        if self.dim < 1:
            fail("dim must be >= 1", "manifold", "dim")
        if not self.radius > 0:
            fail("region radius must be positive", "region", "radius")
        if self.samples < 1:
            fail("samples must be >= 1", "region", "samples")
        if not self.grid_density > 0:
            fail("grid must be positive", "run", "grid")
        if self.threads is not None and self.threads < 1:
            fail("threads must be >= 1", "run", "threads")
        for name in ("atol", "rtol", "refine_tol"):
            if not getattr(self, name) > 0:
                fail(f"{name} must be positive", "tolerances", name)
        if any(not (t > 0 and math.isfinite(t)) for t in self.times):
            fail("hj times must be positive", "hj", "times")
        if not 0 < self.hj_step < min(self.times, default=math.inf):
            fail("hj step must be positive and below the smallest time", "hj", "step")
        if not 0 < self.epsilon < 1:
            fail("epsilon must lie in (0, 1)", "counterexample", "epsilon")
        if self.bundle not in BUNDLES:
            fail(f"unknown bundle {self.bundle!r}; choose from {', '.join(BUNDLES)}",
                 "check", "bundle")
        if self.format is not None and self.format not in FORMATS:
            fail(f"format must be one of {', '.join(FORMATS)}", "output", "format")
        try:
            model = make_model(self.manifold, self.dim)
        except (GeometryError, ValueError, KeyError) as exc:
            fail(str(exc), "manifold", "name")
        def on_model(p, sec, key):
            if len(p) != model.ambient_dim:
                fail(f"{key} needs {model.ambient_dim} coordinates", sec, key)
            try:
                model.check_point(np.array(p), tol=1e-8)
            except GeometryError as exc:
                fail(str(exc), sec, key)

        for key, val in self.field_params:
            if key in ("center", "start", "end", "base"):
                on_model(val, "field", key)
        for p in self.points:
            on_model(p, "region", "points")
        if self.center is not None:
            on_model(self.center, "region", "center")
        return self

    # -- construction ---------------------------------------------------
    def build(self):
        model = make_model(self.manifold, self.dim)
        params = {k: (np.array(v) if isinstance(v, tuple) else v) for k, v in self.field_params}
        f = builtin_field(model, self.field, **params)
        return model, f

    def envelope_params(self, lam=None):
        return EnvelopeParams(lam=float(self.lambdas[0] if lam is None else lam),
                              grid_density=self.grid_density, refine_tol=self.refine_tol,
                              seed=self.seed)

    def sample_points(self, model):
        if self.points:
            return np.array(self.points, dtype=float)
        center = model.origin() if self.center is None else np.array(self.center)
        rng = np.random.default_rng(self.seed)
        return model.random_point(center, self.radius, rng, size=self.samples)


def _floats(raw):
    vals = tuple(float(t) for t in raw.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _points(raw):
    return tuple(_floats(chunk) for chunk in raw.split(";") if chunk.strip())


def _key_lines(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), i)
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
        out.setdefault((sec, key), i)
    return out


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def rows_to_json(header, rows):
    recs = [{h: (v if isinstance(v, str) else float(v) if not isinstance(v, (bool, np.bool_))
                 else bool(v)) for h, v in zip(header, row)} for row in rows]
    return json.dumps({"rows": recs}, sort_keys=True, indent=2) + "\n"


def _emit(text, path):
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _table(header, rows, fmt):
    return rows_to_json(header, rows) if fmt == "json" else rows_to_csv(header, rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_envelope(cfg, threads=1):
    """Envelope value, gradient and proximal point at each sample point."""
    model, f = cfg.build()
    pts = cfg.sample_points(model)
    D = model.ambient_dim
    header = ([f"x{i}" for i in range(D)] + ["lambda", "f", "envelope"]
              + [f"grad{i}" for i in range(D)] + [f"prox{i}" for i in range(D)]
              + ["radius_used", "minimizer_unique"])
    fvals = f(pts)
    rows = []
    for lam in cfg.lambdas:
        res = envelope_results(model, f, pts, cfg.envelope_params(lam), threads)
        for x, fx, r in zip(pts, fvals, res):
            rows.append([*x, lam, fx, r.value, *r.gradient, *r.prox_point, r.radius_used,
                         r.minimizer_unique])
    return _table(header, rows, cfg.format or "csv"), EXIT_OK


def cmd_sweep(cfg, threads=1):
    """Sup and mean gap ``f - f_lam`` over the sample points for each lambda."""
    model, f = cfg.build()
    pts = cfg.sample_points(model)
    rows = lambda_sweep(model, f, cfg.lambdas, pts, cfg.envelope_params())
    table = [[r["lam"], r["sup_gap"], r["mean_gap"]] for r in rows]
    return _table(["lambda", "sup_gap", "mean_gap"], table, cfg.format or "csv"), EXIT_OK


def cmd_check(cfg, threads=1):
    """Run a check bundle; exit 1 unless every report passes."""
    model, f = cfg.build()
    center = None if cfg.center is None else np.array(cfg.center)
    try:
        reports = run_bundle(cfg.bundle, model, f, cfg.lambdas, center=center,
                             radius=cfg.radius, samples=cfg.samples, seed=cfg.seed,
                             params=cfg.envelope_params(), atol=cfg.atol, rtol=cfg.rtol)
    except ValueError as exc:
        if isinstance(exc, (ParameterError, FieldError, GeometryError)):
            raise
        raise ConfigError(f"bundle {cfg.bundle!r}: {exc}") from None
    code = EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED
    if (cfg.format or "json") == "csv":
        header = ["check_name", "model", "field", "samples", "worst_violation", "tolerance",
                  "pass"]
        rows = [[r.check_name, r.model, r.field, r.samples, r.worst_violation, r.tolerance,
                 r.passed] for r in reports]
        return rows_to_csv(header, rows), code
    return reports_to_json(reports), code


def cmd_counterexample(cfg, threads=1):
    """Violation search on the sphere; exit 1 if no witness was found."""
    report = sphere_counterexample(cfg.epsilon)
    found = report.worst_violation > 1e-4
    if (cfg.format or "json") == "csv":
        w = report.witnesses[0]
        header = ["epsilon", "margin", "t0", "t1"] + [f"apex{i}" for i in range(3)] + \
            [f"direction{i}" for i in range(3)]
        row = [cfg.epsilon, w["margin"], w["t0"], w["t1"], *w["apex"], *w["direction"]]
        return rows_to_csv(header, [row]), EXIT_OK if found else EXIT_CHECK_FAILED
    return reports_to_json([report]), EXIT_OK if found else EXIT_CHECK_FAILED


def cmd_hj(cfg, threads=1):
    """Hopf-Lax values and Hamilton-Jacobi residuals on a (t, x) grid."""
    model, f = cfg.build()
    pts = cfg.sample_points(model)
    rows = hj_demo(model, f, cfg.times, pts, cfg.envelope_params(), h=cfg.hj_step)
    D = model.ambient_dim
    header = ["t"] + [f"x{i}" for i in range(D)] + ["u", "residual"]
    table = [[r["t"], *r["x"], r["u"], r["residual"]] for r in rows]
    return _table(header, table, cfg.format or "csv"), EXIT_OK


COMMANDS = {"envelope": cmd_envelope, "sweep": cmd_sweep, "check": cmd_check,
            "counterexample": cmd_counterexample, "hj": cmd_hj}


def build_parser():
    parser = argparse.ArgumentParser(prog="riemoreau",
                                     description="Moreau envelopes on model manifolds")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=FORMATS, help="output format")
    common.add_argument("--threads", type=int,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--lambda", dest="lambdas", help="override [run] lambda, comma list")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("envelope", parents=[common], help="envelope values at sample points")
    sub.add_parser("sweep", parents=[common], help="sup-gap table over lambda")
    chk = sub.add_parser("check", parents=[common], help="run a check bundle")
    chk.add_argument("bundle", nargs="?", choices=BUNDLES)
    ce = sub.add_parser("counterexample", parents=[common], help="sphere convexity violation")
    ce.add_argument("--epsilon", type=float, help="segment length in (0, 1)")
    sub.add_parser("hj", parents=[common], help="Hamilton-Jacobi residual table")
    return parser


def load_config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = RunConfig.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    else:
        cfg = RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output"] = args.out
    if args.format is not None:
        over["format"] = args.format
    if args.lambdas is not None:
        try:
            over["lambdas"] = _floats(args.lambdas)
        except ValueError as exc:
            raise ConfigError(f"--lambda: {exc}") from None
    if getattr(args, "bundle", None):
        over["bundle"] = args.bundle
    if getattr(args, "epsilon", None) is not None:
        over["epsilon"] = args.epsilon
    if args.threads is not None:
        over["threads"] = args.threads
    cfg = replace(cfg, **over)
    return cfg.validate()


def resolve_threads(cfg):
    if cfg.threads is not None:
        return cfg.threads
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw.strip() else 1
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        threads = resolve_threads(cfg)
        text, code = COMMANDS[args.command](cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, FieldError, GeometryError, NotCartanHadamardError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(text, cfg.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
