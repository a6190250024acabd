"""Command line: ``asepdist {eval,simulate,verify,compare}``.

Tables go out as CSV (default for ``eval`` and ``simulate``) and reports
as JSON (default for ``verify`` and ``compare``).  Every output starts
with a header naming the schema version and the numbers that produced it.

Defaults can be overridden by a config file of ``key = value`` lines
(``#`` starts a comment; keys are long option names with ``-`` or ``_``).
Flags given on the command line win over the file.

Exit codes: 0 success, 1 usage or input error, 2 a result that did not
converge or a check that failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import formulas, identities, oracles
from .contour import ContourPlan, InfeasiblePlanError, QuadratureNotConverged, integrate_tensor, plan_contours
from .model import (
    AlternatingZ,
    DistributionQuery,
    FiniteSet,
    ModelParams,
    OneSidedAlternating,
    PoleError,
    StepPositive,
)

SCHEMA_VERSION = 1
THREADS_ENV = "ASEPDIST_THREADS"
IDENTITY_TOL = 1e-9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# small parsers


def parse_range(text: str) -> list[int]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty range {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def read_config(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_id() -> str:
    """Content hash of the package sources, stable across runs of the same build."""
    h = hashlib.sha1()
    pkg = resources.files(__package__)
    for name in sorted(p.name for p in pkg.iterdir() if p.name.endswith(".py")):
        h.update(name.encode())
        h.update(pkg.joinpath(name).read_bytes())
    return h.hexdigest()[:12]


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# shared option groups


def _add_model_opts(p):
    p.add_argument("--p", type=float, default=0.3, help="right-jump rate (q = 1 - p)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--R", dest="R", type=float, default=None, help="large contour radius")
    p.add_argument("--r", dest="r", type=float, default=None, help="small contour radius")
    p.add_argument("--nodes", type=int, default=16, help="starting quadrature nodes per circle")
    p.add_argument("--safety", type=float, default=None, help="radius margin (default 1.25, or 2.0 for step/onesided)")


def _add_ic_opts(p, default_ic="alternating"):
    p.add_argument("--ic", choices=["alternating", "onesided", "step", "finite"], default=default_ic)
    p.add_argument("--k0", type=int, default=1, help="offset of the one-sided configuration")
    p.add_argument("--y", default=None, help="comma-separated sites of a finite configuration")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", default=None, help="site range a..b or list (default m-4..m+4)")


def _add_io_opts(p, fmt):
    p.add_argument("--format", choices=["csv", "json"], default=fmt)
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asepdist", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--config", default=None, help="flat key = value file of defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("eval", help="evaluate P(X_m(t) <= x) from the contour formulas")
    _add_ic_opts(ev)
    _add_model_opts(ev)
    _add_io_opts(ev, "csv")
    ev.add_argument("--form", default=None, help="alternative integrand (step: product|det|unsym; onesided: sym|unsym)")

    sim = sub.add_parser("simulate", help="empirical or exact CDF from an oracle")
    _add_ic_opts(sim)
    sim.add_argument("--p", type=float, default=0.3)
    sim.add_argument("--method", choices=["mc", "master"], default="mc")
    sim.add_argument("--trials", type=int, default=100_000)
    sim.add_argument("--window", default=None, help="lattice window lo..hi")
    _add_io_opts(sim, "csv")

    ver = sub.add_parser("verify", help="run an identity or consistency suite")
    ver.add_argument("suite", choices=["lemma31", "lemma32", "residue", "radius", "symm"])
    ver.add_argument("--kmin", type=int, default=1)
    ver.add_argument("--trials", type=int, default=100)
    _add_ic_opts(ver)
    _add_model_opts(ver)
    _add_io_opts(ver, "json")
    ver.set_defaults(kmax=None)

    cmp_ = sub.add_parser("compare", help="formula against an independent oracle")
    cmp_.add_argument("--oracle", choices=["mc", "skellam", "master", "current"], default="mc")
    cmp_.add_argument("--trials", type=int, default=100_000)
    cmp_.add_argument("--zmax", type=float, default=4.0)
    _add_ic_opts(cmp_)
    _add_model_opts(cmp_)
    _add_io_opts(cmp_, "json")
    return parser


RANGE_FLAGS = ("--x", "--y", "--window")


def _glue_ranges(argv: list[str]) -> list[str]:
    """Turn ``--x -3..3`` into ``--x=-3..3`` so a leading minus is not read as an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in RANGE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1][1:2].isdigit():
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    argv = _glue_ranges(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        # re-parse with the file as defaults so explicit flags still win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        typed = {}
        for key, value in cfg.items():
            action = known[key]
            conv = action.type or str
            typed[key] = conv(value)
            if action.choices is not None and typed[key] not in action.choices:
                raise UsageError(f"config {key}={value!r} not in {list(action.choices)}")
        sub.set_defaults(**typed)
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


# ---------------------------------------------------------------------------
# helpers


def _initial(args):
    if args.ic == "alternating":
        return AlternatingZ()
    if args.ic == "onesided":
        return OneSidedAlternating(args.k0)
    if args.ic == "step":
        return StepPositive()
    if not args.y:
        raise UsageError("--ic finite needs --y")
    return FiniteSet(tuple(parse_range(args.y)))


def tagged_site(initial, m: int) -> int:
    """Starting site of the particle labelled ``m`` under each labelling convention."""
    if isinstance(initial, AlternatingZ):
        return m
    if isinstance(initial, OneSidedAlternating):
        return 2 * m - initial.k0
    if isinstance(initial, StepPositive):
        return m
    return initial.sites[m - 1]


def _plan(args, params, explicit: bool = False) -> ContourPlan | None:
    """Contours for the run; ``None`` lets finite configurations choose their own."""
    if args.ic == "finite" and args.R is None and args.r is None and not explicit:
        return None
    # step and one-sided integrals live on the large circle only
    mixed = args.ic in ("alternating", "finite")
    base = plan_contours(params, safety=args.safety, nodes=args.nodes, mixed=mixed)
    if args.R is None and args.r is None:
        return base
    plan = ContourPlan(R=args.R or base.R, r=args.r or base.r, params=params, nodes=max(16, args.nodes), mixed=mixed)
    if not plan.is_valid():
        raise UsageError(f"contour radii violate: {', '.join(plan.violations())}")
    return plan


def _xs(args) -> list[int]:
    if args.x is None:
        return list(range(args.m - 4, args.m + 5))
    return parse_range(args.x)


def evaluate(initial, m: int, x: int, t: float, params, plan, args) -> formulas.SeriesReport:
    """One formula evaluation, never raising on slow convergence (the report says so)."""
    kw = dict(plan=plan, workers=args.threads)
    if isinstance(initial, AlternatingZ):
        return formulas.prob_alternating(DistributionQuery(m, x, t, args.kmax, args.tol), params,
                                         raise_on_fail=False, **kw)
    if isinstance(initial, OneSidedAlternating):
        return formulas.prob_onesided(initial.k0, m, x, t, params, tol=args.tol, kmax=args.kmax,
                                      form=getattr(args, "form", None) or "sym", raise_on_fail=False, **kw)
    if isinstance(initial, StepPositive):
        return formulas.prob_step(m, x, t, params, tol=args.tol, kmax=args.kmax,
                                  form=getattr(args, "form", None) or "product", raise_on_fail=False, **kw)
    return formulas.prob_finite(initial, m, x, t, params, tol=min(args.tol, 1e-10), **kw)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


class Output:
    def __init__(self, schema: str, header: dict, fmt: str):
        self.schema = f"asepdist.{schema}/{SCHEMA_VERSION}"
        self.header = header
        self.fmt = fmt

    def render(self, columns: list[str], rows: list[dict], summary: dict | None = None) -> str:
        if self.fmt == "json":
            doc = {"schema": self.schema, "header": self.header, "rows": rows}
            if summary is not None:
                doc["summary"] = summary
            return json.dumps(doc, indent=2, default=_json_default) + "\n"
        buf = io.StringIO()
        buf.write(f"# schema={self.schema}\n")
        for key, value in self.header.items():
            buf.write(f"# {key}={_fmt(value)}\n")
        if summary is not None:
            for key, value in summary.items():
                buf.write(f"# {key}={_fmt(value)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
        return buf.getvalue()


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _header(args, params, plan=None, **extra) -> dict:
    h = {"p": params.p, "q": params.q, "tau": params.tau}
    if plan is not None:
        h.update(R=plan.R, r=plan.r, nodes=plan.nodes)
    elif args.command in ("eval", "compare") and args.ic == "finite":
        h["contours"] = "auto"
    h["seed"] = args.seed
    h["build"] = build_id()
    h.update(extra)
    return h


def _write(args, text: str):
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


# ---------------------------------------------------------------------------
# commands

EVAL_COLUMNS = ["x", "probability", "tail_bound", "est_error", "im_residual", "terms_used", "converged"]


def cmd_eval(args) -> int:
    params = ModelParams(args.p)
    initial = _initial(args)
    plan = _plan(args, params)
    rows, ok = [], True
    for x in _xs(args):
        rep = evaluate(initial, args.m, x, args.t, params, plan, args)
        ok &= rep.converged
        rows.append(dict(x=x, probability=rep.value, tail_bound=rep.tail_bound, est_error=rep.est_error,
                         im_residual=rep.im_residual, terms_used=rep.terms_used, converged=int(rep.converged)))
    out = Output("eval", _header(args, params, plan, ic=args.ic, m=args.m, t=args.t), args.format)
    _write(args, out.render(EVAL_COLUMNS, rows))
    return 0 if ok else 2


def _simulate(args, params, initial, xs):
    """CDF rows ``(x, cdf, ci_halfwidth)`` from the chosen oracle."""
    if args.method == "master":
        if not isinstance(initial, FiniteSet):
            raise UsageError("the master equation needs a finite configuration")
        res = oracles.master_equation(initial, _window(args), args.t, params)
        cdf = res.cdf(args.m, xs)
        return [dict(x=x, cdf=float(c), ci_halfwidth=0.0) for x, c in zip(xs, cdf)], {"boundary_mass": res.boundary_mass}
    cfg = oracles.SimConfig(params=params, initial=initial, t_end=args.t, trials=args.trials,
                            seed=args.seed, tagged_origin=tagged_site(initial, args.m), window=_window(args))
    emp = oracles.mc_simulate(cfg, workers=args.threads)
    return [dict(x=x, cdf=emp.at(x), ci_halfwidth=emp.ci_at(x)) for x in xs], {"flagged": emp.flagged, "trials": emp.n}


def _window(args):
    if not args.window:
        return None
    w = parse_range(args.window)
    return (w[0], w[-1])


def cmd_simulate(args) -> int:
    params = ModelParams(args.p)
    initial = _initial(args)
    xs = _xs(args)
    rows, extra = _simulate(args, params, initial, xs)
    out = Output("simulate", _header(args, params, None, ic=args.ic, m=args.m, t=args.t, method=args.method), args.format)
    _write(args, out.render(["x", "cdf", "ci_halfwidth"], rows, extra))
    return 0


def _verify_identity(args, params):
    kmax = args.kmax if args.kmax is not None else 5
    per_k = identities.max_residuals(args.suite, kmax, args.trials, params, seed=args.seed, kmin=args.kmin)
    rows = [dict(k=k, max_residual=v, passed=int(v <= IDENTITY_TOL)) for k, v in per_k.items()]
    return rows, ["k", "max_residual", "passed"], all(r["passed"] for r in rows), {"threshold": IDENTITY_TOL}


def _verify_radius(args, params):
    initial = _initial(args)
    plan = _plan(args, params, explicit=True)
    moved = plan.scaled(1.15, 0.85)
    if not moved.is_valid():
        raise UsageError(f"perturbed radii violate: {', '.join(moved.violations())}")
    if args.kmax is None:
        args.kmax = 8
    rows = []
    for x in _xs(args):
        a = evaluate(initial, args.m, x, args.t, params, plan, args)
        b = evaluate(initial, args.m, x, args.t, params, moved, args)
        drift = abs(a.value - b.value)
        bound = max(1e-7, 10.0 * max(a.est_error, b.est_error))
        rows.append(dict(x=x, base=a.value, perturbed=b.value, drift=drift, bound=bound,
                         passed=int(drift <= bound and a.converged and b.converged)))
    return rows, ["x", "base", "perturbed", "drift", "bound", "passed"], all(r["passed"] for r in rows), {
        "R_perturbed": moved.R, "r_perturbed": moved.r}


def _verify_symm(args, params):
    if args.ic != "alternating":
        raise UsageError("the symmetrisation suite applies to the alternating configuration")
    plan = _plan(args, params)
    kmax = args.kmax if args.kmax is not None else 3
    rows = []
    for x in _xs(args) if args.x is not None else [0]:
        for k in range(1, kmax + 1):
            for k_minus in range(k + 1):
                k_plus = k - k_minus
                c_sym = formulas.coeff_alt_sym(args.m, k_minus, k_plus, params)
                c_raw = formulas.coeff_alt(args.m, k_minus, k_plus, params)
                if c_sym == 0.0 and c_raw == 0.0:
                    continue
                tol = args.tol * 1e-3
                sym = c_sym * integrate_tensor(formulas.alternating_integrand(k_minus, x, args.t, params),
                                               k_minus, k_plus, plan, tol, True, args.threads).value
                raw = c_raw * integrate_tensor(formulas.alternating_unsym_integrand(k_minus, x, args.t, params),
                                               k_minus, k_plus, plan, tol, False, args.threads).value
                rel = abs(sym - raw) / max(abs(raw), 1e-300)
                ok = rel <= IDENTITY_TOL or abs(sym - raw) <= 1e-15
                rows.append(dict(x=x, k_minus=k_minus, k_plus=k_plus, symmetrised=sym.real, unsymmetrised=raw.real,
                                 relative=rel, passed=int(ok)))
    cols = ["x", "k_minus", "k_plus", "symmetrised", "unsymmetrised", "relative", "passed"]
    return rows, cols, all(r["passed"] for r in rows), {"threshold": IDENTITY_TOL}


def cmd_verify(args) -> int:
    params = ModelParams(args.p)
    if args.suite in identities.SUITES:
        rows, cols, ok, extra = _verify_identity(args, params)
        plan = None
    elif args.suite == "radius":
        rows, cols, ok, extra = _verify_radius(args, params)
        plan = _plan(args, params, explicit=True)
    else:
        rows, cols, ok, extra = _verify_symm(args, params)
        plan = _plan(args, params)
    out = Output(f"verify.{args.suite}", _header(args, params, plan), args.format)
    _write(args, out.render(cols, rows, dict(extra, passed=int(ok))))
    return 0 if ok else 2


def cmd_compare(args) -> int:
    params = ModelParams(args.p)
    initial = _initial(args)
    plan = _plan(args, params)
    xs = _xs(args)
    rows = []
    if args.oracle == "mc":
        args.method = "mc"
        args.window = None
        sims, _ = _simulate(args, params, initial, xs)
        for x, s in zip(xs, sims):
            f = evaluate(initial, args.m, x, args.t, params, plan, args).value
            z = (f - s["cdf"]) / s["ci_halfwidth"]
            rows.append(dict(x=x, formula=f, oracle=s["cdf"], ci_halfwidth=s["ci_halfwidth"], score=z,
                             passed=int(abs(z) <= args.zmax)))
        summary = {"max_abs_z": max(abs(r["score"]) for r in rows), "zmax": args.zmax}
    else:
        if args.oracle == "skellam":
            if not (isinstance(initial, FiniteSet) and len(initial.sites) == 1):
                raise UsageError("the single-particle law needs --ic finite with one site")
            ref = [oracles.skellam_single(initial.sites[0], x, args.t, params) for x in xs]
            limit = 1e-8
        elif args.oracle == "master":
            if not isinstance(initial, FiniteSet):
                raise UsageError("the master equation needs a finite configuration")
            ref = list(oracles.master_equation(initial, None, args.t, params).cdf(args.m, xs))
            limit = 1e-7
        else:
            if not isinstance(initial, StepPositive):
                raise UsageError("the current identity applies to the step configuration")
            ref = [formulas.current_tail_prob(x, args.t, args.m, params, plan, tol=args.tol, kmax=args.kmax,
                                              raise_on_fail=False) for x in xs]
            limit = 0.0
        for x, r in zip(xs, ref):
            f = evaluate(initial, args.m, x, args.t, params, plan, args).value
            d = abs(f - float(r))
            rows.append(dict(x=x, formula=f, oracle=float(r), ci_halfwidth=0.0, score=d, passed=int(d <= limit)))
        summary = {"max_abs_diff": max(r["score"] for r in rows), "limit": limit}
    ok = all(r["passed"] for r in rows)
    out = Output(f"compare.{args.oracle}", _header(args, params, plan, ic=args.ic, m=args.m, t=args.t), args.format)
    _write(args, out.render(["x", "formula", "oracle", "ci_halfwidth", "score", "passed"], rows, dict(summary, passed=int(ok))))
    return 0 if ok else 2


COMMANDS = {"eval": cmd_eval, "simulate": cmd_simulate, "verify": cmd_verify, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, InfeasiblePlanError, PoleError, oracles.StateSpaceTooLarge) as exc:
        print(f"asepdist: error: {exc}", file=sys.stderr)
        return 1
    except (QuadratureNotConverged, formulas.SeriesNotConverged, oracles.WindowTooSmall) as exc:
        print(f"asepdist: not converged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
