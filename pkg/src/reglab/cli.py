"""Command-line front end: ``reglab <subcommand> [options]``.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import maximal_ops as mx
from .capacity import ThicknessParams, ball_capacity, thickness_certificate
from .domain import build_domain
from .errors import NumericalError, QOutOfRange, RegLabError, ValidationError
from .goodlambda import (GoodLambdaParams, comparison_estimate_audit, covering_audit_sweep,
                         estimate_theta, good_lambda_fractional_sweep, good_lambda_sweep,
                         norm_estimate_ratio)
from .io import load_config, read_grid, write_csv, write_grid, write_json
from .lorentz import LorentzParams, distribution_table, lorentz_quasinorm
from .pipeline import solve_instance
from .solver import h1_error

log = logging.getLogger("reglab")

COMMANDS = ("solve", "maximal", "lorentz", "capacity", "goodlambda", "audit", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stamp(summary: dict) -> dict:
    # the only nondeterministic field; kept out of every CSV
    summary["generated"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return summary


def _resolution(cfg, args) -> int:
    return args.resolution or cfg.resolutions[0]


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    out = _out(args)
    N = _resolution(cfg, args)
    inst = solve_instance(cfg.shape, N, cfg.p, cfg.data, cfg.seed, cfg.form, cfg.instance, cfg.tol)
    write_grid(out / "u.grid", inst.u.values, inst.domain.h)
    write_grid(out / "sigma.grid", inst.sigma.values, inst.domain.h)
    write_grid(out / "F.grid", inst.F.values, inst.domain.h)
    write_csv(out / "convergence.csv", ["step", "energy", "residual", "delta"],
              inst.u.info["history"])
    summary = dict(inst.meta, iterations=inst.u.info["iterations"], residual=inst.u.info["residual"],
                   energy_ratio=inst.energy_ratio)
    if inst.exact is not None:
        summary["h1_error"] = h1_error(inst.u, inst.exact)
    write_json(out / "summary.json", _stamp(summary))
    return 0


def _operator(args, vals, h):
    if args.mode == "full":
        return mx.fractional_maximal(vals, args.alpha, h)
    if args.r is None:
        raise ValidationError("--r is required for cutoff and tail modes")
    fn = mx.cutoff_maximal if args.mode == "cutoff" else mx.tail_maximal
    return fn(vals, args.r, args.alpha, h)


def cmd_maximal(args) -> int:
    vals, h = read_grid(args.input)
    out = _out(args)
    res = _operator(args, vals, h)
    write_grid(out / "maximal.grid", res, h)
    pos = res[res > 0]
    lams = np.geomspace(pos.min(), pos.max(), args.levels) if len(pos) else np.array([])
    write_csv(out / "distribution.csv", ["lambda", "measure"],
              zip(lams.tolist(), distribution_table(res, lams, h).tolist()))
    return 0


def cmd_lorentz(args) -> int:
    vals, h = read_grid(args.input)
    out = _out(args)
    rows = []
    for q in args.q:
        for s in args.s:
            rows.append([q, s, lorentz_quasinorm(vals, LorentzParams(q, s), h)])
    write_csv(out / "lorentz.csv", ["q", "s", "quasinorm"], rows)
    pos = np.abs(vals)[vals != 0]
    lams = np.geomspace(pos.min(), pos.max(), args.levels) if len(pos) else np.array([])
    write_csv(out / "distribution.csv", ["lambda", "measure"],
              zip(lams.tolist(), distribution_table(vals, lams, h).tolist()))
    return 0


def cmd_capacity(args) -> int:
    out = _out(args)
    if args.ball is not None:
        cap = ball_capacity(args.ball, args.h, args.p)
        write_csv(out / "capacity.csv", ["r", "h", "p", "capacity"], [[args.ball, args.h, args.p, cap]])
        return 0
    if args.config:
        cfg = load_config(args.config)
        shape, p, h = cfg.shape, cfg.p, 1.0 / _resolution(cfg, args)
    else:
        shape, p, h = args.shape, args.p, args.h
    dom = build_domain(shape, h)
    rep = thickness_certificate(dom, p, ThicknessParams(args.c0, args.r0, args.samples))
    header, rows = rep.csv_rows()
    write_csv(out / "certificate.csv", header, rows)
    write_json(out / "summary.json", _stamp(dict(domain=dom.name, h=h, p=p, passed=rep.passed,
                                                 min_ratio=rep.min_ratio, notice=rep.notice,
                                                 skipped=rep.skipped, c0=args.c0, r0=args.r0)))
    return 0


def _theta_for(inst, seed=0):
    audit = comparison_estimate_audit(inst.u, inst.F, inst.sigma, inst.op, seed=seed)
    corpus = [(r["w"], r["center"], r["radius"]) for r in audit.rows if r["kind"] == "interior"]
    theta, table = estimate_theta(corpus, inst.p)
    return theta, table, audit


def cmd_goodlambda(args) -> int:
    cfg = load_config(args.config)
    out = _out(args)
    summary = dict(p=cfg.p, domain=str(cfg.shape), runs=[])
    norm_rows = []
    for N in cfg.resolutions:
        theta = None
        for seed in cfg.seeds:
            inst = solve_instance(cfg.shape, N, cfg.p, cfg.data, seed, cfg.form, cfg.instance, cfg.tol)
            if theta is None:
                theta, table, _ = _theta_for(inst)
            for alpha in cfg.alpha:
                families = ("maximal", "fractional") if alpha == 0 else ("fractional",)
                for fam in families:
                    params = GoodLambdaParams(p=cfg.p, theta=theta, alpha=alpha, family=fam,
                                              eps=cfg.eps if fam == "fractional" and cfg.eps else ())
                    sweep = good_lambda_sweep if fam == "maximal" else good_lambda_fractional_sweep
                    rep = sweep(inst.u, inst.F, inst.sigma, params, fields=inst.fields,
                                meta=inst.meta)
                    header, rows = rep.csv_rows()
                    tag = f"{fam}_a{alpha:g}_n{N}_s{seed}"
                    write_csv(out / f"goodlambda_{tag}.csv", header, rows)
                    write_csv(out / f"plot_{tag}.csv", ["lambda", "ratio"],
                              [[r["lam"], r["ratio"]] for r in rep.rows if r["eps"] == params.eps[0]])
                    summary["runs"].append(dict(family=fam, alpha=alpha, N=N, seed=seed, theta=theta,
                                                a=params.a, b=params.b, eps=params.eps,
                                                C_goodlambda=rep.max_ratio,
                                                nonempty_V=sum(r["measure_V"] > 0 for r in rep.rows),
                                                violations=rep.violations))
                for q in cfg.q:
                    for s in cfg.s:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", QOutOfRange)
                            nr = norm_estimate_ratio(inst.u, inst.F, inst.sigma, alpha, q, s, theta,
                                                     cfg.p, fields=inst.fields)
                        norm_rows.append([cfg.p, alpha, q, s, N, seed, nr.ratio, int(nr.in_window),
                                          int(nr.flagged)])
    write_csv(out / "norms.csv", ["p", "alpha", "q", "s", "N", "seed", "ratio", "in_window", "flagged"],
              norm_rows)
    write_json(out / "summary.json", _stamp(summary))
    return 0


def cmd_audit(args) -> int:
    cfg = load_config(args.config)
    out = _out(args)
    N = _resolution(cfg, args)
    inst = solve_instance(cfg.shape, N, cfg.p, cfg.data, cfg.seed, cfg.form, cfg.instance, cfg.tol)
    theta, table, audit = _theta_for(inst, cfg.seed)
    write_csv(out / "comparison.csv", ["kind", "center", "R", "lhs", "rhs", "quotient"],
              [[r["kind"], r["center"], r["R"], r["lhs"], r["rhs"], r["quotient"]] for r in audit.rows])
    params = GoodLambdaParams(p=cfg.p, theta=theta, alpha=0.0, family="maximal")
    rep = good_lambda_sweep(inst.u, inst.F, inst.sigma, params, fields=inst.fields, meta=inst.meta)
    cover = covering_audit_sweep(rep, inst.domain)
    write_csv(out / "covering.csv", ["eps", "lambda", "hyp_i", "hyp_ii", "applicable", "C_needed",
                                     "samples", "witness"],
              [[r["eps"], r["lam"], c.hypothesis_i, c.hypothesis_ii, c.applicable, c.C_needed,
                c.samples, "" if c.witness is None else repr(c.witness)] for r, c in zip(rep.rows, cover)])
    summary = dict(inst.meta, theta=theta, theta_table=table, C_comparison=audit.C,
                   C_train=audit.C_train, heldout_violations=audit.heldout_violations,
                   covering_witnesses=sum(not c.hypothesis_ii for c in cover),
                   C_covering=max((c.C_needed for c in cover if c.applicable), default=0.0))
    write_json(out / "summary.json", _stamp(summary))
    return 1 if summary["covering_witnesses"] and args.strict else 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise ValidationError(f"{root}: not a directory")
    lines = []
    for path in sorted(root.rglob("summary.json")):
        data = json.loads(path.read_text())
        data.pop("generated", None)
        flat = {k: v for k, v in data.items() if not isinstance(v, (list, dict))}
        lines.append(f"{path.parent.relative_to(root) if path.parent != root else '.'}: "
                     + ", ".join(f"{k}={v}" for k, v in sorted(flat.items())))
    text = "\n".join(lines) + "\n"
    (root / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reglab", description="Discrete regularity laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="solve the Dirichlet problem of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("maximal", help="maximal functions of a grid file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--mode", choices=("full", "cutoff", "tail"), default="full")
    p.add_argument("--r", type=float)
    p.add_argument("--levels", type=int, default=40)

    p = sub.add_parser("lorentz", help="Lorentz quasinorms of a grid file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, nargs="+", default=[1.0])
    p.add_argument("--s", type=float, nargs="+", default=[1.0])
    p.add_argument("--levels", type=int, default=40)

    p = sub.add_parser("capacity", help="ball capacity or thickness certificate")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--resolution", type=int)
    p.add_argument("--shape", default="square(1)")
    p.add_argument("--h", type=float, default=1 / 32)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--c0", type=float, default=0.05)
    p.add_argument("--r0", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--ball", type=float, help="capacity of B_r in B_2r instead")

    p = sub.add_parser("goodlambda", help="good-lambda sweeps and norm ratios")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("audit", help="comparison-estimate and covering audits")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int)
    p.add_argument("--strict", action="store_true", help="exit 1 on covering witnesses")

    p = sub.add_parser("report", help="collect summaries of a results directory")
    p.add_argument("--dir", required=True)
    return parser


HANDLERS = dict(solve=cmd_solve, maximal=cmd_maximal, lorentz=cmd_lorentz, capacity=cmd_capacity,
                goodlambda=cmd_goodlambda, audit=cmd_audit, report=cmd_report)


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "reglab: error: a subcommand is required")
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except ValidationError as exc:
        sys.stderr.write(f"reglab {args.command}: {exc}\n")
        return 1
    except (NumericalError, FloatingPointError) as exc:
        sys.stderr.write(f"reglab {args.command}: numerical failure: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"reglab {args.command}: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
