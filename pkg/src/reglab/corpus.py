"""Factorial experiment corpus: p x alpha x domain x seeds at several resolutions."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import QOutOfRange
from .goodlambda import (GoodLambdaParams, comparison_estimate_audit, covering_audit_sweep,
                         estimate_theta, good_lambda_fractional_sweep, good_lambda_sweep,
                         norm_estimate_ratio, q_window)
from .pipeline import solve_instance

log = logging.getLogger(__name__)

P_VALUES = (1.5, 2.0, 3.0)
ALPHAS = (0.0, 0.5, 1.0)
SHAPES = ("square(1)", "L-shape(1)", "square-minus-disk(1, 0.25)")
SEEDS = (0, 1, 2, 3, 4)
RESOLUTIONS = (32, 64)
NORM_Q = (1.0, 2.0)
NORM_S = (1.0, 2.0, math.inf)


@dataclass
class CorpusResult:
    sweeps: list = field(default_factory=list)      # one dict per (instance, family, alpha)
    norms: list = field(default_factory=list)       # one dict per (instance, alpha, q, s)
    audits: list = field(default_factory=list)      # one dict per audited instance
    thetas: dict = field(default_factory=dict)      # (p, shape, N) -> (theta, table)
    energy: list = field(default_factory=list)      # (p, shape, N, seed, ratio)

    def group_max(self, rows, key, value, where=lambda r: True):
        out = {}
        for r in rows:
            if not where(r):
                continue
            k = key(r)
            out[k] = max(out.get(k, 0.0), r[value])
        return out


def run_corpus(p_values=P_VALUES, alphas=ALPHAS, shapes=SHAPES, seeds=SEEDS,
               resolutions=RESOLUTIONS, audit_resolutions=None, covering=True,
               norm_q=NORM_Q, norm_s=NORM_S) -> CorpusResult:
    """Solve every instance, run both sweep families, norm ratios and audits.

    The reverse Holder exponent is estimated once per (p, shape, N) from the
    interior comparison solves of the first seed.  Comparison audits run for
    every seed at ``audit_resolutions`` (default: the coarsest resolution) and
    for the first seed at the other resolutions.
    """
    res = CorpusResult()
    audit_resolutions = audit_resolutions or resolutions[:1]
    for p in p_values:
        for shape in shapes:
            for N in resolutions:
                for seed in seeds:
                    inst = solve_instance(shape, N, p, "fourier", seed)
                    res.energy.append(dict(p=p, shape=shape, N=N, seed=seed, ratio=inst.energy_ratio))
                    key = (p, shape, N)
                    if key not in res.thetas or N in audit_resolutions:
                        audit = comparison_estimate_audit(inst.u, inst.F, inst.sigma, inst.op, seed=seed)
                        res.audits.append(dict(p=p, shape=shape, N=N, seed=seed, C=audit.C,
                                               C_train=audit.C_train,
                                               heldout_violations=audit.heldout_violations,
                                               balls=len(audit.rows)))
                        if key not in res.thetas:
                            corpus = [(r["w"], r["center"], r["radius"]) for r in audit.rows
                                      if r["kind"] == "interior"]
                            res.thetas[key] = estimate_theta(corpus, p)
                    theta = res.thetas[key][0]
                    for alpha in alphas:
                        fams = ("maximal", "fractional") if alpha == 0 else ("fractional",)
                        for fam in fams:
                            params = GoodLambdaParams(p=p, theta=theta, alpha=alpha, family=fam)
                            sweep = good_lambda_sweep if fam == "maximal" else good_lambda_fractional_sweep
                            rep = sweep(inst.u, inst.F, inst.sigma, params, fields=inst.fields,
                                        meta=inst.meta)
                            row = dict(p=p, shape=shape, N=N, seed=seed, alpha=alpha, family=fam,
                                       theta=theta, a=params.a, b=params.b, eps=params.eps,
                                       C=rep.max_ratio, violations=dict(rep.violations),
                                       nonempty_V=sum(r["measure_V"] > 0 for r in rep.rows),
                                       rows=len(rep.rows))
                            if covering:
                                cov = covering_audit_sweep(rep, inst.domain)
                                row["covering_witnesses"] = [c.witness for c in cov if not c.hypothesis_ii]
                                row["covering_applicable"] = sum(c.applicable for c in cov)
                                row["covering_C"] = max((c.C_needed for c in cov if c.applicable),
                                                        default=0.0)
                                row["covering_C_rows"] = [c.C_needed for c in cov if c.applicable]
                            res.sweeps.append(row)
                        upper = q_window(theta, p, alpha)
                        for q in tuple(norm_q) + (1.25 * upper,):
                            for s in norm_s:
                                with warnings.catch_warnings():
                                    warnings.simplefilter("ignore", QOutOfRange)
                                    nr = norm_estimate_ratio(inst.u, inst.F, inst.sigma, alpha, q, s,
                                                             theta, p, fields=inst.fields)
                                res.norms.append(dict(p=p, shape=shape, N=N, seed=seed, alpha=alpha,
                                                      q=q, s=s, ratio=nr.ratio, in_window=nr.in_window,
                                                      flagged=nr.flagged, extra_q=q not in norm_q))
                    log.info("corpus: p=%s %s N=%d seed=%d done", p, shape, N, seed)
    return res


def stable(a: float, b: float, factor: float = 2.0) -> bool:
    """Two finite constants agree within ``factor``; two zeros count as stable."""
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    if a == 0 and b == 0:
        return True
    if a == 0 or b == 0:
        return False
    return max(a, b) / min(a, b) <= factor
