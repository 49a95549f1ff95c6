"""Acceptance criteria 1-12, one PASS/FAIL line per criterion.

The corpus criteria (9-12) share one module-scoped factorial run of
p x domain x seed x resolution; it is the slow part of the suite.
"""
import math
import time
from collections import defaultdict

import numpy as np
import pytest

from reglab import maximal_ops as mx
from reglab.capacity import ThicknessParams, ball_capacity, p_capacity, thickness_certificate
from reglab.corpus import RESOLUTIONS, run_corpus, stable
from reglab.domain import CellSet, DiscreteDomain, build_domain
from reglab.estimates import (cutoff_composition_constant, localized_weak_constant,
                              weak_type_constant)
from reglab.instances import FourierSeries
from reglab.lorentz import LorentzParams, lorentz_quasinorm, lq_norm
from reglab.oracles import MaximalOracle
from reglab.pipeline import make_data
from reglab.solver import OperatorSpec, h1_error, solve_dirichlet

P_SET = (1.5, 2.0, 3.0)
ALPHAS = (0.0, 0.5, 1.0)
LOG2_CAP = 2 * math.pi / math.log(2)


# 1 --------------------------------------------------------------------------

def test_c01_manufactured_rate(criterion):
    details, ok = [], True
    for p in P_SET:
        errs, times = [], []
        for N in (32, 64):
            dom = build_domain("square(1)", 1 / N)
            F, sigma, exact = make_data(dom, "manufactured")
            t0 = time.perf_counter()
            u = solve_dirichlet(OperatorSpec(p), F, sigma, dom)
            times.append(time.perf_counter() - t0)
            errs.append(h1_error(u, exact))
        rate = math.log2(errs[0] / errs[1])
        ok &= rate >= 0.8 and max(times) < 60
        details.append(f"p={p:g} rate={rate:.2f} max_t={max(times):.2f}s")
    criterion(1, ok, "; ".join(details))
    assert ok


# 2 --------------------------------------------------------------------------

def test_c02_affine_reproduction(criterion):
    worst = 0.0
    for p in P_SET:
        for shape in ("square(1)", "L-shape(1)", "square-minus-disk(1, 0.25)"):
            dom = build_domain(shape, 1 / 32)
            F, sigma, exact = make_data(dom, "affine")
            u = solve_dirichlet(OperatorSpec(p), F, sigma, dom)
            err = np.max(np.abs(u.values - exact(dom.node_coords()))[dom.active_node_mask])
            worst = max(worst, float(err))
    ok = worst <= 1e-8
    criterion(2, ok, f"max nodal error {worst:.2e} over p in {P_SET} and 3 domains")
    assert ok


# 3 --------------------------------------------------------------------------

def test_c03_oracle_equivalence(criterion):
    rng = np.random.default_rng(3)
    h, r = 1 / 32, 0.3
    fields = [rng.standard_normal((32, 32)) * (rng.random((32, 32)) < rng.choice([0.05, 0.5, 1.0]))
              for _ in range(20)]
    mismatches = 0
    t_fast = 0.0
    t0 = time.perf_counter()
    for backend in mx.available_backends():
        mx.set_backend(backend)
        for f in fields:
            orc = MaximalOracle(f, h)
            for a in ALPHAS:
                t1 = time.perf_counter()
                got = (mx.fractional_maximal(f, a, h), mx.cutoff_maximal(f, r, a, h),
                       mx.tail_maximal(f, r, a, h))
                t_fast += time.perf_counter() - t1
                want = (orc.evaluate(a), orc.evaluate(a, rmax=r), orc.evaluate(a, rmin=r))
                mismatches += sum(int(np.count_nonzero(g != w)) for g, w in zip(got, want))
    mx.set_backend(mx.available_backends()[0])
    total = time.perf_counter() - t0
    per_backend = total / len(mx.available_backends())
    ok = mismatches == 0 and per_backend < 30
    criterion(3, ok, f"{mismatches} mismatching values; backends {mx.available_backends()}; "
                     f"sweep {per_backend:.1f}s per backend incl. oracle (fast path {t_fast:.2f}s)")
    assert ok


# 4 --------------------------------------------------------------------------

def _test_fields(rng, count, N):
    h = 1 / N
    x = (np.arange(N) + 0.5) * h
    out = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            f = rng.random((N, N))
        elif kind == 1:
            f = rng.random((N, N)) * (rng.random((N, N)) < 0.05)
        else:
            c = rng.random(2)
            f = np.exp(-((x[:, None] - c[0]) ** 2 + (x[None, :] - c[1]) ** 2) / 0.01)
        out.append(f)
    return out


@pytest.mark.xfail(strict=True, reason="the three-term max bound does not hold on the grid: "
                                       "the outer average of a maximum can exceed the maximum of averages")
def test_c04a_three_term_bound(criterion):
    rng = np.random.default_rng(4)
    N, h = 32, 1 / 32
    violations = nodes = 0
    worst = 0.0
    sum_form = 0
    for i, f in enumerate(_test_fields(rng, 100, N)):
        a = ALPHAS[i % 3]
        full = mx.fractional_maximal(f, a, h)
        lhs = mx.compose_mm_alpha(f, a, h)
        for r in (0.1, 0.2, 0.4):
            t1 = mx.cutoff_maximal(mx.cutoff_maximal(f, r, a, h), r, 0.0, h)
            t2 = mx.cutoff_maximal(mx.tail_maximal(f, r, a, h), r, 0.0, h)
            t3 = mx.tail_maximal(full, r, 0.0, h)
            rhs = np.maximum.reduce([t1, t2, t3])
            bad = lhs > rhs
            violations += int(bad.sum())
            nodes += lhs.size
            with np.errstate(divide="ignore", invalid="ignore"):
                worst = max(worst, float(np.nanmax(np.where(rhs > 0, lhs / rhs, 1.0))))
            # the two small-radius terms summed instead of maximised
            sum_form += int(np.sum(lhs > np.maximum(t1 + t2, t3) * (1 + 1e-12)))
    criterion(4, violations == 0,
              f"three-term max bound: {violations}/{nodes} node violations, worst LHS/RHS={worst:.3f} "
              f"(sum of the first two terms instead: {sum_form} violations)")
    assert violations == 0


def test_c04b_tail_dominated_by_dilation(criterion):
    rng = np.random.default_rng(42)
    N, h = 32, 1 / 32
    tab = mx.radius_table((N, N), h)
    idx = np.indices((N, N))

    def ball(c, d2):
        return ((idx[0] - c[0]) ** 2 + (idx[1] - c[1]) ** 2) <= d2

    def included(x1, x2, k, r):
        for kk in np.flatnonzero(tab.radii >= r):
            rho = tab.radii[kk]
            big = int(math.floor((k * rho / h) ** 2 * (1 + 1e-12)))
            if np.any(ball(x1, tab.d2[kk]) & ~ball(x2, big)):
                return False
        return True

    tested = violations = 0
    worst = 0.0
    for i, f in enumerate(_test_fields(rng, 100, N)):
        a = ALPHAS[i % 3]
        r = (0.1, 0.2, 0.4)[(i // 3) % 3]
        T = mx.tail_maximal(f, r, a, h)
        M = mx.fractional_maximal(f, a, h)
        x1 = tuple(int(v) for v in rng.integers(0, N, 2))
        x2 = tuple(int(v) for v in np.clip(np.add(x1, rng.integers(-3, 4, 2)), 0, N - 1))
        dist = math.dist(x1, x2) * h
        for k in (1 + dist / r, 1 + 2 * dist / r, 2.0):
            if not included(x1, x2, k, r):
                continue
            tested += 1
            bound = k ** (2 - a) * M[x2]
            violations += int(T[x1] > bound)
            if bound > 0:
                worst = max(worst, T[x1] / bound)
    ok = violations == 0 and tested > 0
    criterion(4, ok, f"tail bound with k^(n-alpha): {violations}/{tested} configurations violated, "
                     f"worst ratio {worst:.3f}")
    assert ok


# 5 --------------------------------------------------------------------------

def _estimate_constants(N):
    h = 1 / N
    x = (np.arange(N) + 0.5) * h
    X = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    out = defaultdict(float)
    ball = np.sum((X - 0.5) ** 2, -1) <= 0.25**2
    for seed in range(3):
        fs = FourierSeries(np.random.default_rng(seed), 8, 2, 1.0, (1, 1), (0, 0))
        spike = np.exp(-np.sum((X - (0.3 + 0.2 * seed)) ** 2, -1) / 0.005)
        for f in (np.abs(fs(X)), spike):
            out["weak"] = max(out["weak"], weak_type_constant(f, h))
            for a in ALPHAS:
                for r in (0.1, 0.2, 0.4):
                    out["cutoff", a] = max(out["cutoff", a], cutoff_composition_constant(f, r, a, h))
                out["local", a] = max(out["local", a], localized_weak_constant(f, ball, a, h))
    return out


def test_c05_estimate_constants(criterion):
    c32, c64 = _estimate_constants(32), _estimate_constants(64)
    ok = max(c32["weak"], c64["weak"]) <= 3**2
    parts = [f"weak-type {c32['weak']:.3f}/{c64['weak']:.3f} (<= 9)"]
    for key in [("cutoff", a) for a in ALPHAS] + [("local", a) for a in ALPHAS]:
        a, b = c32[key], c64[key]
        good = math.isfinite(a) and math.isfinite(b) and stable(a, b)
        ok &= good
        parts.append(f"{key[0]} a={key[1]:g}: {a:.3f}->{b:.3f}")
    criterion(5, ok, "; ".join(parts))
    assert ok


# 6 --------------------------------------------------------------------------

def test_c06_lorentz_consistency(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(50):
        f = rng.standard_normal((24, 24)) * (rng.random((24, 24)) < (0.2, 0.6, 1.0)[i % 3])
        for q in (0.5, 1.0, 2.0, 4.0):
            a = lorentz_quasinorm(f, LorentzParams(q, q), 1 / 24)
            b = lq_norm(f, q, 1 / 24)
            worst = max(worst, abs(a - b) / b)
            E = rng.random((24, 24)) < rng.random()
            m = E.sum() / 24**2
            for s in (0.5, 1.0, 2.0, 3.0):
                got = lorentz_quasinorm(E.astype(float), LorentzParams(q, s), 1 / 24)
                want = (q / s) ** (1 / s) * m ** (1 / q)
                worst = max(worst, abs(got - want) / want if want else abs(got))
    ok = worst <= 1e-10
    criterion(6, ok, f"max relative deviation {worst:.1e}")
    assert ok


# 7 --------------------------------------------------------------------------

def test_c07_capacity(criterion):
    cap = ball_capacity(1.0, 1 / 64)
    rel = cap / LOG2_CAP - 1
    rng = np.random.default_rng(7)
    N = 32
    dom = DiscreteDomain(1 / N, (0.0, 0.0), np.ones((N, N), bool))
    idx = np.indices((N, N))
    disk = lambda rc: ((idx[0] - 16) ** 2 + (idx[1] - 16) ** 2) <= rc * rc
    B = CellSet(dom, disk(12))
    violations = 0
    for i in range(20):
        K2 = disk(rng.uniform(3, 8)) & (rng.random((N, N)) < rng.uniform(0.3, 1.0))
        K1 = K2 & (rng.random((N, N)) < rng.uniform(0.2, 0.9))
        p = P_SET[i % 3]
        c1 = p_capacity(CellSet(dom, K1), B, p)
        c2 = p_capacity(CellSet(dom, K2), B, p)
        violations += int(c1 > c2 * (1 + 1e-9))
    ok = abs(rel) <= 0.05 and violations == 0
    criterion(7, ok, f"cap_2(B_1, B_2) at h=1/64 = {cap:.4f} vs 2pi/ln2 = {LOG2_CAP:.4f} "
                     f"({100 * rel:+.2f}%); monotonicity violations {violations}/20")
    assert ok


# 8 --------------------------------------------------------------------------

def test_c08_thickness_certificate(criterion):
    dom = build_domain("square(1)", 1 / 64)
    t0 = time.perf_counter()
    rep = thickness_certificate(dom, 2.0, ThicknessParams(c0=0.05, r0=0.25))
    elapsed = time.perf_counter() - t0
    radii = sorted({r["r"] for r in rep.rows})
    ok = rep.passed and rep.min_ratio > 0.05 and elapsed < 600 and not rep.vacuous
    criterion(8, ok, f"min ratio {rep.min_ratio:.3f} over {len(rep.rows)} (x, r) pairs, "
                     f"r in {[round(r, 4) for r in radii]}; {elapsed:.1f}s")
    assert ok


# 9-12: corpus ---------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return run_corpus()


def _by_resolution(rows, key, value):
    table = defaultdict(dict)
    for r in rows:
        k = key(r)
        table[k][r["N"]] = max(table[k].get(r["N"], 0.0), r[value])
    return table


def check_goodlambda(res):
    table = _by_resolution(res.sweeps, lambda r: (r["p"], r["alpha"], r["shape"], r["family"]), "C")
    lo, hi = RESOLUTIONS[0], RESOLUTIONS[-1]
    unstable = [k for k, v in table.items()
                if not (lo in v and hi in v and stable(v[lo], v[hi]))]
    violations = sum(sum(r["violations"].values()) for r in res.sweeps)
    nonempty = sum(r["nonempty_V"] > 0 for r in res.sweeps)
    vmax = max(max(v.values()) for v in table.values())
    ok = not unstable and violations == 0
    return ok, (f"{len(table)} (p, alpha, domain, family) groups, {len(unstable)} unstable; "
                f"max C={vmax:.3g}; invariant violations {violations}; "
                f"sweeps with nonempty V {nonempty}/{len(res.sweeps)}")


def check_norms(res):
    rows = [r for r in res.norms if r["in_window"] and not r["flagged"]]
    excluded = sum(1 for r in res.norms if not r["in_window"])
    table = _by_resolution(rows, lambda r: (r["p"], r["alpha"], r["q"], r["s"]), "ratio")
    lo, hi = RESOLUTIONS[0], RESOLUTIONS[-1]
    compared = {k: v for k, v in table.items() if lo in v and hi in v}
    unstable = [k for k, v in compared.items() if not stable(v[lo], v[hi])]
    worst = max((max(v[hi], v[lo]) / min(v[hi], v[lo]) for v in compared.values()
                 if min(v.values()) > 0), default=1.0)
    ok = not unstable and compared and all(math.isfinite(x) for v in compared.values() for x in v.values())
    return ok, (f"{len(compared)} (p, alpha, q, s) groups in the window, {len(unstable)} unstable, "
                f"worst resolution factor {worst:.2f}; {excluded} out-of-window rows reported and excluded")


def check_comparison(res):
    bad = [a for a in res.audits
           if a["balls"] != 70 or not math.isfinite(a["C"]) or a["heldout_violations"]]
    Cmax = max(a["C"] for a in res.audits)
    return not bad, (f"{len(res.audits)} audited instances x 70 balls; max C={Cmax:.3f}; "
                     f"{len(bad)} instances with held-out violations or infinite C")


def check_covering(res):
    witnesses = sum(len(r["covering_witnesses"]) for r in res.sweeps)
    applicable = sum(r["covering_applicable"] for r in res.sweeps)
    rows = sum(r["rows"] for r in res.sweeps)
    C = [c for r in res.sweeps for c in r["covering_C_rows"]]
    ok = witnesses == 0 and all(math.isfinite(c) for c in C)
    return ok, (f"{applicable}/{rows} rows satisfy the hypotheses; recorded C={max(C, default=0):.3g}; "
                f"{witnesses} hypothesis (ii) witnesses")


def test_c09_goodlambda_sweeps(corpus, criterion):
    ok, detail = check_goodlambda(corpus)
    criterion(9, ok, detail)
    assert ok


def test_c10_norm_ratios(corpus, criterion):
    ok, detail = check_norms(corpus)
    criterion(10, ok, detail)
    assert ok


def test_c11_comparison_audit(corpus, criterion):
    ok, detail = check_comparison(corpus)
    criterion(11, ok, detail)
    assert ok


def test_c12_covering_audit(corpus, criterion):
    ok, detail = check_covering(corpus)
    criterion(12, ok, detail)
    assert ok


def test_energy_ratio_bounded(corpus):
    # one constant per p across all domains, seeds and resolutions
    worst = defaultdict(float)
    for r in corpus.energy:
        worst[r["p"]] = max(worst[r["p"]], r["ratio"])
    assert all(0 < v < 10 for v in worst.values())
