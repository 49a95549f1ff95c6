import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from reglab import maximal_ops as mx
from reglab.domain import build_domain, extend_by_zero
from reglab.errors import InvalidOrder, ValidationError
from reglab.estimates import cutoff_composition_constant, localized_weak_constant, weak_type_constant
from reglab.maximal_ops import (compose_mm_alpha, cutoff_maximal, fractional_maximal, maximal,
                                radius_set, tail_maximal)
from reglab.oracles import MaximalOracle, lattice_count, pairwise_d2_levels

H16 = 1 / 16
fields16 = arrays(np.float64, (12, 12), elements=st.floats(-5, 5, allow_nan=False))


@pytest.fixture(params=mx.available_backends())
def backend(request):
    old = mx.get_backend()
    mx.set_backend(request.param)
    yield request.param
    mx.set_backend(old)


def test_radius_table_matches_oracle():
    tab = mx.radius_table((9, 7), 0.1)
    assert np.array_equal(tab.d2, pairwise_d2_levels((9, 7)))
    assert tab.radii[0] == 0.05
    assert [int(c) for c in tab.count[:6]] == [lattice_count(int(d), 2) for d in tab.d2[:6]]
    assert np.all(np.diff(radius_set((9, 7), 0.1)) > 0)


def test_constant_field(backend):
    f = np.full((10, 10), -2.5)
    assert np.array_equal(maximal(f, 0.1), np.full((10, 10), 2.5))
    assert np.allclose(compose_mm_alpha(np.full((10, 10), 2.5), 0.0, 0.1), 2.5)


def test_single_cell(backend):
    f = np.zeros((16, 16))
    f[5, 5] = 1
    M = maximal(f, H16)
    assert M[5, 5] == 1
    # three cells away the best ball has radius 3h and 29 lattice points
    assert M[8, 5] == pytest.approx(1 / 29, rel=1e-15)
    assert M[8, 5] == MaximalOracle(f, H16).evaluate()[8, 5]


def test_alpha_zero_is_maximal(backend, rng):
    f = rng.random((16, 16))
    assert np.array_equal(fractional_maximal(f, 0.0, H16), maximal(f, H16))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_indicator_of_ball_peaks_at_its_radius(alpha):
    N, h = 48, 1 / 48
    idx = np.indices((N, N))
    rho0 = 10 * h
    chi = (((idx[0] - 24) ** 2 + (idx[1] - 24) ** 2) <= 100).astype(float)
    val = fractional_maximal(chi, alpha, h)[24, 24]
    radii = radius_set((N, N), h)
    k = np.searchsorted(radii, rho0)
    quantum = max(radii[k + 1] - radii[k], radii[k] - radii[k - 1])
    assert (rho0 - quantum) ** alpha <= val <= (rho0 + quantum) ** alpha


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_oracle_equivalence_16(backend, rng, alpha):
    f = rng.standard_normal((16, 16))
    orc = MaximalOracle(f, H16)
    assert np.array_equal(fractional_maximal(f, alpha, H16), orc.evaluate(alpha))
    assert np.array_equal(cutoff_maximal(f, 0.3, alpha, H16), orc.evaluate(alpha, rmax=0.3))
    assert np.array_equal(tail_maximal(f, 0.3, alpha, H16), orc.evaluate(alpha, rmin=0.3))


def test_compose_against_oracle(backend, rng):
    f = rng.random((12, 12)) * (rng.random((12, 12)) < 0.3)
    inner = MaximalOracle(f, 1 / 12).evaluate(0.5)
    outer = MaximalOracle(inner, 1 / 12).evaluate(0.0)
    assert np.array_equal(compose_mm_alpha(f, 0.5, 1 / 12), outer)


def test_ball_sums_match_compensated_sums(rng):
    f = rng.random((10, 10))
    orc = MaximalOracle(f, 0.1)
    for k in (0, 5, 20, len(orc.levels) - 1):
        exact = orc.averages_fsum((4, 6), k, f)
        assert orc.sums[46, k] / orc.counts[k] == pytest.approx(exact, rel=1e-14)


def test_cutoff_edge_radii(rng):
    f = rng.random((16, 16))
    assert np.array_equal(cutoff_maximal(f, 10.0, 0.5, H16), fractional_maximal(f, 0.5, H16))
    assert not cutoff_maximal(f, 0.5 * H16, 0.5, H16).any()
    assert np.array_equal(tail_maximal(f, 0.5 * H16, 0.5, H16), fractional_maximal(f, 0.5, H16))


@pytest.mark.parametrize("r", [0.05, 0.2, 0.6])
def test_cutoff_tail_partition(rng, r):
    f = rng.random((16, 16))
    full = fractional_maximal(f, 0.5, H16)
    assert np.array_equal(np.maximum(cutoff_maximal(f, r, 0.5, H16), tail_maximal(f, r, 0.5, H16)), full)


def test_tail_of_constant_inside_support():
    N, h, r = 32, 1 / 32, 0.2
    T = tail_maximal(np.full((N, N), 3.0), r, 0.0, h)
    k = int(np.ceil(r / h))
    assert np.all(T[k:N - k, k:N - k] == 3.0)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_compose_dominates_inner(rng, alpha):
    f = rng.random((16, 16))
    assert np.all(compose_mm_alpha(f, alpha, H16) >= fractional_maximal(f, alpha, H16))


@given(fields16, fields16, st.floats(-3, 3, allow_nan=False))
def test_sublinear_and_homogeneous(f, g, c):
    h = 1 / 12
    Mf, Mg = maximal(f, h), maximal(g, h)
    assert np.all(maximal(f + g, h) <= (Mf + Mg) * (1 + 1e-12) + 1e-12)
    assert np.allclose(maximal(c * f, h), abs(c) * Mf, rtol=1e-12, atol=1e-12)


@given(fields16)
def test_backends_agree(f):
    if len(mx.available_backends()) < 2:
        pytest.skip("compiled kernel not built")
    old = mx.get_backend()
    try:
        mx.set_backend("python")
        a = compose_mm_alpha(f, 0.5, 1 / 12)
        mx.set_backend("cython")
        b = compose_mm_alpha(f, 0.5, 1 / 12)
    finally:
        mx.set_backend(old)
    assert np.array_equal(a, b)


def test_where_restricts_and_wraps():
    dom = build_domain("L-shape(1)", 1 / 8)
    amb = extend_by_zero(np.ones(dom.shape), dom)
    out = maximal(amb, where=amb.domain_mask)
    assert np.all(out.values[amb.domain_mask] == 1)
    assert np.all(np.isnan(out.values[~amb.domain_mask]))


def test_errors():
    f = np.ones((4, 4))
    for alpha in (-0.1, 2.0):
        with pytest.raises(InvalidOrder):
            fractional_maximal(f, alpha, 0.25)
    with pytest.raises(ValidationError):
        cutoff_maximal(f, 0.0, 0.0, 0.25)
    with pytest.raises(ValidationError):
        maximal(f)
    with pytest.raises(ValidationError):
        mx.set_backend("fortran")


def test_weak_type_constant_small(rng):
    h = 1 / 32
    f = rng.random((32, 32)) * (rng.random((32, 32)) < 0.1)
    assert 0 < weak_type_constant(f, h) <= 9


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_estimate_constants_finite(rng, alpha):
    h = 1 / 32
    f = rng.random((32, 32))
    idx = np.indices((32, 32))
    ball = ((idx[0] - 16) ** 2 + (idx[1] - 16) ** 2) <= 64
    assert np.isfinite(cutoff_composition_constant(f, 0.2, alpha, h))
    assert np.isfinite(localized_weak_constant(f, ball, alpha, h))
