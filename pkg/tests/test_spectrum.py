import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridklab.fields import TorusGrid, convolve, hs_norm
from ridklab.kernel import KernelSpec, evaluate_kernel
from ridklab.specfun import DomainError
from ridklab.spectrum import (
    EigenSpectrum,
    SobolevIndex,
    TruncationError,
    basis_function,
    bound_exponent,
    choose_jmax,
    eigenvalue,
    eigenvalues_1d,
    factorised_trace_bound,
    loglog_slope,
    minimise_bound_exponent,
    sobolev_trace,
    theta_critical,
)


def brute_trace(s, eps, d, jmax):
    lam = eigenvalues_1d(jmax, eps)
    total = 0.0
    for j in itertools.product(range(-jmax, jmax + 1), repeat=d):
        j = np.abs(np.array(j))
        total += np.prod(lam[j]) * (1.0 + float(np.sum(j * j))) ** s
    return total


def test_eigenvalue_examples():
    assert eigenvalue([0, 0, 0], 0.1) == 1.0
    assert eigenvalue([1, 1], 0.5) == pytest.approx(0.697774657964008**2, rel=1e-12)
    assert eigenvalue([7, 0, 0], 0.2) == eigenvalue([7], 0.2)


@given(st.lists(st.integers(-30, 30), min_size=1, max_size=3), st.floats(0.05, 2.0))
def test_eigenvalue_range_and_symmetry(j, eps):
    v = eigenvalue(j, eps)
    assert 0.0 <= v <= 1.0
    assert eigenvalue([-x for x in j], eps) == v


def test_spectrum_table():
    spec = EigenSpectrum.build(0.1, 2, s=0.55)
    assert spec.table[0] == 1.0
    pos = spec.table[spec.table > 0]
    assert np.all(np.diff(pos) < 0)
    assert spec.eigenvalue(np.array([[1, 2], [-1, 2]])).tolist() == [spec.table[1] * spec.table[2]] * 2
    j, lam, w = spec.rows(0.55)[3]
    assert w == pytest.approx(lam * 10**0.55)


def test_gaussian_sum_asymptote():
    assert sobolev_trace(0.0, 0.05, 1) == pytest.approx(math.sqrt(math.pi) / 0.05, rel=0.02)


@pytest.mark.parametrize("d,s,eps,jmax", [(1, 0.55, 0.1, 150), (2, 1.05, 0.3, 60), (3, 0.5, 0.5, 25)])
def test_matches_direct_lattice_sum(d, s, eps, jmax):
    assert sobolev_trace(s, eps, d, jmax) == pytest.approx(brute_trace(s, eps, d, jmax), rel=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_factorised_bound(d):
    for s in (0.3, 1.05, 2.0):
        assert sobolev_trace(s, 0.2, d) <= factorised_trace_bound(s, 0.2, d) * (1 + 1e-12)


def test_monotone_in_s():
    vals = [sobolev_trace(s, 0.1, 2) for s in (0.0, 0.5, 1.0, 1.5)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("d,s", [(1, 0.55), (2, 1.05), (3, 1.55)])
def test_trace_scaling(d, s):
    eps = [0.2, 0.1, 0.05, 0.025]
    slope = loglog_slope([1 / e for e in eps], [sobolev_trace(s, e, d) for e in eps])
    assert abs(slope - theta_critical(s, d)) <= 0.05 * theta_critical(s, d)


def test_truncation_guard():
    with pytest.raises(TruncationError) as info:
        sobolev_trace(0.55, 0.05, 1, jmax=20)
    assert info.value.suggested_jmax == choose_jmax(0.55, 0.05)
    assert info.value.suggested_jmax > 20


def test_bound_exponent_examples():
    assert bound_exponent(0.5, 0.5, 0.8, 2) == pytest.approx(theta_critical(0.8, 2))
    assert bound_exponent(0.6, 0.6, 1.0, 1) == pytest.approx(3.6)
    for bad in [(0.0, 1.0), (0.3, 0.3), (1.0, 0.5)]:
        with pytest.raises(DomainError):
            bound_exponent(*bad, 1.0, 1)


@pytest.mark.parametrize("s,d", [(0.55, 1), (1.05, 2), (2.0, 3)])
def test_argmin_exhaustive(s, d):
    # independent brute force over the same admissible lattice
    a = np.arange(1, 100) / 100
    al, be = np.meshgrid(a, a, indexing="ij")
    ok = al + be >= 1 - 1e-12
    vals = np.maximum.reduce([2 * be * (2 * s + 1), 2 * al * (2 * s + 1), 2 * al + 4 * be * s]) + d - 1
    vals[~ok] = np.inf
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    assert (a[i], a[j]) == (0.5, 0.5)
    (ba, bb), val = minimise_bound_exponent(s, d)
    assert (ba, bb) == (0.5, 0.5)
    assert val == pytest.approx(theta_critical(s, d))


def test_theta_critical():
    assert theta_critical(0, 1) == 1
    assert theta_critical(1.5, 3) == 6
    assert theta_critical(1, 1) == 3
    with pytest.raises(DomainError):
        theta_critical(-0.1, 1)


def test_sobolev_index():
    idx = SobolevIndex.from_eta(2, 0.1)
    assert idx.s == pytest.approx(1.1)
    with pytest.raises(DomainError):
        SobolevIndex(-1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_basis_orthonormal_and_eigen(d):
    grid = TorusGrid(d, 64)
    pts = grid.points()
    rng = np.random.default_rng(d)
    eps = 0.2
    kern = evaluate_kernel(pts, KernelSpec(math.sqrt(2) * eps, d))
    for _ in range(4):
        j = rng.integers(-10, 11, size=d)
        f = basis_function(j, 0.7, pts)
        assert hs_norm(f, grid, 0.7) == pytest.approx(1.0, rel=1e-8)
        pf = convolve(kern, f, grid)
        lam = eigenvalue(j, eps)
        assert np.max(np.abs(pf - lam * f)) <= 1e-6 * np.max(np.abs(f))


def test_constant_mode_value():
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(5, 2))
    assert np.allclose(basis_function([0, 0], 1.0, x), 1.0)
