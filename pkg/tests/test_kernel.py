import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from ridklab.kernel import (
    KernelSpec,
    evaluate_kernel,
    evaluate_kernel_1d,
    kernel_fourier_coefficient,
    kernel_fourier_grid,
    multiplication_rule_residual,
)
from ridklab.specfun import DomainError, bessel_ratio


def test_peak_value():
    spec = KernelSpec(0.3, 2)
    assert evaluate_kernel(np.zeros(2), spec) == pytest.approx(spec.z**-2, rel=1e-15)


def test_periodic():
    spec = KernelSpec(0.4, 2)
    x = np.array([0.3, 1.7])
    assert evaluate_kernel(x, spec) == pytest.approx(evaluate_kernel(x + [2 * math.pi, 0], spec), rel=1e-13)


@pytest.mark.parametrize("eps", [0.05, 0.2, 1.0])
def test_unit_mass(eps):
    val, _ = quad(lambda x: evaluate_kernel_1d(x, eps), 0, 2 * math.pi, points=[math.pi], epsabs=0, epsrel=1e-13,
                  limit=200)
    assert val == pytest.approx(1.0, rel=1e-8)
    # tensor rule in d = 2: the trapezoid rule is spectrally accurate for periodic integrands
    spec = KernelSpec(eps, 2)
    m = 1024
    x = np.arange(m) * 2 * math.pi / m
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    assert evaluate_kernel(pts, spec).sum() * (2 * math.pi / m) ** 2 == pytest.approx(1.0, rel=1e-8)


def test_separable():
    spec = KernelSpec(0.25, 3)
    x = np.array([0.1, 2.0, 5.5])
    prod = np.prod([evaluate_kernel_1d(v, 0.25) for v in x])
    assert evaluate_kernel(x, spec) == pytest.approx(prod, rel=1e-14)


def test_coefficients(oracles):
    assert kernel_fourier_coefficient([0, 0], KernelSpec(0.2, 2)) == (2 * math.pi) ** -2
    got = kernel_fourier_coefficient([1], KernelSpec(1.0, 1))
    assert got == pytest.approx(oracles["kernel_coefficient_eps1_j1"], rel=1e-12)
    assert got == pytest.approx(bessel_ratio(1, 1.0) / (2 * math.pi), rel=1e-14)


@given(st.lists(st.integers(-40, 40), min_size=2, max_size=2))
def test_coefficients_even(j):
    spec = KernelSpec(0.15, 2)
    assert kernel_fourier_coefficient(j, spec) == kernel_fourier_coefficient([-v for v in j], spec)


@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_spectral_consistency_with_dft(eps):
    m = 256
    assert bessel_ratio(m // 2, 1 / eps**2) < 1e-12
    x = np.arange(m) * 2 * math.pi / m
    dft = np.fft.fft(evaluate_kernel_1d(x, eps)) / m
    grid = kernel_fourier_grid(m, KernelSpec(eps))
    keep = grid > 1e-280
    assert np.max(np.abs(dft.real[keep] - grid[keep]) / grid[0]) < 1e-8
    k = np.arange(1, 20)
    assert np.allclose(grid[k], [kernel_fourier_coefficient([j], KernelSpec(eps)) for j in k], rtol=1e-8, atol=0)


def test_multiplication_rule_origin():
    spec = KernelSpec(0.2, 2)
    z = np.zeros(2)
    expected = abs(spec.z**-4 - spec.scaled(math.sqrt(2)).z ** -2 * spec.scaled(1 / math.sqrt(2)).z ** -2)
    assert multiplication_rule_residual(z, z, z, spec) == pytest.approx(expected, rel=1e-10)


def test_multiplication_rule_relative_residual_decreases():
    ratios = []
    for eps in (0.2, 0.1, 0.05):
        spec = KernelSpec(eps)
        a = np.linspace(-2, 2, 41)
        x1, x2 = np.meshgrid(a * eps, a * eps)
        res = multiplication_rule_residual(x1 + 1.0, x2 + 1.0, 1.0, spec)
        peak = evaluate_kernel_1d(0.0, eps) ** 2
        ratios.append(res.max() / peak)
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))
    assert np.all(np.asarray(ratios) >= 0)


def test_invalid_spec():
    with pytest.raises(DomainError):
        KernelSpec(0.0)
    with pytest.raises(DomainError):
        KernelSpec(0.1, 0)
