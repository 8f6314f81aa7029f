import numpy as np
import pytest
from scipy.integrate import quad

from wolffkit.absorption import (
    AbsorptionSpec,
    exponential_absorption,
    no_absorption,
    power_absorption,
)
from wolffkit.grids import ParameterError

SPECS = [
    no_absorption(),
    power_absorption(1.5),
    power_absorption(0.8),
    power_absorption(2.0, beta=0.5),
    exponential_absorption(1.0, 1.0),
    exponential_absorption(0.5, 2.0),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-q{s.q}-lam{s.lam}")
def test_odd_and_nondecreasing(spec):
    u = np.linspace(-3.0, 3.0, 41)
    absx = np.full_like(u, 0.7)
    g = spec.g(absx, u)
    assert np.allclose(g, -spec.g(absx, -u), atol=1e-12)
    assert np.all(np.diff(g) >= -1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-q{s.q}-lam{s.lam}")
def test_primitive_properties(spec):
    u = np.linspace(-2.0, 2.0, 17)
    absx = np.full_like(u, 0.7)
    G = spec.G(absx, u)
    assert np.all(G >= -1e-15)
    assert spec.G(np.array([0.7]), np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("spec", [power_absorption(1.5), power_absorption(2.0, beta=0.5),
                                  exponential_absorption(1.0, 1.0), exponential_absorption(0.5, 2.0)],
                         ids=["pow1.5", "pow2b", "exp1", "exp2"])
def test_primitive_matches_quadrature(spec):
    for uval in (0.4, 1.3, -0.9):
        want = quad(lambda s: float(spec.g(np.array([0.7]), np.array([s]))[0]), 0.0, uval)[0]
        got = float(spec.G(np.array([0.7]), np.array([uval]))[0])
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("spec", [power_absorption(2.0), exponential_absorption(0.7, 1.0),
                                  exponential_absorption(0.5, 1.8)],
                         ids=["pow2", "exp1", "exp1.8"])
def test_derivative_matches_finite_differences(spec):
    h = 1e-6
    for uval in (0.3, 1.1, -0.8):
        up = spec.g(np.array([1.0]), np.array([uval + h]))[0]
        dn = spec.g(np.array([1.0]), np.array([uval - h]))[0]
        got = spec.gu(np.array([1.0]), np.array([uval]))[0]
        assert got == pytest.approx((up - dn) / (2 * h), rel=1e-5)


def test_scalar_growth():
    assert power_absorption(2.0).scalar_growth(np.array([3.0]))[0] == 9.0
    assert no_absorption().scalar_growth(np.array([5.0]))[0] == 0.0
    got = exponential_absorption(1.0, 1.0).scalar_growth(np.array([1.0]))[0]
    assert got == pytest.approx(np.e - 1.0, rel=1e-12)


def test_validation():
    with pytest.raises(ParameterError):
        AbsorptionSpec(kind="power", q=0.0)
    with pytest.raises(ParameterError):
        AbsorptionSpec(kind="exponential", tau=1.0, lam=0.5)
    with pytest.raises(ParameterError):
        AbsorptionSpec(kind="custom")
    with pytest.raises(ParameterError):
        AbsorptionSpec(kind="bogus")
