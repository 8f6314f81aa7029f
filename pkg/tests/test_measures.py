import numpy as np
import pytest

from wolffkit.grids import Domain, ParameterError, ScalarField
from wolffkit.measures import (
    Measure,
    ball_mass,
    inset_box,
    jump_profile,
    load_measure,
    mollify,
    save_measure,
    truncate_restrict,
)


def cube(res=16, half=1.0):
    return Domain((-half,) * 3, (half,) * 3, (res,) * 3)


def unit_atom(dom, loc=(0.0, 0.0, 0.0), w=1.0):
    return Measure(dom, np.array([loc]), np.array([w]))


def test_ball_mass_atom_inside():
    mu = unit_atom(cube())
    assert ball_mass(mu, (0, 0, 0), 0.1) == 1.0


def test_ball_mass_atom_missed():
    mu = unit_atom(cube())
    assert ball_mass(mu, (0.5, 0, 0), 0.4) == 0.0


def test_ball_mass_open_ball_convention():
    # an atom exactly on the boundary of the open ball is outside
    mu = unit_atom(cube(), loc=(0.5, 0.0, 0.0))
    assert ball_mass(mu, (0, 0, 0), 0.5) == 0.0
    assert ball_mass(mu, (0, 0, 0), 0.5 + 1e-12) == 1.0


def test_ball_mass_uniform_density_matches_ball_volume():
    dom = cube(64)
    mu = Measure(dom, density=ScalarField.full(dom, 1.0))
    got = ball_mass(mu, (0, 0, 0), 0.5)
    exact = 4.0 / 3.0 * np.pi * 0.5**3
    # center-in-ball counting is exact up to one cell-wide shell
    shell = 4.0 * np.pi * 0.5**2 * np.sqrt(3) * dom.cell_widths[0]
    assert abs(got - exact) <= shell


def test_ball_mass_additive_and_monotone():
    rng = np.random.default_rng(7)
    dom = cube(16)
    mu1 = Measure(dom, rng.uniform(-0.8, 0.8, (4, 3)), rng.uniform(0.1, 2.0, 4))
    mu2 = Measure(dom, rng.uniform(-0.8, 0.8, (3, 3)), rng.uniform(0.1, 2.0, 3),
                  ScalarField(dom, rng.uniform(0, 1, dom.res)))
    x = (0.1, -0.2, 0.3)
    radii = np.sort(rng.uniform(0.05, 2.5, 20))
    masses = [ball_mass(mu1 + mu2, x, t) for t in radii]
    assert all(b >= a for a, b in zip(masses, masses[1:]))
    for t in radii[::5]:
        total = ball_mass(mu1, x, t) + ball_mass(mu2, x, t)
        assert ball_mass(mu1 + mu2, x, t) == pytest.approx(total, abs=0, rel=1e-15)


def test_ball_mass_rejects_nonpositive_radius():
    with pytest.raises(ParameterError):
        ball_mass(unit_atom(cube()), (0, 0, 0), 0.0)


def test_jump_profile_matches_ball_mass():
    rng = np.random.default_rng(3)
    dom = cube(12)
    mu = Measure(dom, rng.uniform(-0.7, 0.7, (5, 3)), rng.uniform(0.1, 2.0, 5),
                 ScalarField(dom, rng.uniform(0, 0.5, dom.res)))
    x = np.array([0.15, 0.0, -0.1])
    d, cm = jump_profile(mu, x)
    for t in [0.1, 0.4, 1.1, 2.0]:
        k = int((d < t).sum())
        expected = 0.0 if k == 0 else cm[k - 1]
        assert ball_mass(mu, x, t) == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_mollify_zero_measure():
    dom = cube(16)
    out = mollify(Measure(dom), 0.2)
    assert np.all(out.values == 0.0)


def test_mollify_unit_atom_mass_and_support():
    dom = cube(32)
    out = mollify(unit_atom(dom), 0.3)
    assert out.integral() == pytest.approx(1.0, abs=1e-8)
    centers = dom.cell_centers()
    outside = np.linalg.norm(centers, axis=1) > 0.3 + 1e-12
    assert np.all(out.flat()[outside] == 0.0)


def test_mollify_two_atoms_total_mass():
    dom = cube(32)
    mu = Measure(dom, np.array([[0.2, 0, 0], [-0.3, 0.1, 0]]), np.array([1.0, 2.0]))
    out = mollify(mu, 0.25)
    # oracle: plain grid sum of the emitted density
    assert out.flat().sum() * dom.cell_volume == pytest.approx(3.0, abs=1e-8)


def test_mollify_preserves_mass_randomized():
    rng = np.random.default_rng(11)
    dom = cube(24)
    for _ in range(5):
        k = rng.integers(1, 6)
        mu = Measure(dom, rng.uniform(-0.6, 0.6, (k, 3)), rng.uniform(0.1, 5.0, k))
        out = mollify(mu, float(rng.uniform(0.1, 0.3)))
        assert out.integral() == pytest.approx(mu.mass(), rel=1e-8)


def test_mollify_monotone_in_measure():
    dom = cube(24)
    small = Measure(dom, np.array([[0.1, 0, 0]]), np.array([1.0]))
    big = Measure(dom, np.array([[0.1, 0, 0], [-0.2, 0.2, 0]]), np.array([1.5, 0.7]))
    a = mollify(small, 0.2)
    b = mollify(big, 0.2)
    assert np.all(b.values - a.values >= -1e-14)


def test_mollify_clips_bandwidth_near_boundary():
    dom = cube(16)
    mu = unit_atom(dom, loc=(0.9, 0.0, 0.0))
    out = mollify(mu, 0.5)
    assert out.mollify_clipped
    assert out.integral() == pytest.approx(1.0, abs=1e-8)


def test_mollify_rejects_bad_bandwidth():
    with pytest.raises(ParameterError):
        mollify(unit_atom(cube()), 0.0)


def test_truncate_restrict_atom_only():
    dom = cube(16)
    nu = unit_atom(dom, loc=(0.1, 0.1, 0.1))
    out = truncate_restrict(None, nu, 3.0, inset_box(dom, 0.25))
    assert out.mass() == pytest.approx(1.0)
    assert out.density is None or np.all(out.density.values == 0)


def test_truncate_restrict_clamps_density():
    dom = cube(16)
    f = ScalarField.full(dom, 5.0)
    out = truncate_restrict(f, Measure(dom), 3.0, dom)
    assert np.all(out.density.values == 3.0)


def test_truncate_restrict_half_box_mass():
    dom = cube(16)
    f = ScalarField.full(dom, 5.0)
    half = Domain((-1, -1, -1), (0, 1, 1), (8, 16, 16))
    out = truncate_restrict(f, Measure(dom), 3.0, half)
    assert out.mass() == pytest.approx(3.0 * half.volume, rel=1e-12)


def test_truncate_restrict_requires_subbox():
    dom = cube(16)
    too_big = Domain((-2, -1, -1), (1, 1, 1), (8, 8, 8))
    with pytest.raises(ParameterError):
        truncate_restrict(ScalarField.full(dom, 1.0), Measure(dom), 1.0, too_big)


def test_truncate_restrict_exhausting_ladder_converges():
    rng = np.random.default_rng(5)
    dom = cube(20)
    f = ScalarField(dom, rng.uniform(0, 8.0, dom.res))
    nu = Measure(dom, rng.uniform(-0.5, 0.5, (3, 3)), rng.uniform(0.1, 1.0, 3))
    total = f.integral() + nu.mass()
    masses = []
    for level in range(1, 6):
        omega = inset_box(dom, 0.5 * 2.0 ** (1 - level))
        out = truncate_restrict(f, nu, 2.0**level, omega)
        masses.append(out.mass())
    assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
    assert masses[-1] <= total + 1e-9
    assert masses[-1] == pytest.approx(total, rel=0.05)


def test_measure_json_roundtrip(tmp_path):
    dom = cube(8)
    rng = np.random.default_rng(1)
    mu = Measure(dom, rng.uniform(-0.5, 0.5, (2, 3)), np.array([1.0, 0.5]),
                 ScalarField(dom, rng.uniform(0, 1, dom.res)))
    path = tmp_path / "mu.json"
    save_measure(path, mu)
    back = load_measure(path)
    assert back.mass() == pytest.approx(mu.mass(), rel=1e-12)
    assert ball_mass(back, (0, 0, 0), 0.4) == pytest.approx(ball_mass(mu, (0, 0, 0), 0.4), rel=1e-12)
