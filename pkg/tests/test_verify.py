import math

import numpy as np
import pytest

from wolffkit.grids import Domain, ParameterError
from wolffkit.measures import Measure
from wolffkit.potential import PotentialParams
from wolffkit.verify import (
    FitReport,
    decay_exponent_K,
    exp_delta0,
    random_atomic_measures,
    restrict_to_ball,
    verify_exp_integrability,
    verify_levelset_decay,
    verify_norm_equivalence,
)


def box(res, half=1.0):
    return Domain((-half,) * 3, (half,) * 3, (res,) * 3)


def test_fit_report_roundtrip_bit_identical():
    rep = FitReport(
        experiment="demo",
        inputs={"alpha": 1.0, "R": None},
        constants={"c0": 0.1234567890123456789},
        samples=3,
        stats={"ratio_min": 1.0 / 3.0},
        passed=True,
        notes="",
        table=[{"lam": 0.1, "lhs": 2e-17}],
    )
    text = rep.dumps()
    back = FitReport.loads(text)
    assert back.dumps() == text
    assert back.constants["c0"] == rep.constants["c0"]
    assert back.table[0]["lhs"] == rep.table[0]["lhs"]


def test_random_measures_reproducible_and_in_ball():
    dom = box(8, half=2.0)
    a = random_atomic_measures(5, dom, ball_radius=1.0, seed=42)
    b = random_atomic_measures(5, dom, ball_radius=1.0, seed=42)
    for ma, mb in zip(a, b):
        assert np.array_equal(ma.atoms_x, mb.atoms_x)
        assert np.array_equal(ma.atoms_w, mb.atoms_w)
        assert np.all(np.linalg.norm(ma.atoms_x, axis=1) <= 1.0)
        assert np.all((ma.atoms_w >= 0.1) & (ma.atoms_w <= 10.0))


def test_restrict_to_ball():
    dom = box(8)
    mu = Measure(dom, np.array([[0.1, 0, 0], [0.9, 0, 0]]), np.array([1.0, 2.0]))
    inner = restrict_to_ball(mu, (0, 0, 0), 0.5)
    assert inner.mass() == 1.0


def test_decay_constant_and_delta0_formulas():
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, eta=0.0)
    assert decay_exponent_K(pp) == pytest.approx((1.0 / 4.0) * 2.0 * math.log(2.0), rel=1e-13)
    assert exp_delta0(pp) == pytest.approx(math.log(2.0) / 6.0, rel=1e-13)
    pp5 = PotentialParams(N=3, alpha=1.0, p=2.0, eta=0.5)
    want = (0.5 / 4.0) ** 2.0 * 2.0 * math.log(2.0)
    assert decay_exponent_K(pp5) == pytest.approx(want, rel=1e-13)


def test_levelset_decay_zero_measure_sentinel():
    dom = box(16)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0)
    rep = verify_levelset_decay(Measure(dom), pp, [0.5, 1.0], [0.4, 0.2], dom)
    assert rep.passed
    assert rep.constants["c0"] == 0.0


def test_levelset_decay_single_atom_bad_set_empty():
    # a point mass has W comparable to M everywhere, so the bad set where W
    # is large but M small is empty at every eps below one
    dom = box(32)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0)
    mu = Measure(dom, np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
    rep = verify_levelset_decay(mu, pp, [2.5, 4.0], [0.4, 0.2, 0.1], dom, support_radius=0.5)
    used = [r for r in rep.table if not r["skipped"]]
    assert used, "reference sets must be nonempty"
    assert all(r["lhs"] == 0.0 for r in used)
    assert rep.constants["c0"] == 0.0
    # counting consistency: |{W > 3 lam}| <= |{W > lam}|
    from wolffkit.potential import wolff_field

    W = wolff_field(mu, pp, dom).flat()
    for lam in (2.5, 4.0):
        assert (W > 3 * lam).sum() <= (W > lam).sum()


def test_levelset_decay_dyadic_chain_nontrivial_counts():
    # atoms at dyadic distances saturate the maximal function at every scale;
    # with eps above one the bad set is nonempty and the fit is exercised
    dom = box(48)
    js = np.arange(0, 7)
    locs = np.stack([0.75 * 2.0**-js, np.zeros(7), np.zeros(7)], axis=1)
    mu = Measure(dom, locs, 0.75 * 2.0**-js)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0)
    rep = verify_levelset_decay(mu, pp, [1.2, 1.8], [2.0, 1.5], dom,
                                support_radius=1.0, allow_large_eps=True)
    used = [r for r in rep.table if not r["skipped"]]
    assert any(r["lhs"] > 0 for r in used)
    assert rep.constants["c0"] > 0.0
    # every row satisfies the fitted bound
    c0 = rep.constants["c0"]
    for r in used:
        assert r["lhs"] <= c0 * r["factor"] * r["rhs"] * (1 + 1e-12)
    # ratios decay as eps shrinks (rows share lam, eps in {2.0, 1.5})
    by_lam = {}
    for r in used:
        by_lam.setdefault(r["lam"], {})[r["eps"]] = r["lhs"] / r["rhs"]
    for lam, d in by_lam.items():
        assert d[1.5] <= d[2.0] + 1e-15


def test_levelset_decay_skips_low_lambdas():
    dom = box(16)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0)
    mu = Measure(dom, np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
    rep = verify_levelset_decay(mu, pp, [0.01], [0.4], dom, support_radius=0.5)
    assert "skipped" in rep.notes
    assert rep.samples == 0


def test_norm_equivalence_singleton_batch():
    dom = box(24, half=2.0)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    mus = random_atomic_measures(1, dom, ball_radius=1.0, atoms=(2, 4), seed=7)
    rep = verify_norm_equivalence(mus, pp, 2.0, 2.0, dom)
    assert rep.samples == 1
    r = rep.table[0]["ratio"]
    assert r is not None and np.isfinite(r) and r > 0


def test_norm_equivalence_scaling_invariance():
    dom = box(24, half=2.0)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    mu = random_atomic_measures(1, dom, ball_radius=1.0, atoms=(3, 3), seed=3)[0]
    rep = verify_norm_equivalence([mu, mu.scaled(4.0)], pp, 2.0, 2.0, dom)
    r1, r2 = rep.table[0]["ratio"], rep.table[1]["ratio"]
    assert r2 == pytest.approx(r1, rel=1e-9)


def test_norm_equivalence_batch_spread():
    dom = box(20, half=2.0)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    mus = random_atomic_measures(10, dom, ball_radius=1.0, seed=11)
    rep = verify_norm_equivalence(mus, pp, 2.0, 2.0, dom)
    assert rep.passed
    assert rep.constants["ratio_spread"] <= 50.0


def test_norm_equivalence_bessel_variant():
    dom = box(16, half=2.0)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    mus = random_atomic_measures(4, dom, ball_radius=1.0, seed=5)
    rep = verify_norm_equivalence(mus, pp, 2.0, 2.0, dom, use_bessel=True)
    assert rep.samples == 4
    assert rep.constants["ratio_spread"] < 50.0


def test_norm_equivalence_excludes_infinite_norms():
    # an atom exactly at a cell center makes the potential infinite there;
    # that measure is reported separately instead of poisoning the batch
    dom = box(8, half=2.0)
    center = dom.cell_centers()[dom.ncells // 2]
    mu_inf = Measure(dom, center[None, :], np.array([1.0]))
    mu_ok = Measure(dom, center[None, :] + 0.03, np.array([1.0]))
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    rep = verify_norm_equivalence([mu_inf, mu_ok], pp, 2.0, 2.0, dom)
    assert rep.stats["excluded"] == [0]
    assert rep.samples == 1


def test_exp_integrability_zero_measure():
    dom = box(16)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, eta=0.0)
    d0 = exp_delta0(pp)
    rep = verify_exp_integrability(Measure(dom), pp, (0, 0, 0), 0.4,
                                   [0.25 * d0, 0.5 * d0], dom)
    assert rep.passed
    assert all(row["average"] == 1.0 for row in rep.table)


def test_exp_integrability_single_atom_ladder():
    dom = box(48, half=1.1)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, eta=0.0, R=1.0)
    mu = Measure(dom, np.array([[0.1, 0.05, 0.0]]), np.array([1.0]))
    d0 = exp_delta0(pp)
    assert d0 == pytest.approx(math.log(2.0) / 6.0, rel=1e-13)
    rep = verify_exp_integrability(mu, pp, (0, 0, 0), 0.4,
                                   [f * d0 for f in (0.25, 0.5, 0.75, 0.9)], dom)
    assert rep.passed, rep.stats
    avgs = rep.stats["averages"]
    assert all(a >= 1.0 for a in avgs)
    assert all(b >= a for a, b in zip(avgs, avgs[1:]))
    assert rep.constants["band"] <= 10.0


def test_exp_integrability_rejects_delta_outside_range():
    dom = box(16)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, eta=0.0)
    mu = Measure(dom, np.array([[0.1, 0.0, 0.0]]), np.array([1.0]))
    with pytest.raises(ParameterError):
        verify_exp_integrability(mu, pp, (0, 0, 0), 0.4, [exp_delta0(pp)], dom)


def test_reports_deterministic():
    dom = box(16, half=2.0)
    pp = PotentialParams(N=3, alpha=1.0, p=2.0, R=1.0)
    mus = random_atomic_measures(3, dom, ball_radius=1.0, seed=2)
    a = verify_norm_equivalence(mus, pp, 2.0, 2.0, dom).dumps()
    b = verify_norm_equivalence(random_atomic_measures(3, dom, ball_radius=1.0, seed=2),
                                pp, 2.0, 2.0, dom).dumps()
    assert a == b
