"""Lorentz-Bessel capacities by convex minimization, and good-measure tests.

The capacity of a grid set E is estimated as

    inf { ||f||_(s,q) : f >= 0 on the grid, (G_alpha * f)(x) >= 1 on E }

by projected subgradient descent: descend on the norm, clip to f >= 0, and
restore feasibility by the exact rescale f <- f / min_E (G_alpha * f).
Every recorded value is the norm of a feasible f, hence a true upper bound
on the discrete optimum; the trace stores the best value so far, which is
monotone by construction.  Discrete capacities are grid artifacts, so each
estimate carries the grid and kernel fingerprint it was computed with.

The module also hosts the scalar good-measure criteria: capacity index
arithmetic for power absorption, the subcritical and tail growth integrals,
and the explicit smallness threshold for exponential absorption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad

from .absorption import AbsorptionSpec
from .grids import Domain, ParameterError, ScalarField
from .lorentz import LorentzParams, lorentz_norm
from .measures import Measure
from .potential import get_kernel

_GLX, _GLW = np.polynomial.legendre.leggauss(12)


@dataclass
class OptimizerSettings:
    max_iter: int = 3000
    step0: float = 0.25
    tol: float = 1e-4       # relative best-value change over the gap window
    gap_window: int = 50
    seed: int = 0


@dataclass
class CapacityProblem:
    domain: Domain
    target_cells: np.ndarray          # flat indices into the grid
    alpha: float
    lp: LorentzParams
    settings: OptimizerSettings = dc_field(default_factory=OptimizerSettings)

    def __post_init__(self):
        self.target_cells = np.asarray(self.target_cells, dtype=int).ravel()
        if not (0 < self.alpha < self.domain.dim):
            raise ParameterError("capacity order must satisfy 0 < alpha < N")
        if self.lp.s <= 1:
            raise ParameterError("capacity needs primary exponent s > 1")


@dataclass
class CapacityEstimate:
    value: float
    minimizer: ScalarField
    trace: np.ndarray            # columns: iteration, best value, margin
    converged: bool
    inconclusive: bool
    fingerprint: dict

    def to_json(self) -> dict:
        return {
            "schema": "wolffkit/1",
            "value": self.value,
            "converged": self.converged,
            "inconclusive": self.inconclusive,
            "fingerprint": self.fingerprint,
        }


def norm_power_gradient(values: np.ndarray, cell_volume: float, lp: LorentzParams) -> tuple[float, np.ndarray]:
    """(||f||^q, d||f||^q/df) for f >= 0 cellwise, via the sorted segment
    structure of the running-average rearrangement."""
    s, q = lp.s, lp.q
    if s <= 1:
        raise ParameterError("gradient needs s > 1")
    n = values.size
    v = cell_volume
    order = np.argsort(-values, kind="stable")
    w = values[order]
    a = np.arange(n) * v
    b = a + v
    S_prev = np.concatenate([[0.0], np.cumsum(w * v)[:-1]])
    A = S_prev - w * a
    S = S_prev[-1] + w[-1] * v
    if S == 0.0:
        return 0.0, np.zeros(n)
    c = q / s

    # Gauss-Legendre nodes per sorted segment; the first segment (a = 0,
    # A = 0, f** constant) is integrated in closed form because its
    # integrand is singular at t = 0
    mid = 0.5 * (a + b)
    half = 0.5 * v
    t = mid[:, None] + half * _GLX[None, :]
    fss = w[:, None] + A[:, None] / t
    fq1 = fss ** (q - 1.0)
    phi = float((half * ((t[1:] ** (c - 1.0) * fss[1:] ** q) @ _GLW)).sum())
    phi += w[0] ** q * v**c / c
    phi += S**q * b[-1] ** (c - q) / (q - c)
    # per-segment pieces of the gradient
    J1 = half * ((t ** (c - 2.0) * fq1 * (t - a[:, None])) @ _GLW)
    J2 = half * ((t ** (c - 2.0) * fq1) @ _GLW)
    J1[0] = w[0] ** (q - 1.0) * v**c / c
    tail = S ** (q - 1.0) * b[-1] ** (c - q) / (q - c)
    suffix = np.concatenate([np.cumsum(J2[::-1])[::-1][1:], [0.0]]) + tail
    grad_sorted = q * (J1 + v * suffix)
    grad = np.empty(n)
    grad[order] = grad_sorted
    return phi, grad


def _norm_value(values: np.ndarray, domain: Domain, lp: LorentzParams) -> float:
    res = lorentz_norm(ScalarField(domain, values.copy()), lp)
    return np.inf if res.infinite else res.value


def capacity_estimate(prob: CapacityProblem, f0: np.ndarray | None = None) -> CapacityEstimate:
    dom = prob.domain
    n = dom.ncells
    kernel = get_kernel(float(prob.alpha), dom.dim)
    fingerprint = {
        "grid": dom.to_json(),
        "kernel": {"alpha": prob.alpha, "r_min": kernel.r_min, "r_max": kernel.r_max,
                   "nodes": len(kernel.radii)},
        "quasi_norm": prob.lp.quasi_norm,
    }
    if prob.target_cells.size == 0:
        return CapacityEstimate(0.0, ScalarField.zeros(dom), np.zeros((0, 3)), True, False, fingerprint)

    centers = dom.cell_centers()
    targets = centers[prob.target_cells]
    D = np.sqrt(((targets[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
    K = kernel(D)
    K[D == 0.0] = kernel.cell_average(dom.cell_volume)
    K = K * dom.cell_volume

    st = prob.settings

    def project(f):
        f = np.maximum(f, 0.0)
        cons = K @ f
        m = cons.min()
        if m <= 0.0:
            f = np.ones(n)
            cons = K @ f
            m = cons.min()
        return f / m, m - 1.0

    if f0 is None:
        f0 = np.ones(n)
    f, margin = project(np.asarray(f0, dtype=float).copy())
    best_val = _norm_value(f, dom, prob.lp)
    best_f = f.copy()
    trace = [(0, best_val, margin)]

    scale0 = None
    for it in range(1, st.max_iter + 1):
        phi, grad = norm_power_gradient(f, dom.cell_volume, prob.lp)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0.0:
            break
        if scale0 is None:
            scale0 = st.step0 * np.linalg.norm(f) / gnorm
        step = scale0 / math.sqrt(it)
        f_new, margin = project(f - step * grad)
        val = _norm_value(f_new, dom, prob.lp)
        if val < best_val:
            best_val = val
            best_f = f_new.copy()
        f = f_new
        trace.append((it, best_val, margin))
        if it >= 2 * st.gap_window and it % st.gap_window == 0:
            old = trace[-st.gap_window - 1][1]
            if old - best_val <= st.tol * max(best_val, 1e-300):
                break

    trace = np.asarray(trace, dtype=float)
    gap = 0.0
    if len(trace) > st.gap_window:
        gap = (trace[-st.gap_window - 1][1] - trace[-1][1]) / max(trace[-1][1], 1e-300)
    converged = bool(gap <= st.tol)
    cons = K @ best_f
    feasible = bool(cons.min() >= 1.0 - 1e-6)
    return CapacityEstimate(
        value=float(best_val),
        minimizer=ScalarField(dom, best_f),
        trace=trace,
        converged=converged and feasible,
        inconclusive=not (converged and feasible),
        fingerprint=fingerprint,
    )


def cells_in_box(dom: Domain, lo, hi) -> np.ndarray:
    """Flat indices of cells whose centers lie in [lo, hi]."""
    centers = dom.cell_centers()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mask = np.all((centers >= lo) & (centers <= hi), axis=1)
    return np.flatnonzero(mask)


# -- scalar criteria -----------------------------------------------------------


def power_capacity_indices(N: int, p: float, q: float, beta: float, variant: int = 1) -> tuple[float, float, float]:
    """Capacity indices governing power absorption |x|^(-beta)|u|^(q-1)u:
    order p, primary exponent Nq/(Nq - (p-1)(N-beta)), secondary q/(q+1-p)
    (variant 2 replaces the secondary exponent by 1)."""
    if not (1.0 < p < N):
        raise ParameterError("need 1 < p < N")
    if q <= p - 1.0:
        raise ParameterError("need q > p - 1")
    if not (0.0 <= beta < N):
        raise ParameterError("need 0 <= beta < N")
    s = N * q / (N * q - (p - 1.0) * (N - beta))
    assert s > 1.0
    q_lorentz = 1.0 if variant == 2 else q / (q + 1.0 - p)
    return (p, s, q_lorentz)


@dataclass
class IntegralVerdict:
    finite: bool | None      # None = not applicable
    value: float | None
    note: str = ""


def _adaptive_tail(growth, expo: float) -> IntegralVerdict:
    """Adaptive quadrature of int_1^inf growth(s) s^expo ds with a
    geometric-decay tail test over doubling cutoffs."""
    pieces = []
    lo = 1.0
    for _ in range(40):
        hi = lo * 2.0
        val, _ = quad(lambda s: growth(s) * s**expo, lo, hi, limit=100)
        pieces.append(val)
        lo = hi
        if not np.isfinite(val) or val > 1e12:
            return IntegralVerdict(False, None, "blow-up before cutoff")
        if len(pieces) >= 6 and pieces[-1] < 1e-14 * max(sum(pieces), 1e-300):
            return IntegralVerdict(True, float(sum(pieces)), "tail negligible")
    ratios = [b / a for a, b in zip(pieces[-6:], pieces[-5:]) if a > 0]
    if ratios and max(ratios) < 0.95:
        r = max(ratios)
        total = sum(pieces) + pieces[-1] * r / (1 - r)
        return IntegralVerdict(True, float(total), "geometric tail extrapolated")
    return IntegralVerdict(False, None, "tail does not decay")


def subcritical_integral(g: AbsorptionSpec, N: int) -> IntegralVerdict:
    """int_1^inf g(s) s^(-(N-1)/(N-2)) ds: finite means every bounded measure
    is admissible for the (p = 2) problem."""
    if N < 3:
        return IntegralVerdict(None, None, "exponent undefined for N = 2")
    expo = -(N - 1.0) / (N - 2.0)
    if g.kind == "none":
        return IntegralVerdict(True, 0.0)
    if g.kind == "exponential":
        return IntegralVerdict(False, None, "super-polynomial growth")
    if g.kind == "power":
        if g.q < 1.0 / (N - 2.0):
            return IntegralVerdict(True, 1.0 / (1.0 / (N - 2.0) - g.q))
        return IntegralVerdict(False, None, "tail exponent >= -1")
    return _adaptive_tail(g.scalar_growth, expo)


def tail_integral_q(g: AbsorptionSpec, q: float) -> IntegralVerdict:
    """int_1^inf g(s) s^(-q-1) ds."""
    if q <= 0:
        raise ParameterError("need q > 0")
    if g.kind == "none":
        return IntegralVerdict(True, 0.0)
    if g.kind == "exponential":
        return IntegralVerdict(False, None, "super-polynomial growth")
    if g.kind == "power":
        if g.q < q:
            return IntegralVerdict(True, 1.0 / (q - g.q))
        return IntegralVerdict(False, None, "harmonic or fatter tail")
    return _adaptive_tail(g.scalar_growth, -q - 1.0)


def exp_threshold(N: int, p: float, tau: float, lam: float, c: float) -> float:
    """Smallness threshold for the weighted-maximal norm of the singular part
    under exponential absorption: (p ln 2 / (tau (12 lambda c)^lambda))^((p-1)/lambda)."""
    if not (1.0 < p < N):
        raise ParameterError("need 1 < p < N")
    if tau <= 0 or lam < 1 or c <= 0:
        raise ParameterError("need tau > 0, lambda >= 1, c > 0")
    return (p * math.log(2.0) / (tau * (12.0 * lam * c) ** lam)) ** ((p - 1.0) / lam)


@dataclass
class CriterionReport:
    name: str
    inputs: dict
    threshold: float | None
    measured: float | None
    verdict: str  # pass | fail | inconclusive

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "inconclusive"):
            raise ParameterError("verdict must be pass/fail/inconclusive")

    def to_json(self) -> dict:
        def enc(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isinf(x):
                return {"infinite": True, "value": None}
            return x

        return {
            "schema": "wolffkit/1",
            "criterion": self.name,
            "inputs": {k: enc(v) for k, v in self.inputs.items()},
            "threshold": enc(self.threshold),
            "measured": enc(self.measured),
            "verdict": self.verdict,
        }


def capacity_probe_atoms(
    mu: Measure,
    alpha: float,
    lp: LorentzParams,
    dom: Domain,
    epsilons: list[float],
    settings: OptimizerSettings | None = None,
) -> dict:
    """Dyadic-cube capacity probe around each atom.

    For every atom and eps the capacity of the eps-cube around the atom is
    estimated.  An atom reads `vanishing` when the capacities drop
    consistently across the dyadic ladder while the atom keeps mass >= its
    weight inside every cube; that is the resolution-level signature of a
    singular part charged on a capacity-null set.
    """
    settings = settings or OptimizerSettings()
    out = {"schema": "wolffkit/1", "alpha": alpha, "s": lp.s, "q": lp.q, "atoms": []}
    for loc, w in zip(mu.atoms_x, mu.atoms_w):
        caps = []
        for eps in sorted(epsilons, reverse=True):
            cells = cells_in_box(dom, loc - eps / 2.0, loc + eps / 2.0)
            prob = CapacityProblem(dom, cells, alpha, lp, settings)
            caps.append(capacity_estimate(prob).value)
        drops = [b / a for a, b in zip(caps, caps[1:]) if a > 0]
        if drops and max(drops) <= 0.75:
            verdict = "vanishing"
        elif drops and min(drops) >= 0.9:
            verdict = "stable"
        else:
            verdict = "inconclusive"
        out["atoms"].append({"x": list(map(float, loc)), "w": float(w),
                             "epsilons": sorted(epsilons, reverse=True),
                             "capacities": caps, "verdict": verdict})
    return out
