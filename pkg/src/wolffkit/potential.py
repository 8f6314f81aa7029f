"""Wolff potentials, fractional maximal operators, and Bessel potentials.

For the measures handled here (atoms plus grid densities) the ball mass
mu(B_t(x)) is a step function of t jumping at source distances, so

    W(x)  = int_0^R (mu(B_t(x)) / t^(N - alpha p))^(1/(p-1)) dt/t

is a finite sum of closed-form power integrals between consecutive jump
radii, and the maximal-operator sup

    M(x)  = sup_{0<t<R} mu(B_t(x)) / (t^(N - alpha p) h_eta(t))

is attained (in the limit from above) at jump radii: on each constancy
segment the quotient t -> m / (t^g h_eta(t)) is strictly decreasing for
g > 0, so its sup over the segment is the left-endpoint limit.  The
candidate set also includes t = 1/2 (the kink of h_eta) and the nominal
interior stationary radius t = exp(-eta/g); both are dominated by the
endpoint candidates but kept for robustness of the sampled-inequality
checks.

The Bessel kernel of order alpha is evaluated through its heat-kernel
representation

    G_alpha(x) = (4 pi)^(-N/2) / Gamma(alpha/2)
                 * int_0^inf exp(-t - |x|^2/(4t)) t^((alpha-N)/2) dt/t,

tabulated once on 4096 log-spaced radii and interpolated with a cubic
spline in log-log coordinates; below the table the exact small-radius
power asymptotic is used, beyond it the kernel is treated as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .grids import Domain, ParameterError, ScalarField
from .measures import Measure, jump_profile

_CHUNK_BUDGET = 4_000_000  # max (points x sources) entries held at once


@dataclass(frozen=True)
class PotentialParams:
    """(N, alpha, p, R, eta) for the Wolff / maximal operator family.

    R may be math.inf; closed forms branch on it explicitly.
    """

    N: int
    alpha: float
    p: float
    R: float = math.inf
    eta: float = 0.0

    def __post_init__(self):
        if self.N < 2:
            raise ParameterError("dimension must be >= 2")
        if not (1.0 < self.p < self.N):
            raise ParameterError("p must satisfy 1 < p < N")
        if self.alpha <= 0:
            raise ParameterError("alpha must be positive")
        if self.alpha * self.p >= self.N:
            raise ParameterError("alpha*p >= N")
        if not (self.R > 0):
            raise ParameterError("truncation radius must be positive")
        if self.eta < 0 or self.eta >= self.p - 1.0:
            raise ParameterError("eta must satisfy 0 <= eta < p-1")

    @property
    def gamma(self) -> float:
        """Ball-mass scaling exponent N - alpha*p."""
        return self.N - self.alpha * self.p

    def with_(self, **kw) -> "PotentialParams":
        data = dict(N=self.N, alpha=self.alpha, p=self.p, R=self.R, eta=self.eta)
        data.update(kw)
        return PotentialParams(**data)


def h_eta(t, eta: float):
    """Logarithmic weight: (-ln t)^(-eta) for t < 1/2, (ln 2)^(-eta) above."""
    if eta < 0:
        raise ParameterError("eta must be nonnegative")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("h_eta requires t > 0")
    if eta == 0:
        out = np.ones_like(t)
    else:
        out = np.where(t < 0.5, (-np.log(np.minimum(t, 0.5))) ** (-eta), math.log(2.0) ** (-eta))
    return out if out.ndim else float(out)


def l_of_rR(r: float, R: float, pp: PotentialParams) -> float:
    """Tail bound factor: (g/(p-1)) * (min(r,R)^(-g/(p-1)) - R^(-g/(p-1))),
    with the R = inf branch dropping the second term (g = N - alpha*p)."""
    if r <= 0 or R <= 0:
        raise ParameterError("radii must be positive")
    k = pp.gamma / (pp.p - 1.0)
    coeff = pp.gamma / (pp.p - 1.0)
    if math.isinf(R):
        return coeff * r ** (-k)
    return coeff * (min(r, R) ** (-k) - R ** (-k))


# -- Wolff potential ---------------------------------------------------------


def _wolff_from_jumps(dists: np.ndarray, cummass: np.ndarray, pp: PotentialParams) -> np.ndarray:
    """Rows of (sorted jump radii, cumulative masses) -> Wolff values."""
    e = pp.gamma / (pp.p - 1.0)
    R = pp.R
    a = dists
    b = np.concatenate([dists[:, 1:], np.full((dists.shape[0], 1), np.inf)], axis=1)
    if not math.isinf(R):
        b = np.minimum(b, R)
    frac = cummass ** (1.0 / (pp.p - 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(a > 0, a ** (-e), np.inf)
        upper = np.where(np.isinf(b), 0.0, b ** (-e))
        seg = frac * (lower - upper) / e
    seg = np.where((a < R) & (cummass > 0) & (b > a), seg, 0.0)
    return seg.sum(axis=1)


def wolff(mu: Measure, pp: PotentialParams, x) -> float:
    """Truncated Wolff potential of a nonnegative measure at one point."""
    d, cm = jump_profile(mu, x)
    if d.size == 0:
        return 0.0
    return float(_wolff_from_jumps(d[None, :], cm[None, :], pp)[0])


def _maximal_from_jumps(dists, cummass, pp: PotentialParams) -> np.ndarray:
    g = pp.gamma
    R = pp.R
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = cummass / (dists**g * h_eta(np.maximum(dists, 1e-300), pp.eta))
    cand = np.where((dists < R) & (cummass > 0), cand, 0.0)
    cand = np.where((dists == 0) & (cummass > 0), np.inf, cand)
    best = cand.max(axis=1)
    # extra candidates: the h_eta kink and the nominal stationary radius
    extras = [0.5]
    if pp.eta > 0:
        extras.append(math.exp(-pp.eta / g))
    for t in extras:
        if 0 < t < R:
            mass_idx = (dists < t).sum(axis=1)
            mass = np.where(mass_idx > 0, cummass[np.arange(len(cummass)), np.maximum(mass_idx - 1, 0)], 0.0)
            val = mass / (t**g * float(h_eta(t, pp.eta)))
            best = np.maximum(best, val)
    return best


def eta_maximal(mu: Measure, pp: PotentialParams, x) -> float:
    """sup over 0 < t < R of mu(B_t(x)) / (t^(N-alpha p) h_eta(t))."""
    d, cm = jump_profile(mu, x)
    if d.size == 0:
        return 0.0
    return float(_maximal_from_jumps(d[None, :], cm[None, :], pp)[0])


def frac_maximal(mu: Measure, pp: PotentialParams, x) -> float:
    """Truncated fractional maximal operator (eta = 0)."""
    return eta_maximal(mu, pp.with_(eta=0.0), x)


def _sources(mu: Measure) -> tuple[np.ndarray, np.ndarray]:
    """All point sources of mu: atoms, plus density cells as point masses."""
    xs = [mu.atoms_x]
    ws = [mu.atoms_w]
    if mu.density is not None:
        flat = mu.density.flat()
        mask = flat != 0.0
        if mask.any():
            xs.append(mu.density.domain.cell_centers()[mask])
            ws.append(flat[mask] * mu.density.cell_volume)
    x = np.vstack([a for a in xs if len(a)]) if any(len(a) for a in xs) else np.zeros((0, mu.domain.dim))
    w = np.concatenate([a for a in ws if len(a)]) if any(len(a) for a in ws) else np.zeros(0)
    return x, w


def _eval_on_points(mu: Measure, pp: PotentialParams, points: np.ndarray, kind: str) -> np.ndarray:
    src, w = _sources(mu)
    npts = len(points)
    out = np.zeros(npts)
    if len(src) == 0:
        return out
    chunk = max(1, _CHUNK_BUDGET // max(len(src), 1))
    for i0 in range(0, npts, chunk):
        P = points[i0 : i0 + chunk]
        D = np.sqrt(((P[:, None, :] - src[None, :, :]) ** 2).sum(axis=2))
        order = np.argsort(D, axis=1)
        Ds = np.take_along_axis(D, order, axis=1)
        Ws = np.cumsum(w[order], axis=1)
        if kind == "wolff":
            out[i0 : i0 + chunk] = _wolff_from_jumps(Ds, Ws, pp)
        else:
            out[i0 : i0 + chunk] = _maximal_from_jumps(Ds, Ws, pp)
    return out


def wolff_field(mu: Measure, pp: PotentialParams, grid: Domain) -> ScalarField:
    vals = _eval_on_points(mu, pp, grid.cell_centers(), "wolff")
    return ScalarField(grid, vals)


def eta_maximal_field(mu: Measure, pp: PotentialParams, grid: Domain) -> ScalarField:
    vals = _eval_on_points(mu, pp, grid.cell_centers(), "maximal")
    return ScalarField(grid, vals)


def frac_maximal_field(mu: Measure, pp: PotentialParams, grid: Domain) -> ScalarField:
    return eta_maximal_field(mu, pp.with_(eta=0.0), grid)


# -- Bessel potential ---------------------------------------------------------


class BesselKernel:
    """Radial Bessel kernel G_alpha in R^N on a log-spaced lookup table."""

    def __init__(self, alpha: float, N: int, r_min: float = 1e-3, r_max: float = 64.0, nodes: int = 4096):
        if not (0 < alpha < N):
            raise ParameterError("kernel order must satisfy 0 < alpha < N")
        self.alpha = float(alpha)
        self.N = int(N)
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.radii = np.exp(np.linspace(math.log(r_min), math.log(r_max), nodes))
        vals = _heat_representation(self.radii, self.alpha, self.N)
        self._spline = CubicSpline(np.log(self.radii), np.log(vals))
        # small-radius asymptotic G(r) ~ a r^(alpha-N)
        self.singular_coeff = (
            (4.0 * math.pi) ** (-self.N / 2.0)
            * gamma_fn((self.N - self.alpha) / 2.0)
            / gamma_fn(self.alpha / 2.0)
            * 2.0 ** (self.N - self.alpha)
        )

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        small = (r > 0) & (r < self.r_min)
        mid = (r >= self.r_min) & (r <= self.r_max)
        out[small] = self.singular_coeff * r[small] ** (self.alpha - self.N)
        if mid.any():
            out[mid] = np.exp(self._spline(np.log(r[mid])))
        out[r == 0] = np.inf
        return out

    def cell_average(self, cell_volume: float) -> float:
        """Average of the singular part over the equal-volume ball; used for
        the self-interaction of a density cell."""
        n = self.N
        rho = (cell_volume * gamma_fn(n / 2.0 + 1.0) / math.pi ** (n / 2.0)) ** (1.0 / n)
        return self.singular_coeff * rho ** (self.alpha - n) * n / self.alpha


def _heat_representation(radii: np.ndarray, alpha: float, N: int) -> np.ndarray:
    """Trapezoid in u = ln t of exp(-e^u - r^2 e^-u / 4) e^(u (alpha-N)/2);
    the integrand decays double-exponentially so the truncated trapezoid is
    accurate far beyond the table's interpolation error."""
    u = np.arange(-80.0, 12.0, 0.02)
    t = np.exp(u)
    expo = -t[None, :] - (radii[:, None] ** 2) * np.exp(-u)[None, :] / 4.0
    expo = expo + u[None, :] * (alpha - N) / 2.0
    integrand = np.exp(np.maximum(expo, -745.0)) * (expo > -745.0)
    integral = integrand.sum(axis=1) * 0.02
    return (4.0 * math.pi) ** (-N / 2.0) / gamma_fn(alpha / 2.0) * integral


@lru_cache(maxsize=8)
def get_kernel(alpha: float, N: int) -> BesselKernel:
    return BesselKernel(alpha, N)


def bessel_potential(mu: Measure, alpha: float, grid: Domain, kernel: BesselKernel | None = None) -> ScalarField:
    """Field of int G_alpha(x - y) dmu(y) on the grid's cell centers.

    A density cell evaluated at its own center uses the cell-averaged
    singular part; an atom evaluated exactly at its location gives inf.
    """
    N = grid.dim
    if kernel is None:
        kernel = get_kernel(float(alpha), N)
    src, w = _sources(mu)
    points = grid.cell_centers()
    out = np.zeros(len(points))
    if len(src):
        chunk = max(1, _CHUNK_BUDGET // len(src))
        self_val = kernel.cell_average(grid.cell_volume)
        has_density = mu.density is not None
        for i0 in range(0, len(points), chunk):
            P = points[i0 : i0 + chunk]
            D = np.sqrt(((P[:, None, :] - src[None, :, :]) ** 2).sum(axis=2))
            K = kernel(D)
            if has_density:
                # density self-cells sit at exactly zero distance
                n_atoms = len(mu.atoms_x)
                zero = D[:, n_atoms:] == 0.0
                if zero.any():
                    K[:, n_atoms:][zero] = self_val
            out[i0 : i0 + chunk] = K @ w
    return ScalarField(grid, out)


def riesz_truncated_field(mu: Measure, expo: float, R: float, grid: Domain) -> ScalarField:
    """(chi_{B_R} |x|^(-expo)) * mu on the grid."""
    src, w = _sources(mu)
    points = grid.cell_centers()
    out = np.zeros(len(points))
    if len(src):
        chunk = max(1, _CHUNK_BUDGET // len(src))
        for i0 in range(0, len(points), chunk):
            P = points[i0 : i0 + chunk]
            D = np.sqrt(((P[:, None, :] - src[None, :, :]) ** 2).sum(axis=2))
            with np.errstate(divide="ignore"):
                K = np.where(D < R, D ** (-expo), 0.0)
            out[i0 : i0 + chunk] = K @ w
    return ScalarField(grid, out)


def exp_tail_field(mu: Measure, grid: Domain) -> ScalarField:
    """(exp(-|x|/2)) * mu on the grid."""
    src, w = _sources(mu)
    points = grid.cell_centers()
    out = np.zeros(len(points))
    if len(src):
        chunk = max(1, _CHUNK_BUDGET // len(src))
        for i0 in range(0, len(points), chunk):
            P = points[i0 : i0 + chunk]
            D = np.sqrt(((P[:, None, :] - src[None, :, :]) ** 2).sum(axis=2))
            out[i0 : i0 + chunk] = np.exp(-D / 2.0) @ w
    return ScalarField(grid, out)


def bessel_sandwich_report(mu: Measure, alpha: float, grid: Domain, R: float = 1.0) -> dict:
    """Fit the smallest c with
    c^-1 (chi_{B_R} |x|^(alpha-N)) * mu <= G_alpha[mu]
                     <= c [(chi_{B_{R/2}} |x|^(alpha-N)) * mu + exp(-|x|/2) * mu].
    """
    N = grid.dim
    G = bessel_potential(mu, alpha, grid).flat()
    lower = riesz_truncated_field(mu, N - alpha, R, grid).flat()
    upper = (riesz_truncated_field(mu, N - alpha, R / 2.0, grid) + exp_tail_field(mu, grid)).flat()
    ok = np.isfinite(G) & (G > 0)
    c_lower = float(np.max(lower[ok] / G[ok])) if ok.any() else 1.0
    with np.errstate(divide="ignore"):
        ratios = np.where(upper[ok] > 0, G[ok] / upper[ok], np.inf)
    c_upper = float(np.max(ratios)) if ok.any() else 1.0
    c = max(1.0, c_lower, c_upper)
    return {"schema": "wolffkit/1", "alpha": alpha, "R": R, "sandwich_constant": c}
