"""Bounded measures on box domains: atoms plus an optional grid density.

Ball masses use the open-ball convention (strict inequality on distances)
and the cell-center-in-ball rule for the density part, so mu(B_t(x)) is a
right-continuous step function of t with jumps at atom / cell-center
distances.  That makes the Wolff integral and the maximal-operator sups
exactly computable segment by segment (see potential.py).

Signed measures are always carried as an ordered pair (plus, minus); all
operators apply to the two parts separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .grids import Domain, ParameterError, ScalarField, load_density_csv, save_density_csv


@dataclass
class Measure:
    """Nonnegative bounded measure: point atoms + optional density field."""

    domain: Domain
    atoms_x: np.ndarray = dc_field(default=None, repr=False)  # (k, N)
    atoms_w: np.ndarray = dc_field(default=None, repr=False)  # (k,)
    density: ScalarField | None = None

    def __post_init__(self):
        n = self.domain.dim
        if self.atoms_x is None:
            self.atoms_x = np.zeros((0, n))
        self.atoms_x = np.atleast_2d(np.asarray(self.atoms_x, dtype=float)).reshape(-1, n)
        if self.atoms_w is None:
            self.atoms_w = np.zeros(len(self.atoms_x))
        self.atoms_w = np.asarray(self.atoms_w, dtype=float).ravel()
        if len(self.atoms_w) != len(self.atoms_x):
            raise ParameterError("atom weights and locations differ in length")
        if np.any(self.atoms_w < 0):
            raise ParameterError("atom weights must be nonnegative")
        if len(self.atoms_x) and not np.all(self.domain.contains(self.atoms_x)):
            raise ParameterError("atom locations must lie inside the domain")
        if self.density is not None and np.any(self.density.values < 0):
            raise ParameterError("density must be nonnegative")
        if not np.isfinite(self.mass()):
            raise ParameterError("total mass must be finite")

    def mass(self) -> float:
        m = float(self.atoms_w.sum())
        if self.density is not None:
            m += self.density.integral()
        return m

    def support_points(self) -> np.ndarray:
        """Atoms plus centers of density cells carrying positive mass."""
        pts = [self.atoms_x[self.atoms_w > 0]]
        if self.density is not None:
            mask = self.density.flat() > 0
            if mask.any():
                pts.append(self.density.domain.cell_centers()[mask])
        pts = [p for p in pts if len(p)]
        if not pts:
            return np.zeros((0, self.domain.dim))
        return np.vstack(pts)

    def scaled(self, c: float) -> "Measure":
        if c < 0:
            raise ParameterError("scale factor must be nonnegative")
        dens = None if self.density is None else ScalarField(self.density.domain, self.density.values * c)
        return Measure(self.domain, self.atoms_x.copy(), self.atoms_w * c, dens)

    def __add__(self, other: "Measure") -> "Measure":
        if other.domain != self.domain:
            raise ParameterError("measures live on different domains")
        ax = np.vstack([self.atoms_x, other.atoms_x])
        aw = np.concatenate([self.atoms_w, other.atoms_w])
        if self.density is None:
            dens = None if other.density is None else other.density.copy()
        elif other.density is None:
            dens = self.density.copy()
        else:
            dens = self.density + other.density
        return Measure(self.domain, ax, aw, dens)


@dataclass
class SignedMeasure:
    """Ordered pair (plus, minus) of nonnegative measures; mu = plus - minus."""

    plus: Measure
    minus: Measure

    def __post_init__(self):
        if self.plus.domain != self.minus.domain:
            raise ParameterError("signed parts live on different domains")

    @property
    def domain(self) -> Domain:
        return self.plus.domain

    def total_variation(self) -> float:
        return self.plus.mass() + self.minus.mass()

    @staticmethod
    def from_positive(mu: Measure) -> "SignedMeasure":
        return SignedMeasure(mu, Measure(mu.domain))


def ball_mass(mu: Measure, x, t: float) -> float:
    """Mass of the open ball B_t(x): atoms with |a-x| < t plus density cells
    whose center lies strictly inside the ball."""
    if t <= 0:
        raise ParameterError("ball radius must be positive")
    x = np.asarray(x, dtype=float)
    m = 0.0
    if len(mu.atoms_x):
        d = np.linalg.norm(mu.atoms_x - x, axis=1)
        m += float(mu.atoms_w[d < t].sum())
    if mu.density is not None:
        m += _density_ball_mass(mu.density, x, t)
    return m


def _density_ball_mass(dens: ScalarField, x: np.ndarray, t: float) -> float:
    dom = dens.domain
    # bounding-box pruning: only axis index ranges that can intersect the ball
    slices = []
    for a in range(dom.dim):
        centers = dom.axis_centers(a)
        i0 = int(np.searchsorted(centers, x[a] - t, side="left"))
        i1 = int(np.searchsorted(centers, x[a] + t, side="right"))
        if i0 >= i1:
            return 0.0
        slices.append((i0, i1, centers[i0:i1]))
    block = dens.values[tuple(slice(i0, i1) for i0, i1, _ in slices)]
    d2 = np.zeros(block.shape)
    for a, (_, _, cs) in enumerate(slices):
        shape = [1] * dom.dim
        shape[a] = len(cs)
        d2 = d2 + ((cs - x[a]) ** 2).reshape(shape)
    inside = d2 < t * t
    return float(block[inside].sum() * dens.cell_volume)


def jump_profile(mu: Measure, x) -> tuple[np.ndarray, np.ndarray]:
    """Return (radii, cummass): sorted distances at which mu(B_t(x)) jumps and
    the cumulative mass reached just above each radius.

    mu(B_t(x)) = cummass[k] for t in (radii[k], radii[k+1]].  Density cells
    are treated as point masses at their centers, consistently with the
    cell-center-in-ball rule of ball_mass.
    """
    x = np.asarray(x, dtype=float)
    dists = []
    weights = []
    if len(mu.atoms_x):
        dists.append(np.linalg.norm(mu.atoms_x - x, axis=1))
        weights.append(mu.atoms_w)
    if mu.density is not None:
        flat = mu.density.flat()
        mask = flat != 0.0
        if mask.any():
            centers = mu.density.domain.cell_centers()[mask]
            dists.append(np.linalg.norm(centers - x, axis=1))
            weights.append(flat[mask] * mu.density.cell_volume)
    if not dists:
        return np.zeros(0), np.zeros(0)
    d = np.concatenate(dists)
    w = np.concatenate(weights)
    order = np.argsort(d, kind="stable")
    d = d[order]
    w = w[order]
    return d, np.cumsum(w)


def mollify(mu: Measure, bandwidth: float) -> ScalarField:
    """Smooth mu into a nonnegative density with the same total mass.

    Kernel: compactly supported polynomial bump (1 - |y/h|^2)^2, normalized
    on the grid so the discrete integral of each smoothed unit mass is
    exactly 1.  Compact support keeps the output supported within distance
    h of supp(mu).  If h exceeds the distance from supp(mu) to the domain
    boundary it is clipped (the clip is reported via the returned field's
    `mollify_clipped` attribute).
    """
    if bandwidth <= 0:
        raise ParameterError("mollifier bandwidth must be positive")
    dom = mu.domain
    out = np.zeros(dom.res)
    clipped = False

    support = mu.support_points()
    h = float(bandwidth)
    if len(support):
        lo = np.asarray(dom.lo)
        hi = np.asarray(dom.hi)
        gap = min(float(np.min(support - lo)), float(np.min(hi - support)))
        if h > gap:
            h = max(gap, 2.0 * float(np.max(dom.cell_widths)))
            clipped = True

    centers = [dom.axis_centers(a) for a in range(dom.dim)]

    def add_bump(loc: np.ndarray, weight: float) -> None:
        if weight == 0.0:
            return
        idx = []
        for a in range(dom.dim):
            cs = centers[a]
            i0 = int(np.searchsorted(cs, loc[a] - h, side="left"))
            i1 = int(np.searchsorted(cs, loc[a] + h, side="right"))
            if i0 >= i1:
                return
            idx.append((i0, i1, cs[i0:i1]))
        d2 = np.zeros([i1 - i0 for i0, i1, _ in idx])
        for a, (_, _, cs) in enumerate(idx):
            shape = [1] * dom.dim
            shape[a] = len(cs)
            d2 = d2 + ((cs - loc[a]) ** 2).reshape(shape)
        r2 = d2 / (h * h)
        bump = np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
        s = bump.sum() * dom.cell_volume
        if s <= 0.0:
            # support thinner than the grid: dump the mass in the nearest cell
            nearest = tuple(int(np.argmin(np.abs(centers[a] - loc[a]))) for a in range(dom.dim))
            out[nearest] += weight / dom.cell_volume
            return
        region = tuple(slice(i0, i1) for i0, i1, _ in idx)
        out[region] += weight * bump / s

    for loc, w in zip(mu.atoms_x, mu.atoms_w):
        add_bump(loc, float(w))
    if mu.density is not None:
        flat = mu.density.flat()
        mask = flat != 0.0
        if mask.any():
            cell_centers = mu.density.domain.cell_centers()[mask]
            cell_masses = flat[mask] * mu.density.cell_volume
            for loc, w in zip(cell_centers, cell_masses):
                add_bump(loc, float(w))

    fld = ScalarField(dom, out)
    fld.mollify_clipped = clipped
    fld.mollify_bandwidth = h
    return fld


def truncate_restrict(f: ScalarField | None, nu: Measure, n: float, omega_n: Domain) -> Measure:
    """Measure with density T_n(f) restricted to the sub-box omega_n, plus
    the part of nu supported in omega_n.  T_n clamps to [-n, n]."""
    if n <= 0:
        raise ParameterError("truncation level must be positive")
    dom = nu.domain if f is None else f.domain
    if not omega_n.is_subbox_of(dom):
        raise ParameterError("omega_n must be a sub-box of the domain")

    dens = None
    if f is not None:
        centers = f.domain.cell_centers()
        lo = np.asarray(omega_n.lo)
        hi = np.asarray(omega_n.hi)
        inside = np.all((centers >= lo) & (centers <= hi), axis=1).reshape(f.domain.res)
        vals = np.clip(f.values, -float(n), float(n)) * inside
        dens = ScalarField(f.domain, vals)

    keep = nu.domain.contains(nu.atoms_x) if len(nu.atoms_x) else np.zeros(0, dtype=bool)
    if len(nu.atoms_x):
        lo = np.asarray(omega_n.lo)
        hi = np.asarray(omega_n.hi)
        keep = np.all((nu.atoms_x >= lo) & (nu.atoms_x <= hi), axis=1)
    ax = nu.atoms_x[keep] if len(nu.atoms_x) else nu.atoms_x
    aw = nu.atoms_w[keep] if len(nu.atoms_x) else nu.atoms_w

    if nu.density is not None:
        centers = nu.density.domain.cell_centers()
        lo = np.asarray(omega_n.lo)
        hi = np.asarray(omega_n.hi)
        inside = np.all((centers >= lo) & (centers <= hi), axis=1).reshape(nu.density.domain.res)
        nud = ScalarField(nu.density.domain, nu.density.values * inside)
        dens = nud if dens is None else dens + nud

    return Measure(dom, ax, aw, dens)


def inset_box(dom: Domain, margin: float) -> Domain:
    """Sub-box obtained by shrinking every side of dom by `margin`."""
    lo = np.asarray(dom.lo) + margin
    hi = np.asarray(dom.hi) - margin
    if np.any(hi <= lo):
        raise ParameterError("margin leaves an empty box")
    return Domain(tuple(lo), tuple(hi), dom.res)


def measure_to_json(mu: Measure, density_csv: str | None = None) -> dict:
    obj = {
        "schema": "wolffkit/1",
        "atoms": [{"x": list(map(float, x)), "w": float(w)} for x, w in zip(mu.atoms_x, mu.atoms_w)],
        "domain": mu.domain.to_json(),
    }
    if mu.density is not None:
        if density_csv is None:
            raise ParameterError("a density csv path is required to serialize the density part")
        obj["density"] = {"file": str(density_csv), "domain": mu.density.domain.to_json()}
    return obj


def save_measure(path, mu: Measure) -> None:
    path = Path(path)
    density_csv = None
    if mu.density is not None:
        density_csv = path.with_suffix(".density.csv").name
        save_density_csv(path.parent / density_csv, mu.density)
    path.write_text(json.dumps(measure_to_json(mu, density_csv), indent=2))


def load_measure(path) -> Measure:
    path = Path(path)
    obj = json.loads(path.read_text())
    dom = Domain.from_json(obj["domain"])
    atoms = obj.get("atoms", [])
    ax = np.array([a["x"] for a in atoms], dtype=float).reshape(-1, dom.dim)
    aw = np.array([a["w"] for a in atoms], dtype=float)
    dens = None
    if obj.get("density"):
        ddom = Domain.from_json(obj["density"]["domain"])
        dens = load_density_csv(path.parent / obj["density"]["file"], ddom)
    return Measure(dom, ax, aw, dens)
