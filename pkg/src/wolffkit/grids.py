"""Box domains and cell-centered scalar fields.

All computations in this package live on regular grids over axis-aligned
boxes.  A field stores one value per grid cell; integrals are plain sums
weighted by the (constant) cell volume, which keeps identities such as
equimeasurability of the decreasing rearrangement exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when an operation precondition is violated."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^N with a regular cell grid.

    lo, hi : box corners, lo < hi componentwise
    res    : number of cells per axis (>= 2)
    """

    lo: tuple
    hi: tuple
    res: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        res = tuple(int(v) for v in self.res)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "res", res)
        if not (len(lo) == len(hi) == len(res)):
            raise ParameterError("lo, hi, res must have equal length")
        if self.dim < 2:
            raise ParameterError("dimension must be >= 2")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ParameterError("upper corner must exceed lower corner componentwise")
        if any(r < 2 for r in res):
            raise ParameterError("resolution must be >= 2 per axis")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def cell_widths(self) -> np.ndarray:
        return self.widths / np.asarray(self.res)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def ncells(self) -> int:
        return int(np.prod(self.res))

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.res[axis]
        h = self.cell_widths[axis]
        return self.lo[axis] + h * (np.arange(n) + 0.5)

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an (ncells, N) array in C (row-major) order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def is_subbox_of(self, other: "Domain") -> bool:
        return bool(
            np.all(np.asarray(self.lo) >= np.asarray(other.lo))
            and np.all(np.asarray(self.hi) <= np.asarray(other.hi))
        )

    def to_json(self) -> dict:
        return {"n": self.dim, "lo": list(self.lo), "hi": list(self.hi), "res": list(self.res)}

    @staticmethod
    def from_json(obj: dict) -> "Domain":
        dom = Domain(tuple(obj["lo"]), tuple(obj["hi"]), tuple(obj["res"]))
        if "n" in obj and int(obj["n"]) != dom.dim:
            raise ParameterError("domain json 'n' does not match corner length")
        return dom


@dataclass
class ScalarField:
    """Values on the cells of a Domain, with the Lebesgue cell weight."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.domain.ncells:
            raise ParameterError("value count must equal product of resolutions")
        self.values = vals.reshape(self.domain.res)

    @property
    def cell_volume(self) -> float:
        return self.domain.cell_volume

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def abs_integral(self) -> float:
        return float(np.abs(self.values).sum() * self.cell_volume)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if other.domain != self.domain:
            raise ParameterError("fields live on different domains")
        return ScalarField(self.domain, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        if other.domain != self.domain:
            raise ParameterError("fields live on different domains")
        return ScalarField(self.domain, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.domain, self.values * float(c))

    __rmul__ = __mul__

    @staticmethod
    def zeros(domain: Domain) -> "ScalarField":
        return ScalarField(domain, np.zeros(domain.res))

    @staticmethod
    def full(domain: Domain, value: float) -> "ScalarField":
        return ScalarField(domain, np.full(domain.res, float(value)))


def save_field_csv(path, field: ScalarField) -> None:
    """Write a field as CSV rows of cell-center coordinates then the value."""
    centers = field.domain.cell_centers()
    data = np.column_stack([centers, field.flat()])
    header = ",".join(f"x{i+1}" for i in range(field.domain.dim)) + ",value"
    np.savetxt(path, data, delimiter=",", header=header, comments="")


def save_density_csv(path, field: ScalarField) -> None:
    """Write raw cell values, one per line, in row-major (C) order."""
    np.savetxt(path, field.flat())


def load_density_csv(path, domain: Domain) -> ScalarField:
    vals = np.loadtxt(path)
    return ScalarField(domain, vals)
