"""Sites on S^d1 x S^d2 x R^d and reduction of site pairs to (s, r, h).

A componentwise-isotropic kernel sees a pair of sites only through the two
sphere dot products and the Euclidean distance, so this module is the single
place where raw coordinates are touched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnitVector",
    "Site",
    "Invariants3",
    "reduce_pair",
    "random_sites",
    "save_sites_csv",
    "load_sites_csv",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class UnitVector:
    """Point on a unit sphere, renormalized on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("a sphere point needs at least two coordinates")
        norm = float(np.linalg.norm(c))
        if norm < 1e-9:
            raise ValueError("cannot normalize a near-zero vector onto the sphere")
        # Dividing an already-unit vector by its 1-ulp norm would perturb the
        # coordinates, breaking exact save/load round trips.
        if abs(norm - 1.0) > 1e-12:
            c = c / norm
        object.__setattr__(self, "coords", _readonly(c))

    @property
    def sphere_dim(self) -> int:
        """n for a point on S^n embedded in R^(n+1)."""
        return self.coords.size - 1

    def dot(self, other: "UnitVector") -> float:
        if self.coords.size != other.coords.size:
            raise ValueError("sphere dimensions differ")
        return float(self.coords @ other.coords)


@dataclass(frozen=True)
class Site:
    """A point (x1, x2, u) on S^d1 x S^d2 x R^d."""

    x1: UnitVector
    x2: UnitVector
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or u.size < 1:
            raise ValueError("the Euclidean component must be a 1-d vector")
        object.__setattr__(self, "u", _readonly(u))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.x1.sphere_dim, self.x2.sphere_dim, self.u.size)


@dataclass(frozen=True)
class Invariants3:
    """Pair invariants: sphere cosines s, r in [-1, 1] and distance h >= 0.

    s and r are clamped into [-1, 1] so that downstream arccos calls cannot
    produce NaN at numerically coincident or antipodal points.
    """

    s: float
    r: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "s", float(min(1.0, max(-1.0, self.s))))
        object.__setattr__(self, "r", float(min(1.0, max(-1.0, self.r))))
        h = float(self.h)
        if h < 0:
            raise ValueError(f"distance h must be nonnegative, got {h}")
        object.__setattr__(self, "h", h)


def reduce_pair(a: Site, b: Site) -> Invariants3:
    """Invariants of a site pair: s = <x1, x1'>, r = <x2, x2'>, h = |u - u'|."""
    if a.dims != b.dims:
        raise ValueError(f"site dimensions differ: {a.dims} vs {b.dims}")
    return Invariants3(
        s=a.x1.dot(b.x1),
        r=a.x2.dot(b.x2),
        h=float(np.linalg.norm(a.u - b.u)),
    )


def random_sites(
    seed: int,
    count: int,
    d1: int,
    d2: int,
    d: int,
    box_halfwidth: float = 5.0,
) -> list[Site]:
    """Deterministic random sites: uniform sphere components, uniform box in R^d.

    Sphere points are normalized standard Gaussian vectors, which are uniform
    on the sphere in any dimension.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if box_halfwidth <= 0:
        raise ValueError(f"box_halfwidth must be positive, got {box_halfwidth}")
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal((count, d1 + 1))
    g2 = rng.standard_normal((count, d2 + 1))
    us = rng.uniform(-box_halfwidth, box_halfwidth, size=(count, d))
    return [
        Site(UnitVector(g1[i]), UnitVector(g2[i]), us[i])
        for i in range(count)
    ]


def _site_header(d1: int, d2: int, d: int) -> list[str]:
    return (
        [f"x1_{i}" for i in range(d1 + 1)]
        + [f"x2_{i}" for i in range(d2 + 1)]
        + [f"u_{i}" for i in range(d)]
    )


def save_sites_csv(sites: list[Site], path) -> None:
    """Write sites as CSV, one site per row, with the required header."""
    if not sites:
        raise ValueError("cannot write an empty site list")
    d1, d2, d = sites[0].dims
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_site_header(d1, d2, d))
        for s in sites:
            if s.dims != (d1, d2, d):
                raise ValueError("all sites must share the same dimensions")
            row = np.concatenate([s.x1.coords, s.x2.coords, s.u])
            writer.writerow([repr(float(v)) for v in row])


def load_sites_csv(path) -> list[Site]:
    """Read sites from CSV written by :func:`save_sites_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty site file") from None
        n1 = sum(1 for c in header if c.startswith("x1_"))
        n2 = sum(1 for c in header if c.startswith("x2_"))
        nd = sum(1 for c in header if c.startswith("u_"))
        if n1 < 2 or n2 < 2 or nd < 1:
            raise ValueError(f"{path}: header does not describe sites: {header}")
        if header != _site_header(n1 - 1, n2 - 1, nd):
            raise ValueError(f"{path}: malformed site header: {header}")
        sites = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n1 + n2 + nd:
                raise ValueError(f"{path}:{lineno}: expected {n1 + n2 + nd} columns")
            vals = np.array([float(v) for v in row])
            sites.append(
                Site(
                    UnitVector(vals[:n1]),
                    UnitVector(vals[n1 : n1 + n2]),
                    vals[n1 + n2 :],
                )
            )
    if not sites:
        raise ValueError(f"{path}: no site rows")
    return sites
