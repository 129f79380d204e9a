"""Domains, interior/boundary sampling, and control-volume surface geometry.

Three domain kinds:

* Hypercube(lo, hi, dim): axis-aligned box.
* LShape(dim): (-1,1)^d with the corner [0,1)^d removed. A point is interior
  iff it lies inside the cube and not all coordinates are >= 0.
* SpaceTime(spatial, t0, t1): spatial domain crossed with a time interval;
  the "boundary" is the terminal time slice, control volumes are spatial only.

Interior sampling takes a margin so every control volume of that radius is
fully embedded in the domain. Low-discrepancy points come from an unscrambled
Sobol sequence (first point at the origin).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

_SOBOL_MAX_DIM = 21201


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sobol(dim: int, n: int) -> np.ndarray:
    """First n points of the unscrambled Sobol sequence in [0,1)^dim."""
    if not 1 <= dim <= _SOBOL_MAX_DIM:
        raise ValueError(f"sobol: dim {dim} outside supported table (1..{_SOBOL_MAX_DIM})")
    if n < 1:
        raise ValueError("sobol: n must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance warning for non power-of-two n
        return qmc.Sobol(dim, scramble=False).random(n)


# ---------------------------------------------------------------------------
# domains


class Hypercube:
    kind = "hypercube"

    def __init__(self, lo, hi, dim: int):
        self.dim = int(dim)
        self.lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.dim,)).copy()
        self.hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.dim,)).copy()
        if np.any(self.hi <= self.lo):
            raise ValueError("hypercube: hi must exceed lo")

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def embeds(self, x: np.ndarray, radius: float) -> np.ndarray:
        """True where the cube x +- radius lies inside the domain."""
        return np.all((x >= self.lo + radius) & (x <= self.hi - radius), axis=-1)

    def sample_interior(self, n: int, seed, margin: float = 0.0) -> np.ndarray:
        if np.any(margin >= (self.hi - self.lo) / 2):
            raise ValueError(f"margin {margin} >= half the domain extent")
        rng = _rng(seed)
        return rng.uniform(self.lo + margin, self.hi - margin, size=(n, self.dim))

    def sample_boundary(self, n: int, seed) -> np.ndarray:
        rng = _rng(seed)
        ext = self.hi - self.lo
        areas = np.array([np.prod(np.delete(ext, j)) for j in range(self.dim)])
        weights = np.repeat(areas, 2)
        weights = weights / weights.sum()
        face = rng.choice(2 * self.dim, size=n, p=weights)
        pts = rng.uniform(self.lo, self.hi, size=(n, self.dim))
        axis = face // 2
        side = face % 2
        pts[np.arange(n), axis] = np.where(side == 0, self.lo[axis], self.hi[axis])
        return pts


class LShape:
    """(-1,1)^d minus the corner [0,1)^d."""

    kind = "lshape"

    def __init__(self, dim: int = 2):
        if dim < 2:
            raise ValueError("lshape needs dim >= 2")
        self.dim = int(dim)
        self.lo = -np.ones(self.dim)
        self.hi = np.ones(self.dim)

    def contains(self, x: np.ndarray) -> np.ndarray:
        in_cube = np.all(np.abs(x) <= 1.0, axis=-1)
        in_corner = np.all(x >= 0.0, axis=-1)
        return in_cube & ~in_corner

    def embeds(self, x: np.ndarray, radius: float) -> np.ndarray:
        # box inside the cube, and at least one coordinate keeps the whole
        # box clear of the removed corner
        in_cube = np.all(np.abs(x) <= 1.0 - radius, axis=-1)
        clear = np.any(x <= -radius, axis=-1)
        return in_cube & clear

    def sample_interior(self, n: int, seed, margin: float = 0.0) -> np.ndarray:
        if margin >= 0.5:
            raise ValueError(f"margin {margin} >= half the arm width (0.5)")
        rng = _rng(seed)
        out = np.empty((n, self.dim))
        got = 0
        while got < n:
            m = max(n - got, 64)
            cand = rng.uniform(-1.0 + margin, 1.0 - margin, size=(m, self.dim))
            keep = cand[np.any(cand <= -margin, axis=1)]
            take = min(len(keep), n - got)
            out[got:got + take] = keep[:take]
            got += take
        return out

    def _faces(self):
        """(axis, side, measure) for every boundary face.

        side -1/+1 are outer cube faces (+1 has the corner cross-section
        removed), side 0 is the cut face at coordinate zero.
        """
        d = self.dim
        full = 2.0 ** (d - 1)
        faces = []
        for j in range(d):
            faces.append((j, -1, full))
            faces.append((j, +1, full - 1.0))
            faces.append((j, 0, 1.0))
        return faces

    def sample_boundary(self, n: int, seed) -> np.ndarray:
        rng = _rng(seed)
        faces = self._faces()
        weights = np.array([m for _, _, m in faces])
        weights = weights / weights.sum()
        pick = rng.choice(len(faces), size=n, p=weights)
        out = np.empty((n, self.dim))
        for i, f in enumerate(pick):
            axis, side, _ = faces[f]
            if side == -1:
                p = rng.uniform(-1.0, 1.0, size=self.dim)
                p[axis] = -1.0
            elif side == +1:
                while True:  # face minus the removed corner cross-section
                    p = rng.uniform(-1.0, 1.0, size=self.dim)
                    others = np.delete(p, axis)
                    if not np.all(others >= 0.0):
                        break
                p[axis] = 1.0
            else:
                p = rng.uniform(0.0, 1.0, size=self.dim)
                p[axis] = 0.0
            out[i] = p
        return out


class SpaceTime:
    """spatial domain x [t0, t1]; input layout is (x_1..x_d, t), t last."""

    kind = "spacetime"

    def __init__(self, spatial, t0: float, t1: float):
        if t1 <= t0:
            raise ValueError("spacetime: t1 must exceed t0")
        self.spatial = spatial
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.dim = spatial.dim + 1

    def contains(self, x: np.ndarray) -> np.ndarray:
        t = x[..., -1]
        return self.spatial.contains(x[..., :-1]) & (t >= self.t0) & (t <= self.t1)

    def embeds(self, x: np.ndarray, radius: float) -> np.ndarray:
        # control volumes extend in space only
        t = x[..., -1]
        return self.spatial.embeds(x[..., :-1], radius) & (t >= self.t0) & (t <= self.t1)

    def sample_interior(self, n: int, seed, margin: float = 0.0) -> np.ndarray:
        rng = _rng(seed)
        xs = self.spatial.sample_interior(n, rng, margin)
        ts = rng.uniform(self.t0, self.t1, size=(n, 1))
        return np.hstack([xs, ts])

    def sample_boundary(self, n: int, seed) -> np.ndarray:
        """Terminal-time points (x, t1); the data surface for terminal problems."""
        rng = _rng(seed)
        xs = self.spatial.sample_interior(n, rng, 0.0)
        return np.hstack([xs, np.full((n, 1), self.t1)])


def sample_interior(domain, n: int, seed, margin: float = 0.0) -> np.ndarray:
    return domain.sample_interior(n, seed, margin)


def sample_boundary(domain, n: int, seed) -> np.ndarray:
    return domain.sample_boundary(n, seed)


# ---------------------------------------------------------------------------
# control-volume geometry


@dataclass(frozen=True)
class ControlVolumeSpec:
    shape: str = "cube"  # "cube" | "sphere"
    radius: float = 1e-3
    k: int = 1  # surface samples (sphere) or points per face (cube)
    antithetic: bool = True
    qmc: bool = True

    def __post_init__(self):
        if self.shape not in ("cube", "sphere"):
            raise ValueError(f"unknown control-volume shape {self.shape!r}")
        if self.radius <= 0:
            raise ValueError("control-volume radius must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.shape == "sphere" and self.antithetic and self.k % 2:
            raise ValueError("antithetic sphere sampling needs even k")


def sphere_directions(d: int, k: int, antithetic: bool = True, seed=0) -> np.ndarray:
    """k unit directions in R^d; antithetic pairs (n, -n) when requested."""
    if antithetic and k % 2:
        raise ValueError("antithetic direction sets need even k")
    rng = _rng(seed)
    m = k // 2 if antithetic else k
    v = rng.standard_normal((m, d))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms < 1e-12):  # essentially never; keep the invariant airtight
        bad = norms < 1e-12
        v[bad] = rng.standard_normal((bad.sum(), d))
        norms = np.linalg.norm(v, axis=1)
    v = v / norms[:, None]
    if antithetic:
        return np.concatenate([v, -v], axis=0)
    return v


def axis_directions(d: int) -> np.ndarray:
    """The 2d axis-aligned unit directions (+e_j paired with -e_j)."""
    eye = np.eye(d)
    return np.concatenate([eye, -eye], axis=0)


def face_offsets(free_dims: int, k: int, use_qmc: bool, seed=0,
                 antithetic: bool = True) -> np.ndarray:
    """Tangential offsets in [-1,1]^free_dims for one face, k points.

    With antithetic=True the point set is symmetric about the face center
    (pairs t, -t, plus the center when k is odd), so its mean is exactly zero
    and one-point rules degenerate to the center. That exact first moment is
    what keeps the flux quadrature second-order accurate in the radius.
    """
    if free_dims == 0 or k == 1:
        return np.zeros((k, max(free_dims, 0)))
    if antithetic:
        pairs = k // 2
        base = _unit_offsets(free_dims, pairs, use_qmc, seed)
        parts = [base, -base]
        if k % 2:
            parts.append(np.zeros((1, free_dims)))
        return np.concatenate(parts, axis=0)
    return _unit_offsets(free_dims, k, use_qmc, seed)


def _unit_offsets(free_dims: int, k: int, use_qmc: bool, seed) -> np.ndarray:
    if use_qmc:
        return 2.0 * sobol(free_dims, k) - 1.0
    return _rng(seed).uniform(-1.0, 1.0, size=(k, free_dims))


@dataclass
class FaceSet:
    """Quadrature points on the boundary of one axis-aligned box."""

    points: np.ndarray   # (2*d*k, dim)
    normals: np.ndarray  # (2*d*k, dim), outward unit normals
    weights: np.ndarray  # (2*d*k,), surface measure carried by each point
    volume: float


def box_face_points(center, halfwidths, points_per_face: int = 1, use_qmc: bool = True,
                    seed=0, antithetic: bool = True) -> FaceSet:
    """Surface quadrature for the box center +- halfwidths (per axis).

    Each of the 2d faces carries `points_per_face` points with equal weights
    summing to the face measure; opposite faces share tangential offsets.
    """
    center = np.asarray(center, dtype=float)
    hw = np.broadcast_to(np.asarray(halfwidths, dtype=float), center.shape).copy()
    d = center.shape[0]
    if np.any(hw <= 0):
        raise ValueError("halfwidths must be positive")
    k = int(points_per_face)
    offs = face_offsets(d - 1, k, use_qmc, seed, antithetic)  # (k, d-1) in [-1,1]
    pts, nrm, wts = [], [], []
    volume = float(np.prod(2.0 * hw))
    for axis in range(d):
        free = [j for j in range(d) if j != axis]
        area = float(np.prod(2.0 * hw[free])) if free else 1.0
        tang = np.zeros((k, d))
        if free:
            tang[:, free] = offs * hw[free]
        for sign in (+1.0, -1.0):
            p = center[None, :] + tang
            p[:, axis] = center[axis] + sign * hw[axis]
            n = np.zeros((k, d))
            n[:, axis] = sign
            pts.append(p)
            nrm.append(n)
            wts.append(np.full(k, area / k))
    return FaceSet(np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts), volume)


def cube_face_points(center, radius: float, points_per_face: int = 1, use_qmc: bool = True,
                     seed=0, antithetic: bool = True) -> FaceSet:
    """Surface quadrature for the cube center +- radius (all axes)."""
    center = np.asarray(center, dtype=float)
    return box_face_points(center, np.full(center.shape, float(radius)),
                           points_per_face, use_qmc, seed, antithetic)
