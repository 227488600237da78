"""Phase spaces: the circle, flat tori and axis-aligned boxes.

Points are plain float arrays of shape ``(d,)`` (or stacks ``(..., d)``).
On the circle and on tori every coordinate lives in ``[0, 1)`` and the
metric is the flat quotient metric of ``R^d / Z^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceError, UsageError

DEFAULT_GRID_CAP = 2_000_000


@dataclass(frozen=True)
class PhaseSpace:
    kind: str  # "circle" | "torus" | "box"
    dim: int
    lower: tuple = ()
    upper: tuple = ()

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "box"):
            raise UsageError(f"unknown phase space kind {self.kind!r}")
        if self.dim < 1:
            raise UsageError("dimension must be positive")
        if self.kind == "circle" and self.dim != 1:
            raise UsageError("the circle is one-dimensional")
        if self.kind == "box":
            if len(self.lower) != self.dim or len(self.upper) != self.dim:
                raise UsageError("box bounds must match the dimension")
            if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
                raise UsageError("box upper bounds must exceed lower bounds")

    @property
    def periodic(self) -> bool:
        return self.kind != "box"

    @property
    def diameter(self) -> float:
        if self.periodic:
            return 0.5 * math.sqrt(self.dim)
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    @property
    def space_id(self) -> str:
        if self.kind == "box":
            return f"box{self.dim}" + str(list(zip(self.lower, self.upper)))
        return "circle" if self.kind == "circle" else f"torus{self.dim}"

    def canonical(self, x):
        """Reduce coordinates into the fundamental domain (mod 1 on tori)."""
        x = np.asarray(x, dtype=float)
        if self.periodic:
            x = x - np.floor(x)
            # x - floor(x) can round up to exactly 1.0 for tiny negative x
            x[x >= 1.0] = 0.0
        return x

    def contains(self, x, tol=1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            return False
        if self.periodic:
            return bool(np.all((x >= 0) & (x < 1)))
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return bool(np.all((x >= lo - tol) & (x <= hi + tol)))

    def check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise UsageError(
                f"point of dimension {x.shape[-1:]} does not belong to {self.space_id}"
            )
        return x


def circle() -> PhaseSpace:
    return PhaseSpace("circle", 1)


def torus(d: int = 2) -> PhaseSpace:
    return PhaseSpace("torus", d)


def box(lower, upper) -> PhaseSpace:
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    return PhaseSpace("box", len(lower), lower, upper)


def lift(delta):
    """Nearest integer-shift representative of a coordinate difference.

    Components land in ``(-1/2, 1/2]``; an exact half picks the smaller shift.
    """
    delta = np.asarray(delta, dtype=float)
    return delta - np.ceil(delta - 0.5)


def displacement(space: PhaseSpace, p, q):
    """Vector ``v`` with ``p + v == q`` and ``|v| == distance(p, q)``."""
    p, q = space.check(p), space.check(q)
    diff = q - p
    return lift(diff) if space.periodic else diff


def distance(space: PhaseSpace, p, q):
    """Metric of ``space``; broadcasts over leading axes."""
    return np.linalg.norm(displacement(space, p, q), axis=-1)


def norm(space: PhaseSpace, v):
    """Length of a displacement vector (torus norm on periodic spaces)."""
    v = np.asarray(v, dtype=float)
    return np.linalg.norm(lift(v) if space.periodic else v, axis=-1)


@dataclass(frozen=True)
class GridSpec:
    resolution: float
    cap: int = DEFAULT_GRID_CAP

    def __post_init__(self):
        if not self.resolution > 0:
            raise UsageError("grid resolution must be positive")


@dataclass(frozen=True)
class Grid:
    points: np.ndarray  # (m, d), lexicographic order
    spacing: np.ndarray  # (d,)
    covering_radius: float

    def __len__(self):
        return len(self.points)


def _axis_count(length: float, resolution: float) -> int:
    # ceil with a little slack so that 1/0.1 -> 10 rather than 11
    return max(1, math.ceil(length / resolution - 1e-9))


def grid_points(space: PhaseSpace, spec: GridSpec) -> Grid:
    """Uniform lattice anchored at 0 (tori) or at the lower corner (boxes).

    Every point of the space is within ``covering_radius`` of a grid point.
    """
    axes = []
    spacing = []
    for i in range(space.dim):
        if space.periodic:
            m = _axis_count(1.0, spec.resolution)
            axes.append(np.arange(m) / m)
            spacing.append(1.0 / m)
        else:
            lo, hi = space.lower[i], space.upper[i]
            m = _axis_count(hi - lo, spec.resolution)
            axes.append(lo + (hi - lo) * np.arange(m + 1) / m)
            spacing.append((hi - lo) / m)
    size = math.prod(len(a) for a in axes)
    if size > spec.cap:
        raise ResourceError(f"grid of {size} points exceeds cap {spec.cap}")
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=-1)
    spacing = np.asarray(spacing)
    return Grid(points, spacing, float(np.linalg.norm(spacing) / 2))
