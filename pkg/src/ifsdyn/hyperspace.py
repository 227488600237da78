"""C0 distance between partial maps and Hausdorff distance between IFS.

An IFS is handled as what it is abstractly: a compact set of self-maps of
the phase space.  The distance between two IFS is the Hausdorff distance
between their map families under the C0 metric, estimated on the finite
parameter nets with a certified error bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import phase as ph
from .errors import UsageError
from .ifs import IfsSpec


@dataclass(frozen=True)
class MetricEstimate:
    """``value`` with the guarantee ``|true - value| <= error_bound``."""

    value: float
    error_bound: float
    witness: tuple | None = None

    @property
    def upper(self) -> float:
        return self.value + self.error_bound

    @property
    def lower(self) -> float:
        return max(0.0, self.value - self.error_bound)


def _same_space(a: IfsSpec, b: IfsSpec):
    if a.phase != b.phase:
        raise UsageError("the two systems live on different phase spaces")


def _translation_pair(a: IfsSpec, b: IfsSpec) -> bool:
    return a.translation_type and b.translation_type and np.array_equal(a.M, b.M)


def c0_distance(ifs_a: IfsSpec, lam_a, ifs_b: IfsSpec, lam_b, spec: ph.GridSpec) -> MetricEstimate:
    """``max_x d(omega_a(lam_a, x), omega_b(lam_b, x))``.

    Maps sharing a linear part differ by a constant translation, and the
    distance is its torus norm (error 0).  Otherwise the maximum is taken
    over a grid and the error bound is ``(L_a + L_b) * covering_radius``.
    """
    _same_space(ifs_a, ifs_b)
    lam_a, lam_b = ifs_a.check_param(lam_a), ifs_b.check_param(lam_b)
    if _translation_pair(ifs_a, ifs_b):
        v = ifs_a.translation(lam_a) - ifs_b.translation(lam_b)
        return MetricEstimate(float(ph.norm(ifs_a.phase, v)), 0.0, None)
    grid = ph.grid_points(ifs_a.phase, spec)
    d = ph.distance(ifs_a.phase, ifs_a.apply(lam_a, grid.points), ifs_b.apply(lam_b, grid.points))
    i = int(np.argmax(d))
    err = (ifs_a.lipschitz + ifs_b.lipschitz) * grid.covering_radius
    return MetricEstimate(float(d[i]), float(err), (grid.points[i].tolist(),))


def hausdorff_matrix(D) -> tuple[float, tuple[int, int]]:
    """Hausdorff distance from a pairwise distance matrix, with the attaining pair."""
    D = np.asarray(D, dtype=float)
    if D.size == 0:
        raise UsageError("Hausdorff distance needs nonempty sets")
    row = D.min(axis=1)
    col = D.min(axis=0)
    i, j = int(np.argmax(row)), int(np.argmax(col))
    if row[i] >= col[j]:
        return float(row[i]), (i, int(np.argmin(D[i])))
    return float(col[j]), (int(np.argmin(D[:, j])), j)


def hausdorff_finite(A, B, metric=None) -> float:
    """Exact Hausdorff distance between two finite sets.

    ``A`` and ``B`` are arrays of points (rows).  ``metric`` is either a
    :class:`~ifsdyn.phase.PhaseSpace` or a callable that broadcasts over
    ``(A[:, None], B[None, :])``; the default is Euclidean.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if len(A) == 0 or len(B) == 0:
        raise UsageError("Hausdorff distance needs nonempty sets")
    if metric is None:
        D = np.linalg.norm(A[:, None] - B[None, :], axis=-1)
    elif isinstance(metric, ph.PhaseSpace):
        D = ph.distance(metric, A[:, None], B[None, :])
    else:
        D = metric(A[:, None], B[None, :])
    return hausdorff_matrix(D)[0]


def family_distance_matrix(ifs_a: IfsSpec, ifs_b: IfsSpec, spec: ph.GridSpec):
    """C0 distances between every pair of net samples, plus the grid error."""
    _same_space(ifs_a, ifs_b)
    La, Lb = ifs_a.params.samples, ifs_b.params.samples
    if _translation_pair(ifs_a, ifs_b):
        Ta, Tb = ifs_a.translation(La), ifs_b.translation(Lb)
        return ph.norm(ifs_a.phase, Ta[:, None] - Tb[None, :]), 0.0, None
    grid = ph.grid_points(ifs_a.phase, spec)
    Ya = ifs_a.apply(La[:, None, :], grid.points[None])  # (na, g, d)
    Yb = ifs_b.apply(Lb[:, None, :], grid.points[None])
    D = np.empty((len(La), len(Lb)))
    arg = np.empty((len(La), len(Lb)), dtype=int)
    for i in range(len(La)):
        d = ph.distance(ifs_a.phase, Ya[i][None], Yb)  # (nb, g)
        arg[i] = np.argmax(d, axis=1)
        D[i] = d[np.arange(len(Lb)), arg[i]]
    err = (ifs_a.lipschitz + ifs_b.lipschitz) * grid.covering_radius
    return D, err, (grid, arg)


def ifs_hausdorff(ifs_a: IfsSpec, ifs_b: IfsSpec, spec: ph.GridSpec) -> MetricEstimate:
    """Hausdorff distance between two IFS viewed as compact sets of maps.

    The error bound adds the C0 grid error to the net slack
    ``Lip_lam(a) * cov(a) + Lip_lam(b) * cov(b)``: each family is within
    that Hausdorff distance of its net.  The witness is
    ``(lam_a, lam_b, x)``, ``x`` being ``None`` for exact translation pairs.
    """
    D, grid_err, extra = family_distance_matrix(ifs_a, ifs_b, spec)
    value, (i, j) = hausdorff_matrix(D)
    slack = (ifs_a.param_lipschitz * ifs_a.params.covering_radius
             + ifs_b.param_lipschitz * ifs_b.params.covering_radius)
    x = None
    if extra is not None:
        grid, arg = extra
        x = grid.points[arg[i, j]].tolist()
    witness = (ifs_a.params.samples[i].tolist(), ifs_b.params.samples[j].tolist(), x)
    return MetricEstimate(value, float(grid_err + slack), witness)


def equicontinuity_modulus(ifs: IfsSpec, eps: float) -> float:
    """A uniform modulus: ``d(x, y) < delta`` implies ``d(w(x), w(y)) < eps`` for every partial map."""
    if not eps > 0:
        raise UsageError("eps must be positive")
    return eps / max(ifs.lipschitz, 1.0)
