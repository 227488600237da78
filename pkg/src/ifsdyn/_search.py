"""Branch and bound over initial points for concordant shadowing.

For a fixed parameter sequence the deviation of the chain started at ``z``
from a target chain is ``D(z) = max_k d(omega_{sigma_k}(z), x_k)``.  All
supported families are affine, so ``omega_{sigma_k}(c + P t) - omega_{sigma_k}(c)
= J_k P t`` (mod 1) with a constant matrix ``J_k``.  On a cell
``{c + P t : |t_i| <= r_i}`` this gives the lower bound

    D >= max_k ( d(omega_{sigma_k}(c), x_k) - sum_i |J_k P e_i| r_i ).

Cells are split along the axis with the largest contribution.  With ``P``
the eigenbasis of a hyperbolic linear part, stable and unstable directions
are refined independently, which keeps the number of live cells small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import phase as ph
from .errors import ResourceError
from .ifs import Chain, IfsSpec, orbit


@dataclass
class CellSearch:
    best_point: np.ndarray | None
    best_value: float
    lower_bound: float
    evaluations: int
    centers: np.ndarray  # live cells at termination
    halfwidths: np.ndarray
    shadows: np.ndarray  # evaluated centres with D < eps (enumerate mode)
    enclosure_diameter: float = np.inf
    complete: bool = True


def jacobian_columns(ifs: IfsSpec, chain: Chain, frame: np.ndarray) -> np.ndarray:
    """``C[k, i] = |J_k P e_i|`` for every chain index k."""
    d = ifs.phase.dim
    lo, hi = chain.start, chain.end
    J = {0: np.eye(d)}
    for j in range(0, hi):
        J[j + 1] = ifs.linear_part(chain.sigma.step(j)) @ J[j]
    for j in range(-1, lo - 1, -1):
        J[j] = np.linalg.inv(ifs.linear_part(chain.sigma.step(j))) @ J[j + 1]
    return np.array([np.linalg.norm(J[k] @ frame, axis=0) for k in range(lo, hi + 1)])


def deviation_profile(ifs: IfsSpec, chain: Chain, Z) -> np.ndarray:
    """``d(omega_{sigma_k}(z), x_k)`` for every start z (rows) and chain index k."""
    Z = np.atleast_2d(Z)
    if ifs.phase.periodic:
        Z = ifs.phase.canonical(Z)
    O = orbit(ifs, chain.sigma, Z, chain.start, chain.end, exact=False)
    return ph.distance(ifs.phase, O, chain.points[None])


def initial_cells(ifs: IfsSpec, grid: ph.Grid, frame: np.ndarray):
    half = grid.spacing / 2
    centers = grid.points.copy()
    if ifs.phase.periodic:
        hw = np.abs(np.linalg.inv(frame)) @ half
        return centers, np.tile(hw, (len(centers), 1))
    lo, hi = np.asarray(ifs.phase.lower), np.asarray(ifs.phase.upper)
    a = np.maximum(lo, centers - half)
    b = np.minimum(hi, centers + half)
    return (a + b) / 2, (b - a) / 2


def _enclosure(space, centers, halfwidths):
    if len(centers) == 0:
        return 0.0
    rmax = float(halfwidths.sum(axis=1).max())
    if len(centers) <= 2000:
        D = ph.distance(space, centers[:, None], centers[None]) if space.periodic else \
            np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        return float(D.max()) + 2 * rmax
    d0 = ph.distance(space, centers, centers[0]) if space.periodic else \
        np.linalg.norm(centers - centers[0], axis=-1)
    return 2 * float(d0.max()) + 2 * rmax


def _split(centers, halfwidths, C, frame):
    contrib = (C[None, :, :] * halfwidths[:, None, :]).max(axis=1)  # (m, d)
    axis = np.argmax(contrib, axis=1)
    m = len(centers)
    hw = halfwidths.copy()
    hw[np.arange(m), axis] /= 2
    step = frame[:, axis].T * hw[np.arange(m), axis][:, None]
    return np.vstack([centers - step, centers + step]), np.vstack([hw, hw])


def _evaluate(ifs, chain, C, centers, hws):
    dev = deviation_profile(ifs, chain, centers)
    slack = hws @ C.T  # (m, K)
    lb = np.maximum((dev - slack).max(axis=1), 0.0)
    return dev.max(axis=1), lb, slack.max(axis=1)


def search(ifs: IfsSpec, chain: Chain, grid: ph.Grid, *, mode: str = "min", eps: float = np.inf,
           tol: float, budget: int = 2_000_000, extra=None, frame=None,
           target_diameter: float | None = None, batch: int = 256) -> CellSearch:
    """Minimise ``D`` (``mode="min"``) or enclose ``{D < eps}`` (``mode="enumerate"``).

    ``tol`` is the slack at which a cell is no longer split.  In ``min``
    mode the search is best-first on the lower bound and the returned
    ``lower_bound`` certifies ``inf D >= lower_bound``.  In ``enumerate``
    mode every start with ``D < eps`` lies in the returned live cells; the
    search stops early once their enclosure diameter drops to
    ``target_diameter`` with at least one shadow in hand.
    """
    frame = ifs.frame() if frame is None else frame
    C = jacobian_columns(ifs, chain, frame)
    centers, hws = initial_cells(ifs, grid, frame)
    if extra is not None:
        extra = np.atleast_2d(extra)
        centers = np.vstack([extra, centers])
        hws = np.vstack([np.zeros((len(extra), hws.shape[1])), hws])
    dim = ifs.phase.dim
    D, lb, smax = _evaluate(ifs, chain, C, centers, hws)
    evals = len(centers)
    i = int(np.argmin(D))
    best_val, best_pt = float(D[i]), centers[i].copy()

    def over_budget(partial_centers, partial_hws, shadows=()):
        partial = CellSearch(best_pt, best_val, -np.inf, evals, partial_centers, partial_hws,
                             np.array(shadows).reshape(-1, dim), complete=False)
        return ResourceError("initial-point search exceeded its budget", partial=partial)

    if mode == "min":
        retired_lb = np.inf
        while True:
            alive = lb < best_val - tol
            final = alive & (smax <= tol)
            if final.any():
                retired_lb = min(retired_lb, float(lb[final].min()))
            keep = alive & ~final
            centers, hws, lb = centers[keep], hws[keep], lb[keep]
            if not len(centers):
                break
            if len(centers) > batch:
                pick = np.zeros(len(centers), dtype=bool)
                pick[np.argpartition(lb, batch)[:batch]] = True
            else:
                pick = np.ones(len(centers), dtype=bool)
            kids_c, kids_h = _split(centers[pick], hws[pick], C, frame)
            if ifs.phase.periodic:
                kids_c = ifs.phase.canonical(kids_c)
            kD, klb, ksmax = _evaluate(ifs, chain, C, kids_c, kids_h)
            evals += len(kids_c)
            j = int(np.argmin(kD))
            if kD[j] < best_val:
                best_val, best_pt = float(kD[j]), kids_c[j].copy()
            rest = ~pick
            centers = np.vstack([centers[rest], kids_c])
            hws = np.vstack([hws[rest], kids_h])
            lb = np.concatenate([lb[rest], klb])
            smax = np.concatenate([np.full(int(rest.sum()), np.inf), ksmax])  # carried cells were not final
            if evals > budget:
                raise over_budget(centers, hws)
        lower = min(retired_lb, best_val - tol)
        return CellSearch(best_pt, best_val, max(lower, 0.0), evals, centers, hws,
                          np.empty((0, dim)))

    shadows = list(centers[D < eps])
    kept_c, kept_h = [], []
    while True:
        alive = lb < eps
        final = alive & (smax <= tol)
        if final.any():
            kept_c.append(centers[final])
            kept_h.append(hws[final])
        live = alive & ~final
        centers, hws = centers[live], hws[live]
        if target_diameter is not None and shadows:
            cs, hs = np.vstack(kept_c + [centers]), np.vstack(kept_h + [hws])
            if _enclosure(ifs.phase, cs, hs) <= target_diameter:
                break
        if not len(centers):
            break
        centers, hws = _split(centers, hws, C, frame)
        if ifs.phase.periodic:
            centers = ifs.phase.canonical(centers)
        D, lb, smax = _evaluate(ifs, chain, C, centers, hws)
        evals += len(centers)
        shadows.extend(centers[D < eps])
        j = int(np.argmin(D))
        if D[j] < best_val:
            best_val, best_pt = float(D[j]), centers[j].copy()
        if evals > budget:
            raise over_budget(centers, hws, shadows)
    cs, hs = np.vstack(kept_c + [centers]), np.vstack(kept_h + [hws])
    shadows = np.array(shadows).reshape(-1, dim)
    return CellSearch(best_pt, best_val, -np.inf, evals, cs, hs, shadows,
                      enclosure_diameter=_enclosure(ifs.phase, cs, hs))
