"""Expansiveness at grid scale, separation horizons and shadow uniqueness.

For integer-affine families the difference of two chains along the same
sequence does not depend on the sequence: ``omega_{sigma_n}(y) -
omega_{sigma_n}(x) = A^n (y - x) (mod 1)``.  The check then runs over the
difference vectors of grid pairs, in exact integer arithmetic, plus a few
probe vectors along the eigendirections of ``A`` (a lattice never contains
an irrational eigendirection, so the grid alone would miss pairs that are
contracted forever).  Other families fall back to seeded sampling of
sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phase as ph
from ._search import search
from .errors import ResourceError, ShadowingFailure, UniquenessViolation, UsageError
from .ifs import Chain, IfsSpec, ParamSeq, make_chain, orbit, random_sequence


@dataclass
class ExpansivityVerdict:
    expansive_at_scale: bool
    eta: float
    mu: float
    horizon_used: int
    counterexample: tuple | None  # (x, y, sigma)
    bilateral: bool = False
    method: str = "collapsed"
    pairs_tested: int = 0
    first_separation: np.ndarray = field(default=None, repr=False)  # per pair, -1 if never
    min_separation: np.ndarray = field(default=None, repr=False)  # per n = 0..horizon

    def to_dict(self) -> dict:
        ce = None
        if self.counterexample is not None:
            x, y, sigma = self.counterexample
            ce = {"x": np.asarray(x).tolist(), "y": np.asarray(y).tolist(), "sigma": sigma.to_dict()}
        return {"expansive_at_scale": self.expansive_at_scale, "eta": self.eta, "mu": self.mu,
                "horizon_used": self.horizon_used, "bilateral": self.bilateral,
                "method": self.method, "pairs_tested": self.pairs_tested,
                "counterexample": ce, "min_separation": self.min_separation.tolist()}


def _probes(ifs: IfsSpec, eta: float, mu: float) -> np.ndarray:
    ts = [t for t in sorted({mu, (mu + eta) / 2, eta}) if mu <= t <= eta]
    P = ifs.frame()
    return np.array([t * P[:, i] for i in range(P.shape[1]) for t in ts]).reshape(-1, ifs.phase.dim)


def _collapsed_distances(ifs: IfsSpec, grid: ph.Grid, probes, horizon: int, bilateral: bool):
    """Distances ``|A^n v|`` for grid differences and probes, n in the tested range.

    Returns (vectors, D) with D of shape (pairs, n_steps) ordered by |n|, forward first.
    """
    m = np.rint(1.0 / grid.spacing).astype(np.int64)
    if not np.all(m == m[0]):
        raise UsageError("collapsed check needs a uniform torus grid")
    m = int(m[0])
    K = np.rint(grid.points * m).astype(np.int64)
    A = ifs.M.astype(np.int64)
    space = ifs.phase

    def run(B, steps):
        out_k, out_p = [K], [probes]
        k, p = K, probes
        Bf = B.astype(float)
        for _ in range(steps):
            k = (k @ B.T) % m
            p = ph.lift(p @ Bf.T)
            out_k.append(k)
            out_p.append(p)
        return [np.vstack([ph.norm(space, kk / m)[:, None], ph.norm(space, pp)[:, None]])
                for kk, pp in zip(out_k, out_p)]

    fwd = run(A, horizon)
    cols = list(fwd)
    if bilateral:
        if ifs.M_inv is None:
            raise UsageError("bilateral expansivity needs an invertible family")
        bwd = run(ifs.M_inv.astype(np.int64), horizon)
        cols = [fwd[0]]
        for n in range(1, horizon + 1):
            cols.append(np.maximum(fwd[n], bwd[n]))
    vecs = np.vstack([grid.points, probes])
    return vecs, np.hstack(cols)


def _sampled_distances(ifs, grid, eta, mu, horizon, samples, seed, bilateral, pair_cap=200_000):
    pts = grid.points
    i, j = np.triu_indices(len(pts), k=1)
    d0 = ph.distance(ifs.phase, pts[i], pts[j])
    keep = d0 >= mu
    i, j = i[keep], j[keep]
    if len(i) > pair_cap:
        raise ResourceError(f"{len(i)} grid pairs exceed the pair cap {pair_cap}")
    worst, sig_of = None, []
    for s in range(samples):
        sigma = random_sequence(ifs, horizon, seed + s, n_back=horizon if bilateral else None)
        lo = -horizon if bilateral else 0
        O = orbit(ifs, sigma, pts, lo, horizon, exact=False)
        D = ph.distance(ifs.phase, O[i], O[j])  # (pairs, steps)
        if bilateral:
            D = np.hstack([D[:, horizon:horizon + 1]] +
                          [np.maximum(D[:, horizon + n:horizon + n + 1], D[:, horizon - n:horizon - n + 1])
                           for n in range(1, horizon + 1)])
        # per pair the sample that keeps it close the longest
        if worst is None:
            worst, sig_of = D, np.zeros(len(D), dtype=int)
        else:
            sep_new = _first_sep(D, eta)
            sep_old = _first_sep(worst, eta)
            better = sep_new > sep_old
            worst[better] = D[better]
            sig_of[better] = s
    return i, j, worst, sig_of


def _first_sep(D, eta):
    over = D > eta
    return np.where(over.any(axis=1), over.argmax(axis=1), np.iinfo(np.int64).max)


def estimate_expansivity(ifs: IfsSpec, eta: float, mu: float, spec: ph.GridSpec, horizon: int,
                         sigma_samples: int = 8, bilateral: bool | None = None, seed: int = 0,
                         probes: bool = True) -> ExpansivityVerdict:
    """Check that every tested pair at distance >= ``mu`` separates beyond ``eta``.

    ``bilateral=None`` picks two-sided time for invertible families and
    forward time otherwise.  ``min_separation[n]`` is the smallest, over
    tested pairs, of the largest separation reached within ``|time| <= n``.
    """
    if not (eta > 0 and mu > 0):
        raise UsageError("eta and mu must be positive")
    if horizon < 1:
        raise UsageError("horizon must be >= 1")
    if bilateral is None:
        bilateral = ifs.invertible
    if bilateral and not ifs.invertible:
        raise UsageError("bilateral expansivity needs an invertible family")
    grid = ph.grid_points(ifs.phase, spec)
    lam0 = ifs.params.samples[0]
    if ifs.translation_type:
        P = _probes(ifs, eta, mu) if probes else np.empty((0, ifs.phase.dim))
        vecs, D = _collapsed_distances(ifs, grid, P, horizon, bilateral)
        keep = D[:, 0] >= mu
        vecs, D = vecs[keep], D[keep]
        method = "collapsed"
    else:
        i, j, D, sig_of = _sampled_distances(ifs, grid, eta, mu, horizon, sigma_samples, seed, bilateral)
        method = "sampled"
    first = _first_sep(D, eta)
    running = np.maximum.accumulate(D, axis=1) if len(D) else np.zeros((0, horizon + 1))
    min_sep = running.min(axis=0) if len(D) else np.full(horizon + 1, np.inf)
    never = first == np.iinfo(np.int64).max
    counter = None
    if never.any():
        p = int(np.flatnonzero(never)[0])
        n_back = horizon if bilateral else None
        if method == "collapsed":
            x = np.zeros(ifs.phase.dim)
            y = ifs.phase.canonical(vecs[p])
            sigma = ParamSeq.constant(lam0, horizon, n_back)
        else:
            x, y = grid.points[i[p]], grid.points[j[p]]
            sigma = random_sequence(ifs, horizon, seed + int(sig_of[p]), n_back=n_back)
        counter = (x, y, sigma)
    return ExpansivityVerdict(counter is None, eta, mu, horizon, counter, bilateral, method,
                              len(D), np.where(never, -1, first), min_sep)


def validate_counterexample(ifs: IfsSpec, verdict: ExpansivityVerdict) -> bool:
    """Re-run the counterexample by direct iteration: every iterate stays within eta."""
    x, y, sigma = verdict.counterexample
    lo = -sigma.n_backward
    O = orbit(ifs, sigma, np.vstack([x, y]), lo, sigma.n_forward)
    d = ph.distance(ifs.phase, O[0], O[1])
    return bool(np.all(d <= verdict.eta) and d[-lo] > 0)


def separation_horizon(ifs: IfsSpec, eta: float, mu: float, spec: ph.GridSpec,
                       max_horizon: int = 64, bilateral: bool | None = None,
                       sigma_samples: int = 8, seed: int = 0) -> int:
    """Least N such that every tested pair at distance >= mu separates beyond eta by time N."""
    if mu > eta:
        return 0
    h = 4
    while True:
        h = min(h, max_horizon)
        v = estimate_expansivity(ifs, eta, mu, spec, h, sigma_samples, bilateral, seed)
        if v.expansive_at_scale:
            return int(v.first_separation.max()) if v.pairs_tested else 0
        if h == max_horizon:
            raise ResourceError(f"pairs at distance >= {mu} stay within {eta} up to time "
                                f"{max_horizon}; the family may not be expansive at this scale",
                                partial=v)
        h *= 2


@dataclass
class UniqueShadow:
    start: np.ndarray
    shadow: Chain
    max_deviation: float
    diameter: float  # certified diameter of the set of shadow starts
    bound: float  # 2 * covering radius
    shadows: np.ndarray = field(repr=False)  # sampled shadow starts


def unique_shadow(ifs: IfsSpec, chain: Chain, eps: float, spec: ph.GridSpec,
                  eta: float | None = None, budget: int = 2_000_000) -> UniqueShadow:
    """Enclose every initial point whose concordant chain eps-shadows ``chain``.

    The enclosure is certified (a branch and bound over initial cells), so
    its diameter bounds the diameter of the true shadow-start set.
    Uniqueness up to grid scale means that diameter is at most twice the
    covering radius.
    """
    if eta is not None and not 2 * eps < eta:
        raise UsageError("uniqueness needs 2*eps < eta")
    grid = ph.grid_points(ifs.phase, spec)
    bound = 2 * grid.covering_radius
    res = search(ifs, chain, grid, mode="enumerate", eps=eps, tol=grid.covering_radius / 8,
                 budget=budget, extra=chain.point(0), target_diameter=bound)
    if len(res.shadows) == 0:
        raise ShadowingFailure(f"no initial point eps-shadows the chain (best {res.best_value:.4g})",
                               result=res)
    if res.enclosure_diameter > bound:
        S = res.shadows
        if len(S) > 1:
            D = ph.distance(ifs.phase, S[:, None], S[None])
            a, b = np.unravel_index(int(np.argmax(D)), D.shape)
            witnesses = (S[a], S[b])
        else:
            far = int(np.argmax(ph.distance(ifs.phase, res.centers, S[0])))
            witnesses = (S[0], res.centers[far])
        exc = UniquenessViolation(
            f"shadow starts spread over {res.enclosure_diameter:.4g} > {bound:.4g}", result=res)
        exc.witnesses = witnesses
        raise exc
    shadow = make_chain(ifs, chain.sigma, res.best_point)
    dev = float(ph.distance(ifs.phase, shadow.points, chain.points).max())
    return UniqueShadow(res.best_point, shadow, dev, res.enclosure_diameter, bound, res.shadows)
