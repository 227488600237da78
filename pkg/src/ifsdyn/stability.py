"""Topological stability at desk scale.

The perturbed system for a delta-chain ``x_0..x_n`` is built from torus
translations: ``omega~((k, lam), x) = omega(lam, x) + v_k`` with ``v_k`` the
exact lifted defect of step k.  Along ``sigma~ = ((0, lam_1), ..., (n-1,
lam_n))`` it reproduces the chain exactly, and each of its maps is within
``|v_k|`` of the corresponding map of the original family.

The conjugacy ``h`` is sampled on a grid: ``h(x)`` is the start of the
concordant shadow (under ``omega`` and ``sigma``) of the pseudo-chain
``omega~_{sigma~_k}(x)``.  For hyperbolic toral families the shadow orbit
cannot be recovered by re-iterating ``h(x)`` in floating point (errors grow
by the unstable eigenvalue every step), so every sample keeps the shadow
orbit it was built from; each stored orbit is a chain of ``omega`` with
per-step defect at rounding level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import phase as ph
from .errors import ConstructionFailure, UsageError
from .hyperspace import MetricEstimate, c0_distance, ifs_hausdorff
from .ifs import Chain, IfsSpec, ParamSeq, chain_defect, orbit, step_defects
from .shadowing import (ShadowQuery, ShadowResult, example2_shadow_points, hyperbolic_split,
                        resolve_method, shadow)


@dataclass
class CompatiblePair:
    sigma: ParamSeq
    sigma_t: ParamSeq
    per_index_distance: np.ndarray  # ordered by step j = start..end-1
    delta: float

    @property
    def compatible(self) -> bool:
        return bool(np.all(self.per_index_distance < self.delta))

    @property
    def max_distance(self) -> float:
        return float(self.per_index_distance.max()) if len(self.per_index_distance) else 0.0


def check_compatibility(ifs: IfsSpec, ifs_t: IfsSpec, sigma: ParamSeq, sigma_t: ParamSeq,
                        delta: float, spec: ph.GridSpec) -> CompatiblePair:
    if (sigma.n_forward, sigma.n_backward) != (sigma_t.n_forward, sigma_t.n_backward):
        raise UsageError("compatible sequences must have the same length")
    lo, hi = -sigma.n_backward, sigma.n_forward
    dist = np.array([c0_distance(ifs, sigma.step(j), ifs_t, sigma_t.step(j), spec).value
                     for j in range(lo, hi)])
    return CompatiblePair(sigma, sigma_t, dist, float(delta))


def _exact_lift(values):
    return [v - ((v - Fraction(1, 2)).__ceil__()) for v in values]


def build_perturbed_ifs(ifs: IfsSpec, chain: Chain, Delta: float):
    """``(omega~, sigma~, y_0)`` with ``omega~_{sigma~_k}(x_0) = x_k`` exactly.

    ``v_k`` is the nearest-lift of ``x_{k+1} - omega_{lam_{k+1}}(x_k)`` in
    exact rational arithmetic.
    """
    if not ifs.phase.periodic or not ifs.integer_affine:
        raise UsageError("translation perturbations need a circle or torus family")
    if ifs.shifts is not None:
        raise UsageError("family is already perturbed")
    if chain.sigma.bilateral:
        raise UsageError("the perturbation takes a unilateral chain")
    defect = chain_defect(ifs, chain)
    if not defect < Delta:
        raise UsageError(f"chain defect {defect:.4g} is not below Delta={Delta:g}")
    M = ifs.M.tolist()
    shifts = []
    for k in range(chain.end):
        x = [Fraction(float(c)) for c in chain.point(k)]
        lam = ifs.translation_exact(chain.sigma[k + 1])
        img = [sum(M[i][t] * x[t] for t in range(len(x))) + lam[i] for i in range(len(x))]
        nxt = [Fraction(float(c)) for c in chain.point(k + 1)]
        shifts.append(_exact_lift([a - b for a, b in zip(nxt, img)]))
    if not shifts:
        shifts = [[Fraction(0)] * ifs.phase.dim]
    ifs_t = ifs.with_shifts(shifts)
    fwd = np.array([[k, *chain.sigma[k + 1]] for k in range(chain.end)]).reshape(chain.end, -1)
    return ifs_t, ParamSeq.of(fwd), chain.point(0).copy()


def extend_pair(sigma: ParamSeq, sigma_t: ParamSeq, n: int):
    """Pad both sequences to length ``n``: ``lam_k = lam_1`` and ``lam~_k = (0, lam_1)``."""
    if n <= sigma.n_forward:
        return sigma, sigma_t
    return sigma.extended(n), sigma_t.extended(n, fill=sigma_t.forward[0])


@dataclass
class ConjugacySample:
    grid_point: np.ndarray
    h_value: np.ndarray
    displacement: float
    orbit: np.ndarray = field(repr=False)  # shadow chain under omega, k = 0..horizon
    pseudo: np.ndarray = field(repr=False)  # omega~_{sigma~_k}(x), k = 0..horizon


@dataclass
class Conjugacy:
    points: np.ndarray
    h: np.ndarray
    orbits: np.ndarray
    pseudo: np.ndarray
    horizon: int
    method: str
    space: ph.PhaseSpace
    grid: ph.Grid | None = None
    max_pseudo_defect: float = 0.0

    @property
    def displacements(self) -> np.ndarray:
        return ph.distance(self.space, self.points, self.h)

    @property
    def samples(self) -> list:
        disp = self.displacements
        return [ConjugacySample(p, hv, float(dv), o, y)
                for p, hv, dv, o, y in zip(self.points, self.h, disp, self.orbits, self.pseudo)]


def build_conjugacy(ifs: IfsSpec, ifs_t: IfsSpec, sigma: ParamSeq, sigma_t: ParamSeq, eps: float,
                    spec: ph.GridSpec, horizon: int, points=None, chunk: int = 1024) -> Conjugacy:
    """Sample ``h(x) = y_x`` on the grid (or on ``points``)."""
    if sigma.bilateral or sigma_t.bilateral:
        raise UsageError("conjugacy sampling takes unilateral sequences")
    sigma, sigma_t = extend_pair(sigma, sigma_t, horizon)
    grid = None
    if points is None:
        grid = ph.grid_points(ifs.phase, spec)
        points = grid.points
    points = np.atleast_2d(np.asarray(points, dtype=float))
    method = resolve_method(ifs)
    Y = np.concatenate([orbit(ifs_t, sigma_t, points[i:i + chunk], 0, horizon)
                        for i in range(0, len(points), chunk)])
    lams = sigma.steps(0, horizon)
    pseudo_defect = float(ph.distance(ifs.phase, Y[:, 1:], ifs.apply(lams[None], Y[:, :-1])).max()) \
        if horizon else 0.0
    if method == "linear_hyperbolic":
        hyperbolic_split(ifs.M)
        W, _, _ = example2_shadow_points(ifs, sigma.truncate(0, horizon), 0, horizon, Y)
    else:
        seq = sigma.truncate(0, horizon)
        W = np.empty_like(Y)
        for i, y in enumerate(Y):
            ch = Chain(y, seq, np.zeros(horizon))
            W[i] = shadow(ifs, ShadowQuery(ch, eps, method=method), spec).shadow.points
    dev = ph.distance(ifs.phase, W, Y).max(axis=1)
    bad = np.flatnonzero(dev >= eps)
    conj = Conjugacy(points, W[:, 0].copy(), W, Y, horizon, method, ifs.phase, grid, pseudo_defect)
    if len(bad):
        i = int(bad[0])
        raise ConstructionFailure(
            f"grid point {points[i].tolist()} has no eps-shadow (best deviation {dev[i]:.4g})",
            result=conj)
    return conj


@dataclass
class StabilityReport:
    d_H_bound: MetricEstimate | None
    compat: CompatiblePair | None
    conjugacy: Conjugacy = field(repr=False)
    bound_i: float
    bound_ii: float
    eps: float
    horizon: int
    witness_i: tuple  # (grid point, k)
    witness_ii: np.ndarray
    bound_i_profile: np.ndarray = field(repr=False)  # max over x, per k
    continuity_modulus_check: bool = True
    continuity_max: float = 0.0
    continuity_mu: float = np.inf

    @property
    def passed(self) -> bool:
        return self.bound_i < self.eps and self.bound_ii < self.eps

    @property
    def samples(self) -> list:
        return self.conjugacy.samples

    def to_dict(self) -> dict:
        c = self.conjugacy
        return {
            "passed": self.passed, "eps": self.eps, "horizon": self.horizon,
            "bound_i": self.bound_i, "bound_ii": self.bound_ii,
            "witness_i": {"x": self.witness_i[0].tolist(), "k": self.witness_i[1]},
            "witness_ii": self.witness_ii.tolist(),
            "d_H": None if self.d_H_bound is None else
            {"value": self.d_H_bound.value, "error_bound": self.d_H_bound.error_bound},
            "compatible": None if self.compat is None else self.compat.compatible,
            "per_index_distance": None if self.compat is None else self.compat.per_index_distance.tolist(),
            "continuity": {"passed": self.continuity_modulus_check, "max": self.continuity_max,
                           "mu": self.continuity_mu},
            "bound_i_profile": self.bound_i_profile.tolist(),
            "samples": [{"x": p.tolist(), "h": h.tolist(), "orbit": o.tolist(), "pseudo": y.tolist()}
                        for p, h, o, y in zip(c.points, c.h, c.orbits, c.pseudo)],
        }


def _neighbour_gaps(conj: Conjugacy, space):
    """Largest ``d(h(x), h(y))`` over grid neighbours x, y."""
    grid = conj.grid
    if grid is None:
        return 0.0
    shape = tuple(np.rint(1.0 / grid.spacing).astype(int)) if space.periodic else \
        tuple(np.rint((np.subtract(space.upper, space.lower)) / grid.spacing).astype(int) + 1)
    H = conj.h.reshape(*shape, -1)
    gap = 0.0
    for axis in range(len(shape)):
        nb = np.roll(H, -1, axis=axis)
        gap = max(gap, float(ph.distance(space, H, nb).max()))
    return gap


def verify_stability(ifs: IfsSpec, ifs_t: IfsSpec, sigma: ParamSeq, sigma_t: ParamSeq,
                     conj: Conjugacy, eps: float, horizon: int | None = None,
                     spec: ph.GridSpec | None = None, mu: float | None = None) -> StabilityReport:
    """Bounds (i) and (ii) from the sampled conjugacy; pass iff both are below eps.

    ``mu`` sets the continuity check: neighbouring grid points must have
    h-values closer than ``mu`` (default ``eps``).
    """
    horizon = conj.horizon if horizon is None else horizon
    if horizon > conj.horizon:
        raise UsageError("horizon exceeds the sampled conjugacy")
    D = ph.distance(ifs.phase, conj.orbits[:, :horizon + 1], conj.pseudo[:, :horizon + 1])
    idx = np.unravel_index(int(np.argmax(D)), D.shape)
    disp = conj.displacements
    j = int(np.argmax(disp))
    d_H = compat = None
    if spec is not None:
        d_H = ifs_hausdorff(ifs, ifs_t, spec)
        s, st = extend_pair(sigma, sigma_t, horizon)
        compat = check_compatibility(ifs, ifs_t, s.truncate(0, horizon), st.truncate(0, horizon),
                                     eps, spec)
    mu = eps if mu is None else mu
    gap = _neighbour_gaps(conj, ifs.phase)
    return StabilityReport(d_H, compat, conj, float(D[idx]), float(disp[j]), eps, horizon,
                           (conj.points[idx[0]], int(idx[1])), conj.points[j], D.max(axis=0),
                           gap < mu, gap, mu)


def stability_to_shadowing_experiment(ifs: IfsSpec, chain: Chain, eps: float, Delta: float,
                                      spec: ph.GridSpec | None = None) -> ShadowResult:
    """Shadow a delta-chain through the perturbed system and its conjugacy.

    ``z_0 = h(y_0)``; the returned shadow is the conjugacy orbit of ``y_0``,
    a chain of ``omega`` along the input sequence.
    """
    ifs_t, sigma_t, y0 = build_perturbed_ifs(ifs, chain, Delta)
    n = chain.end
    conj = build_conjugacy(ifs, ifs_t, chain.sigma, sigma_t, eps, spec or ph.GridSpec(1 / 64),
                           n, points=y0[None])
    W = conj.orbits[0]
    tmp = Chain(W, chain.sigma, np.zeros(n))
    sh = Chain(W, chain.sigma, step_defects(ifs, tmp) if n else np.zeros(0))
    dev = ph.distance(ifs.phase, W, chain.points)
    mx = float(dev.max())
    return ShadowResult(mx < eps, sh, mx, "stability", None, None, dev, chain,
                        {"z0": conj.h[0], "perturbed": ifs_t, "sigma_t": sigma_t})
