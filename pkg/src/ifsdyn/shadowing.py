"""Shadowing of delta-chains.

Constructive solvers:

* :func:`contraction_shadow` follows the true chain from the first point
  (contracting families).
* :func:`pullback_shadow` pulls the last point back through nearest
  preimage branches (uniformly expanding, surjective families).
* :func:`linear_hyperbolic_shadow` solves the linear problem for a single
  hyperbolic toral automorphism in eigencoordinates.
* :func:`example2_concordant_shadow` reduces a delta-chain of
  ``x -> A x + lam`` to a pseudo-orbit of ``A`` alone, shadows that, and maps
  the shadow back.

:func:`brute_force_shadow` is the oracle.  In concordant mode it runs a
certified branch and bound over initial points; in free mode it searches
parameter prefixes depth first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phase as ph
from ._search import search
from .errors import ResourceError, UsageError
from .ifs import Chain, IfsSpec, ParamSeq, chain_defect, make_chain, step_defects, translations

METHODS = ("auto", "brute", "contraction", "pullback", "linear_hyperbolic")
MODES = ("concordant", "free")


@dataclass(frozen=True)
class ShadowQuery:
    chain: Chain
    eps: float
    mode: str = "concordant"
    horizon: int | None = None
    method: str = "auto"

    def __post_init__(self):
        if not self.eps > 0:
            raise UsageError("eps must be positive")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.method not in METHODS:
            raise UsageError(f"method must be one of {METHODS}")
        if self.horizon is not None:
            if self.horizon < 0:
                raise UsageError("horizon must be >= 0")
            if self.horizon > max(self.chain.end, -self.chain.start):
                raise UsageError("horizon exceeds the chain length")

    def target(self) -> Chain:
        """The chain restricted to indices ``[-horizon, horizon]``."""
        if self.horizon is None:
            return self.chain
        return self.chain.truncate(-self.horizon, self.horizon)


@dataclass
class ShadowResult:
    found: bool
    shadow: Chain
    max_deviation: float
    method: str
    certificate: float | None = None
    lower_bound: float | None = None
    deviations: np.ndarray = field(default=None, repr=False)
    target: Chain | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"found": self.found, "method": self.method,
             "max_deviation": self.max_deviation, "certificate": self.certificate,
             "lower_bound": self.lower_bound, "shadow": self.shadow.to_dict(),
             "deviations": None if self.deviations is None else self.deviations.tolist()}
        d["info"] = {k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))}
        return d


def _result(ifs, target, shadow, eps, method, certificate=None, lower_bound=None, **info):
    dev = ph.distance(ifs.phase, shadow.points, target.points)
    mx = float(dev.max()) if len(dev) else 0.0
    return ShadowResult(mx < eps, shadow, mx, method, certificate, lower_bound, dev, target, info)


# ---------------------------------------------------------------------------
# constructive solvers


def contraction_shadow(ifs: IfsSpec, chain: Chain, eps: float = np.inf) -> ShadowResult:
    """True chain from ``x_0`` with the same parameters.

    Certificate ``delta * (1 - c**n) / (1 - c)``.
    """
    c = ifs.lipschitz
    if not c < 1:
        raise UsageError(f"contraction shadow needs Lipschitz constant < 1 (got {c:g})")
    if chain.sigma.bilateral:
        raise UsageError("contraction shadow takes unilateral chains")
    shadow = make_chain(ifs, chain.sigma, chain.point(0))
    delta = chain_defect(ifs, chain)
    n = chain.end
    return _result(ifs, chain, shadow, eps, "contraction", delta * (1 - c ** n) / (1 - c))


def pullback_shadow(ifs: IfsSpec, chain: Chain, eps: float = np.inf) -> ShadowResult:
    """Backward construction from the last point through nearest preimages.

    Certificate ``delta / (e - 1)`` with ``e`` the uniform expansion.
    """
    e = ifs.expansion_lower
    if not e > 1:
        raise UsageError(f"pullback shadow needs expansion > 1 (got {e:g})")
    if not ifs.surjective:
        raise UsageError("pullback shadow needs surjective partial maps")
    if chain.sigma.bilateral:
        raise UsageError("pullback shadow takes unilateral chains")
    ys = [chain.point(chain.end)]
    for j in range(chain.end - 1, -1, -1):
        pre = ifs.preimages(chain.sigma.step(j), ys[-1])
        k = int(np.argmin(ph.distance(ifs.phase, pre, chain.point(j))))
        ys.append(pre[k])
    pts = np.array(ys[::-1])
    tmp = Chain(pts, chain.sigma, np.zeros(len(pts) - 1))
    shadow = Chain(pts, chain.sigma, step_defects(ifs, tmp) if len(pts) > 1 else np.zeros(0))
    return _result(ifs, chain, shadow, eps, "pullback", chain_defect(ifs, chain) / (e - 1))


def hyperbolic_split(A):
    """Eigen-decomposition of a hyperbolic integer matrix.

    Returns ``(eigenvalues, P, P_inv)`` with unit eigenvector columns,
    unstable directions first.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError("matrix must be square")
    if round(abs(np.linalg.det(A))) != 1:
        raise UsageError("linear hyperbolic shadow needs determinant +-1")
    w, V = np.linalg.eig(A)
    if not np.all(np.abs(w.imag) < 1e-12):
        raise UsageError("matrix has complex eigenvalues")
    w = w.real
    if np.any(np.abs(np.abs(w) - 1) < 1e-9):
        raise UsageError("matrix is not hyperbolic (eigenvalue on the unit circle)")
    order = np.argsort(-np.abs(w))
    w, V = w[order], V.real[:, order]
    P = V / np.linalg.norm(V, axis=0)
    return w, P, np.linalg.inv(P)


def linear_shadow_points(A, X):
    """Shadow orbits of ``x -> A x mod 1`` for a batch of pseudo-orbits.

    ``X`` has shape (m, K, d).  Per-step errors ``e_k = lift(x_{k+1} - A x_k)``
    are split in eigencoordinates.  Unstable coordinates are solved backward
    from the last index, stable ones forward from the first, both with zero
    boundary value.  Returns the shadow points and the corrections ``P w``.
    """
    w_eig, P, Pinv = hyperbolic_split(A)
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    m, K, d = X.shape
    W = np.zeros((m, K, d))
    if K > 1:
        err = ph.lift(X[:, 1:] - X[:, :-1] @ A.T)
        c = err @ Pinv.T
        for i, lam in enumerate(w_eig):
            if abs(lam) > 1:
                for k in range(K - 2, -1, -1):
                    W[:, k, i] = (W[:, k + 1, i] + c[:, k, i]) / lam
            else:
                for k in range(K - 1):
                    W[:, k + 1, i] = lam * W[:, k, i] - c[:, k, i]
    corr = W @ P.T
    Z = X + corr
    return Z - np.floor(Z), corr


def linear_certificate(A, delta: float) -> float:
    w, _, Pinv = hyperbolic_split(A)
    kappa = np.linalg.norm(Pinv, axis=1)
    return float(delta * sum(k / abs(abs(lam) - 1) for k, lam in zip(kappa, w)))


def _toral_defects(A, pts):
    return ph.norm(ph.torus(pts.shape[-1]), pts[1:] - pts[:-1] @ np.asarray(A, float).T)


def linear_hyperbolic_shadow(A, chain: Chain, eps: float = np.inf) -> ShadowResult:
    """Shadow a pseudo-orbit of the single map ``x -> A x mod 1``.

    Works on any index range; the stable correction starts at the first
    index of the chain, so bilateral chains are handled by the same
    recursion.  The certificate is ``delta * sum_i kappa_i / | |lam_i| - 1 |``
    with ``kappa_i`` the row norms of the inverse eigenbasis (1 for
    symmetric ``A``).
    """
    A = np.asarray(A)
    d = A.shape[0]
    if chain.points.shape[-1] != d:
        raise UsageError("chain dimension does not match the matrix")
    Z, corr = linear_shadow_points(A, chain.points[None])
    Z = Z[0]
    defects = _toral_defects(A, Z) if len(Z) > 1 else np.zeros(0)
    shadow = Chain(Z, chain.sigma, defects)
    delta = float(_toral_defects(A, chain.points).max()) if len(chain) > 1 else 0.0
    space = ph.torus(d) if d > 1 else ph.circle()
    dev = ph.distance(space, Z, chain.points)
    mx = float(dev.max())
    return ShadowResult(mx < eps, shadow, mx, "linear_hyperbolic", linear_certificate(A, delta),
                        None, dev, chain, {"max_correction": float(np.abs(corr).max())})


def _require_toral(ifs: IfsSpec):
    if ifs.family != "affine_torus":
        raise UsageError(f"the translation pipeline needs an affine_torus family, not {ifs.family}")
    hyperbolic_split(ifs.M)


def example2_shadow_points(ifs: IfsSpec, sigma: ParamSeq, lo: int, hi: int, Y):
    """Batch pipeline: remove translations, shadow under ``A``, add them back.

    ``Y`` has shape (m, hi - lo + 1, d).  Returns ``(W, X, Z)``: concordant
    shadows, reduced pseudo-orbits of ``A`` and their linear shadows.
    """
    T = translations(ifs, sigma, lo, hi)
    X = Y - T
    X = X - np.floor(X)
    Z, _ = linear_shadow_points(ifs.M, X)
    W = Z + T
    return W - np.floor(W), X, Z


def example2_concordant_shadow(ifs: IfsSpec, chain: Chain, eps: float = np.inf) -> ShadowResult:
    """Concordant shadow for ``x -> A x + lam (mod 1)`` with hyperbolic ``A``.

    With ``T_k = omega_{sigma_k}(0)``, the substitution ``x_k = y_k - T_k``
    turns the delta-chain into a pseudo-orbit of ``A`` with identical step
    defects.  Its linear shadow ``z_k`` gives the concordant shadow
    ``z_k + T_k``, an exact chain along the same sequence.
    """
    _require_toral(ifs)
    W, X, Z = example2_shadow_points(ifs, chain.sigma, chain.start, chain.end, chain.points[None])
    W, X, Z = W[0], X[0], Z[0]
    tmp = Chain(W, chain.sigma, np.zeros(len(W) - 1))
    shadow = Chain(W, chain.sigma, step_defects(ifs, tmp) if len(W) > 1 else np.zeros(0))
    y_def = step_defects(ifs, chain) if len(chain) > 1 else np.zeros(0)
    x_def = _toral_defects(ifs.M, X) if len(X) > 1 else np.zeros(0)
    res = _result(ifs, chain, shadow, eps, "linear_hyperbolic",
                  linear_certificate(ifs.M, float(y_def.max()) if len(y_def) else 0.0))
    reduced_dev = ph.distance(ifs.phase, X, Z)
    res.info.update(
        identity_error=float(np.abs(x_def - y_def).max()) if len(y_def) else 0.0,
        transfer_error=float(np.abs(reduced_dev - res.deviations).max()),
    )
    res.info["reduced"] = (X, Z)
    return res


# ---------------------------------------------------------------------------
# oracle


def _free_search(ifs: IfsSpec, target: Chain, grid: ph.Grid, budget: int):
    if target.sigma.bilateral:
        raise UsageError("free-mode search takes unilateral chains")
    lams = ifs.params.samples
    x = target.points
    K = target.end
    starts = np.vstack([x[:1], grid.points])
    d0 = ph.distance(ifs.phase, starts, x[0])
    order = np.argsort(d0, kind="stable")
    best = [np.inf, None, None]  # value, start, params
    evals = 0
    for s in order:
        if d0[s] >= best[0]:
            break
        stack = [(0, starts[s], float(d0[s]), [])]
        while stack:
            k, pt, dev, path = stack.pop()
            if dev >= best[0]:
                continue
            if k == K:
                best[:] = [dev, starts[s], path]
                continue
            cand = lams
            br = ifs.best_response(pt, x[k + 1])
            if br is not None:
                cand = np.vstack([br[None], lams])
            imgs = ifs.apply(cand, pt[None])
            devs = np.maximum(dev, ph.distance(ifs.phase, imgs, x[k + 1]))
            evals += len(cand)
            if evals > budget:
                raise ResourceError("free-mode search exceeded its budget", partial=tuple(best))
            for i in np.argsort(devs, kind="stable")[::-1]:
                if devs[i] < best[0]:
                    stack.append((k + 1, imgs[i], float(devs[i]), path + [cand[i]]))
    return best, evals


def brute_force_shadow(ifs: IfsSpec, query: ShadowQuery, spec: ph.GridSpec,
                       budget: int = 2_000_000, tol: float | None = None) -> ShadowResult:
    """Best shadow over grid initial points (and, in free mode, parameter prefixes).

    Concordant mode returns a certified ``lower_bound`` on the optimal
    deviation over *all* initial points, not just grid points.  Free mode
    searches the parameter net plus the best-responding ambient parameter
    at every step.
    """
    target = query.target()
    grid = ph.grid_points(ifs.phase, spec)
    if query.mode == "free":
        try:
            (val, z, path), evals = _free_search(ifs, target, grid, budget)
        except ResourceError as exc:
            val, z, path = exc.partial
            if z is not None:
                exc.partial = _result(ifs, target, make_chain(ifs, ParamSeq.of(np.array(path)), z),
                                      query.eps, "brute")
            raise
        sigma = ParamSeq.of(np.array(path).reshape(len(path), ifs.params.dim))
        shadow = make_chain(ifs, sigma, z)
        return _result(ifs, target, shadow, query.eps, "brute", evaluations=evals)
    tol = grid.covering_radius / 4 if tol is None else tol
    try:
        res = search(ifs, target, grid, mode="min", tol=tol, budget=budget, extra=target.point(0))
    except ResourceError as exc:
        p = exc.partial
        if p.best_point is not None:
            exc.partial = _result(ifs, target, make_chain(ifs, target.sigma, p.best_point),
                                  query.eps, "brute")
        raise
    shadow = make_chain(ifs, target.sigma, res.best_point)
    return _result(ifs, target, shadow, query.eps, "brute", lower_bound=res.lower_bound,
                   evaluations=res.evaluations)


def resolve_method(ifs: IfsSpec, method: str = "auto") -> str:
    if method != "auto":
        return method
    if ifs.lipschitz < 1:
        return "contraction"
    if ifs.expanding and ifs.surjective:
        return "pullback"
    if ifs.family == "affine_torus":
        try:
            hyperbolic_split(ifs.M)
            return "linear_hyperbolic"
        except UsageError:
            pass
    return "brute"


def shadow(ifs: IfsSpec, query: ShadowQuery, spec: ph.GridSpec | None = None,
           budget: int = 2_000_000) -> ShadowResult:
    """Dispatch a query to the solver named by ``query.method``."""
    method = resolve_method(ifs, query.method)
    if method == "brute":
        return brute_force_shadow(ifs, query, spec or ph.GridSpec(0.01), budget)
    target = query.target()
    if method == "contraction":
        return contraction_shadow(ifs, target, query.eps)
    if method == "pullback":
        return pullback_shadow(ifs, target, query.eps)
    return example2_concordant_shadow(ifs, target, query.eps)


@dataclass
class HorizonReport:
    horizons: list
    starts: np.ndarray
    deviations: list
    successive: np.ndarray
    covering_radius: float
    stabilizing: bool


def shadow_horizon_stability(ifs: IfsSpec, chain: Chain, eps: float, horizons,
                             spec: ph.GridSpec, budget: int = 2_000_000) -> HorizonReport:
    """Concordant oracle shadows on growing horizons and the drift of their starts."""
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise UsageError("horizons must be increasing")
    starts, devs = [], []
    for h in horizons:
        res = brute_force_shadow(ifs, ShadowQuery(chain, eps, horizon=h), spec, budget)
        starts.append(res.shadow.point(0))
        devs.append(res.max_deviation)
    starts = np.array(starts)
    succ = ph.distance(ifs.phase, starts[1:], starts[:-1]) if len(starts) > 1 else np.zeros(0)
    cov = ph.grid_points(ifs.phase, spec).covering_radius
    return HorizonReport(horizons, starts, devs, succ, cov, bool(np.all(succ <= 2 * cov)))
