"""Preset systems with their known properties as executable expectations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phase as ph
from .errors import IfsError, ResourceError, UsageError
from .expansive import estimate_expansivity, separation_horizon, validate_counterexample
from .ifs import (Chain, IfsSpec, ParamSeq, affine_1d, affine_torus, check_transitive,
                  doubling_circle, make_delta_chain, random_sequence, rotation_circle, step_defects)
from .shadowing import (ShadowQuery, brute_force_shadow, contraction_shadow, pullback_shadow,
                        shadow)

CAT_MATRIX = ((2, 1), (1, 1))
PARAM_RADIUS = 0.05


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    spec: IfsSpec
    expected: tuple  # ((tag, {params}), ...)
    description: str = ""

    @property
    def tags(self) -> tuple:
        return tuple(t for t, _ in self.expected)


def gallery_list() -> list[GalleryEntry]:
    return [
        GalleryEntry(
            "rotation-circle", rotation_circle(0.0, 1.0, 1e-3, name="rotation-circle"),
            (("shadowing-free", {}), ("shadowing-concordant-fails", {}), ("not-expansive", {}),
             ("transitive", {"grid": 1 / 16, "horizon": 1})),
            "x -> x + lam (mod 1), lam in [0, 1]",
        ),
        GalleryEntry(
            "anosov-torus", affine_torus(CAT_MATRIX, PARAM_RADIUS, 0.01, name="anosov-torus"),
            (("expansive-at-scale", {"eta": 0.2, "mu": 0.05, "N": 12}),
             ("not-positively-expansive", {"eta": 0.2, "mu": 0.05}),
             ("shadowing-concordant", {})),
            "x -> A x + lam (mod 1), A = [[2, 1], [1, 1]], |lam| <= 0.05",
        ),
        GalleryEntry(
            "cantor", affine_1d([(1 / 3, 0.0), (1 / 3, 2 / 3)], 0.0, 1.0, name="cantor"),
            (("hyperbolic", {"c": 1 / 3}), ("shadowing-concordant", {}), ("not-expansive", {}),
             ("not-transitive", {"grid": 0.1, "horizon": 8})),
            "x -> x/3 and x -> x/3 + 2/3 on [0, 1]",
        ),
        GalleryEntry(
            "doubling", doubling_circle(0.0, 1.0, 1e-2, name="doubling"),
            (("expanding", {"e": 2.0}), ("shadowing-concordant", {}),
             ("transitive", {"grid": 1 / 16, "horizon": 4})),
            "x -> 2x + lam (mod 1), lam in [0, 1]",
        ),
    ]


def gallery_entry(name: str) -> GalleryEntry:
    for e in gallery_list():
        if e.name == name:
            return e
    raise UsageError(f"no gallery entry named {name!r}")


@dataclass
class GalleryReport:
    name: str
    results: dict = field(default_factory=dict)  # tag -> (status, detail); status pass/fail/inconclusive
    partial: bool = False

    @property
    def passed(self) -> bool:
        return not self.partial and all(s == "pass" for s, _ in self.results.values())


def drift_chain(ifs: IfsSpec, step: float, n: int, lam=0.0, x0=0.0) -> Chain:
    """Pseudo-orbit ``x_k = x0 + k*step`` along the constant sequence ``lam``."""
    pts = ifs.phase.canonical((x0 + step * np.arange(n + 1))[:, None])
    sigma = ParamSeq.constant(lam, n)
    tmp = Chain(pts, sigma, np.zeros(n))
    return Chain(pts, sigma, step_defects(ifs, tmp))


def _random_start(ifs, rng):
    if ifs.phase.periodic:
        return rng.uniform(size=ifs.phase.dim)
    return rng.uniform(ifs.phase.lower, ifs.phase.upper)


def _chains(ifs, count, n, delta, seed, bilateral=False):
    rng = np.random.Generator(np.random.Philox(seed))
    for s in range(count):
        sigma = random_sequence(ifs, n, seed + s, n_back=n if bilateral else None)
        yield make_delta_chain(ifs, sigma, _random_start(ifs, rng), None, delta, seed=seed + s)


def _check(entry: GalleryEntry, tag: str, p: dict, budget: int, seed: int):
    ifs = entry.spec
    if tag == "shadowing-free":
        worst = 0.0
        for ch in _chains(ifs, 3, 25, 0.05, seed):
            res = brute_force_shadow(ifs, ShadowQuery(ch, 0.01, mode="free"), ph.GridSpec(1 / 200), budget)
            worst = max(worst, res.max_deviation)
        return worst <= 1e-12, f"worst free-mode deviation {worst:.3g}"
    if tag == "shadowing-concordant-fails":
        ch = drift_chain(ifs, 0.02, 25)
        res = brute_force_shadow(ifs, ShadowQuery(ch, 0.2), ph.GridSpec(1 / 200), budget)
        return (not res.found and res.lower_bound >= 0.2,
                f"best deviation {res.max_deviation:.4g}, certified lower bound {res.lower_bound:.4g}")
    if tag == "not-expansive":
        v = estimate_expansivity(ifs, 0.2, 0.05, ph.GridSpec(0.01), 10, seed=seed)
        ok = not v.expansive_at_scale and validate_counterexample(ifs, v)
        return ok, "counterexample re-validated" if ok else "no valid counterexample"
    if tag in ("transitive", "not-transitive"):
        r = check_transitive(ifs, ph.GridSpec(p["grid"]), p["horizon"], budget=budget * 100)
        want = tag == "transitive"
        return r.transitive == want, f"transitive={r.transitive}, failing pair {r.failing_pair}"
    if tag == "hyperbolic":
        c = ifs.lipschitz
        worst = max(contraction_shadow(ifs, ch).max_deviation for ch in _chains(ifs, 10, 30, 0.01, seed))
        return (abs(c - p["c"]) < 1e-12 and worst <= 0.01 / (1 - c),
                f"c={c:.6g}, worst deviation {worst:.4g} <= {0.01 / (1 - c):.4g}")
    if tag == "expanding":
        e = ifs.expansion_lower
        worst = max(pullback_shadow(ifs, ch).max_deviation for ch in _chains(ifs, 10, 10, 0.01, seed))
        return (abs(e - p["e"]) < 1e-12 and worst <= 0.01 / (e - 1),
                f"e={e:.6g}, worst deviation {worst:.4g}")
    if tag == "shadowing-concordant":
        eps = 0.05
        bil = ifs.invertible
        spec = ph.GridSpec(1 / 64) if ifs.phase.dim > 1 else ph.GridSpec(0.01)
        cov = ph.grid_points(ifs.phase, spec).covering_radius
        found, gap = True, -np.inf
        for ch in _chains(ifs, 5, 20, eps / 10, seed, bilateral=bil):
            q = ShadowQuery(ch, eps)
            a = shadow(ifs, q)
            b = brute_force_shadow(ifs, q, spec, budget)
            found &= a.found
            gap = max(gap, b.max_deviation - a.max_deviation)
        return found and gap <= 2 * cov, f"all found={found}, oracle excess {gap:.3g} <= {2 * cov:.3g}"
    if tag == "expansive-at-scale":
        spec = ph.GridSpec(1 / 64)
        v = estimate_expansivity(ifs, p["eta"], p["mu"], spec, p["N"])
        N = separation_horizon(ifs, p["eta"], p["mu"], spec) if v.expansive_at_scale else None
        return (v.expansive_at_scale and N is not None and N <= p["N"], f"separation horizon {N}")
    if tag == "not-positively-expansive":
        v = estimate_expansivity(ifs, p["eta"], p["mu"], ph.GridSpec(1 / 64), 20, bilateral=False)
        ok = not v.expansive_at_scale and validate_counterexample(ifs, v)
        return ok, "forward-time counterexample re-validated" if ok else "forward check passed"
    raise KeyError(tag)


def run_gallery_checks(entry: GalleryEntry, budget: int = 2_000_000, seed: int = 0) -> GalleryReport:
    """Run every expected property of ``entry``; budget overruns are reported as inconclusive."""
    if budget <= 0:
        raise UsageError("budget must be positive")
    report = GalleryReport(entry.name)
    for tag, params in entry.expected:
        try:
            ok, detail = _check(entry, tag, params, budget, seed)
            report.results[tag] = ("pass" if ok else "fail", detail)
        except ResourceError as exc:
            report.results[tag] = ("inconclusive", str(exc))
            report.partial = True
        except IfsError as exc:
            report.results[tag] = ("fail", f"{type(exc).__name__}: {exc}")
    return report
