"""Command-line interface.

Every subcommand reads JSON documents (IFS configs, chain files) and writes
a JSON report carrying ``schema_version``.  Exit status: 0 when the checked
property holds, 1 when it fails, 2 on usage errors, 3 when a budget runs out.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import phase as ph
from .errors import IfsError, PropertyFailure, ResourceError, UsageError
from .expansive import estimate_expansivity, separation_horizon
from .gallery import drift_chain, gallery_entry, gallery_list, run_gallery_checks
from .hyperspace import ifs_hausdorff
from .ifs import (ParamSeq, chain_from_dict, ifs_from_dict, make_delta_chain, random_sequence,
                  check_transitive)
from .shadowing import ShadowQuery, brute_force_shadow, shadow
from .stability import (build_conjugacy, build_perturbed_ifs, stability_to_shadowing_experiment,
                        verify_stability)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# documents


def _load(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path} must hold a JSON object")
    return doc


def _body(doc: dict, kind: str, path: str) -> dict:
    if doc.get("kind") != kind:
        raise UsageError(f"{path}: field 'kind' must be {kind!r}")
    if kind not in doc:
        raise UsageError(f"{path}: missing field {kind!r}")
    return doc[kind]


def load_ifs(path: str):
    try:
        return ifs_from_dict(_body(_load(path), "ifs", path))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"{path}: malformed IFS config ({exc})") from None


def load_chain(path: str):
    try:
        return chain_from_dict(_body(_load(path), "chain", path))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"{path}: malformed chain file ({exc})") from None


def ifs_document(ifs) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "ifs", "ifs": ifs.to_dict()}


def chain_document(chain) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "chain", "chain": chain.to_dict()}


def _write(doc: dict, out: str | None):
    text = json.dumps(doc, indent=1) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _report(command: str, passed: bool, **fields) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "passed": bool(passed), **fields}


def emit_plot_data(report: dict, path: str):
    """Per-step series of a report as CSV with a header row."""
    cmd = report.get("command")
    if cmd == "shadow":
        header = ("k", "defect_k", "deviation_k")
        start = report["shadow"]["start"]
        dev = report["deviations"]
        defects = [None] + list(report["target_defects"])
        rows = [(start + i, defects[i], dev[i]) for i in range(len(dev))]
    elif cmd == "expansive":
        header = ("n", "min_separation")
        rows = list(enumerate(report["min_separation"]))
    elif cmd == "stability":
        header = ("k", "bound_i")
        rows = list(enumerate(report["bound_i_profile"]))
    else:
        raise UsageError(f"report of command {cmd!r} has no per-step series")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, float) else v for v in r])


# ---------------------------------------------------------------------------
# subcommands


def _positive(name):
    def conv(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return v
    return conv


def _points(s: str):
    try:
        return np.array([float(v) for v in s.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def cmd_gallery(a):
    if a.emit:
        _write(ifs_document(gallery_entry(a.emit).spec), a.out)
        return 0
    if a.check:
        rep = run_gallery_checks(gallery_entry(a.check), a.budget, a.seed)
        _write(_report("gallery", rep.passed, name=rep.name, partial=rep.partial,
                       results={k: {"status": s, "detail": d} for k, (s, d) in rep.results.items()}),
               a.out)
        if rep.partial:
            return 3
        return 0 if rep.passed else 1
    entries = [{"name": e.name, "family": e.spec.family, "description": e.description,
                "expected": [t for t in e.tags]} for e in gallery_list()]
    _write({"schema_version": SCHEMA_VERSION, "kind": "gallery", "entries": entries}, a.out)
    return 0


def cmd_chain(a):
    ifs = load_ifs(a.ifs)
    if a.drift is not None:
        if ifs.phase.dim != 1:
            raise UsageError("drift pseudo-orbits are one-dimensional")
        lam = 0.0 if a.lam is None else float(a.lam[0])
        x0 = 0.0 if a.x0 is None else float(a.x0[0])
        chain = drift_chain(ifs, a.drift, a.n, lam, x0)
    else:
        x0 = a.x0
        if x0 is None:
            rng = np.random.Generator(np.random.Philox(a.seed))
            x0 = rng.uniform(size=ifs.phase.dim) if ifs.phase.periodic else \
                rng.uniform(ifs.phase.lower, ifs.phase.upper)
        if a.lam is not None:
            sigma = ParamSeq.constant(a.lam, a.n, a.back)
        else:
            sigma = random_sequence(ifs, a.n, a.seed, n_back=a.back)
        chain = make_delta_chain(ifs, sigma, x0, None, a.delta, seed=a.seed)
    _write(chain_document(chain), a.out)
    return 0


def cmd_shadow(a):
    ifs = load_ifs(a.ifs)
    chain = load_chain(a.chain)
    q = ShadowQuery(chain, a.epsilon, a.mode, a.horizon, a.method)
    spec = ph.GridSpec(a.grid)
    res = brute_force_shadow(ifs, q, spec, a.budget) if q.mode == "free" else shadow(ifs, q, spec, a.budget)
    target = res.target
    rep = _report("shadow", res.found, mode=a.mode, method=res.method, epsilon=a.epsilon,
                  found=res.found, max_deviation=res.max_deviation, certificate=res.certificate,
                  lower_bound=res.lower_bound, shadow=res.shadow.to_dict(),
                  deviations=res.deviations.tolist(), target_defects=target.defects.tolist())
    _write(rep, a.out)
    if a.plot:
        emit_plot_data(rep, a.plot)
    return 0 if res.found else 1


def cmd_hausdorff(a):
    ifs_a, ifs_b = load_ifs(a.ifs), load_ifs(a.ifs2)
    est = ifs_hausdorff(ifs_a, ifs_b, ph.GridSpec(a.grid))
    lam_a, lam_b, x = est.witness
    _write(_report("hausdorff", True, value=est.value, error_bound=est.error_bound,
                   witness={"lambda": lam_a, "lambda_tilde": lam_b, "x": x}), a.out)
    return 0


def cmd_expansive(a):
    ifs = load_ifs(a.ifs)
    spec = ph.GridSpec(a.grid)
    bil = {"auto": None, "bilateral": True, "unilateral": False}[a.time]
    v = estimate_expansivity(ifs, a.eta, a.mu, spec, a.horizon, a.samples, bil, a.seed)
    fields = v.to_dict()
    if v.expansive_at_scale:
        fields["separation_horizon"] = separation_horizon(ifs, a.eta, a.mu, spec, bilateral=bil,
                                                          sigma_samples=a.samples, seed=a.seed)
    fields.pop("expansive_at_scale")
    rep = _report("expansive", v.expansive_at_scale, expansive_at_scale=v.expansive_at_scale, **fields)
    _write(rep, a.out)
    if a.plot:
        emit_plot_data(rep, a.plot)
    return 0 if v.expansive_at_scale else 1


def cmd_stability(a):
    ifs = load_ifs(a.ifs)
    chain = load_chain(a.chain)
    spec = ph.GridSpec(a.grid)
    Delta = a.Delta if a.Delta is not None else a.epsilon / 10
    ifs_t, sigma_t, _ = build_perturbed_ifs(ifs, chain, Delta)
    horizon = a.horizon if a.horizon is not None else chain.end
    conj = build_conjugacy(ifs, ifs_t, chain.sigma, sigma_t, a.epsilon, spec, horizon)
    rep = verify_stability(ifs, ifs_t, chain.sigma, sigma_t, conj, a.epsilon, horizon, spec)
    doc = _report("stability", rep.passed, perturbed_ifs=ifs_t.to_dict(),
                  sigma_tilde=sigma_t.to_dict(), **{k: v for k, v in rep.to_dict().items() if k != "passed"})
    _write(doc, a.out)
    if a.plot:
        emit_plot_data(doc, a.plot)
    return 0 if rep.passed else 1


def cmd_stab2shadow(a):
    ifs = load_ifs(a.ifs)
    chain = load_chain(a.chain)
    Delta = a.Delta if a.Delta is not None else a.epsilon / 10
    res = stability_to_shadowing_experiment(ifs, chain, a.epsilon, Delta, ph.GridSpec(a.grid))
    rep = _report("stab2shadow", res.found, found=res.found, max_deviation=res.max_deviation,
                  z0=res.info["z0"].tolist(), shadow=res.shadow.to_dict(),
                  sigma_prefix_identical=res.shadow.sigma.equals(chain.sigma),
                  deviations=res.deviations.tolist())
    _write(rep, a.out)
    return 0 if res.found else 1


def cmd_transitive(a):
    ifs = load_ifs(a.ifs)
    r = check_transitive(ifs, ph.GridSpec(a.grid), a.horizon, budget=a.budget)
    table = [{"u": u, "v": v, "n": n, "prefix": list(p)} for (u, v), (n, p) in sorted(r.witnesses.items())]
    _write(_report("transitive", r.transitive, transitive=r.transitive,
                   failing_pair=None if r.failing_pair is None else list(r.failing_pair),
                   grid_points=r.grid.points.tolist(), witnesses=table), a.out)
    return 0 if r.transitive else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ifsdyn", description=__doc__.splitlines()[0])
    p.add_argument("--workers", type=int, default=1,
                   help="accepted for compatibility; computations are vectorised in-process")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, ifs=True, chain=False):
        if ifs:
            sp.add_argument("--ifs", required=True, help="IFS config file")
        if chain:
            sp.add_argument("--chain", required=True, help="chain file")
        sp.add_argument("--out", "-o", default=None, help="report path (default stdout)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("gallery", help="list, emit or check preset systems")
    sp.add_argument("--emit", metavar="NAME")
    sp.add_argument("--check", metavar="NAME")
    sp.add_argument("--budget", type=int, default=2_000_000)
    common(sp, ifs=False)
    sp.set_defaults(func=cmd_gallery)

    sp = sub.add_parser("chain", help="make a seeded delta-chain")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--x0", type=_points)
    sp.add_argument("--lam", type=_points, help="constant parameter (default: seeded random)")
    sp.add_argument("--back", type=int, default=None, help="backward length (bilateral chain)")
    sp.add_argument("--drift", type=float, help="pseudo-orbit x_k = x0 + k*drift")
    common(sp)
    sp.set_defaults(func=cmd_chain)

    sp = sub.add_parser("shadow", help="shadow a delta-chain")
    sp.add_argument("--epsilon", type=_positive("epsilon"), required=True)
    sp.add_argument("--mode", choices=("concordant", "free"), default="concordant")
    sp.add_argument("--method", choices=("auto", "brute", "contraction", "pullback",
                                         "linear_hyperbolic"), default="auto")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--grid", type=_positive("grid"), default=1 / 64)
    sp.add_argument("--budget", type=int, default=2_000_000)
    sp.add_argument("--plot", help="CSV path for per-step series")
    common(sp, chain=True)
    sp.set_defaults(func=cmd_shadow)

    sp = sub.add_parser("hausdorff", help="Hausdorff distance between two IFS")
    sp.add_argument("--ifs2", required=True)
    sp.add_argument("--grid", type=_positive("grid"), default=0.01)
    common(sp)
    sp.set_defaults(func=cmd_hausdorff)

    sp = sub.add_parser("expansive", help="expansiveness at grid scale")
    sp.add_argument("--eta", type=_positive("eta"), required=True)
    sp.add_argument("--mu", type=_positive("mu"), required=True)
    sp.add_argument("--horizon", type=int, default=10)
    sp.add_argument("--grid", type=_positive("grid"), default=1 / 64)
    sp.add_argument("--samples", type=int, default=8)
    sp.add_argument("--time", choices=("auto", "bilateral", "unilateral"), default="auto")
    sp.add_argument("--plot")
    common(sp)
    sp.set_defaults(func=cmd_expansive)

    for name, func, helptext in (("stability", cmd_stability, "conjugacy against the perturbed system"),
                                 ("stab2shadow", cmd_stab2shadow, "shadow through the stability pipeline")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--epsilon", type=_positive("epsilon"), required=True)
        sp.add_argument("--Delta", type=_positive("Delta"), default=None,
                        help="perturbation size (default epsilon/10)")
        sp.add_argument("--grid", type=_positive("grid"), default=1 / 64)
        if name == "stability":
            sp.add_argument("--horizon", type=int)
            sp.add_argument("--plot")
        common(sp, chain=True)
        sp.set_defaults(func=func)

    sp = sub.add_parser("transitive", help="grid-scale transitivity")
    sp.add_argument("--grid", type=_positive("grid"), default=1 / 16)
    sp.add_argument("--horizon", type=int, default=8)
    sp.add_argument("--budget", type=int, default=200_000_000)
    common(sp)
    sp.set_defaults(func=cmd_transitive)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except PropertyFailure as exc:
        print(f"property failed: {exc}", file=sys.stderr)
        return 1
    except IfsError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
