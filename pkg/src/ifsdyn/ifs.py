"""Iterated function systems with compact parameter spaces.

An :class:`IfsSpec` packages a family of partial maps ``x -> omega(lam, x)``
together with a finite parameter net, a phase space and the Lipschitz data
that every certificate in this package relies on.  Supported families are
all affine:

``rotation_circle``   x + lam (mod 1)
``doubling_circle``   m*x + lam (mod 1), integer m >= 2
``affine_torus``      A x + lam (mod 1), integer matrix A
``affine_1d``         finitely many maps x -> a*x + b on an interval

Integer-affine families (the first three) can also carry *post-shifts*:
a finite list of exact translations ``v_k``; the parameter then becomes the
pair ``(k, lam)`` and the map is ``omega(lam, x) + v_k``.  This is how
perturbed systems are represented (see :mod:`ifsdyn.stability`).

Orbits of integer-affine families are available in exact rational
arithmetic (:func:`orbit`, :func:`iterate`).  Float iteration of a
hyperbolic toral map loses one decimal digit every couple of steps, so
anything that must hold to 1e-9 over dozens of steps goes through the exact
path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import phase as ph
from .errors import ResourceError, UsageError

INTEGER_AFFINE = ("rotation_circle", "doubling_circle", "affine_torus")
FAMILIES = INTEGER_AFFINE + ("affine_1d",)
EXACT_TOL = 1e-12


# ---------------------------------------------------------------------------
# parameter nets


@dataclass(frozen=True, eq=False)
class ParamNet:
    """Finite deterministic net of a compact parameter region.

    ``ambient`` is one of ``interval``, ``ball``, ``finite`` or ``product``
    (``{0..count-1} x base``).  Every ambient parameter is within
    ``covering_radius`` of some sample.
    """

    ambient: str
    samples: np.ndarray
    covering_radius: float
    lower: float = 0.0
    upper: float = 0.0
    center: tuple = ()
    radius: float = 0.0
    resolution: float = 0.0
    base: "ParamNet | None" = None
    count: int = 0

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return len(self.samples)

    def contains(self, lam, tol=1e-12) -> bool:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.dim,):
            return False
        if self.ambient == "interval":
            return bool(self.lower - tol <= lam[0] <= self.upper + tol)
        if self.ambient == "ball":
            return bool(np.linalg.norm(lam - self.center) <= self.radius + tol)
        if self.ambient == "finite":
            return bool(np.any(np.all(np.abs(self.samples - lam) <= tol, axis=1)))
        k = lam[0]
        return bool(k == int(k) and 0 <= k < self.count and self.base.contains(lam[1:], tol))

    def project(self, lam):
        """Nearest point of the ambient region."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if self.ambient == "interval":
            return np.clip(lam, self.lower, self.upper)
        if self.ambient == "ball":
            c = np.asarray(self.center)
            r = np.linalg.norm(lam - c)
            return lam if r <= self.radius else c + (lam - c) * (self.radius / r)
        if self.ambient == "finite":
            return self.samples[np.argmin(np.linalg.norm(self.samples - lam, axis=1))]
        return np.concatenate([lam[:1], self.base.project(lam[1:])])

    def sample(self, rng: np.random.Generator, size: int):
        """Draw ``size`` ambient parameters (uniformly where that makes sense)."""
        if self.ambient == "interval":
            return rng.uniform(self.lower, self.upper, size=(size, 1))
        if self.ambient == "ball":
            d = len(self.center)
            g = rng.standard_normal((size, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.radius * rng.uniform(size=(size, 1)) ** (1.0 / d)
            return np.asarray(self.center) + r * g
        if self.ambient == "finite":
            return self.samples[rng.integers(len(self.samples), size=size)]
        ks = rng.integers(self.count, size=(size, 1)).astype(float)
        return np.hstack([ks, self.base.sample(rng, size)])

    def to_dict(self) -> dict:
        if self.ambient == "interval":
            return {"ambient": "interval", "lower": self.lower, "upper": self.upper,
                    "resolution": self.resolution}
        if self.ambient == "ball":
            return {"ambient": "ball", "center": list(self.center), "radius": self.radius,
                    "resolution": self.resolution}
        if self.ambient == "finite":
            return {"ambient": "finite", "values": self.samples.tolist()}
        return {"ambient": "product", "count": self.count, "base": self.base.to_dict()}


def interval_net(lower: float, upper: float, resolution: float) -> ParamNet:
    if upper < lower:
        raise UsageError("interval upper bound below lower bound")
    if not resolution > 0:
        raise UsageError("net resolution must be positive")
    m = max(1, math.ceil((upper - lower) / resolution - 1e-9)) if upper > lower else 0
    pts = lower + (upper - lower) * np.arange(m + 1) / max(m, 1)
    h = (upper - lower) / m if m else 0.0
    return ParamNet("interval", pts[:, None], h / 2, lower=float(lower), upper=float(upper),
                    resolution=float(resolution))


def ball_net(center, radius: float, resolution: float) -> ParamNet:
    """Lattice points of the ball plus radial projections of nearby outside points.

    Projection onto a convex set is 1-Lipschitz, so the covering radius of
    the full lattice (``resolution * sqrt(d) / 2``) survives the projection.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(center)
    if radius < 0 or not resolution > 0:
        raise UsageError("ball radius must be >= 0 and resolution > 0")
    cov = resolution * math.sqrt(d) / 2
    m = math.ceil((radius + cov) / resolution)
    axis = resolution * np.arange(-m, m + 1)
    mesh = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=-1)
    r = np.linalg.norm(mesh, axis=1)
    keep = r <= radius + cov + 1e-15
    mesh, r = mesh[keep], r[keep]
    outside = r > radius
    mesh[outside] *= (radius / r[outside])[:, None]
    pts = center + mesh
    pts = np.unique(np.round(pts, 15), axis=0)
    return ParamNet("ball", pts, float(cov), center=tuple(center.tolist()), radius=float(radius),
                    resolution=float(resolution))


def finite_net(values) -> ParamNet:
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if len(vals) == 0:
        raise UsageError("finite parameter set must be nonempty")
    return ParamNet("finite", vals, 0.0)


def product_net(count: int, base: ParamNet) -> ParamNet:
    ks = np.repeat(np.arange(count, dtype=float), len(base))[:, None]
    pts = np.hstack([ks, np.tile(base.samples, (count, 1))])
    return ParamNet("product", pts, base.covering_radius, base=base, count=count)


def net_from_dict(d: dict) -> ParamNet:
    try:
        kind = d["ambient"]
        if kind == "interval":
            return interval_net(d["lower"], d["upper"], d["resolution"])
        if kind == "ball":
            return ball_net(d["center"], d["radius"], d["resolution"])
        if kind == "finite":
            return finite_net(d["values"])
        if kind == "product":
            return product_net(int(d["count"]), net_from_dict(d["base"]))
    except KeyError as exc:
        raise UsageError(f"parameter net is missing field {exc.args[0]!r}") from None
    raise UsageError(f"unknown parameter ambient {kind!r}")


# ---------------------------------------------------------------------------
# the IFS itself


def _int_inverse(M):
    M = np.asarray(M, dtype=np.int64)
    det = round(np.linalg.det(M))
    if abs(det) != 1:
        return None
    inv = np.rint(np.linalg.inv(M)).astype(np.int64)
    if not np.array_equal(M @ inv, np.eye(len(M), dtype=np.int64)):
        return None
    return inv


@dataclass(frozen=True, eq=False)
class IfsSpec:
    family: str
    phase: ph.PhaseSpace
    params: ParamNet
    matrix: tuple = ()  # integer linear part for integer-affine families
    maps: tuple = ()  # ((slope, offset), ...) for affine_1d
    shifts: tuple | None = None  # exact post-translations, tuple of tuples of Fraction
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}")
        if self.family in INTEGER_AFFINE:
            if not self.phase.periodic:
                raise UsageError(f"{self.family} needs a circle or torus phase space")
            M = np.asarray(self.matrix, dtype=np.int64)
            if M.shape != (self.phase.dim, self.phase.dim):
                raise UsageError("matrix shape does not match the phase space")
            if self.shifts is not None and any(len(v) != self.phase.dim for v in self.shifts):
                raise UsageError("shift vectors must match the phase dimension")
        else:
            if self.phase.kind != "box" or self.phase.dim != 1:
                raise UsageError("affine_1d lives on a one-dimensional box")
            if self.shifts is not None:
                raise UsageError("post-shifts are only supported on periodic families")
            if len(self.maps) != len(self.params):
                raise UsageError("affine_1d needs one parameter per map")
            lo, hi = self.phase.lower[0], self.phase.upper[0]
            for a, b in self.maps:
                ends = (a * lo + b, a * hi + b)
                if min(ends) < lo - 1e-12 or max(ends) > hi + 1e-12:
                    raise UsageError(f"map x -> {a}*x + {b} leaves the box")
        expected = self.base_param_dim + (1 if self.shifts is not None else 0)
        if self.params.dim != expected:
            raise UsageError(f"parameter dimension {self.params.dim}, expected {expected}")

    # -- structural data ---------------------------------------------------

    @property
    def integer_affine(self) -> bool:
        return self.family in INTEGER_AFFINE

    @property
    def base_param_dim(self) -> int:
        return self.phase.dim if self.integer_affine else 1

    @property
    def M(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.int64)

    @property
    def M_inv(self):
        if "inv" not in self._cache:
            self._cache["inv"] = _int_inverse(self.M) if self.integer_affine else None
        return self._cache["inv"]

    @property
    def invertible(self) -> bool:
        return self.integer_affine and self.M_inv is not None

    @property
    def lipschitz(self) -> float:
        if self.integer_affine:
            return float(np.linalg.norm(self.M.astype(float), 2))
        return float(max(abs(a) for a, _ in self.maps))

    @property
    def expansion_lower(self) -> float:
        """Uniform lower bound on local stretching (small distances)."""
        if self.integer_affine:
            return float(np.linalg.svd(self.M.astype(float), compute_uv=False)[-1])
        return float(min(abs(a) for a, _ in self.maps))

    @property
    def hyperbolic(self) -> bool:
        return self.lipschitz < 1

    @property
    def expanding(self) -> bool:
        return self.expansion_lower > 1

    @property
    def surjective(self) -> bool:
        if self.integer_affine:
            return round(abs(np.linalg.det(self.M.astype(float)))) >= 1
        return False

    @property
    def param_lipschitz(self) -> float:
        """Bound on d_C0(omega_lam, omega_mu) / |lam - mu| within the net's ambient."""
        return 1.0 if self.integer_affine else 0.0

    @property
    def translation_type(self) -> bool:
        return self.integer_affine

    def frame(self) -> np.ndarray:
        """Unit-column basis adapted to the linear part (eigenvectors when real)."""
        if "frame" not in self._cache:
            P = np.eye(self.phase.dim)
            if self.integer_affine and self.phase.dim > 1:
                w, V = np.linalg.eig(self.M.astype(float))
                if np.all(np.isreal(w)) and abs(np.linalg.det(V.real)) > 1e-8:
                    V = V.real[:, np.argsort(-np.abs(w.real))]
                    P = V / np.linalg.norm(V, axis=0)
            self._cache["frame"] = P
        return self._cache["frame"]

    # -- evaluation --------------------------------------------------------

    def _split(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.shifts is None:
            return None, lam
        return lam[..., 0].astype(int), lam[..., 1:]

    def shift_array(self) -> np.ndarray:
        if "shift_f" not in self._cache:
            self._cache["shift_f"] = np.array(
                [[float(c) for c in v] for v in self.shifts]
            ).reshape(-1, self.phase.dim)
        return self._cache["shift_f"]

    def translation(self, lam) -> np.ndarray:
        """Translation part of ``omega_lam`` (integer-affine families)."""
        k, base = self._split(lam)
        if k is None:
            return base
        return base + self.shift_array()[k]

    def translation_exact(self, lam) -> tuple:
        k, base = self._split(lam)
        t = [Fraction(float(v)) for v in np.atleast_1d(base)]
        if k is not None:
            t = [a + b for a, b in zip(t, self.shifts[int(k)])]
        return tuple(t)

    def coeffs_1d(self, lam):
        idx = np.asarray(np.rint(np.asarray(lam, dtype=float)[..., 0]), dtype=int)
        a = np.array([m[0] for m in self.maps], dtype=float)
        b = np.array([m[1] for m in self.maps], dtype=float)
        return a[idx], b[idx]

    def linear_part(self, lam) -> np.ndarray:
        if self.integer_affine:
            return self.M.astype(float)
        a, _ = self.coeffs_1d(lam)
        return np.array([[float(a)]])

    def apply(self, lam, x):
        """``omega(lam, x)``; broadcasts over leading axes of both arguments."""
        x = np.asarray(x, dtype=float)
        if self.integer_affine:
            y = x @ self.M.T.astype(float) + self.translation(lam)
            return self.phase.canonical(y)
        a, b = self.coeffs_1d(lam)
        lo, hi = self.phase.lower[0], self.phase.upper[0]
        return np.clip(a[..., None] * x + b[..., None], lo, hi)

    def apply_inverse(self, lam, y):
        if not self.invertible:
            raise UsageError(f"{self.family} family is not invertible")
        y = np.asarray(y, dtype=float)
        return self.phase.canonical((y - self.translation(lam)) @ self.M_inv.T.astype(float))

    def preimages(self, lam, y) -> np.ndarray:
        """All preimages of a single point ``y`` under ``omega_lam``, shape (r, d)."""
        y = np.asarray(y, dtype=float)
        if self.invertible:
            return self.apply_inverse(lam, y)[None]
        if self.family == "doubling_circle":
            m = int(self.M[0, 0])
            base = (y - self.translation(lam)) / m
            return self.phase.canonical(base[None] + (np.arange(m) / m)[:, None])
        if self.family == "affine_1d":
            a, b = self.coeffs_1d(lam)
            if a == 0:
                raise UsageError("constant map has no preimage branch")
            x = (y - b) / a
            return x[None] if self.phase.contains(x, tol=1e-12) else np.empty((0, 1))
        raise UsageError(f"no preimage branches for {self.family}")

    def best_response(self, y, target):
        """Ambient parameter whose partial map sends ``y`` closest to ``target``."""
        if not self.integer_affine or self.shifts is not None:
            return None
        need = ph.lift(np.asarray(target) - np.asarray(y) @ self.M.T.astype(float))
        best, best_d = None, np.inf
        for shift in itertools.product((-1, 0, 1), repeat=self.phase.dim):
            lam = self.params.project(need + np.asarray(shift))
            d = ph.norm(self.phase, lam - need)
            if d < best_d - 1e-15:
                best, best_d = lam, d
        return best

    def check_param(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if not self.params.contains(lam, tol=1e-9):
            raise UsageError(f"parameter {lam.tolist()} outside the parameter region")
        return lam

    def to_dict(self) -> dict:
        d = {"family": self.family, "name": self.name,
             "phase": {"kind": self.phase.kind, "dim": self.phase.dim},
             "params": self.params.to_dict()}
        if self.phase.kind == "box":
            d["phase"].update(lower=list(self.phase.lower), upper=list(self.phase.upper))
        if self.integer_affine:
            d["matrix"] = [list(map(int, r)) for r in self.matrix]
        else:
            d["maps"] = [[a, b] for a, b in self.maps]
        if self.shifts is not None:
            d["shifts"] = [[str(c) for c in v] for v in self.shifts]
        return d

    def with_shifts(self, shifts) -> "IfsSpec":
        shifts = tuple(tuple(Fraction(c) for c in v) for v in shifts)
        return replace(self, shifts=shifts, params=product_net(len(shifts), self.params),
                       name=(self.name + "~") if self.name else "", _cache={})


def rotation_circle(lower=0.0, upper=1.0, resolution=1e-3, name="") -> IfsSpec:
    return IfsSpec("rotation_circle", ph.circle(), interval_net(lower, upper, resolution),
                   matrix=((1,),), name=name)


def doubling_circle(lower=0.0, upper=1.0, resolution=1e-3, multiplier=2, name="") -> IfsSpec:
    if multiplier < 2:
        raise UsageError("multiplier must be at least 2")
    return IfsSpec("doubling_circle", ph.circle(), interval_net(lower, upper, resolution),
                   matrix=((int(multiplier),),), name=name)


def affine_torus(matrix, radius=0.05, resolution=0.01, center=None, name="") -> IfsSpec:
    M = np.asarray(matrix)
    if not np.array_equal(M, np.rint(M)):
        raise UsageError("affine_torus needs an integer matrix")
    d = M.shape[0]
    center = np.zeros(d) if center is None else center
    return IfsSpec("affine_torus", ph.torus(d), ball_net(center, radius, resolution),
                   matrix=tuple(tuple(int(v) for v in r) for r in M), name=name)


def affine_1d(maps, lower=0.0, upper=1.0, name="") -> IfsSpec:
    maps = tuple((float(a), float(b)) for a, b in maps)
    return IfsSpec("affine_1d", ph.box([lower], [upper]), finite_net(range(len(maps))),
                   maps=maps, name=name)


def ifs_from_dict(d: dict) -> IfsSpec:
    try:
        p = d["phase"]
        if p["kind"] == "box":
            space = ph.box(p["lower"], p["upper"])
        elif p["kind"] == "circle":
            space = ph.circle()
        else:
            space = ph.torus(int(p["dim"]))
        family = d["family"]
        spec = IfsSpec(family, space, net_from_dict(d["params"]) if "shifts" not in d
                       else net_from_dict(d["params"]["base"]),
                       matrix=tuple(tuple(int(v) for v in r) for r in d.get("matrix", ())),
                       maps=tuple((float(a), float(b)) for a, b in d.get("maps", ())),
                       name=d.get("name", ""))
    except KeyError as exc:
        raise UsageError(f"IFS config is missing field {exc.args[0]!r}") from None
    if "shifts" in d:
        spec = spec.with_shifts([[Fraction(c) for c in v] for v in d["shifts"]])
    return spec


def apply(ifs: IfsSpec, lam, x):
    """Evaluate the general map at ``(lam, x)`` after validating both."""
    lam = ifs.check_param(lam)
    x = ifs.phase.check(x)
    return ifs.apply(lam, x)


# ---------------------------------------------------------------------------
# parameter sequences and chains


@dataclass(frozen=True, eq=False)
class ParamSeq:
    """Parameters ``lam_1..lam_n`` and, when bilateral, ``lam_-1..lam_-m``.

    There is no index 0.  The step from point ``j`` to point ``j+1`` uses
    ``lam_{j+1}`` for ``j >= 0`` and ``lam_j`` for ``j <= -1``.
    """

    forward: np.ndarray
    backward: np.ndarray
    bilateral: bool = False

    def __post_init__(self):
        if len(self.backward) and not self.bilateral:
            raise UsageError("backward entries need a bilateral sequence")

    @classmethod
    def of(cls, forward, backward=None) -> "ParamSeq":
        fwd = np.asarray(forward, dtype=float)
        if fwd.ndim == 1:
            fwd = fwd[:, None]
        if backward is None:
            return cls(fwd, np.empty((0, fwd.shape[1])), False)
        bwd = np.asarray(backward, dtype=float)
        if bwd.ndim == 1:
            bwd = bwd[:, None]
        bwd = bwd.reshape(-1, fwd.shape[1])
        return cls(fwd, bwd, True)

    @classmethod
    def constant(cls, lam, n, n_back=None) -> "ParamSeq":
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        fwd = np.tile(lam, (n, 1))
        return cls.of(fwd, None if n_back is None else np.tile(lam, (n_back, 1)))

    @property
    def mode(self) -> str:
        return "bilateral" if self.bilateral else "unilateral"

    @property
    def n_forward(self) -> int:
        return len(self.forward)

    @property
    def n_backward(self) -> int:
        return len(self.backward)

    @property
    def pdim(self) -> int:
        return self.forward.shape[1]

    def __getitem__(self, k: int):
        if k >= 1 and k <= self.n_forward:
            return self.forward[k - 1]
        if k <= -1 and -k <= self.n_backward:
            return self.backward[-k - 1]
        raise IndexError(f"no parameter with index {k}")

    def step(self, j: int):
        return self[j + 1] if j >= 0 else self[j]

    def steps(self, lo: int, hi: int) -> np.ndarray:
        """Step parameters for j in [lo, hi), shape (hi - lo, p)."""
        return np.array([self.step(j) for j in range(lo, hi)]).reshape(-1, self.pdim)

    def truncate(self, lo: int, hi: int) -> "ParamSeq":
        """Keep steps j in [lo, hi) (lo <= 0 <= hi)."""
        if lo > 0 or hi < 0 or hi > self.n_forward or -lo > self.n_backward:
            raise UsageError("truncation range outside the sequence")
        return ParamSeq(self.forward[:hi].copy(), self.backward[:-lo].copy() if lo else
                        np.empty((0, self.pdim)), self.bilateral)

    def shift(self, j: int) -> "ParamSeq":
        if self.bilateral:
            raise UsageError("shift is defined for unilateral sequences")
        return ParamSeq(self.forward[j:].copy(), self.backward, False)

    def extended(self, n: int, fill=None) -> "ParamSeq":
        """Pad the forward part to length ``n`` with ``fill`` (default ``lam_1``)."""
        if n <= self.n_forward:
            return self
        fill = self.forward[0] if fill is None else np.atleast_1d(fill)
        pad = np.tile(fill, (n - self.n_forward, 1))
        return ParamSeq(np.vstack([self.forward, pad]), self.backward, self.bilateral)

    def to_dict(self) -> dict:
        d = {"forward": self.forward.tolist()}
        if self.bilateral:
            d["backward"] = self.backward.tolist()
        return d

    def equals(self, other: "ParamSeq") -> bool:
        return (self.bilateral == other.bilateral
                and self.forward.tobytes() == other.forward.tobytes()
                and self.backward.tobytes() == other.backward.tobytes()
                and self.forward.shape == other.forward.shape)


def seq_from_dict(d: dict) -> ParamSeq:
    fwd = np.asarray(d["forward"], dtype=float)
    if "backward" in d:
        return ParamSeq(fwd.reshape(len(fwd), -1),
                        np.asarray(d["backward"], dtype=float).reshape(-1, fwd.reshape(len(fwd), -1).shape[1]),
                        True)
    return ParamSeq.of(fwd)


def random_sequence(ifs: IfsSpec, n: int, seed: int = 0, n_back: int | None = None) -> ParamSeq:
    rng = np.random.Generator(np.random.Philox(seed))
    fwd = ifs.params.sample(rng, n)
    bwd = None if n_back is None else ifs.params.sample(rng, n_back)
    return ParamSeq.of(fwd, bwd)


@dataclass(frozen=True, eq=False)
class Chain:
    """Points ``x_k`` for k in [-n_backward, n_forward] with their sequence.

    ``defects[i]`` is the recorded ``d(x_{j+1}, omega_step(j)(x_j))`` for
    ``j = start + i``.
    """

    points: np.ndarray
    sigma: ParamSeq
    defects: np.ndarray

    def __post_init__(self):
        n = self.sigma.n_forward + self.sigma.n_backward + 1
        if len(self.points) != n or len(self.defects) != n - 1:
            raise UsageError("chain length does not match its parameter sequence")

    @property
    def start(self) -> int:
        return -self.sigma.n_backward

    @property
    def end(self) -> int:
        return self.sigma.n_forward

    @property
    def indices(self) -> range:
        return range(self.start, self.end + 1)

    def __len__(self):
        return len(self.points)

    def point(self, k: int):
        return self.points[k - self.start]

    @property
    def exact(self) -> bool:
        return bool(np.all(self.defects <= EXACT_TOL))

    def truncate(self, lo: int, hi: int) -> "Chain":
        """Sub-chain on indices [lo, hi] (lo <= 0 <= hi)."""
        lo, hi = max(lo, self.start), min(hi, self.end)
        pts = self.points[lo - self.start: hi - self.start + 1]
        dfs = self.defects[lo - self.start: hi - self.start]
        return Chain(pts.copy(), self.sigma.truncate(lo, hi), dfs.copy())

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "sigma": self.sigma.to_dict(),
                "defects": self.defects.tolist(), "start": self.start}


def chain_from_dict(d: dict) -> Chain:
    try:
        return Chain(np.asarray(d["points"], dtype=float).reshape(len(d["points"]), -1),
                     seq_from_dict(d["sigma"]), np.asarray(d["defects"], dtype=float))
    except KeyError as exc:
        raise UsageError(f"chain file is missing field {exc.args[0]!r}") from None


def step_defects(ifs: IfsSpec, chain: Chain) -> np.ndarray:
    """Per-step ``d(x_{j+1}, omega_step(j)(x_j))`` recomputed from the points."""
    lams = chain.sigma.steps(chain.start, chain.end)
    images = ifs.apply(lams, chain.points[:-1])
    return ph.distance(ifs.phase, chain.points[1:], images)


def chain_defect(ifs: IfsSpec, chain: Chain) -> float:
    if len(chain) < 2:
        return 0.0
    return float(step_defects(ifs, chain).max())


# ---------------------------------------------------------------------------
# iteration


def _ratio(v) -> tuple[int, int]:
    if type(v) is tuple:
        return v
    if isinstance(v, float):
        return v.as_integer_ratio()
    f = Fraction(v)
    return f.numerator, f.denominator


def _denominator(values) -> int:
    return math.lcm(1, *(_ratio(v)[1] for v in values))


def _scale(v, D) -> int:
    n, d = _ratio(v)
    return n * (D // d)


def _translation_ratios(ifs: IfsSpec, lam) -> list:
    if ifs.shifts is None:
        return [v.as_integer_ratio() for v in np.atleast_1d(np.asarray(lam, dtype=float)).tolist()]
    return [_ratio(t) for t in ifs.translation_exact(lam)]


def _scaled(frac_rows, D):
    return np.array([[_scale(v, D) for v in row] for row in frac_rows], dtype=object)


def orbit(ifs: IfsSpec, sigma: ParamSeq, X, lo: int, hi: int, exact: bool | None = None):
    """Points ``omega_{sigma_k}(x)`` for every row x of ``X`` and k in [lo, hi].

    Returns an array of shape (m, hi - lo + 1, d).  Integer-affine families
    are iterated in exact rational arithmetic unless ``exact=False``; the
    result is rounded once at the end.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if lo > 0 or hi < 0:
        raise UsageError("orbit range must contain 0")
    if lo < 0 and not ifs.invertible:
        raise UsageError("negative iterates need an invertible family")
    if hi > sigma.n_forward or -lo > sigma.n_backward:
        raise UsageError("orbit range exceeds the parameter sequence")
    exact = ifs.integer_affine if exact is None else exact
    m, d = X.shape
    out = np.empty((m, hi - lo + 1, d))
    out[:, -lo] = X
    if not exact:
        cur = X
        for j in range(0, hi):
            cur = ifs.apply(sigma.step(j), cur)
            out[:, j + 1 - lo] = cur
        cur = X
        for j in range(-1, lo - 1, -1):
            cur = ifs.apply_inverse(sigma.step(j), cur)
            out[:, j - lo] = cur
        return out
    trans = {j: _translation_ratios(ifs, sigma.step(j)) for j in range(lo, hi)}
    D = math.lcm(_denominator(X.ravel().tolist()),
                 _denominator(v for t in trans.values() for v in t))
    MT = np.array(ifs.M.T.tolist(), dtype=object)
    base = _scaled(X.tolist(), D)

    def store(idx, ints):
        out[:, idx] = (ints % D / D).astype(float) if D > 1 else (ints % D).astype(float)

    cur = base
    for j in range(0, hi):
        cur = (cur.dot(MT) + np.array([_scale(t, D) for t in trans[j]], dtype=object)) % D
        store(j + 1 - lo, cur)
    if lo < 0:
        MinvT = np.array(ifs.M_inv.T.tolist(), dtype=object)
        cur = base
        for j in range(-1, lo - 1, -1):
            cur = ((cur - np.array([_scale(t, D) for t in trans[j]], dtype=object)).dot(MinvT)) % D
            store(j - lo, cur)
    return out


def iterate(ifs: IfsSpec, sigma: ParamSeq, x, k: int):
    """``omega_{sigma_k}(x)``; ``k = 0`` is the identity, ``k < 0`` inverts."""
    x = ifs.phase.check(x)
    if k < 0 and not ifs.invertible:
        raise UsageError("negative iterates need an invertible family")
    if k == 0:
        return x.copy()
    lo, hi = min(k, 0), max(k, 0)
    return orbit(ifs, sigma, x[None], lo, hi)[0, k - lo]


def translations(ifs: IfsSpec, sigma: ParamSeq, lo: int, hi: int) -> np.ndarray:
    """Translation offsets ``T_k = omega_{sigma_k}(0)`` for k in [lo, hi]."""
    if not ifs.integer_affine:
        raise UsageError("translation offsets need an integer-affine family")
    return orbit(ifs, sigma, np.zeros((1, ifs.phase.dim)), lo, hi)[0]


def closed_form_example2(ifs: IfsSpec, sigma: ParamSeq, x, k: int):
    """Closed form of ``omega_{sigma_k}`` for a toral automorphism plus translations.

    For k > 0:  A^k x + sum_{i=1..k} A^{k-i} lam_i            (mod 1)
    For k < 0:  A^k x - sum_{i=1..|k|} A^{-(|k|-i+1)} lam_{-i} (mod 1)

    Evaluated with integer matrix powers in exact arithmetic.
    """
    if ifs.family != "affine_torus" or ifs.shifts is not None:
        raise UsageError("closed form applies to the affine_torus family only")
    x = ifs.phase.check(x)
    if k == 0:
        return x.copy()
    if k < 0 and not ifs.invertible:
        raise UsageError("negative iterates need an invertible matrix")
    n = abs(k)
    lams = [sigma[i] if k > 0 else sigma[-i] for i in range(1, n + 1)]
    D = math.lcm(_denominator(x.tolist()), _denominator(v for lam in lams for v in lam.tolist()))
    B = [[int(v) for v in row] for row in (ifs.M if k > 0 else ifs.M_inv).tolist()]
    d = len(B)

    def matmul(P, Q):
        return [[sum(P[i][t] * Q[t][j] for t in range(d)) for j in range(d)] for i in range(d)]

    def matvec(P, v):
        return [sum(P[i][t] * v[t] for t in range(d)) for i in range(d)]

    powers = [[[int(i == j) for j in range(d)] for i in range(d)]]
    for _ in range(n):
        powers.append(matmul(powers[-1], B))
    acc = matvec(powers[n], [_scale(v, D) for v in x.tolist()])
    sign = 1 if k > 0 else -1
    for i, lam in enumerate(lams, start=1):
        e = n - i if k > 0 else n - i + 1
        term = matvec(powers[e], [_scale(v, D) for v in lam.tolist()])
        acc = [a + sign * t for a, t in zip(acc, term)]
    return np.array([(a % D) / D for a in acc])


def make_chain(ifs: IfsSpec, sigma: ParamSeq, x0, n: int | None = None) -> Chain:
    """Exact chain through ``x0`` along ``sigma`` (step by step, float)."""
    x0 = ifs.phase.check(x0)
    if n is not None:
        if n < 0:
            raise UsageError("chain length must be >= 0")
        sigma = sigma.truncate(-sigma.n_backward, n)
    if sigma.n_backward and not ifs.invertible:
        raise UsageError("bilateral chains need an invertible family")
    pts = [x0]
    for j in range(0, sigma.n_forward):
        pts.append(ifs.apply(sigma.step(j), pts[-1]))
    back = [x0]
    for j in range(-1, -sigma.n_backward - 1, -1):
        back.append(ifs.apply_inverse(sigma.step(j), back[-1]))
    points = np.array(back[:0:-1] + pts).reshape(-1, ifs.phase.dim)
    chain = Chain(points, sigma, np.zeros(len(points) - 1))
    return Chain(points, sigma, step_defects(ifs, chain) if len(points) > 1 else np.zeros(0))


def _perturb(ifs, rng, x, delta):
    d = ifs.phase.dim
    g = rng.standard_normal(d)
    g /= np.linalg.norm(g)
    v = delta * rng.uniform() * g
    y = x + v
    if not ifs.phase.periodic:
        y = np.clip(y, ifs.phase.lower, ifs.phase.upper)
    return ifs.phase.canonical(y), v


def make_delta_chain(ifs: IfsSpec, sigma: ParamSeq, x0, n: int | None, delta: float,
                     seed: int = 0) -> Chain:
    """Seeded delta-chain: every step misses the exact image by at most ``delta``."""
    if delta < 0:
        raise UsageError("delta must be >= 0")
    x0 = ifs.phase.check(x0)
    if n is not None:
        sigma = sigma.truncate(-sigma.n_backward, n)
    if sigma.n_backward and not ifs.invertible:
        raise UsageError("bilateral chains need an invertible family")
    rng = np.random.Generator(np.random.Philox(seed))
    pts = [x0]
    for j in range(0, sigma.n_forward):
        y, _ = _perturb(ifs, rng, ifs.apply(sigma.step(j), pts[-1]), delta)
        pts.append(y)
    back = [x0]
    for j in range(-1, -sigma.n_backward - 1, -1):
        target, _ = _perturb(ifs, rng, back[-1], delta)
        back.append(ifs.apply_inverse(sigma.step(j), target))
    points = np.array(back[:0:-1] + pts).reshape(-1, ifs.phase.dim)
    tmp = Chain(points, sigma, np.zeros(len(points) - 1))
    return Chain(points, sigma, step_defects(ifs, tmp) if len(points) > 1 else np.zeros(0))


# ---------------------------------------------------------------------------
# transitivity at grid scale


@dataclass
class TransitivityResult:
    transitive: bool
    witnesses: dict  # (u, v) -> (n, tuple of net indices)
    failing_pair: tuple | None
    grid: ph.Grid
    horizon: int


def _cell_index(space: ph.PhaseSpace, grid: ph.Grid, pts):
    h = grid.spacing
    if space.periodic:
        m = np.rint(1.0 / h).astype(int)
        idx = np.rint(pts / h).astype(int) % m
    else:
        m = np.rint((np.asarray(space.upper) - space.lower) / h).astype(int) + 1
        idx = np.clip(np.rint((pts - np.asarray(space.lower)) / h).astype(int), 0, m - 1)
    return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), tuple(m))


def check_transitive(ifs: IfsSpec, spec: ph.GridSpec, horizon: int,
                     budget: int = 200_000_000, refine: int = 4) -> TransitivityResult:
    """Grid-scale transitivity: every grid ball reaches every other one.

    From each cell centre the reachable set is explored breadth first over
    the parameter net, keeping one genuine image per cell of a grid
    ``refine`` times finer.  A pair (U, V)
    is witnessed by the first step n >= 1 at which some image lands in the
    ball of radius ``covering_radius`` around V's centre.
    """
    if horizon < 1:
        raise UsageError("horizon must be >= 1")
    grid = ph.grid_points(ifs.phase, spec)
    lams = ifs.params.samples
    N = len(grid)
    witnesses = {}
    evals = 0
    L = len(lams)
    fine = ph.grid_points(ifs.phase, ph.GridSpec(spec.resolution / refine, cap=spec.cap * refine ** 2))
    for u in range(N):
        frontier = grid.points[u][None]
        prefixes = [()]
        seen = {}
        mask = np.zeros(N, dtype=bool)
        expanded = np.zeros(len(fine), dtype=bool)
        for n in range(1, horizon + 1):
            imgs = ifs.apply(lams[None, :, :], frontier[:, None, :])
            evals += imgs.shape[0] * imgs.shape[1]
            if evals > budget:
                raise ResourceError("transitivity search exceeded its budget",
                                    partial=TransitivityResult(False, witnesses, None, grid, horizon))
            flat = imgs.reshape(-1, imgs.shape[-1])
            cells, first = np.unique(_cell_index(ifs.phase, grid, flat), return_index=True)
            fresh = ~mask[cells]
            for c, f in zip(cells[fresh], first[fresh]):
                i, j = divmod(int(f), L)
                seen[int(c)] = (n, prefixes[i] + (j,))
            mask[cells] = True
            if mask.all():
                break
            # one genuine image per fine cell carries the search forward
            sub, first = np.unique(_cell_index(ifs.phase, fine, flat), return_index=True)
            keep = ~expanded[sub]
            expanded[sub] = True
            if not keep.any():
                break
            idx = first[keep]
            frontier = flat[idx]
            prefixes = [prefixes[int(f) // L] + (int(f) % L,) for f in idx]
        for v in range(N):
            if v in seen:
                witnesses[(u, v)] = seen[v]
            else:
                return TransitivityResult(False, witnesses, (u, v), grid, horizon)
    return TransitivityResult(True, witnesses, None, grid, horizon)
