"""Vector-space geometry: Bregman divergences, feasible sets, and prox-mappings.

Two geometries are supported, each strongly convex with modulus ``mu`` in its
own norm pair:

* Euclidean: distance generator ``mu/2 * ||u||_2^2``; norm l2, dual norm l2.
* Entropy: ``mu *`` negative entropy on (products of) probability simplexes;
  the norm is the blockwise l1 norm (blocks combined in l2), the dual norm is
  the blockwise l-infinity norm.

The prox-mapping solved here is

    argmin_{u in Z}  <eta, u - z> + V(z, u) + gamma * J(u)

with ``V`` the Bregman divergence of the distance generator and ``J`` a simple
convex term (zero or a weighted l1 norm).  Only combinations with an exact
finite solver are supported; there is no generic inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnboundedDomainError

__all__ = [
    "GeometrySetup",
    "FeasibleSet",
    "Box",
    "Ball",
    "Simplex",
    "Free",
    "Product",
    "SimpleTerm",
    "bregman_value",
    "prox_map",
    "prox_optimality_residual",
    "bregman_diameter_sq",
    "norm_of",
    "dual_norm_of",
]

_DUAL_OF = {"l2": "l2", "l1": "linf"}


@dataclass(frozen=True)
class GeometrySetup:
    """Norm pair plus distance-generating function.

    ``mu`` is the strong-convexity modulus of the distance generator in the
    primal norm; the stepsize schedules consume it directly.
    """

    norm_kind: str  # "l2" or "l1"
    dgf_kind: str  # "half_sq" or "entropy"
    mu: float = 1.0

    def __post_init__(self):
        if self.norm_kind not in _DUAL_OF:
            raise ConfigurationError(f"unknown norm kind {self.norm_kind!r}")
        if self.dgf_kind not in ("half_sq", "entropy"):
            raise ConfigurationError(f"unknown distance generator {self.dgf_kind!r}")
        if (self.norm_kind == "l1") != (self.dgf_kind == "entropy"):
            raise ConfigurationError("supported pairs are (l2, half_sq) and (l1, entropy)")
        if not self.mu > 0:
            raise ConfigurationError("mu must be positive")

    @property
    def dual_norm_kind(self) -> str:
        return _DUAL_OF[self.norm_kind]

    @classmethod
    def euclidean(cls, mu: float = 1.0) -> "GeometrySetup":
        return cls("l2", "half_sq", mu)

    @classmethod
    def entropy(cls, mu: float = 1.0) -> "GeometrySetup":
        return cls("l1", "entropy", mu)


class FeasibleSet:
    """A closed convex feasible set with exact membership and projection."""

    dim: int
    is_bounded: bool

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the set."""
        raise NotImplementedError

    def start_point(self) -> np.ndarray:
        """Canonical interior-ish starting point (center / uniform / origin)."""
        raise NotImplementedError

    def blocks(self) -> list["FeasibleSet"]:
        return [self]


class Box(FeasibleSet):
    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ConfigurationError("box bounds must have matching shapes")
        if np.any(self.upper < self.lower):
            raise ConfigurationError("box upper bounds below lower bounds")
        self.dim = self.lower.size
        self.is_bounded = bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, tol=1e-9):
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def start_point(self):
        return 0.5 * (self.lower + self.upper)

    def widths(self) -> np.ndarray:
        return self.upper - self.lower


class Ball(FeasibleSet):
    """Euclidean ball of given radius, centered at the origin by default."""

    def __init__(self, dim: int, radius: float, center=None):
        if radius <= 0:
            raise ConfigurationError("ball radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        if self.center.size != self.dim:
            raise ConfigurationError("ball center has wrong dimension")
        self.is_bounded = True

    def contains(self, x, tol=1e-9):
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def project(self, x):
        d = x - self.center
        r = np.linalg.norm(d)
        if r <= self.radius:
            return np.asarray(x, dtype=float)
        return self.center + d * (self.radius / r)

    def start_point(self):
        return self.center.copy()


class Simplex(FeasibleSet):
    """Probability simplex, optionally padded away from the boundary.

    ``pad > 0`` restricts to coordinates >= pad, which keeps the Bregman
    diameter finite under the entropy geometry.  Requires ``pad < 1/dim``.
    """

    def __init__(self, dim: int, pad: float = 0.0):
        self.dim = int(dim)
        self.pad = float(pad)
        if self.dim < 1:
            raise ConfigurationError("simplex dimension must be >= 1")
        if not 0.0 <= self.pad < 1.0 / self.dim:
            raise ConfigurationError("simplex pad must lie in [0, 1/dim)")
        self.is_bounded = True

    def contains(self, x, tol=1e-9):
        return bool(abs(float(np.sum(x)) - 1.0) <= 1e-12 and np.all(x >= self.pad - tol))

    def project(self, x):
        scale = 1.0 - self.dim * self.pad
        if scale == 1.0:
            return _project_unit_simplex(np.asarray(x, dtype=float))
        p = _project_unit_simplex((np.asarray(x, dtype=float) - self.pad) / scale)
        return self.pad + scale * p

    def start_point(self):
        return np.full(self.dim, 1.0 / self.dim)


class Free(FeasibleSet):
    def __init__(self, dim: int):
        self.dim = int(dim)
        self.is_bounded = False

    def contains(self, x, tol=1e-9):
        return bool(np.all(np.isfinite(x)))

    def project(self, x):
        return np.asarray(x, dtype=float)

    def start_point(self):
        return np.zeros(self.dim)


class Product(FeasibleSet):
    """Cartesian product of feasible sets, flattened into one vector."""

    def __init__(self, *parts: FeasibleSet):
        if not parts:
            raise ConfigurationError("product of zero sets")
        self.parts = list(parts)
        self.dim = sum(p.dim for p in self.parts)
        self.is_bounded = all(p.is_bounded for p in self.parts)
        self._offsets = np.cumsum([0] + [p.dim for p in self.parts])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self._offsets[i]: self._offsets[i + 1]] for i in range(len(self.parts))]

    def contains(self, x, tol=1e-9):
        return all(p.contains(xb, tol) for p, xb in zip(self.parts, self.split(x)))

    def project(self, x):
        return np.concatenate([p.project(xb) for p, xb in zip(self.parts, self.split(x))])

    def start_point(self):
        return np.concatenate([p.start_point() for p in self.parts])

    def blocks(self):
        out = []
        for p in self.parts:
            out.extend(p.blocks())
        return out


@dataclass(frozen=True)
class SimpleTerm:
    """The simple convex term handled through the prox: zero or lam * ||u||_1."""

    kind: str = "zero"  # "zero" or "l1"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "l1"):
            raise ConfigurationError(f"unknown simple term kind {self.kind!r}")
        if self.weight < 0:
            raise ConfigurationError("l1 weight must be nonnegative")

    def value(self, u: np.ndarray) -> float:
        if self.kind == "zero" or self.weight == 0.0:
            return 0.0
        return self.weight * float(np.sum(np.abs(u)))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.weight == 0.0

    @classmethod
    def zero(cls) -> "SimpleTerm":
        return cls("zero", 0.0)

    @classmethod
    def l1(cls, weight: float) -> "SimpleTerm":
        return cls("l1", weight)


# ---------------------------------------------------------------------------
# norms

def _block_norms(fset: FeasibleSet | None, x: np.ndarray, ord_) -> float:
    if isinstance(fset, Product):
        vals = [np.linalg.norm(xb, ord_) for xb in fset.split(x)]
        return float(np.sqrt(np.sum(np.square(vals))))
    return float(np.linalg.norm(x, ord_))


def norm_of(setup: GeometrySetup, fset: FeasibleSet | None, x: np.ndarray) -> float:
    """Primal norm of ``x`` in this geometry (blockwise for product sets)."""
    if setup.norm_kind == "l2":
        return float(np.linalg.norm(x))
    return _block_norms(fset, x, 1)


def dual_norm_of(setup: GeometrySetup, fset: FeasibleSet | None, x: np.ndarray) -> float:
    """Dual norm of ``x``; Lipschitz and noise constants live in this norm."""
    if setup.norm_kind == "l2":
        return float(np.linalg.norm(x))
    return _block_norms(fset, x, np.inf)


# ---------------------------------------------------------------------------
# Bregman divergence

def bregman_value(setup: GeometrySetup, z: np.ndarray, u: np.ndarray) -> float:
    """V(z, u), the Bregman divergence from z to u.  Nonnegative, zero at u=z."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    if setup.dgf_kind == "half_sq":
        d = u - z
        return 0.5 * setup.mu * float(d @ d)
    if np.any(z <= 0.0):
        raise ValueError("entropy divergence needs z with strictly positive coordinates")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(u > 0.0, u * (np.log(u) - np.log(z)), 0.0)
    # generalized KL; the linear part vanishes when both points sum to one
    return setup.mu * float(np.sum(terms) - np.sum(u) + np.sum(z))


# ---------------------------------------------------------------------------
# prox-mapping

def _soft_threshold(a: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - thr, 0.0)


def _project_unit_simplex(x: np.ndarray) -> np.ndarray:
    srt = np.sort(x)[::-1]
    css = np.cumsum(srt) - 1.0
    idx = np.arange(1, x.size + 1)
    k = idx[srt - css / idx > 0][-1]
    tau = css[k - 1] / k
    return np.maximum(x - tau, 0.0)


def _euclidean_prox_block(part: FeasibleSet, a: np.ndarray, thr: float) -> np.ndarray:
    # minimize 0.5*||u - a||^2 + thr*||u||_1 over the block
    if isinstance(part, Free):
        return _soft_threshold(a, thr) if thr > 0.0 else a.copy()
    if isinstance(part, Box):
        v = _soft_threshold(a, thr) if thr > 0.0 else a
        return np.clip(v, part.lower, part.upper)
    if isinstance(part, Ball):
        if thr == 0.0:
            return part.project(a)
        if np.any(part.center != 0.0):
            raise ConfigurationError("l1 term with a ball requires the ball centered at the origin")
        v = _soft_threshold(a, thr)
        r = np.linalg.norm(v)
        return v if r <= part.radius else v * (part.radius / r)
    raise ConfigurationError(
        f"euclidean prox does not support feasible set {type(part).__name__}"
    )


def _entropy_prox_block(part: Simplex, z: np.ndarray, eta: np.ndarray) -> np.ndarray:
    # multiplicative update, then exact waterfilling onto the padded simplex
    if np.any(z <= 0.0):
        raise ValueError("entropy prox needs z with strictly positive coordinates")
    logs = np.log(z) - eta
    s = np.exp(logs - logs.max())
    pad = part.pad
    if pad == 0.0:
        return s / s.sum()
    d = s.size
    free = np.ones(d, dtype=bool)
    for _ in range(d):
        level = (1.0 - pad * (d - free.sum())) / s[free].sum()
        newly = free & (level * s < pad)
        if not newly.any():
            return np.where(free, np.maximum(level * s, pad), pad)
        free &= ~newly
    return np.full(d, pad)


def prox_map(
    setup: GeometrySetup,
    fset: FeasibleSet,
    z: np.ndarray,
    eta: np.ndarray,
    j: SimpleTerm = SimpleTerm.zero(),
    gamma: float = 1.0,
) -> np.ndarray:
    """Solve argmin_{u in fset} <eta, u-z> + V(z, u) + gamma*J(u) exactly.

    Supported cells: Euclidean with box/ball/free blocks and J in {zero, l1};
    entropy with simplex blocks and J = zero.  Anything else raises
    ConfigurationError.
    """
    z = np.asarray(z, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if z.size != fset.dim or eta.size != fset.dim:
        raise ValueError("z and eta must match the feasible set dimension")
    if not np.all(np.isfinite(eta)):
        raise ValueError("prox called with non-finite eta")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if j.is_zero and not eta.any():
        return z.copy()  # minimizer of V(z, .) is z itself

    if setup.dgf_kind == "half_sq":
        a = z - eta / setup.mu
        thr = gamma * j.weight / setup.mu if not j.is_zero else 0.0
        if isinstance(fset, Product):
            return np.concatenate(
                [
                    _euclidean_prox_block(p, ab, thr)
                    for p, ab in zip(fset.parts, fset.split(a))
                ]
            )
        return _euclidean_prox_block(fset, a, thr)

    # entropy geometry
    if not j.is_zero:
        raise ConfigurationError("entropy prox supports only J = zero")
    scaled = eta / setup.mu
    if isinstance(fset, Simplex):
        return _entropy_prox_block(fset, z, scaled)
    if isinstance(fset, Product) and all(isinstance(p, Simplex) for p in fset.parts):
        return np.concatenate(
            [
                _entropy_prox_block(p, zb, eb)
                for p, zb, eb in zip(fset.parts, fset.split(z), fset.split(scaled))
            ]
        )
    raise ConfigurationError(
        f"entropy prox does not support feasible set {type(fset).__name__}"
    )


def prox_optimality_residual(
    setup: GeometrySetup,
    fset: FeasibleSet,
    z: np.ndarray,
    eta: np.ndarray,
    j: SimpleTerm,
    gamma: float,
    w: np.ndarray,
    u: np.ndarray,
) -> float:
    """Residual of the prox optimality inequality at comparator u.

    For w = prox_map(...) the value
    <eta, w-u> + gamma*(J(w) - J(u)) - [V(z,u) - V(z,w) - V(w,u)]
    is nonpositive up to roundoff; large positive values flag a broken prox.
    """
    lhs = float(eta @ (w - u)) + gamma * (j.value(w) - j.value(u))
    rhs = (
        bregman_value(setup, z, u)
        - bregman_value(setup, z, w)
        - bregman_value(setup, w, u)
    )
    return lhs - rhs


# ---------------------------------------------------------------------------
# Bregman diameter

def _diameter_sq_block(setup: GeometrySetup, part: FeasibleSet) -> float:
    if setup.dgf_kind == "half_sq":
        if isinstance(part, Box):
            if not part.is_bounded:
                raise UnboundedDomainError("box with infinite bounds has no Bregman diameter")
            w = part.widths()
            return 0.5 * setup.mu * float(w @ w)
        if isinstance(part, Ball):
            return 2.0 * setup.mu * part.radius**2
        if isinstance(part, Simplex):
            span = 1.0 - part.dim * part.pad
            return setup.mu * span**2 if part.dim > 1 else 0.0
        if isinstance(part, Free):
            raise UnboundedDomainError("free space has no Bregman diameter")
        raise ConfigurationError(f"no diameter rule for {type(part).__name__}")
    # entropy: supremum of the divergence is attained at vertex pairs of the
    # padded simplex (the divergence is convex in each argument)
    if not isinstance(part, Simplex):
        raise ConfigurationError("entropy geometry pairs only with simplex sets")
    if part.dim == 1:
        return 0.0
    if part.pad <= 0.0:
        raise UnboundedDomainError(
            "entropy divergence is unbounded on the unpadded simplex; use pad > 0"
        )
    top = 1.0 - (part.dim - 1) * part.pad
    return setup.mu * (top - part.pad) * float(np.log(top / part.pad))


def bregman_diameter_sq(setup: GeometrySetup, fset: FeasibleSet) -> float:
    """A finite upper bound on sup_{z1,z2} V(z1, z2); exact for supported sets."""
    return float(sum(_diameter_sq_block(setup, p) for p in fset.blocks()))
