"""Concrete VI instances and their first-order oracles.

An instance is the operator decomposition F = grad G + H + J' together with a
feasible set, declared Lipschitz constants, and (for the built-in families) a
known strong solution:

* ``quadratic-min``: diagonal convex quadratic over a box, H = 0.  Isolates
  the smooth constant; the gap has an exact separable evaluation.
* ``bilinear-saddle``: matrix game on a product of simplexes, G = 0.  The
  matrix is centered to constant margins so the uniform pair is an
  equilibrium.  Isolates the operator constant.
* ``skew-plus-gradient``: skew-linear plus a smooth nonlinear monotone part on
  free space, built so F vanishes at a chosen point.  Exercises unbounded-set
  certificates with a genuinely nonlinear operator.

Stochastic oracles add noise to grad G and H in the dual space; the noise is
scaled so the declared variance budget provably holds (see StochasticOracle).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import (
    Box,
    FeasibleSet,
    Free,
    GeometrySetup,
    Product,
    Simplex,
    SimpleTerm,
)

__all__ = [
    "SmoothTerm",
    "ZeroSmooth",
    "DiagQuadratic",
    "RotatedQuadratic",
    "MonotoneTerm",
    "ZeroOperator",
    "BilinearCoupling",
    "SkewSmoothed",
    "ProblemSpec",
    "gap_term",
    "strong_solution_residual",
    "make_instance",
    "NoiseRecord",
    "NoiseLog",
    "StochasticOracle",
    "sample_oracles",
]


# ---------------------------------------------------------------------------
# smooth terms (G)

class SmoothTerm:
    lip_grad: float = 0.0

    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroSmooth(SmoothTerm):
    def __init__(self, dim: int):
        self.dim = dim
        self.lip_grad = 0.0

    def value(self, u):
        return 0.0

    def grad(self, u):
        return np.zeros(self.dim)


class DiagQuadratic(SmoothTerm):
    """0.5 * sum_i coeffs_i * (u_i - center_i)^2; separable, exact box minimum."""

    def __init__(self, coeffs, center):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.center = np.asarray(center, dtype=float)
        if np.any(self.coeffs < 0):
            raise ConfigurationError("quadratic coefficients must be nonnegative")
        self.lip_grad = float(self.coeffs.max()) if self.coeffs.size else 0.0

    def value(self, u):
        d = u - self.center
        return 0.5 * float(self.coeffs @ (d * d))

    def grad(self, u):
        return self.coeffs * (u - self.center)


class RotatedQuadratic(SmoothTerm):
    """0.5 * (u-c)' M (u-c) with M symmetric PSD; lipceiling is the top eigenvalue."""

    def __init__(self, matrix, center):
        self.matrix = np.asarray(matrix, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.lip_grad = float(np.linalg.eigvalsh(self.matrix).max())

    def value(self, u):
        d = u - self.center
        return 0.5 * float(d @ (self.matrix @ d))

    def grad(self, u):
        return self.matrix @ (u - self.center)


# ---------------------------------------------------------------------------
# monotone operators (H)

class MonotoneTerm:
    def op(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lip(self, norm_kind: str) -> float:
        raise NotImplementedError


class ZeroOperator(MonotoneTerm):
    def __init__(self, dim: int):
        self.dim = dim

    def op(self, u):
        return np.zeros(self.dim)

    def lip(self, norm_kind):
        return 0.0


class BilinearCoupling(MonotoneTerm):
    """H(x, y) = (A y, -A' x) on a product of two simplexes (skew, hence monotone)."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.rows, self.cols = self.matrix.shape
        self._lip_l2 = float(np.linalg.svd(self.matrix, compute_uv=False)[0])
        self._lip_l1 = float(np.abs(self.matrix).max())

    def op(self, u):
        x, y = u[: self.rows], u[self.rows:]
        return np.concatenate([self.matrix @ y, -self.matrix.T @ x])

    def lip(self, norm_kind):
        # l1 geometry measures perturbations blockwise (l1 -> l-inf), where the
        # largest matrix entry is the exact operator constant
        return self._lip_l1 if norm_kind == "l1" else self._lip_l2


class SkewSmoothed(MonotoneTerm):
    """Skew-linear part plus the gradient of a smooth convex curvature term.

    H(u) = S (u - root) + weights * (psi(u) - psi(root)), with S skew-symmetric
    and psi_i(x) = x / sqrt(1 + x^2) (derivative of the pseudo-Huber potential,
    1-Lipschitz and monotone).  H(root) = 0 by construction, and
    ||H(w) - H(v)||_2 <= (||S||_2 + max weights) ||w - v||_2.
    """

    def __init__(self, skew, weights, root):
        self.skew = np.asarray(skew, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.root = np.asarray(root, dtype=float)
        if not np.allclose(self.skew, -self.skew.T, atol=1e-12):
            raise ConfigurationError("skew part must be antisymmetric")
        if np.any(self.weights < 0):
            raise ConfigurationError("curvature weights must be nonnegative")
        self._lip = float(np.linalg.svd(self.skew, compute_uv=False)[0]) + float(
            self.weights.max() if self.weights.size else 0.0
        )

    @staticmethod
    def _psi(u):
        return u / np.sqrt(1.0 + u * u)

    def op(self, u):
        return self.skew @ (u - self.root) + self.weights * (self._psi(u) - self._psi(self.root))

    def lip(self, norm_kind):
        if norm_kind != "l2":
            raise ConfigurationError("skew-plus-gradient constants are declared in l2 only")
        return self._lip


# ---------------------------------------------------------------------------
# problem container

@dataclass
class ProblemSpec:
    """A VI instance: terms, feasible set, declared constants, optional solution.

    ``lip_grad`` and ``lip_op`` are valid Lipschitz constants in the dual norm
    implied by ``norm_kind``; they are declared analytically at construction,
    never estimated from samples.
    """

    kind: str
    smooth: SmoothTerm
    monotone: MonotoneTerm
    simple: SimpleTerm
    fset: FeasibleSet
    lip_grad: float
    lip_op: float
    norm_kind: str = "l2"
    known_solution: np.ndarray | None = None
    descriptor: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.fset.dim

    def default_setup(self) -> GeometrySetup:
        if self.norm_kind == "l1":
            return GeometrySetup.entropy()
        return GeometrySetup.euclidean()

    def operator(self, u: np.ndarray) -> np.ndarray:
        """grad G(u) + H(u); the simple term enters only through the prox."""
        return self.smooth.grad(u) + self.monotone.op(u)


def gap_term(problem: ProblemSpec, cand: np.ndarray, against: np.ndarray) -> float:
    """The merit pairing whose supremum over ``against`` is the gap.

    G(cand) - G(against) + <H(against), cand - against> + J(cand) - J(against).
    Nonpositive for all comparators exactly when ``cand`` is a weak solution.
    """
    return (
        problem.smooth.value(cand)
        - problem.smooth.value(against)
        + float(problem.monotone.op(against) @ (cand - against))
        + problem.simple.value(cand)
        - problem.simple.value(against)
    )


def strong_solution_residual(problem: ProblemSpec, u_star: np.ndarray, probe: np.ndarray) -> float:
    """First-order optimality residual of ``u_star`` against one probe point.

    <grad G(u*) + H(u*), probe - u*> + J(probe) - J(u*); nonnegative for every
    feasible probe iff u* is a strong solution (the composite form avoids
    evaluating any subgradient of J).
    """
    return float(problem.operator(u_star) @ (probe - u_star)) + problem.simple.value(
        probe
    ) - problem.simple.value(u_star)


# ---------------------------------------------------------------------------
# instance factory

def _centered_matrix(rng, rows, cols, scale):
    a = rng.uniform(-1.0, 1.0, size=(rows, cols))
    a = a - a.mean(axis=1, keepdims=True) - a.mean(axis=0, keepdims=True) + a.mean()
    peak = np.abs(a).max()
    if peak == 0.0:
        raise ConfigurationError("degenerate random matrix draw")
    return a * (scale / peak)


def _quadratic_box_argmin(coeffs, center, lam, lower, upper):
    # separable: per coordinate minimize 0.5*m*(u-b)^2 + lam*|u| over [lo, hi]
    shrink = np.divide(lam, coeffs, out=np.zeros_like(coeffs), where=coeffs > 0)
    base = np.sign(center) * np.maximum(np.abs(center) - shrink, 0.0)
    if lam > 0:
        base = np.where(coeffs > 0, base, 0.0)  # pure-l1 coordinates pull to zero
    return np.clip(base, lower, upper)


def make_instance(kind: str, dimension: int, constants: dict | None = None, seed: int = 0) -> ProblemSpec:
    """Build one of the canonical instance families with valid declared constants."""
    if dimension < 1:
        raise ConfigurationError("dimension must be >= 1")
    c = dict(constants or {})
    rng = np.random.default_rng(seed)

    if kind == "quadratic-min":
        if "spectrum" in c:
            coeffs = np.asarray(c["spectrum"], dtype=float)
            if coeffs.size != dimension:
                raise ConfigurationError("spectrum length must equal dimension")
        else:
            lo, hi = float(c.get("spec_min", 1.0)), float(c.get("spec_max", 10.0))
            if lo <= 0 or hi < lo:
                raise ConfigurationError("quadratic spectrum bounds must be 0 < min <= max")
            coeffs = np.geomspace(lo, hi, dimension)
        lower = np.full(dimension, float(c.get("box_lower", 0.0)))
        upper = np.full(dimension, float(c.get("box_upper", 1.0)))
        if np.any(upper <= lower):
            raise ConfigurationError("empty box")
        width = upper - lower
        center = c.get("center")
        if center is None:
            center = rng.uniform(lower - 0.25 * width, upper + 0.25 * width)
        else:
            center = np.asarray(center, dtype=float) * np.ones(dimension)
        lam = float(c.get("l1_weight", 0.0))
        simple = SimpleTerm.l1(lam) if lam > 0 else SimpleTerm.zero()
        smooth = DiagQuadratic(coeffs, center)
        fset = Box(lower, upper)
        sol = _quadratic_box_argmin(coeffs, center, lam, lower, upper)
        return ProblemSpec(
            kind, smooth, ZeroOperator(dimension), simple, fset,
            lip_grad=smooth.lip_grad, lip_op=0.0, norm_kind="l2",
            known_solution=sol, descriptor={"seed": seed, **c},
        )

    if kind == "bilinear-saddle":
        rows = int(c.get("rows", dimension))
        cols = int(c.get("cols", dimension))
        scale = float(c.get("scale", 1.0))
        pad = float(c.get("pad", 1e-6))
        norm_kind = str(c.get("geometry", "l1"))
        norm_kind = {"entropy": "l1", "euclidean": "l2"}.get(norm_kind, norm_kind)
        matrix = c.get("matrix")
        matrix = np.asarray(matrix, dtype=float) if matrix is not None else _centered_matrix(rng, rows, cols, scale)
        coupling = BilinearCoupling(matrix)
        fset = Product(Simplex(coupling.rows, pad), Simplex(coupling.cols, pad))
        # constant-margin matrices make the uniform pair an equilibrium
        margins_ok = (
            np.allclose(matrix @ np.full(coupling.cols, 1.0 / coupling.cols),
                        (matrix @ np.full(coupling.cols, 1.0 / coupling.cols)).mean())
            and np.allclose(matrix.T @ np.full(coupling.rows, 1.0 / coupling.rows),
                            (matrix.T @ np.full(coupling.rows, 1.0 / coupling.rows)).mean())
        )
        sol = fset.start_point() if margins_ok else None
        return ProblemSpec(
            kind, ZeroSmooth(fset.dim), coupling, SimpleTerm.zero(), fset,
            lip_grad=0.0, lip_op=coupling.lip(norm_kind), norm_kind=norm_kind,
            known_solution=sol, descriptor={"seed": seed, **c},
        )

    if kind == "skew-plus-gradient":
        skew_norm = float(c.get("skew_norm", 2.0))
        curve_max = float(c.get("curve_max", 1.0))
        grad_max = float(c.get("grad_max", 4.0))
        root = c.get("solution")
        if root is None:
            root = rng.standard_normal(dimension)
            root *= float(c.get("solution_radius", 1.0)) / np.linalg.norm(root)
        else:
            root = np.asarray(root, dtype=float) * np.ones(dimension)
        raw = rng.standard_normal((dimension, dimension))
        skew = raw - raw.T
        top = np.linalg.svd(skew, compute_uv=False)[0]
        if skew_norm > 0 and top > 0:
            skew *= skew_norm / top
        else:
            skew = np.zeros((dimension, dimension))
        weights = rng.uniform(0.3, 1.0, dimension) * curve_max
        monotone = SkewSmoothed(skew, weights, root)
        if grad_max > 0:
            q, _ = np.linalg.qr(rng.standard_normal((dimension, dimension)))
            spec = np.geomspace(max(grad_max / 10.0, 1e-3), grad_max, dimension)
            smooth = RotatedQuadratic((q * spec) @ q.T, root)
        else:
            smooth = ZeroSmooth(dimension)
        return ProblemSpec(
            kind, smooth, monotone, SimpleTerm.zero(), Free(dimension),
            lip_grad=smooth.lip_grad, lip_op=monotone.lip("l2"), norm_kind="l2",
            known_solution=root, descriptor={"seed": seed, **c},
        )

    if kind == "custom":
        needed = {"smooth", "monotone", "simple", "fset", "lip_grad", "lip_op"}
        missing = needed - set(c)
        if missing:
            raise ConfigurationError(f"custom instance missing {sorted(missing)}")
        return ProblemSpec(
            kind, c["smooth"], c["monotone"], c["simple"], c["fset"],
            lip_grad=float(c["lip_grad"]), lip_op=float(c["lip_op"]),
            norm_kind=c.get("norm_kind", "l2"),
            known_solution=c.get("known_solution"), descriptor={"seed": seed},
        )

    raise ConfigurationError(f"unknown instance kind {kind!r}")


# ---------------------------------------------------------------------------
# stochastic oracles

@dataclass
class NoiseRecord:
    """Exact oracle errors for one iteration: two operator draws, one gradient draw."""

    dh_anchor: np.ndarray  # operator noise at the anchor point (first draw)
    dg_mid: np.ndarray  # gradient noise at the blend point
    dh_trial: np.ndarray  # operator noise at the trial point (second draw)


class NoiseLog:
    """Per-iteration noise records, kept by the harness which sees both sides."""

    def __init__(self):
        self.records: list[NoiseRecord] = []

    def append(self, record: NoiseRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


class StochasticOracle:
    """Unbiased noisy first-order oracle with a certified variance budget.

    Gaussian noise uses per-coordinate deviation
    sigma * sqrt((1 - exp(-2/d)) / 2), which gives
    E exp(||delta||_2^2 / sigma^2) = e exactly and E ||delta||_2^2 <= sigma^2.
    Bounded-uniform noise uses half-width sigma / sqrt(d), so
    ||delta||_2 <= sigma almost surely.  Both certificates transfer to every
    dual norm dominated by l2 (l-infinity and the blockwise mixes used here),
    so the declared budget is valid in the geometry's dual norm as well.

    One oracle instance drives one run; replications get independent seeds.
    """

    def __init__(self, base: ProblemSpec, noise_kind: str = "gaussian",
                 sigma_g: float = 0.0, sigma_h: float = 0.0, seed: int = 0):
        if noise_kind not in ("gaussian", "uniform"):
            raise ConfigurationError(f"unknown noise kind {noise_kind!r}")
        if sigma_g < 0 or sigma_h < 0:
            raise ConfigurationError("noise levels must be nonnegative")
        self.base = base
        self.noise_kind = noise_kind
        self.sigma_g = float(sigma_g)
        self.sigma_h = float(sigma_h)
        self.seed = int(seed)
        self.rng = np.random.default_rng(seed)
        self.n_grad_calls = 0
        self.n_op_calls = 0

    def _draw(self, sigma: float) -> np.ndarray:
        d = self.base.dim
        if sigma == 0.0:
            return np.zeros(d)
        if self.noise_kind == "gaussian":
            scale = sigma * np.sqrt((1.0 - np.exp(-2.0 / d)) / 2.0)
            return scale * self.rng.standard_normal(d)
        return self.rng.uniform(-sigma / np.sqrt(d), sigma / np.sqrt(d), d)

    def sample_grad(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noisy grad G(u); returns (value, exact error)."""
        self.n_grad_calls += 1
        true = self.base.smooth.grad(u)
        out = true + self._draw(self.sigma_g)
        return out, out - true

    def sample_op(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noisy H(u); returns (value, exact error)."""
        self.n_op_calls += 1
        true = self.base.monotone.op(u)
        out = true + self._draw(self.sigma_h)
        return out, out - true


def sample_oracles(oracle: StochasticOracle, point_anchor, point_trial, point_mid, t: int):
    """One iteration's worth of oracle calls, in the solver's draw order.

    Exactly two operator draws (anchor first, trial second) and one gradient
    draw per iteration.  Returns the three noisy values plus the noise record.
    """
    if t < 1:
        raise ValueError("iteration index starts at 1")
    h_anchor, dh_anchor = oracle.sample_op(point_anchor)
    g_mid, dg_mid = oracle.sample_grad(point_mid)
    h_trial, dh_trial = oracle.sample_op(point_trial)
    return h_anchor, h_trial, g_mid, NoiseRecord(dh_anchor, dg_mid, dh_trial)
