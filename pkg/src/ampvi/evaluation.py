"""Gap evaluation, perturbation certificates, and bound verification.

For bounded feasible sets the solution quality of a candidate is the
supremum of the merit pairing over the set (``gap_bounded``); instance
families with exploitable structure get exact suprema, everything else gets a
certified lower bound.  For unbounded sets the quality statement is a
certificate pair (perturbation vector, residual) extracted from the
trajectory; ``gap_perturbed`` probes the certified inequality from below.

``verify_bounds`` turns trajectories into pass/fail evidence against the
schedule's guaranteed bounds, per iteration (deterministic), in sample mean
(noisy), or in tail frequency (noisy, light-tail regime).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StatisticsError, UnboundedDomainError
from .geometry import Box, GeometrySetup, Product, Simplex
from .problems import (
    BilinearCoupling,
    DiagQuadratic,
    ProblemSpec,
    ZeroOperator,
    gap_term,
)
from .schedules import Schedule, TheoreticalBound, tail_probability, theoretical_bound
from .solvers import Trajectory

__all__ = [
    "GapValue",
    "Certificate",
    "GapRow",
    "GapReport",
    "gap_bounded",
    "gap_perturbed",
    "certificate_det",
    "certificate_stoch",
    "verify_bounds",
    "fit_slope",
    "FitResult",
]


@dataclass(frozen=True)
class GapValue:
    """Gap evaluation result; ``exact`` is False for the fallback lower bound."""

    value: float
    exact: bool


# ---------------------------------------------------------------------------
# bounded-set gap

def _linear_extreme(c: np.ndarray, pad: float, maximize: bool) -> float:
    # extreme value of <c, y> over the padded simplex
    span = 1.0 - c.size * pad
    peak = float(c.max()) if maximize else float(c.min())
    return pad * float(c.sum()) + span * peak


def _gap_bilinear(problem: ProblemSpec, cand: np.ndarray) -> float:
    coupling: BilinearCoupling = problem.monotone
    sx, sy = problem.fset.parts
    x, y = cand[: sx.dim], cand[sx.dim:]
    best_y = _linear_extreme(coupling.matrix.T @ x, sy.pad, maximize=True)
    worst_x = _linear_extreme(coupling.matrix @ y, sx.pad, maximize=False)
    return best_y - worst_x


def _composite_box_min(problem: ProblemSpec, fset: Box) -> float:
    smooth: DiagQuadratic = problem.smooth
    lam = problem.simple.weight if not problem.simple.is_zero else 0.0
    shrink = np.divide(lam, smooth.coeffs, out=np.zeros_like(smooth.coeffs),
                       where=smooth.coeffs > 0)
    best = np.sign(smooth.center) * np.maximum(np.abs(smooth.center) - shrink, 0.0)
    if lam > 0:
        best = np.where(smooth.coeffs > 0, best, 0.0)
    best = np.clip(best, fset.lower, fset.upper)
    return problem.smooth.value(best) + problem.simple.value(best)


def _gap_fallback(problem: ProblemSpec, cand: np.ndarray, starts: int, rng) -> float:
    # multi-start projected compass search; any feasible probe certifies a
    # lower bound on the supremum, so this is honest but possibly loose
    fset = problem.fset
    best = gap_term(problem, cand, cand)  # = 0
    points = [cand.copy(), fset.start_point()]
    if problem.known_solution is not None:
        points.append(problem.known_solution.copy())
    for _ in range(starts):
        points.append(fset.project(cand + rng.standard_normal(fset.dim)))
    for u0 in points:
        u = u0
        val = gap_term(problem, cand, u)
        step = 0.5
        while step > 1e-6:
            improved = False
            for k in range(fset.dim):
                for sgn in (1.0, -1.0):
                    cu = u.copy()
                    cu[k] += sgn * step
                    cu = fset.project(cu)
                    cv = gap_term(problem, cand, cu)
                    if cv > val + 1e-15:
                        u, val = cu, cv
                        improved = True
            if not improved:
                step *= 0.5
        best = max(best, val)
    return best


def gap_bounded(problem: ProblemSpec, setup: GeometrySetup, cand: np.ndarray,
                fallback_starts: int = 8, seed: int = 0) -> GapValue:
    """Worst-case merit of ``cand`` over a bounded feasible set.

    Exact for the bilinear game on simplexes (linear maximization over the
    padded vertices) and for the separable quadratic over a box; otherwise a
    certified lower bound obtained by multi-start projected search.
    """
    if not problem.fset.is_bounded:
        raise UnboundedDomainError(
            "gap over an unbounded set is ill-defined; use certificates and gap_perturbed"
        )
    if (
        problem.kind == "bilinear-saddle"
        and isinstance(problem.monotone, BilinearCoupling)
        and isinstance(problem.fset, Product)
        and all(isinstance(p, Simplex) for p in problem.fset.parts)
        and problem.simple.is_zero
    ):
        return GapValue(_gap_bilinear(problem, cand), exact=True)
    if (
        problem.kind == "quadratic-min"
        and isinstance(problem.smooth, DiagQuadratic)
        and isinstance(problem.monotone, ZeroOperator)
        and isinstance(problem.fset, Box)
    ):
        own = problem.smooth.value(cand) + problem.simple.value(cand)
        return GapValue(own - _composite_box_min(problem, problem.fset), exact=True)
    rng = np.random.default_rng(seed)
    return GapValue(_gap_fallback(problem, cand, fallback_starts, rng), exact=False)


def gap_perturbed(problem: ProblemSpec, cand: np.ndarray, perturbation: np.ndarray,
                  probes) -> float:
    """Lower bound on the perturbed gap: max over probes of
    merit(cand, u) - <perturbation, cand - u>.

    For a valid certificate this never exceeds the certificate residual.
    """
    probes = list(probes)
    if not probes:
        raise ValueError("need at least one probe point")
    vals = [
        gap_term(problem, cand, u) - float(perturbation @ (cand - u)) for u in probes
    ]
    return max(vals)


# ---------------------------------------------------------------------------
# certificates

@dataclass
class Certificate:
    """Perturbation vector and residual witnessing approximate optimality.

    ``simulation_side`` marks certificates that needed exact oracle errors
    (only a simulator can grant that access).  When the start-to-solution
    distance is known the guaranteed bounds are attached.
    """

    perturbation: np.ndarray
    residual: float
    regime: str
    simulation_side: bool = False
    bounds: TheoreticalBound | None = None

    @property
    def perturbation_norm(self) -> float:
        return float(np.linalg.norm(self.perturbation))


def _anchor_trial_gap_sq(traj: Trajectory) -> float:
    return sum(
        float(np.sum((traj.anchors[i - 1] - traj.trials[i]) ** 2))
        for i in range(1, traj.n_iters + 1)
    )


def _check_euclidean(traj: Trajectory):
    if traj.setup.dgf_kind != "half_sq" or traj.setup.mu != 1.0:
        raise ConfigurationError(
            "unbounded-set certificates assume the Euclidean setup with mu = 1"
        )


def certificate_det(traj: Trajectory, schedule: Schedule,
                    start_dist: float | None = None) -> Certificate:
    """Certificate for a deterministic run on an unbounded set.

    The perturbation is the scaled anchor displacement; the residual follows
    from the trajectory energy with the schedule's certified contraction.
    """
    _check_euclidean(traj)
    if schedule.contraction_sq is None or schedule.regime != "det-unbounded":
        raise ConfigurationError("deterministic certificates need a det-unbounded schedule")
    t = traj.n_iters
    a, g = schedule.alpha(t), schedule.gamma(t)
    r1, r_end, agg = traj.anchors[0], traj.anchors[t], traj.aggs[t]
    perturbation = (a / g) * (r1 - r_end)
    residual = (a / (2.0 * g)) * (
        float(np.sum((r1 - agg) ** 2))
        - float(np.sum((r_end - agg) ** 2))
        - (1.0 - schedule.contraction_sq) * _anchor_trial_gap_sq(traj)
    )
    bounds = None
    if start_dist is not None:
        bounds = theoretical_bound(schedule, t, start_dist=start_dist)
    return Certificate(perturbation, residual, schedule.regime, False, bounds)


def certificate_stoch(traj: Trajectory, schedule: Schedule,
                      start_dist: float | None = None) -> Certificate:
    """Simulation-side certificate for a noisy run on an unbounded set.

    Uses the recorded exact oracle errors and the shadow sequence; the
    residual adds the accumulated noise energy term.
    """
    _check_euclidean(traj)
    if traj.noise is None or not traj.shadows:
        raise ConfigurationError("stochastic certificate needs the run's noise log")
    if (
        schedule.contraction_sq is None
        or schedule.curvature_share is None
        or schedule.regime != "stoch-unbounded"
    ):
        raise ConfigurationError("stochastic certificates need a stoch-unbounded schedule")
    t = traj.n_iters
    a, g = schedule.alpha(t), schedule.gamma(t)
    q, cs = schedule.curvature_share, schedule.contraction_sq
    r1, r_end, agg = traj.anchors[0], traj.anchors[t], traj.aggs[t]
    shadow_end = traj.shadows[t]
    perturbation = (a / g) * ((r1 - r_end) + (r1 - shadow_end))

    noise_energy = 0.0
    for i in range(1, t + 1):
        rec = traj.noise[i - 1]
        ai, gi, di = schedule.alpha(i), schedule.gamma(i), schedule.decay(i)
        w_i = ai / di
        pair = rec.dh_trial + rec.dg_mid
        noise_energy += (w_i * gi / 2.0) * float(pair @ pair)
        noise_energy += (w_i * gi / (2.0 * (1.0 - q))) * float(rec.dg_mid @ rec.dg_mid)
        noise_energy += (3.0 * w_i * gi / 2.0) * (
            float(rec.dh_trial @ rec.dh_trial) + float(rec.dh_anchor @ rec.dh_anchor)
        )
        noise_energy -= w_i * float(rec.dg_mid @ (traj.anchors[i - 1] - traj.shadows[i - 1]))
        noise_energy -= w_i * float(rec.dh_trial @ (traj.trials[i] - traj.shadows[i - 1]))

    residual = (a / (2.0 * g)) * (
        2.0 * float(np.sum((r1 - agg) ** 2))
        - float(np.sum((r_end - agg) ** 2))
        - float(np.sum((shadow_end - agg) ** 2))
        - (q - cs) * _anchor_trial_gap_sq(traj)
    ) + schedule.decay(t) * noise_energy
    bounds = None
    if start_dist is not None:
        bounds = theoretical_bound(schedule, t, start_dist=start_dist)
    return Certificate(perturbation, residual, schedule.regime, True, bounds)


# ---------------------------------------------------------------------------
# bound verification

@dataclass
class GapRow:
    t: int
    alpha: float
    gamma: float
    measured: float
    bound: float | None
    ratio: float | None


@dataclass
class FitResult:
    slope: float
    n_points: int
    window: tuple[int, int]


@dataclass
class GapReport:
    """Per-iteration evidence table plus summary statistics."""

    regime: str
    mode: str
    rows: list[GapRow] = field(default_factory=list)
    slope: FitResult | None = None
    n_replications: int = 1
    checkpoints: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)
    gap_exact: bool = True

    @property
    def max_ratio(self) -> float:
        ratios = [r.ratio for r in self.rows if r.ratio is not None]
        return max(ratios) if ratios else math.nan


def fit_slope(ts, values, window: tuple[int, int] | None = None,
              floor: float = 1e-12) -> FitResult:
    """Least-squares slope of log(value) against log(t).

    Defaults to the trailing half of the series; points at or below ``floor``
    are treated as numerical zeros and dropped.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        lo = int(ts[-1] // 2) if ts.size else 1
        window = (max(lo, 1), int(ts[-1]) if ts.size else 1)
    keep = (ts >= window[0]) & (ts <= window[1]) & (values > floor)
    if keep.sum() < 2:
        raise StatisticsError("not enough points above the noise floor for a slope fit")
    x = np.log(ts[keep])
    y = np.log(values[keep])
    slope = float(np.polyfit(x, y, 1)[0])
    return FitResult(slope, int(keep.sum()), window)


def _measured_gaps(traj: Trajectory, problem: ProblemSpec, setup: GeometrySetup):
    vals = np.empty(traj.n_iters)
    exact = True
    for t in range(1, traj.n_iters + 1):
        gv = gap_bounded(problem, setup, traj.agg_after(t))
        vals[t - 1] = gv.value
        exact = exact and gv.exact
    return vals, exact


def verify_bounds(
    trajectories,
    *,
    problem: ProblemSpec,
    setup: GeometrySetup,
    schedule: Schedule,
    mode: str = "per-iteration",
    diameter_sq: float | None = None,
    checkpoints=None,
    lam: float = 4.0,
    tail_at: int | None = None,
    slope_window: tuple[int, int] | None = None,
    use_rate_form: bool = True,
) -> GapReport:
    """Check measured gaps against the schedule's guarantees.

    ``per-iteration``: one trajectory; the measured gap must stay below the
    schedule-exact bound at every step.  ``expectation``: >= 30 replications;
    the sample-mean gap is compared with the mean bound at the requested
    checkpoints.  ``tail``: replications again; empirical frequency of gaps
    above (mean bound + lam * tail scale) at one iteration index, compared
    with the guaranteed tail probability.
    """
    single = isinstance(trajectories, Trajectory)
    trajs = [trajectories] if single else list(trajectories)
    if not trajs:
        raise ValueError("no trajectories given")
    report = GapReport(schedule.regime, mode, n_replications=len(trajs))

    if mode == "per-iteration":
        if len(trajs) != 1:
            raise ValueError("per-iteration mode takes a single trajectory")
        traj = trajs[0]
        gaps, exact = _measured_gaps(traj, problem, setup)
        report.gap_exact = exact
        for t in range(1, traj.n_iters + 1):
            tb = theoretical_bound(schedule, t, diameter_sq=diameter_sq)
            bound = tb.gap_bound
            ratio = gaps[t - 1] / bound if bound else None
            report.rows.append(GapRow(t, schedule.alpha(t), schedule.gamma(t),
                                      gaps[t - 1], bound, ratio))
        ts = np.arange(1, traj.n_iters + 1)
        try:
            report.slope = fit_slope(ts, gaps, slope_window)
        except StatisticsError:
            report.slope = None
        return report

    if mode not in ("expectation", "tail"):
        raise ValueError(f"unknown verification mode {mode!r}")
    if len(trajs) < 30:
        raise StatisticsError("expectation and tail checks need at least 30 replications")
    n_iters = trajs[0].n_iters
    if any(tr.n_iters != n_iters for tr in trajs):
        raise ValueError("replications must share the iteration count")

    all_gaps = np.empty((len(trajs), n_iters))
    exact = True
    for k, tr in enumerate(trajs):
        all_gaps[k], ex = _measured_gaps(tr, problem, setup)
        exact = exact and ex
    report.gap_exact = exact

    if mode == "expectation":
        mean = all_gaps.mean(axis=0)
        checkpoints = checkpoints or [n_iters]
        for t in range(1, n_iters + 1):
            tb = theoretical_bound(schedule, t, diameter_sq=diameter_sq)
            bound = tb.mean_gap_bound_rate if use_rate_form else tb.mean_gap_bound
            ratio = mean[t - 1] / bound if bound else None
            report.rows.append(GapRow(t, schedule.alpha(t), schedule.gamma(t),
                                      mean[t - 1], bound, ratio))
        for t in checkpoints:
            tb = theoretical_bound(schedule, int(t), diameter_sq=diameter_sq)
            bound = tb.mean_gap_bound_rate if use_rate_form else tb.mean_gap_bound
            report.checkpoints[int(t)] = {
                "mean_gap": float(mean[t - 1]),
                "bound": bound,
                "holds": bool(bound is not None and mean[t - 1] <= bound),
            }
        ts = np.arange(1, n_iters + 1)
        try:
            report.slope = fit_slope(ts, mean, slope_window)
        except StatisticsError:
            report.slope = None
        return report

    # tail mode
    t = tail_at or n_iters
    tb = theoretical_bound(schedule, int(t), diameter_sq=diameter_sq)
    if use_rate_form:
        level = tb.mean_gap_bound_rate + lam * tb.tail_scale_rate
    else:
        level = tb.mean_gap_bound + lam * tb.tail_scale
    freq = float(np.mean(all_gaps[:, t - 1] > level))
    report.tail = {
        "t": int(t),
        "lam": lam,
        "level": level,
        "frequency": freq,
        "budget": tail_probability(lam),
        "holds": freq <= tail_probability(lam),
    }
    return report
