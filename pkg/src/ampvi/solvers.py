"""Accelerated extrapolated-prox solvers for monotone VIs.

One iteration of the accelerated method, from the anchor point r and the
running aggregate:

    mid       = (1 - alpha_t) * agg + alpha_t * r          # gradient blend
    trial     = prox at r of gamma_t * (H(r) + grad G(mid))
    r_next    = prox at r of gamma_t * (H(trial) + grad G(mid))
    agg_next  = (1 - alpha_t) * agg + alpha_t * trial

The solver output after t iterations is the aggregate.  Each iteration costs
one gradient and two operator evaluations.  The stochastic variant replaces
the three evaluations by oracle draws (same pattern: two operator draws, one
gradient draw) and additionally advances a shadow point that accumulates the
oracle errors through noise-only prox steps; the shadow feeds the
simulation-side certificates for unbounded runs.

The classical extrapolated-prox baseline (extragradient in the Euclidean
case) is the same core step with alpha == 1, the smooth gradient folded into
the operator, and a uniform ergodic average as output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import FeasibleSet, GeometrySetup, SimpleTerm, prox_map
from .problems import NoiseLog, NoiseRecord, ProblemSpec, StochasticOracle
from .schedules import Schedule

__all__ = [
    "IterateState",
    "Trajectory",
    "amp_step_det",
    "amp_step_stoch",
    "run",
    "run_mirror_prox",
    "run_extragradient",
]


@dataclass
class IterateState:
    """All live points at the start of iteration t (shadow only for noisy runs)."""

    t: int
    anchor: np.ndarray
    trial: np.ndarray
    mid: np.ndarray | None
    agg: np.ndarray
    shadow: np.ndarray | None = None


class Trajectory:
    """Full iterate history of one run plus oracle accounting.

    Index convention: ``anchors[i]``, ``trials[i]`` and ``aggs[i]`` hold the
    points with time index i+1, so ``aggs[t]`` is the solver output after t
    iterations.  ``mids[i]`` is the blend point used during iteration i+1.
    """

    def __init__(self, mode: str, schedule: Schedule | None,
                 setup: GeometrySetup, fset: FeasibleSet):
        self.mode = mode
        self.schedule = schedule
        self.setup = setup
        self.fset = fset
        self.anchors: list[np.ndarray] = []
        self.trials: list[np.ndarray] = []
        self.mids: list[np.ndarray] = []
        self.aggs: list[np.ndarray] = []
        self.shadows: list[np.ndarray] = []
        self.noise: NoiseLog | None = None
        self.n_iters = 0
        self.grad_evals = 0
        self.op_evals = 0
        self.wall_time = 0.0

    @property
    def output(self) -> np.ndarray:
        return self.aggs[-1]

    def agg_after(self, t: int) -> np.ndarray:
        """Solver output after t iterations."""
        return self.aggs[t]

    def state(self, t: int) -> IterateState:
        return IterateState(
            t,
            anchor=self.anchors[t - 1],
            trial=self.trials[t - 1],
            mid=self.mids[t - 1] if t <= len(self.mids) else None,
            agg=self.aggs[t - 1],
            shadow=self.shadows[t - 1] if self.shadows else None,
        )

    def recompute_agg(self, t: int) -> np.ndarray:
        """Rebuild the aggregate after t steps from the trial history.

        The recursion is a running convex combination; expanding it gives
        decay(t) * sum_i (alpha_i / decay_i) * trial_{i+1}, which this method
        evaluates directly as an independent cross-check.
        """
        sched = self.schedule
        acc = np.zeros_like(self.aggs[0])
        for i in range(1, t + 1):
            acc += sched.alpha(i) / sched.decay(i) * self.trials[i]
        return sched.decay(t) * acc


def _core_step(setup, fset, simple, anchor, agg, alpha_t, gamma_t, op_eval, grad_eval):
    # evaluation order fixed: operator at anchor, gradient at mid, operator at
    # trial -- noisy runs rely on this draw order for reproducibility
    mid = (1.0 - alpha_t) * agg + alpha_t * anchor
    op_anchor = op_eval(anchor)
    grad_mid = grad_eval(mid)
    trial = prox_map(setup, fset, anchor, gamma_t * (op_anchor + grad_mid), simple, gamma_t)
    op_trial = op_eval(trial)
    new_anchor = prox_map(setup, fset, anchor, gamma_t * (op_trial + grad_mid), simple, gamma_t)
    new_agg = (1.0 - alpha_t) * agg + alpha_t * trial
    return mid, trial, new_anchor, new_agg


def amp_step_det(state: IterateState, problem: ProblemSpec, setup: GeometrySetup,
                 fset: FeasibleSet, alpha_t: float, gamma_t: float) -> IterateState:
    """One deterministic iteration (one gradient, two operator evaluations)."""
    mid, trial, anchor, agg = _core_step(
        setup, fset, problem.simple, state.anchor, state.agg, alpha_t, gamma_t,
        problem.monotone.op, problem.smooth.grad,
    )
    return IterateState(state.t + 1, anchor, trial, mid, agg, state.shadow)


def amp_step_stoch(state: IterateState, oracle: StochasticOracle, setup: GeometrySetup,
                   fset: FeasibleSet, alpha_t: float, gamma_t: float
                   ) -> tuple[IterateState, NoiseRecord]:
    """One noisy iteration; also advances the shadow point along the noise.

    The shadow move uses the exact oracle errors (simulation-truth access) and
    a plain prox with no simple term:  shadow' = prox at shadow of
    -gamma_t * (op-error at trial + gradient error).
    """
    op_errs: list[np.ndarray] = []
    grad_errs: list[np.ndarray] = []

    def op_eval(u):
        val, delta = oracle.sample_op(u)
        op_errs.append(delta)
        return val

    def grad_eval(u):
        val, delta = oracle.sample_grad(u)
        grad_errs.append(delta)
        return val

    mid, trial, anchor, agg = _core_step(
        setup, fset, oracle.base.simple, state.anchor, state.agg, alpha_t, gamma_t,
        op_eval, grad_eval,
    )
    record = NoiseRecord(op_errs[0], grad_errs[0], op_errs[1])
    drift = record.dh_trial + record.dg_mid
    shadow = prox_map(setup, fset, state.shadow, -gamma_t * drift,
                      SimpleTerm.zero(), gamma_t)
    return IterateState(state.t + 1, anchor, trial, mid, agg, shadow), record


class _Counting:
    """Run-local call counter around a pure evaluation."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, u):
        self.calls += 1
        return self.fn(u)


def _no_grad(u):
    # baseline folds the gradient into the operator; the blend point is unused
    return 0.0


def run(target, setup: GeometrySetup, fset: FeasibleSet, schedule: Schedule,
        iterations: int, mode: str | None = None, start: np.ndarray | None = None
        ) -> Trajectory:
    """Run the accelerated solver for a fixed number of iterations.

    ``target`` is a ProblemSpec (deterministic) or a StochasticOracle (noisy);
    ``mode`` ("det" / "stoch") is inferred from the target when omitted.
    Unbounded-regime schedules carry an iteration budget; running past it is a
    configuration error because the admissibility condition was only verified
    up to the budget.
    """
    inferred = "stoch" if isinstance(target, StochasticOracle) else "det"
    if mode is None:
        mode = inferred
    if mode != inferred:
        raise ConfigurationError(f"mode {mode!r} does not match target type")
    if iterations < 1:
        raise ConfigurationError("need at least one iteration")
    if schedule.horizon is not None and iterations > schedule.horizon:
        raise ConfigurationError(
            f"schedule validated up to t={schedule.horizon}, got iterations={iterations}"
        )
    problem = target.base if mode == "stoch" else target
    start = fset.start_point() if start is None else np.asarray(start, dtype=float)
    if not fset.contains(start, tol=1e-9):
        raise ConfigurationError("start point is outside the feasible set")

    traj = Trajectory(mode, schedule, setup, fset)
    state = IterateState(1, start.copy(), start.copy(), None, start.copy(),
                         start.copy() if mode == "stoch" else None)
    traj.anchors.append(state.anchor)
    traj.trials.append(state.trial)
    traj.aggs.append(state.agg)
    if mode == "stoch":
        traj.shadows.append(state.shadow)
        traj.noise = NoiseLog()
        grad_calls0, op_calls0 = target.n_grad_calls, target.n_op_calls
    else:
        op_count = _Counting(problem.monotone.op)
        grad_count = _Counting(problem.smooth.grad)

    tic = time.perf_counter()
    for t in range(1, iterations + 1):
        a_t, g_t = schedule.alpha(t), schedule.gamma(t)
        if mode == "det":
            mid, trial, anchor, agg = _core_step(
                setup, fset, problem.simple, state.anchor, state.agg, a_t, g_t,
                op_count, grad_count,
            )
            state = IterateState(t + 1, anchor, trial, mid, agg)
        else:
            state, record = amp_step_stoch(state, target, setup, fset, a_t, g_t)
            traj.noise.append(record)
            traj.shadows.append(state.shadow)
        traj.mids.append(state.mid)
        traj.trials.append(state.trial)
        traj.anchors.append(state.anchor)
        traj.aggs.append(state.agg)
    traj.wall_time = time.perf_counter() - tic

    traj.n_iters = iterations
    if mode == "stoch":
        traj.grad_evals = target.n_grad_calls - grad_calls0
        traj.op_evals = target.n_op_calls - op_calls0
    else:
        traj.grad_evals = grad_count.calls
        traj.op_evals = op_count.calls
    return traj


def run_mirror_prox(problem: ProblemSpec, setup: GeometrySetup, fset: FeasibleSet,
                    iterations: int, gamma: float | None = None,
                    start: np.ndarray | None = None) -> Trajectory:
    """Classical extrapolated-prox baseline with a constant stepsize.

    The smooth gradient is folded into the operator, so each iteration costs
    two evaluations of both.  Requires gamma <= mu / (lip_grad + lip_op); the
    output sequence is the uniform ergodic average of the trial points.
    """
    lip_total = problem.lip_grad + problem.lip_op
    if lip_total <= 0:
        raise ConfigurationError("baseline needs a positive Lipschitz constant")
    step_cap = setup.mu / lip_total
    if gamma is None:
        gamma = step_cap
    if gamma > step_cap * (1.0 + 1e-12) or gamma <= 0:
        raise ConfigurationError(f"baseline stepsize must lie in (0, {step_cap:.3e}]")

    start = fset.start_point() if start is None else np.asarray(start, dtype=float)
    if not fset.contains(start, tol=1e-9):
        raise ConfigurationError("start point is outside the feasible set")

    folded = _Counting(problem.operator)
    schedule = Schedule.custom(lambda t: 1.0, lambda t, g=gamma: g, regime="mirror-prox")
    traj = Trajectory("det", schedule, setup, fset)
    anchor = start.copy()
    traj.anchors.append(anchor)
    traj.trials.append(start.copy())
    traj.aggs.append(start.copy())
    running = np.zeros_like(start)

    tic = time.perf_counter()
    for t in range(1, iterations + 1):
        mid, trial, anchor, _ = _core_step(
            setup, fset, problem.simple, anchor, traj.aggs[-1], 1.0, gamma,
            folded, _no_grad,
        )
        running += trial
        traj.mids.append(mid)
        traj.trials.append(trial)
        traj.anchors.append(anchor)
        traj.aggs.append(running / t)
    traj.wall_time = time.perf_counter() - tic

    traj.n_iters = iterations
    traj.op_evals = folded.calls  # each folded call is one gradient + one operator
    traj.grad_evals = folded.calls
    return traj


def run_extragradient(problem: ProblemSpec, setup: GeometrySetup, fset: FeasibleSet,
                      iterations: int, gamma: float | None = None,
                      start: np.ndarray | None = None) -> Trajectory:
    """Euclidean special case of the extrapolated-prox baseline."""
    if setup.dgf_kind != "half_sq":
        raise ConfigurationError("extragradient is the Euclidean baseline")
    return run_mirror_prox(problem, setup, fset, iterations, gamma, start)
