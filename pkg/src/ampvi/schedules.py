"""Stepsize schedules and the non-asymptotic bounds they certify.

A schedule supplies three sequences for the accelerated solver: the blend
weight ``alpha(t)`` (with alpha(1) = 1), the prox stepsize ``gamma(t)``, and
the cumulative decay factor ``decay(t) = prod_{1<i<=t} (1 - alpha(i))`` with
decay(1) = 1.  Every published regime uses alpha(t) = 2/(t+1), for which
decay(t) = 2/(t(t+1)) in closed form.

Four regimes are provided, each validated at construction against its
admissibility condition:

* ``det-bounded``    gamma = mu*t / (2*(Lg + Lh*t)); needs
                     mu - Lg*a*g - Lh^2 g^2/mu >= 0 and a nondecreasing
                     alpha/(decay*gamma) ratio.
* ``det-unbounded``  gamma = t / (3*(Lg + Lh*N)); needs
                     Lg*a*g + Lh^2 g^2 <= c^2 < 1 (here c^2 = 2/3) and a
                     constant ratio.  Euclidean geometry with mu = 1.
* ``stoch-bounded``  gamma = mu*t / (4Lg + 3Lh*t + sigma*(t+1)*sqrt(mu*t)/(sqrt(2)*Omega));
                     needs q*mu - Lg*a*g - 3Lh^2 g^2/mu >= 0 (q = 5/6) and a
                     nondecreasing ratio.
* ``stoch-unbounded`` gamma = t / (5Lg + 3Lh*N + sigma*N*sqrt(N-1)/dist_guess);
                     needs Lg*a*g + 3Lh^2 g^2 <= c^2 < q (c^2 = 5/12,
                     q = 5/6) and a constant ratio.  Euclidean, mu = 1.

``theoretical_bound`` evaluates, for a schedule and iteration count, the gap /
certificate bounds guaranteed at that point: both the schedule-exact forms and
the published closed rate forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScheduleError

__all__ = [
    "REGIMES",
    "ScheduleConstants",
    "Schedule",
    "decay_seq",
    "make_schedule",
    "TheoreticalBound",
    "theoretical_bound",
    "tail_probability",
]

REGIMES = ("det-bounded", "det-unbounded", "stoch-bounded", "stoch-unbounded")

_PROBE_DEFAULT = 10**6  # horizon-free regimes are probed log-sampled up to here
_COND_TOL = 1e-9


@dataclass(frozen=True)
class ScheduleConstants:
    """Problem constants a schedule is built from."""

    mu: float = 1.0
    lip_grad: float = 0.0
    lip_op: float = 0.0
    sigma_g: float = 0.0
    sigma_h: float = 0.0
    diameter_sq: float | None = None  # squared Bregman diameter of the feasible set
    horizon: int | None = None  # fixed iteration budget (unbounded regimes)
    dist_guess: float | None = None  # guess for the start-to-solution distance

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_g**2 + self.sigma_h**2)


def decay_seq(alpha, t: int) -> float:
    """Cumulative decay of the blend weights by exact recursion.

    decay(1) = 1 and decay(t) = (1 - alpha(t)) * decay(t-1); requires
    alpha(1) = 1 and alpha(t) in [0, 1) afterwards.
    """
    if t < 1:
        raise ValueError("iteration index starts at 1")
    if alpha(1) != 1.0:
        raise ValueError("blend weight at t=1 must equal 1")
    g = 1.0
    for i in range(2, t + 1):
        a = alpha(i)
        if not 0.0 <= a < 1.0:
            raise ValueError(f"blend weight out of [0,1) at t={i}")
        g *= 1.0 - a
    return g


class Schedule:
    """Bundled (alpha, gamma, decay) generators plus certified regime constants.

    ``contraction_sq`` is the certified bound on the per-step contraction term
    of the regime condition; ``curvature_share`` is the certified fraction of
    the curvature budget consumed by it (stochastic regimes).  Both feed the
    certificate formulas.
    """

    def __init__(self, regime, constants, alpha_fn, gamma_fn,
                 contraction_sq=None, curvature_share=None, standard_alpha=True):
        self.regime = regime
        self.constants = constants
        self._alpha = alpha_fn
        self._gamma = gamma_fn
        self.contraction_sq = contraction_sq
        self.curvature_share = curvature_share
        self._standard_alpha = standard_alpha
        self._decay_cache = [1.0]

    # -- sequence access ---------------------------------------------------
    def alpha(self, t: int) -> float:
        if t < 1:
            raise ValueError("iteration index starts at 1")
        return self._alpha(t)

    def gamma(self, t: int) -> float:
        if t < 1:
            raise ValueError("iteration index starts at 1")
        return self._gamma(t)

    def decay(self, t: int) -> float:
        if self._standard_alpha:
            return 2.0 / (t * (t + 1.0))
        if t < 1:
            raise ValueError("iteration index starts at 1")
        while len(self._decay_cache) < t:
            i = len(self._decay_cache) + 1
            self._decay_cache.append(self._decay_cache[-1] * (1.0 - self._alpha(i)))
        return self._decay_cache[t - 1]

    def ratio(self, t: int) -> float:
        """alpha / (decay * gamma); the weight each step carries in the analysis."""
        return self.alpha(t) / (self.decay(t) * self.gamma(t))

    @property
    def horizon(self) -> int | None:
        return self.constants.horizon

    @classmethod
    def custom(cls, alpha_fn, gamma_fn, constants=None, regime="custom"):
        """Unvalidated schedule for baselines and reductions (e.g. alpha == 1)."""
        return cls(regime, constants or ScheduleConstants(), alpha_fn, gamma_fn,
                   standard_alpha=False)

    # -- validation ----------------------------------------------------------
    def _probe_points(self) -> np.ndarray:
        if self.constants.horizon is not None:
            return np.arange(1, self.constants.horizon + 1)
        dense = np.arange(1, 1025)
        sparse = np.unique(np.geomspace(1024, _PROBE_DEFAULT, 200).astype(np.int64))
        return np.concatenate([dense, sparse])

    def validate(self) -> None:
        """Check the regime condition at every probed step; raise on failure."""
        c = self.constants
        ts = self._probe_points()
        alpha = np.array([self._alpha(int(t)) for t in ts])
        gamma = np.array([self._gamma(int(t)) for t in ts])
        decay = np.array([self.decay(int(t)) for t in ts])

        if ts[0] == 1 and alpha[0] != 1.0:
            raise ScheduleError("blend weight at t=1 must equal 1")
        bad = np.where((ts > 1) & ((alpha < 0) | (alpha >= 1)))[0]
        if bad.size:
            raise ScheduleError(f"blend weight out of [0,1) first at t={ts[bad[0]]}")
        if np.any(gamma <= 0):
            t_bad = ts[np.argmax(gamma <= 0)]
            raise ScheduleError(f"stepsize must be positive; fails first at t={t_bad}")

        if self.regime == "det-bounded":
            cond = c.mu - c.lip_grad * alpha * gamma - c.lip_op**2 * gamma**2 / c.mu
            self._require_nonneg(cond, ts, "curvature condition")
            self._require_monotone_ratio(alpha, gamma, decay, ts)
        elif self.regime == "stoch-bounded":
            q = self.curvature_share
            cond = q * c.mu - c.lip_grad * alpha * gamma - 3.0 * c.lip_op**2 * gamma**2 / c.mu
            self._require_nonneg(cond, ts, "curvature condition")
            self._require_monotone_ratio(alpha, gamma, decay, ts)
        elif self.regime == "det-unbounded":
            term = c.lip_grad * alpha * gamma + c.lip_op**2 * gamma**2
            self._require_nonneg(self.contraction_sq - term, ts, "contraction condition")
            self._require_constant_ratio(alpha, gamma, decay, ts)
        elif self.regime == "stoch-unbounded":
            term = c.lip_grad * alpha * gamma + 3.0 * c.lip_op**2 * gamma**2
            self._require_nonneg(self.contraction_sq - term, ts, "contraction condition")
            self._require_constant_ratio(alpha, gamma, decay, ts)
        else:
            raise ScheduleError(f"cannot validate unknown regime {self.regime!r}")

    @staticmethod
    def _require_nonneg(values, ts, label):
        bad = np.where(values < -_COND_TOL)[0]
        if bad.size:
            raise ScheduleError(
                f"{label} violated first at t={ts[bad[0]]} (value {values[bad[0]]:.3e})"
            )

    @staticmethod
    def _require_monotone_ratio(alpha, gamma, decay, ts):
        ratio = alpha / (decay * gamma)
        drops = np.where(np.diff(ratio) < -1e-9 * np.abs(ratio[:-1]))[0]
        if drops.size:
            raise ScheduleError(f"step-weight ratio decreases first at t={ts[drops[0] + 1]}")

    @staticmethod
    def _require_constant_ratio(alpha, gamma, decay, ts):
        ratio = alpha / (decay * gamma)
        dev = np.abs(ratio - ratio[0])
        bad = np.where(dev > 1e-9 * abs(ratio[0]))[0]
        if bad.size:
            raise ScheduleError(f"step-weight ratio not constant first at t={ts[bad[0]]}")


def _std_alpha(t: int) -> float:
    return 2.0 / (t + 1.0)


def make_schedule(
    regime: str,
    *,
    mu: float = 1.0,
    lip_grad: float = 0.0,
    lip_op: float = 0.0,
    sigma_g: float = 0.0,
    sigma_h: float = 0.0,
    diameter_sq: float | None = None,
    horizon: int | None = None,
    dist_guess: float | None = None,
    validate: bool = True,
) -> Schedule:
    """Build the published stepsize schedule for one regime and validate it."""
    if regime not in REGIMES:
        raise ScheduleError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if mu <= 0:
        raise ScheduleError("mu must be positive")
    if lip_grad < 0 or lip_op < 0 or sigma_g < 0 or sigma_h < 0:
        raise ScheduleError("constants must be nonnegative")
    consts = ScheduleConstants(mu, lip_grad, lip_op, sigma_g, sigma_h,
                               diameter_sq, horizon, dist_guess)
    sigma = consts.sigma

    if regime == "det-bounded":
        if lip_grad + lip_op <= 0:
            raise ScheduleError("needs a positive smooth or operator constant")

        def gamma_fn(t, mu=mu, lg=lip_grad, lh=lip_op):
            return mu * t / (2.0 * (lg + lh * t))

        sched = Schedule(regime, consts, _std_alpha, gamma_fn)

    elif regime == "det-unbounded":
        if mu != 1.0:
            raise ScheduleError("unbounded regimes assume the Euclidean setup with mu=1")
        if horizon is None or horizon < 2:
            raise ScheduleError("needs an iteration budget horizon >= 2")
        denom = 3.0 * (lip_grad + lip_op * horizon)
        if denom <= 0:
            raise ScheduleError("needs a positive smooth or operator constant")
        sched = Schedule(regime, consts, _std_alpha, lambda t, d=denom: t / d,
                         contraction_sq=2.0 / 3.0)

    elif regime == "stoch-bounded":
        if sigma > 0 and not (diameter_sq and diameter_sq > 0):
            raise ScheduleError("noisy bounded regime needs the squared diameter")

        def gamma_fn(t, mu=mu, lg=lip_grad, lh=lip_op, s=sigma, osq=diameter_sq):
            denom = 4.0 * lg + 3.0 * lh * t
            if s > 0:
                denom += s * (t + 1.0) * math.sqrt(mu * t) / math.sqrt(2.0 * osq)
            if denom <= 0:
                raise ScheduleError("degenerate schedule: all constants zero")
            return mu * t / denom

        sched = Schedule(regime, consts, _std_alpha, gamma_fn, curvature_share=5.0 / 6.0)

    else:  # stoch-unbounded
        if mu != 1.0:
            raise ScheduleError("unbounded regimes assume the Euclidean setup with mu=1")
        if horizon is None or horizon < 2:
            raise ScheduleError("needs an iteration budget horizon >= 2")
        if sigma > 0 and not (dist_guess and dist_guess > 0):
            raise ScheduleError("noisy unbounded regime needs a positive distance guess")
        denom = 5.0 * lip_grad + 3.0 * lip_op * horizon
        if sigma > 0:
            denom += sigma * horizon * math.sqrt(horizon - 1.0) / dist_guess
        if denom <= 0:
            raise ScheduleError("needs a positive smooth or operator constant")
        sched = Schedule(regime, consts, _std_alpha, lambda t, d=denom: t / d,
                         contraction_sq=5.0 / 12.0, curvature_share=5.0 / 6.0)

    if validate:
        sched.validate()
    return sched


# ---------------------------------------------------------------------------
# bound formulas

@dataclass
class TheoreticalBound:
    """Guaranteed bounds at one iteration count, schedule-exact and rate forms.

    ``*_rate`` fields are the published closed forms with worked constants;
    for unbounded regimes they refer to the schedule horizon and are meant to
    be read at t = horizon - 1.
    """

    regime: str
    t: int
    gap_bound: float | None = None
    gap_bound_rate: float | None = None
    mean_gap_bound: float | None = None
    mean_gap_bound_rate: float | None = None
    tail_scale: float | None = None
    tail_scale_rate: float | None = None
    perturb_bound: float | None = None
    perturb_bound_rate: float | None = None
    residual_bound: float | None = None
    residual_bound_rate: float | None = None


def tail_probability(lam: float) -> float:
    """Probability budget for exceeding the mean bound by lam tail scales."""
    return 2.0 * math.exp(-lam * lam / 3.0) + 3.0 * math.exp(-lam)


def _noise_mass(q: float, sigma_g: float, sigma_h: float) -> float:
    return 4.0 * sigma_h**2 + (1.0 + 1.0 / (2.0 * (1.0 - q))) * sigma_g**2


def _seq_arrays(schedule: Schedule, t: int):
    ts = np.arange(1, t + 1)
    alpha = np.array([schedule.alpha(int(i)) for i in ts])
    gamma = np.array([schedule.gamma(int(i)) for i in ts])
    decay = np.array([schedule.decay(int(i)) for i in ts])
    return alpha, gamma, decay


def max_step_weight(schedule: Schedule, t: int) -> float:
    """max_{i<=t} alpha(i)/decay(i); enters the unbounded residual bound."""
    return max(schedule.alpha(i) / schedule.decay(i) for i in range(1, t + 1))


def theoretical_bound(
    schedule: Schedule,
    t: int,
    *,
    diameter_sq: float | None = None,
    start_dist: float | None = None,
) -> TheoreticalBound:
    """Evaluate every bound the schedule's regime guarantees after t steps."""
    if t < 1:
        raise ValueError("iteration index starts at 1")
    c = schedule.constants
    regime = schedule.regime
    out = TheoreticalBound(regime, t)
    a_t, g_t = schedule.alpha(t), schedule.gamma(t)

    if regime in ("det-bounded", "stoch-bounded"):
        osq = diameter_sq if diameter_sq is not None else c.diameter_sq
        if osq is None:
            raise ScheduleError("bounded-regime bounds need the squared diameter")

    if regime == "det-bounded":
        out.gap_bound = (a_t / g_t) * osq
        out.gap_bound_rate = (
            4.0 * c.lip_grad / (c.mu * t * (t + 1.0)) + 4.0 * c.lip_op / (c.mu * t)
        ) * osq
        return out

    if regime == "stoch-bounded":
        q = schedule.curvature_share
        kappa = _noise_mass(q, c.sigma_g, c.sigma_h)
        alpha, gamma, decay = _seq_arrays(schedule, t)
        dec_t = schedule.decay(t)
        drift = dec_t * float(np.sum(alpha * gamma / decay)) / c.mu
        out.mean_gap_bound = 2.0 * (a_t / g_t) * osq + kappa * drift
        swing = dec_t * (c.sigma_g + c.sigma_h) * math.sqrt(osq) * math.sqrt(
            2.0 / c.mu * float(np.sum((alpha / decay) ** 2))
        )
        out.tail_scale = swing + kappa * drift
        srate = c.sigma_g + c.sigma_h
        base = 16.0 * c.lip_grad * osq / (c.mu * t * (t + 1.0)) + 12.0 * c.lip_op * osq / (
            c.mu * (t + 1.0)
        )
        if srate == 0.0:
            out.mean_gap_bound_rate = base
            out.tail_scale_rate = 0.0
        elif t >= 2:
            noise = 7.0 * srate * math.sqrt(osq) / math.sqrt(c.mu * (t - 1.0))
            out.mean_gap_bound_rate = base + noise
            out.tail_scale_rate = 6.0 * srate * math.sqrt(osq) / math.sqrt(c.mu * (t - 1.0))
        return out

    if start_dist is None:
        raise ScheduleError("unbounded-regime bounds need the start-to-solution distance")
    dist = float(start_dist)
    n = c.horizon

    if regime == "det-unbounded":
        cs = schedule.contraction_sq
        theta_t = schedule.decay(t) / (2.0 * (1.0 - cs)) * max_step_weight(schedule, t)
        out.perturb_bound = 2.0 * a_t * dist / g_t
        out.residual_bound = 3.0 * a_t * (1.0 + theta_t) * dist**2 / g_t
        out.perturb_bound_rate = (
            12.0 * c.lip_grad / (n * (n - 1.0)) + 12.0 * c.lip_op / (n - 1.0)
        ) * dist
        out.residual_bound_rate = (
            45.0 * c.lip_grad / (n * (n - 1.0)) + 45.0 * c.lip_op / (n - 1.0)
        ) * dist**2
        return out

    # stoch-unbounded
    cs, q = schedule.contraction_sq, schedule.curvature_share
    kappa = _noise_mass(q, c.sigma_g, c.sigma_h)
    _, gamma, _ = _seq_arrays(schedule, t)
    var_sum = kappa * float(np.sum(gamma**2))
    theta = max(1.0, cs / (q - cs))
    out.perturb_bound = (a_t / g_t) * (2.0 * dist + 2.0 * math.sqrt(dist**2 + var_sum))
    out.residual_bound = (a_t / g_t) * (
        (3.0 + 6.0 * theta) * dist**2 + (1.0 + 6.0 * theta) * var_sum
    ) + 18.0 * (a_t / g_t) ** 2 * c.sigma_h**2 * float(np.sum(gamma**3))
    sigma = c.sigma
    dg = c.dist_guess if c.dist_guess else dist
    out.perturb_bound_rate = (
        40.0 * c.lip_grad * dist / (n * (n - 1.0))
        + 24.0 * c.lip_op * dist / (n - 1.0)
        + sigma * (8.0 * dist / dg + 5.0) / math.sqrt(n - 1.0)
    )
    out.residual_bound_rate = (
        90.0 * c.lip_grad * dist**2 / (n * (n - 1.0))
        + 54.0 * c.lip_op * dist**2 / (n - 1.0)
        + (sigma * dist / math.sqrt(n - 1.0))
        * (18.0 * dist / dg + (19.0 + 18.0 / n) * dg / dist)
    )
    return out
