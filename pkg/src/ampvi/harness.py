"""Configuration-driven experiment runner.

A config names an instance, a geometry, a schedule regime, an optional noisy
oracle, and a run matrix (solvers, iterations, replications).  Configs are
plain INI files with the sections [instance], [geometry], [schedule],
[oracle], [run], [output]; a JSON file with the same section names as nested
objects is accepted interchangeably.

``run_experiment`` executes every requested solver, attaches per-iteration
gap / certificate evidence with the matching guaranteed bound, aggregates
replications, and returns a report that serializes byte-identically from the
same (config, seeds) pair.  Wall-clock timings are kept out of the emitted
artifacts by default so that reruns stay comparable.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StatisticsError
from .evaluation import fit_slope, gap_bounded
from .geometry import GeometrySetup, bregman_diameter_sq
from .problems import ProblemSpec, StochasticOracle, make_instance
from .schedules import Schedule, make_schedule, theoretical_bound
from .solvers import Trajectory, run, run_extragradient, run_mirror_prox

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "build_components",
    "run_experiment",
    "emit",
    "compare_matrix",
]

SCHEMA_VERSION = 1
KNOWN_SOLVERS = ("amp", "mirror-prox", "extragradient")


def _coerce(text: str):
    low = text.strip()
    try:
        return int(low)
    except ValueError:
        pass
    try:
        return float(low)
    except ValueError:
        pass
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    return low


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    instance_kind: str = "bilinear-saddle"
    dimension: int = 10
    instance_seed: int = 0
    instance_constants: dict = field(default_factory=dict)
    geometry: str = "euclidean"
    regime: str = "det-bounded"
    horizon: int | None = None
    dist_guess: float | str | None = None
    noise_kind: str | None = None
    sigma_g: float = 0.0
    sigma_h: float = 0.0
    iterations: int = 100
    replications: int = 1
    base_seed: int = 1000
    solvers: tuple = ("amp",)
    jobs: int = 1
    record_every: int = 1
    name: str = "experiment"
    out_dir: str = "out"
    out_format: str = "csv"

    @property
    def stochastic(self) -> bool:
        return self.noise_kind is not None and (self.sigma_g > 0 or self.sigma_h > 0)

    # -- loading -------------------------------------------------------------
    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix.lower() == ".json":
            return cls.from_mapping(json.loads(path.read_text()))
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        sections = {s: {k: _coerce(v) for k, v in parser[s].items()} for s in parser.sections()}
        return cls.from_mapping(sections)

    @classmethod
    def from_mapping(cls, sections: dict) -> "ExperimentConfig":
        cfg = cls()
        inst = dict(sections.get("instance", {}))
        cfg.instance_kind = str(inst.pop("kind", cfg.instance_kind))
        cfg.dimension = int(inst.pop("dimension", cfg.dimension))
        cfg.instance_seed = int(inst.pop("seed", cfg.instance_seed))
        cfg.instance_constants = inst
        geo = sections.get("geometry", {})
        cfg.geometry = str(geo.get("kind", cfg.geometry))
        sched = sections.get("schedule", {})
        cfg.regime = str(sched.get("regime", cfg.regime))
        cfg.horizon = int(sched["horizon"]) if "horizon" in sched else None
        cfg.dist_guess = sched.get("dist_guess")
        oracle = sections.get("oracle", {})
        if oracle:
            cfg.noise_kind = str(oracle.get("noise", "gaussian"))
            cfg.sigma_g = float(oracle.get("sigma_g", 0.0))
            cfg.sigma_h = float(oracle.get("sigma_h", 0.0))
        runsec = sections.get("run", {})
        cfg.iterations = int(runsec.get("iterations", cfg.iterations))
        cfg.replications = int(runsec.get("replications", cfg.replications))
        cfg.base_seed = int(runsec.get("base_seed", cfg.base_seed))
        solvers = runsec.get("solvers", "amp")
        if isinstance(solvers, str):
            solvers = [s.strip() for s in solvers.split(",") if s.strip()]
        cfg.solvers = tuple(solvers)
        cfg.jobs = int(runsec.get("jobs", cfg.jobs))
        cfg.record_every = int(runsec.get("record_every", cfg.record_every))
        out = sections.get("output", {})
        cfg.name = str(out.get("name", cfg.name))
        cfg.out_dir = str(out.get("path", cfg.out_dir))
        cfg.out_format = str(out.get("format", cfg.out_format))
        return cfg

    def to_mapping(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        """Reject bad configs (including invalid schedules) before any run."""
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        unknown = set(self.solvers) - set(KNOWN_SOLVERS)
        if unknown:
            raise ConfigurationError(f"unknown solvers: {sorted(unknown)}")
        if self.out_format not in ("csv", "json"):
            raise ConfigurationError("output format must be csv or json")
        if self.stochastic and self.regime.startswith("det-"):
            raise ConfigurationError("noisy oracle configured with a deterministic regime")
        build_components(self)  # raises on instance/geometry/schedule problems


@dataclass
class Components:
    problem: ProblemSpec
    setup: GeometrySetup
    schedule: Schedule
    diameter_sq: float | None
    start_dist: float | None


def build_components(config: ExperimentConfig) -> Components:
    """Materialize instance, geometry, and a validated schedule."""
    constants = dict(config.instance_constants)
    if config.instance_kind == "bilinear-saddle":
        constants.setdefault("geometry", config.geometry)
    problem = make_instance(config.instance_kind, config.dimension, constants,
                            config.instance_seed)
    if config.geometry == "entropy":
        setup = GeometrySetup.entropy()
        if problem.norm_kind != "l1":
            raise ConfigurationError(
                f"instance {config.instance_kind!r} declares constants in l2; "
                "use the euclidean geometry"
            )
    elif config.geometry == "euclidean":
        setup = GeometrySetup.euclidean()
        if problem.norm_kind != "l2":
            raise ConfigurationError(
                f"instance {config.instance_kind!r} declares constants in l1; "
                "use the entropy geometry"
            )
    else:
        raise ConfigurationError(f"unknown geometry {config.geometry!r}")

    diameter_sq = bregman_diameter_sq(setup, problem.fset) if problem.fset.is_bounded else None
    start = problem.fset.start_point()
    start_dist = None
    if problem.known_solution is not None:
        start_dist = float(np.linalg.norm(start - problem.known_solution))

    unbounded = config.regime.endswith("-unbounded")
    horizon = config.horizon
    if unbounded and horizon is None:
        horizon = config.iterations + 1  # run t = 1..N-1, report at the budget
    dist_guess = config.dist_guess
    if dist_guess is True or (isinstance(dist_guess, str) and dist_guess.lower() == "true"):
        if start_dist is None:
            raise ConfigurationError("dist_guess 'true' needs a known solution")
        dist_guess = start_dist
    elif isinstance(dist_guess, str):
        raise ConfigurationError("dist_guess must be a number or 'true'")
    schedule = make_schedule(
        config.regime,
        mu=setup.mu,
        lip_grad=problem.lip_grad,
        lip_op=problem.lip_op,
        sigma_g=config.sigma_g if config.stochastic else 0.0,
        sigma_h=config.sigma_h if config.stochastic else 0.0,
        diameter_sq=diameter_sq,
        horizon=horizon,
        dist_guess=dist_guess,
    )
    return Components(problem, setup, schedule, diameter_sq, start_dist)


# ---------------------------------------------------------------------------
# single runs and replication jobs

def certificate_series(traj: Trajectory, schedule: Schedule):
    """Per-iteration certificate pairs (perturbation norm, residual).

    Incremental version of the certificate formulas, one O(dim) update per
    step; matches evaluation.certificate_det / certificate_stoch at each t.
    """
    n = traj.n_iters
    r1 = traj.anchors[0]
    stoch = traj.mode == "stoch"
    q = schedule.curvature_share
    cs = schedule.contraction_sq
    if cs is None:
        raise ConfigurationError("certificate series needs an unbounded-regime schedule")
    v_norm = np.empty(n)
    eps = np.empty(n)
    ssq = 0.0
    noise_energy = 0.0
    for t in range(1, n + 1):
        a, g = schedule.alpha(t), schedule.gamma(t)
        ssq += float(np.sum((traj.anchors[t - 1] - traj.trials[t]) ** 2))
        r_end, agg = traj.anchors[t], traj.aggs[t]
        lead = float(np.sum((r1 - agg) ** 2))
        tail_r = float(np.sum((r_end - agg) ** 2))
        if not stoch:
            v_norm[t - 1] = (a / g) * float(np.linalg.norm(r1 - r_end))
            eps[t - 1] = (a / (2.0 * g)) * (lead - tail_r - (1.0 - cs) * ssq)
            continue
        rec = traj.noise[t - 1]
        w_t = a / schedule.decay(t)
        pair = rec.dh_trial + rec.dg_mid
        noise_energy += (w_t * g / 2.0) * float(pair @ pair)
        noise_energy += (w_t * g / (2.0 * (1.0 - q))) * float(rec.dg_mid @ rec.dg_mid)
        noise_energy += (3.0 * w_t * g / 2.0) * (
            float(rec.dh_trial @ rec.dh_trial) + float(rec.dh_anchor @ rec.dh_anchor)
        )
        noise_energy -= w_t * float(rec.dg_mid @ (traj.anchors[t - 1] - traj.shadows[t - 1]))
        noise_energy -= w_t * float(rec.dh_trial @ (traj.trials[t] - traj.shadows[t - 1]))
        shadow_end = traj.shadows[t]
        tail_s = float(np.sum((shadow_end - agg) ** 2))
        v_norm[t - 1] = (a / g) * float(np.linalg.norm((r1 - r_end) + (r1 - shadow_end)))
        eps[t - 1] = (a / (2.0 * g)) * (
            2.0 * lead - tail_r - tail_s - (q - cs) * ssq
        ) + schedule.decay(t) * noise_energy
    return v_norm, eps


def _solver_trajectory(solver: str, comps: Components, config: ExperimentConfig,
                       replication: int) -> Trajectory:
    problem, setup, schedule = comps.problem, comps.setup, comps.schedule
    fset = problem.fset
    if solver == "amp":
        if config.stochastic:
            oracle = StochasticOracle(problem, config.noise_kind, config.sigma_g,
                                      config.sigma_h, seed=config.base_seed + replication)
            return run(oracle, setup, fset, schedule, config.iterations)
        return run(problem, setup, fset, schedule, config.iterations)
    if config.stochastic:
        raise ConfigurationError("baseline solvers run deterministically only")
    if solver == "mirror-prox":
        return run_mirror_prox(problem, setup, fset, config.iterations)
    if solver == "extragradient":
        return run_extragradient(problem, setup, fset, config.iterations)
    raise ConfigurationError(f"unknown solver {solver!r}")


def _evaluate_run(traj: Trajectory, comps: Components, config: ExperimentConfig,
                  solver: str):
    """Gap (bounded) or certificate (unbounded) series plus bound columns."""
    problem, setup, schedule = comps.problem, comps.setup, comps.schedule
    n = traj.n_iters
    ts = np.arange(1, n + 1)
    if problem.fset.is_bounded:
        measured = np.array(
            [gap_bounded(problem, setup, traj.agg_after(int(t))).value for t in ts]
        )
        v_norm = None
        bounds = np.full(n, np.nan)
        if solver == "amp":
            for t in ts:
                tb = theoretical_bound(schedule, int(t), diameter_sq=comps.diameter_sq)
                if schedule.regime == "det-bounded":
                    bounds[t - 1] = tb.gap_bound
                elif tb.mean_gap_bound_rate is not None:
                    bounds[t - 1] = tb.mean_gap_bound_rate
    else:
        v_norm, measured = certificate_series(traj, schedule)
        bounds = np.full(n, np.nan)
        if solver == "amp" and comps.start_dist is not None:
            for t in ts:
                tb = theoretical_bound(schedule, int(t), start_dist=comps.start_dist)
                bounds[t - 1] = tb.residual_bound
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(np.isfinite(bounds) & (bounds > 0), measured / bounds, np.nan)
    return ts, measured, v_norm, bounds, ratios


def _replication_job(args):
    config_map, solver, replication = args
    config_map = dict(config_map)
    config_map["solvers"] = tuple(config_map.get("solvers", ("amp",)))
    config = ExperimentConfig(**config_map)
    comps = build_components(config)
    traj = _solver_trajectory(solver, comps, config, replication)
    ts, measured, v_norm, bounds, ratios = _evaluate_run(traj, comps, config, solver)
    return {
        "replication": replication,
        "ts": ts,
        "measured": measured,
        "v_norm": v_norm,
        "bounds": bounds,
        "ratios": ratios,
        "alpha": np.array([traj.schedule.alpha(int(t)) for t in ts]),
        "gamma": np.array([traj.schedule.gamma(int(t)) for t in ts]),
        "grad_evals": traj.grad_evals,
        "op_evals": traj.op_evals,
        "wall_time": traj.wall_time,
    }


@dataclass
class RunReport:
    """Full experiment output; deterministic given (config, seeds)."""

    config: dict
    solvers: dict
    timing: dict
    schema_version: int = SCHEMA_VERSION

    def to_mapping(self, include_timing: bool = False) -> dict:
        out = {
            "schema_version": self.schema_version,
            "config": self.config,
            "solvers": self.solvers,
        }
        if include_timing:
            out["timing"] = self.timing
        return out


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Execute all requested solvers and replications described by a config."""
    config.validate()
    comps = build_components(config)
    solvers_out = {}
    timing = {}
    for solver in config.solvers:
        reps = config.replications if (solver == "amp" and config.stochastic) else 1
        jobs = [(config.to_mapping(), solver, k) for k in range(reps)]
        if config.jobs > 1 and reps > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(_replication_job, jobs))
        else:
            results = [_replication_job(j) for j in jobs]
        results.sort(key=lambda r: r["replication"])
        solvers_out[solver] = _summarize(results, config, comps, solver)
        timing[solver] = sum(r["wall_time"] for r in results)
    return RunReport(config.to_mapping(), solvers_out, timing)


def _summarize(results, config, comps, solver) -> dict:
    every = max(config.record_every, 1)
    n = results[0]["ts"].size
    keep = sorted(set(range(every - 1, n, every)) | {n - 1})
    rows = []
    run_id = f"{config.name}:{solver}"
    for res in results:
        for i in keep:
            row = {
                "run_id": run_id,
                "replication": res["replication"],
                "t": int(res["ts"][i]),
                "alpha": float(res["alpha"][i]),
                "gamma": float(res["gamma"][i]),
                "gap_or_eps": float(res["measured"][i]),
                "v_norm": float(res["v_norm"][i]) if res["v_norm"] is not None else None,
                "bound": _none_if_nan(res["bounds"][i]),
                "ratio": _none_if_nan(res["ratios"][i]),
            }
            rows.append(row)
    stacked = np.vstack([r["measured"] for r in results])
    mean = stacked.mean(axis=0)
    q05 = np.quantile(stacked, 0.05, axis=0)
    q95 = np.quantile(stacked, 0.95, axis=0)
    aggregate = [
        {
            "t": int(results[0]["ts"][i]),
            "mean": float(mean[i]),
            "q05": float(q05[i]),
            "q95": float(q95[i]),
            "bound": _none_if_nan(results[0]["bounds"][i]),
        }
        for i in keep
    ]
    try:
        slope = fit_slope(results[0]["ts"], mean)
        slope_out = {"slope": slope.slope, "window": list(slope.window),
                     "n_points": slope.n_points}
    except StatisticsError:
        slope_out = None
    return {
        "rows": rows,
        "aggregate": aggregate,
        "slope": slope_out,
        "replications": len(results),
        "oracle_calls": {
            "grad": int(sum(r["grad_evals"] for r in results)),
            "op": int(sum(r["op_evals"] for r in results)),
        },
    }


def _none_if_nan(x):
    x = float(x)
    return None if math.isnan(x) else x


# ---------------------------------------------------------------------------
# emission

_CSV_COLUMNS = ["run_id", "replication", "t", "alpha", "gamma", "gap_or_eps",
                "v_norm", "bound", "ratio"]


def emit(report: RunReport, out_format: str | None = None, out_dir: str | None = None,
         name: str | None = None, include_timing: bool = False) -> list[str]:
    """Write the report to disk; returns the list of files written.

    CSV mode writes one iterations file and one aggregate file per solver;
    JSON mode writes the full nested report.  Timings are excluded unless
    asked for, so identical (config, seeds) pairs produce identical bytes.
    """
    cfg = report.config
    out_format = out_format or cfg["out_format"]
    out_dir = Path(out_dir or cfg["out_dir"])
    name = name or cfg["name"]
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if out_format == "json":
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(report.to_mapping(include_timing), sort_keys=True,
                                   indent=1) + "\n")
        return [str(path)]
    if out_format != "csv":
        raise ConfigurationError("output format must be csv or json")
    for solver, block in report.solvers.items():
        tag = solver.replace("/", "-")
        rows_path = out_dir / f"{name}_{tag}_iterations.csv"
        with open(rows_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
            writer.writeheader()
            for row in block["rows"]:
                writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                                 for k in _CSV_COLUMNS})
        written.append(str(rows_path))
        agg_path = out_dir / f"{name}_{tag}_aggregate.csv"
        with open(agg_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "mean", "q05", "q95", "bound"])
            writer.writeheader()
            for row in block["aggregate"]:
                writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                                 for k in ["t", "mean", "q05", "q95", "bound"]})
        written.append(str(agg_path))
    return written


# ---------------------------------------------------------------------------
# solver comparison

def compare_matrix(configs, solvers, targets=None) -> dict:
    """Side-by-side gap table for several solvers on one shared instance.

    All configs must describe the same instance; stochastic configs are not
    comparable this way.  Returns checkpoints (gap at log-spaced t) and, for
    each target accuracy, the first iteration reaching it per column.
    """
    configs = list(configs)
    solvers = list(solvers)
    if not configs:
        raise ConfigurationError("need at least one config")
    fingerprint = None
    for cfg in configs:
        fp = (cfg.instance_kind, cfg.dimension, cfg.instance_seed,
              tuple(sorted(cfg.instance_constants.items())), cfg.geometry)
        if fingerprint is None:
            fingerprint = fp
        elif fp != fingerprint:
            raise ConfigurationError("compared configs must share the instance")
        if cfg.stochastic:
            raise ConfigurationError("compare runs deterministically; drop the oracle")
    table = {"columns": [], "checkpoints": [], "targets": {}}
    if not solvers:
        return table
    curves = {}
    for cfg in configs:
        comps = build_components(cfg)
        for solver in solvers:
            label = f"{cfg.name}:{solver}" if len(configs) > 1 else solver
            traj = _solver_trajectory(solver, comps, cfg, replication=0)
            _, measured, _, _, _ = _evaluate_run(traj, comps, cfg, solver)
            curves[label] = measured
            table["columns"].append(label)
    n = min(c.size for c in curves.values())
    marks = sorted(set(np.unique(np.geomspace(1, n, num=min(12, n)).astype(int))))
    for t in marks:
        table["checkpoints"].append(
            {"t": int(t), **{lab: float(curves[lab][t - 1]) for lab in table["columns"]}}
        )
    for target in targets or []:
        entry = {}
        for lab in table["columns"]:
            hits = np.where(curves[lab] <= target)[0]
            entry[lab] = int(hits[0] + 1) if hits.size else None
        table["targets"][float(target)] = entry
    return table
