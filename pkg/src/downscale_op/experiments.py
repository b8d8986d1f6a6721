"""End-to-end sweeps: reference solve, coarse solve, datasets, training, aggregation."""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coefficients
from .don import DonArchitecture, predict_field
from .elliptic import EllipticProblem, solve_coarse_2d, solve_fine_1d, solve_fine_2d
from .errors import DownscaleError
from .grid import Grid, GridField, relative_l2_error, restrict
from .homogenize import (
    effective_coefficient_1d,
    effective_coefficient_2d,
    solve_cell_problem_2d,
    solve_homogenized,
)
from .patches import PatchSpec, build_observation_set, default_spacing, observation_grid
from .plot import emit_plot
from .train import (
    RUN_LOG_COLUMNS,
    SgReldConfig,
    TrainConfig,
    ensemble_predict,
    format_run_row,
    sample_sg_reld,
    train_don,
)

log = logging.getLogger(__name__)

NOISE_SEED_OFFSET = 10007
THREADS_ENV = "DOWNSCALE_OP_THREADS"


class StageError(DownscaleError, RuntimeError):
    def __init__(self, stage, sweep_value, cause):
        super().__init__(f"stage '{stage}' failed (sweep value {sweep_value}): {cause}")
        self.stage = stage
        self.sweep_value = sweep_value


@dataclass(frozen=True)
class TrendRow:
    sweep_value: float
    mean: float
    std: float
    n_seeds: int
    method: str


@dataclass
class TrendTable:
    rows: list

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.method, r.sweep_value))

    def methods(self):
        return sorted({r.method for r in self.rows})

    def row(self, sweep_value, method):
        for r in self.rows:
            if r.sweep_value == sweep_value and r.method == method:
                return r
        raise KeyError((sweep_value, method))

    def to_csv_text(self):
        lines = ["sweep_value,mean_rel_l2,std_rel_l2,n_seeds,method"]
        for r in self.rows:
            lines.append(f"{r.sweep_value:g},{r.mean:.17g},{r.std:.17g},{r.n_seeds},{r.method}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [TrendRow(float(r["sweep_value"]), float(r["mean_rel_l2"]), float(r["std_rel_l2"]),
                             int(r["n_seeds"]), r["method"]) for r in csv.DictReader(fh)]
        return cls(rows)


@dataclass
class ProblemSetup:
    fine: GridField
    coarse: GridField
    reference: GridField  # fine solution restricted to the evaluation grid
    baseline_error: float  # coarse input vs reference on the evaluation grid
    scale: float  # max |coarse|, used for normalisation

    @property
    def eval_grid(self):
        return self.reference.grid


@dataclass
class ExperimentResult:
    table: TrendTable
    runs: list
    baseline_error: float
    details: list = field(default_factory=list)


_SETUP_CACHE = {}


def clear_cache():
    _SETUP_CACHE.clear()


def _problem_key(cfg):
    return (cfg.experiment, cfg.epsilon, cfg.multiscale_eps, cfg.kappa_offset, cfg.forcing,
            cfg.fine_n, cfg.coarse_n, cfg.cell_n, cfg.eval_n)


def permeability(cfg):
    if cfg.experiment == "elliptic-1d":
        return coefficients.oscillatory_1d(cfg.epsilon)
    if cfg.experiment == "elliptic-2d-fast":
        return coefficients.fast_2d(cfg.epsilon)
    return coefficients.multiscale_2d(cfg.multiscale_eps, offset=cfg.kappa_offset)


def fine_solution(cfg):
    a = permeability(cfg)
    grid = Grid.unit(cfg.dim, cfg.fine_n)
    problem = EllipticProblem(a, cfg.forcing, grid)
    return solve_fine_1d(problem) if cfg.dim == 1 else solve_fine_2d(problem)


def coarse_solution(cfg):
    """Homogenized u0 (single-scale problems) or the coarse-grid solve (multiscale)."""
    a = permeability(cfg)
    if cfg.experiment == "elliptic-1d":
        return solve_homogenized(effective_coefficient_1d(a), cfg.forcing, Grid.unit(1, cfg.coarse_n))
    if cfg.experiment == "elliptic-2d-fast":
        a_star = effective_coefficient_2d(a, solve_cell_problem_2d(a, cfg.cell_n))
        return solve_homogenized(a_star, cfg.forcing, Grid.unit(2, cfg.coarse_n))
    problem = EllipticProblem(a, cfg.forcing, Grid.unit(2, cfg.fine_n))
    return solve_coarse_2d(problem, cfg.coarse_n)


def problem_setup(cfg):
    key = _problem_key(cfg)
    if key in _SETUP_CACHE:
        return _SETUP_CACHE[key]
    try:
        fine = fine_solution(cfg)
    except Exception as exc:
        raise StageError("fine reference", "-", exc) from exc
    try:
        coarse = coarse_solution(cfg)
    except Exception as exc:
        raise StageError("coarse solve", "-", exc) from exc
    eval_grid = Grid.unit(cfg.dim, cfg.eval_n)
    reference = restrict(fine, eval_grid)
    baseline = relative_l2_error(restrict(coarse, eval_grid), reference)
    setup = ProblemSetup(fine, coarse, reference, baseline, float(np.max(np.abs(coarse.values))))
    _SETUP_CACHE[key] = setup
    return setup


def _scaled(f, s):
    return f if s == 1.0 else GridField(f.grid, f.values / s)


def _job_plan(cfg, value):
    """(patch size, observation count) for one sweep value."""
    if cfg.sweep == "patch-size":
        return int(value), cfg.observation_counts[0]
    return cfg.patch_sizes[0], int(value)


def run_job(cfg, setup, value, k):
    """Train the model(s) for one (sweep value, seed index); returns run rows and details."""
    p, n_obs = _job_plan(cfg, value)
    seed = cfg.root_seed + k
    s = setup.scale if cfg.normalize else 1.0
    coarse, fine = _scaled(setup.coarse, s), _scaled(setup.fine, s)
    spacing = cfg.patch_spacing or default_spacing(setup.coarse.grid)
    spec = PatchSpec(p, spacing)
    side = round(n_obs ** (1.0 / cfg.dim))
    sigma = cfg.noise_sigma / s
    try:
        ds = build_observation_set(coarse, fine, observation_grid(fine.grid, side), spec, sigma,
                                   seed=seed + NOISE_SEED_OFFSET)
    except Exception as exc:
        raise StageError("dataset", value, exc) from exc
    arch = DonArchitecture.default(spec.width(cfg.dim), cfg.dim, width=cfg.width, depth=cfg.depth, K=cfg.K)
    base = {"experiment": cfg.experiment, "seed": seed, "patch_p": p, "n_obs": n_obs,
            "noise_sigma": cfg.noise_sigma}
    rows, details = [], []
    methods = ["noisy-DON", "B-DON"] if cfg.sweep == "noisy-bayes" else [
        "noisy-DON" if cfg.noise_sigma > 0 else "DON"]
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method == "B-DON":
                bcfg = SgReldConfig(
                    tau_low=cfg.tau_low, tau_high=cfg.tau_high,
                    step_size=langevin_step(cfg.langevin_rate, sigma, len(ds)),
                    swap_interval=cfg.swap_interval, swap_correction=cfg.swap_correction,
                    burn_in=cfg.burn_in, thin=cfg.thin, M=cfg.ensemble_size, sigma=sigma,
                    prior_tau=cfg.prior_tau, seed=seed,
                )
                samples = sample_sg_reld(arch, ds, bcfg)
                stats = ensemble_predict(samples, arch, coarse, spec, setup.eval_grid)
                pred = stats.mean
                details.append({"sweep_value": value, "seed": seed, "members": stats.M,
                                "min_variance": float(stats.variance.values.min()),
                                "max_variance": float(stats.variance.values.max())})
            else:
                params, _ = train_don(arch, ds, TrainConfig(cfg.epochs, cfg.learning_rate, cfg.adam_beta1,
                                                            cfg.adam_beta2, cfg.adam_eps, seed))
                pred = predict_field(params, arch, coarse, spec, setup.eval_grid)
        except Exception as exc:
            raise StageError(f"train {method}", value, exc) from exc
        pred = _scaled(pred, 1.0 / s)
        err = relative_l2_error(pred, setup.reference)
        rows.append({**base, "method": method, "rel_l2_error": err,
                     "wall_seconds": time.perf_counter() - t0})
    return rows, details


def langevin_step(rate, sigma, n_obs):
    """Langevin step size for a full-batch Gaussian likelihood.

    The potential is ``n_obs * mse / (2 sigma**2)``, so ``rate`` acts as a
    gradient-descent learning rate on the mean squared error.
    """
    return rate * 2.0 * sigma**2 / n_obs


def _worker(args):
    cfg, value, k = args
    return run_job(cfg, problem_setup(cfg), value, k)


def resolve_threads(cfg):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return cfg.threads


def aggregate(runs):
    groups = {}
    for r in runs:
        groups.setdefault((r["method"], _sweep_of(r)), []).append(r["rel_l2_error"])
    rows = [TrendRow(float(v), float(np.mean(e)), float(np.std(e)), len(e), m)
            for (m, v), e in groups.items()]
    return TrendTable(rows)


def _sweep_of(r):
    return r["sweep_value"]


def run_experiment(cfg, write=True):
    """Run the configured sweep; writes trend.csv, trend.svg and runs.csv under ``cfg.out_dir``."""
    setup = problem_setup(cfg)
    jobs = [(cfg, v, k) for v in cfg.sweep_values for k in range(cfg.seeds)]
    threads = resolve_threads(cfg)
    log.info("%s/%s: %d jobs on %d worker(s); coarse baseline error %.4g",
             cfg.experiment, cfg.sweep, len(jobs), threads, setup.baseline_error)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [run_job(c, setup, v, k) for c, v, k in jobs]
    runs, details = [], []
    for (_, v, _), (rows, det) in zip(jobs, results):
        for r in rows:
            r["sweep_value"] = v
        runs.extend(rows)
        details.extend(det)
    table = aggregate(runs)
    result = ExperimentResult(table, runs, setup.baseline_error, details)
    if write:
        write_outputs(cfg, result)
    return result


def write_outputs(cfg, result):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.table.write_csv(out / "trend.csv")
    xlabel = "patch size" if cfg.sweep == "patch-size" else "number of observations"
    emit_plot(result.table, out / "trend.svg", title=f"{cfg.experiment}: {cfg.sweep}", xlabel=xlabel)
    with (out / "runs.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_LOG_COLUMNS)
        for r in result.runs:
            w.writerow(format_run_row(r))
    (out / "baseline.txt").write_text(f"coarse_rel_l2 = {result.baseline_error:.17g}\n")
