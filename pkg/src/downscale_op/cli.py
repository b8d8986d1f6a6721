"""Command-line entry point: ``downscale-op <subcommand> [--config FILE] ...``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ExperimentConfig, format_config, load_config
from .don import DonArchitecture, predict_field, save_params
from .errors import ConfigError
from .grid import Grid, relative_l2_error, write_field_csv
from .homogenize import (
    cell_to_csv,
    effective_coefficient_1d,
    effective_coefficient_2d,
    solve_cell_problem_1d,
    solve_cell_problem_2d,
)
from .patches import PatchSpec, build_observation_set, default_spacing, observation_grid
from .plot import emit_plot
from .train import SgReldConfig, TrainConfig, ensemble_predict, sample_sg_reld, train_don

log = logging.getLogger("downscale_op")

SUBCOMMANDS = ("solve", "cell", "dataset", "train", "bayes", "experiment", "plot")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (see README)")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out-dir", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker processes (DOWNSCALE_OP_THREADS wins)")
    common.add_argument("--full", action="store_true", help="100 seeds per sweep value")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="downscale-op", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.add_parser("solve", parents=[common], help="fine / coarse solves to CSV")
    sub.add_parser("cell", parents=[common], help="cell problems and effective coefficient")
    sub.add_parser("dataset", parents=[common], help="build an observation set")
    sub.add_parser("train", parents=[common], help="train one DON")
    sub.add_parser("bayes", parents=[common], help="sample a B-DON ensemble")
    sub.add_parser("experiment", parents=[common], help="run the configured sweep")
    p = sub.add_parser("plot", parents=[common], help="render trend.csv as SVG")
    p.add_argument("table", help="trend CSV")
    p.add_argument("-o", "--output", help="SVG path (default: next to the table)")
    return parser


def _config(args):
    overrides = {"root_seed": args.seed, "out_dir": args.out_dir, "threads": args.threads}
    if args.full:
        overrides["seeds"] = 100
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _out(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg):
    out = _out(cfg)
    fine = ex.fine_solution(cfg)
    coarse = ex.coarse_solution(cfg)
    write_field_csv(fine, out / "fine.csv")
    write_field_csv(coarse, out / "coarse.csv")
    eval_grid = Grid.unit(cfg.dim, cfg.eval_n)
    from .grid import restrict

    err = relative_l2_error(restrict(coarse, eval_grid), restrict(fine, eval_grid))
    print(f"fine: {out / 'fine.csv'}\ncoarse: {out / 'coarse.csv'}\ncoarse relative L2 error: {err:.6g}")


def cmd_cell(cfg):
    a = ex.permeability(cfg)
    if cfg.experiment == "elliptic-2d-multiscale":
        raise ConfigError("the multiscale coefficient has no single period; no cell problem")
    if cfg.dim == 1:
        a_star = effective_coefficient_1d(a)
        chi = solve_cell_problem_1d(a)
    else:
        chi = solve_cell_problem_2d(a, cfg.cell_n)
        a_star = effective_coefficient_2d(a, chi)
    cell_to_csv(chi, a_star, _out(cfg))
    A = np.atleast_2d(a_star.a_star)
    print("a* =")
    for row in A:
        print("  " + "  ".join(f"{v: .10f}" for v in row))
    print("eigenvalues: " + ", ".join(f"{v:.10f}" for v in a_star.eigenvalues()))


def _dataset(cfg, setup, seed):
    s = setup.scale if cfg.normalize else 1.0
    coarse = ex._scaled(setup.coarse, s)
    fine = ex._scaled(setup.fine, s)
    spec = PatchSpec(cfg.patch_sizes[0], cfg.patch_spacing or default_spacing(setup.coarse.grid))
    side = round(cfg.observation_counts[0] ** (1.0 / cfg.dim))
    ds = build_observation_set(coarse, fine, observation_grid(fine.grid, side), spec,
                               cfg.noise_sigma / s, seed=seed + ex.NOISE_SEED_OFFSET)
    return ds, coarse, spec, s


def cmd_dataset(cfg):
    setup = ex.problem_setup(cfg)
    ds, _, _, _ = _dataset(cfg, setup, cfg.root_seed)
    path = _out(cfg) / "observations.csv"
    ds.to_csv(path)
    print(f"{len(ds)} triplets, branch width {ds.branch.shape[1]}: {path}")


def cmd_train(cfg):
    setup = ex.problem_setup(cfg)
    ds, coarse, spec, s = _dataset(cfg, setup, cfg.root_seed)
    arch = DonArchitecture.default(ds.branch.shape[1], cfg.dim, width=cfg.width, depth=cfg.depth, K=cfg.K)
    params, hist = train_don(arch, ds, TrainConfig(cfg.epochs, cfg.learning_rate, cfg.adam_beta1,
                                                   cfg.adam_beta2, cfg.adam_eps, cfg.root_seed))
    pred = ex._scaled(predict_field(params, arch, coarse, spec, setup.eval_grid), 1.0 / s)
    out = _out(cfg)
    save_params(params, out / "params.csv")
    write_field_csv(pred, out / "prediction.csv")
    print(f"final training loss {hist[-1]:.4g}; relative L2 error {relative_l2_error(pred, setup.reference):.6g}"
          f" (coarse input {setup.baseline_error:.6g})")


def cmd_bayes(cfg):
    setup = ex.problem_setup(cfg)
    if not cfg.noise_sigma > 0:
        raise ConfigError("bayes needs noise_sigma > 0 (the likelihood scale)")
    ds, coarse, spec, s = _dataset(cfg, setup, cfg.root_seed)
    arch = DonArchitecture.default(ds.branch.shape[1], cfg.dim, width=cfg.width, depth=cfg.depth, K=cfg.K)
    sigma = cfg.noise_sigma / s
    bcfg = SgReldConfig(cfg.tau_low, cfg.tau_high, ex.langevin_step(cfg.langevin_rate, sigma, len(ds)),
                        cfg.swap_interval, cfg.swap_correction, cfg.burn_in, cfg.thin, cfg.ensemble_size,
                        sigma, cfg.prior_tau, cfg.root_seed)
    stats = ensemble_predict(sample_sg_reld(arch, ds, bcfg), arch, coarse, spec, setup.eval_grid)
    mean = ex._scaled(stats.mean, 1.0 / s)
    var = ex._scaled(stats.variance, 1.0 / s**2)
    out = _out(cfg)
    write_field_csv(mean, out / "ensemble_mean.csv")
    write_field_csv(var, out / "ensemble_variance.csv")
    print(f"M = {stats.M}; ensemble-mean relative L2 error {relative_l2_error(mean, setup.reference):.6g}; "
          f"max variance {var.values.max():.4g}")


def cmd_experiment(cfg):
    result = ex.run_experiment(cfg)
    out = Path(cfg.out_dir)
    (out / "config.cfg").write_text(format_config(cfg))
    print(result.table.to_csv_text(), end="")
    print(f"coarse baseline relative L2 error: {result.baseline_error:.6g}")
    print(f"wrote {out / 'trend.csv'}, {out / 'trend.svg'}, {out / 'runs.csv'}")


def cmd_plot(args):
    table = ex.TrendTable.read_csv(args.table)
    out = args.output or str(Path(args.table).with_suffix(".svg"))
    emit_plot(table, out)
    print(out)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            cmd_plot(args)
            return 0
        cfg = _config(args)
        {"solve": cmd_solve, "cell": cmd_cell, "dataset": cmd_dataset, "train": cmd_train,
         "bayes": cmd_bayes, "experiment": cmd_experiment}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit status 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
