"""Full-batch Adam training and replica-exchange Langevin sampling of DON parameters."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .don import DonParams, don_loss_and_grad, forward_batch, init_params, residual_and_grad
from .errors import DivergenceError
from .grid import GridField, max_abs_error, relative_l2_error
from .patches import branch_inputs


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        """Update ``theta`` in place."""
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_don(arch, dataset, cfg, init=None):
    """Minimise the mean squared error with full-batch Adam.

    Returns ``(params, history)`` where ``history[k]`` is the loss of the
    parameters entering epoch ``k``.
    """
    params = init.copy() if init is not None else init_params(arch, cfg.seed)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        loss, grad = don_loss_and_grad(params, arch, dataset)
        if not math.isfinite(loss):
            raise DivergenceError("training loss is not finite", epoch)
        history[epoch] = loss
        opt.step(params.vector, grad.vector)
    return params, history


def final_loss(params, dataset):
    return don_loss_and_grad(params, params.arch, dataset)[0]


# -- Bayesian DON --------------------------------------------------------------

@dataclass(frozen=True)
class SgReldConfig:
    tau_low: float = 1e-5
    tau_high: float = 1e-2
    step_size: float = 1e-4
    swap_interval: int = 50
    swap_correction: float = 0.0
    burn_in: int = 2000
    thin: int = 20
    M: int = 100
    sigma: float = 0.005
    prior_tau: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tau_low <= self.tau_high:
            raise ValueError("temperatures must satisfy 0 < tau_low <= tau_high")
        if self.step_size < 0 or self.swap_interval < 1 or self.thin < 1:
            raise ValueError("step_size >= 0, swap_interval >= 1 and thin >= 1 required")
        if self.M < 1 or self.burn_in < 0:
            raise ValueError("M >= 1 and burn_in >= 0 required")
        if self.swap_correction < 0 or not self.sigma > 0:
            raise ValueError("swap_correction >= 0 and sigma > 0 required")


def _posterior_terms(dataset, sigma):
    labels = dataset.labels
    s2 = sigma * sigma

    def gauss(out):
        r = out - labels
        return float(np.dot(r, r) / (2.0 * s2)), r / s2

    return gauss


def negative_log_posterior(params, arch, dataset, sigma, prior_tau=None, with_grad=False):
    """``sum_j r_j**2/(2 sigma**2) + |theta|**2/(2 prior_tau**2)``; ``prior_tau=None`` drops the prior."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    value, grad = residual_and_grad(params, dataset.branch, dataset.locations,
                                    _posterior_terms(dataset, sigma))
    if prior_tau is not None:
        theta = params.vector
        value += float(np.dot(theta, theta)) / (2.0 * prior_tau**2)
        grad.vector += theta / prior_tau**2
    return (value, grad) if with_grad else value


def swap_probability(u_low, u_high, tau_low, tau_high, correction=0.0):
    """``min(1, exp((1/tau_low - 1/tau_high)(U_low - U_high - F)))``."""
    expo = (1.0 / tau_low - 1.0 / tau_high) * (u_low - u_high - correction)
    return 1.0 if expo >= 0 else math.exp(expo)


def langevin_replica_exchange(potential, theta0, cfg, rng=None):
    """Two-temperature Langevin chains with swaps; yields the sampled low-temperature states.

    ``potential(theta) -> (U, grad U)`` on flat vectors. Returns ``(samples,
    n_swaps)`` with ``samples`` of shape ``(M, len(theta0))``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    taus = (cfg.tau_low, cfg.tau_high)
    chains = [np.array(theta0, dtype=float), np.array(theta0, dtype=float)]
    noise_scale = [math.sqrt(2.0 * cfg.step_size * t) for t in taus]
    evals = [potential(c) for c in chains]
    samples = []
    swaps = 0
    step = 0
    while len(samples) < cfg.M:
        step += 1
        for c in range(2):
            u, g = evals[c]
            xi = rng.standard_normal(chains[c].shape)
            chains[c] = chains[c] - cfg.step_size * g + noise_scale[c] * xi
            with np.errstate(over="ignore", invalid="ignore"):
                evals[c] = potential(chains[c])
            if not math.isfinite(evals[c][0]):
                raise DivergenceError(f"potential is not finite on chain {c}", step)
        if step % cfg.swap_interval == 0:
            p = swap_probability(evals[0][0], evals[1][0], *taus, cfg.swap_correction)
            if rng.uniform() < p:
                chains.reverse()
                evals.reverse()
                swaps += 1
        if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            samples.append(chains[0].copy())
    return np.array(samples), swaps


def sample_sg_reld(arch, dataset, cfg, init=None):
    """Posterior samples of DON parameters (list of length ``cfg.M``).

    Chains start from ``init`` when given (e.g. an Adam-trained network),
    otherwise from ``init_params(arch, cfg.seed)``.
    """
    start = init if init is not None else init_params(arch, cfg.seed)
    work = DonParams(arch, start.flatten())

    def potential(theta):
        work.vector[...] = theta
        u, g = negative_log_posterior(work, arch, dataset, cfg.sigma, cfg.prior_tau, with_grad=True)
        return u, g.vector

    samples, _ = langevin_replica_exchange(potential, start.flatten(), cfg)
    return [DonParams(arch, s) for s in samples]


@dataclass(frozen=True)
class EnsembleStats:
    mean: GridField
    variance: GridField
    M: int

    def to_csv(self, prefix):
        self.mean.to_csv(f"{prefix}_mean.csv")
        self.variance.to_csv(f"{prefix}_variance.csv")


def ensemble_moments(outputs):
    """Member mean and population variance of stacked ``(M, ...)`` outputs."""
    outputs = np.asarray(outputs, dtype=float)
    # centre on the first member so identical members give exactly zero variance
    d = outputs - outputs[0]
    d_mean = d.mean(axis=0)
    return outputs[0] + d_mean, np.mean((d - d_mean) ** 2, axis=0)


def ensemble_predict(samples, arch, coarse, spec, eval_grid):
    if not samples:
        raise ValueError("ensemble needs at least one member")
    pts = eval_grid.points()
    inputs = branch_inputs(coarse, pts, spec)
    outs = np.stack([forward_batch(s, inputs, pts) for s in samples])
    mu, var = ensemble_moments(outs)
    return EnsembleStats(GridField(eval_grid, mu), GridField(eval_grid, var), len(samples))


# -- evaluation -----------------------------------------------------------------

RUN_LOG_COLUMNS = ("experiment", "seed", "patch_p", "n_obs", "noise_sigma", "method",
                   "rel_l2_error", "wall_seconds")


def evaluate_run(prediction, fine_ref, log_path=None, **run_info):
    """Relative L2 and max-abs errors; appends a run-log row when ``log_path`` is given."""
    metrics = {
        "rel_l2_error": relative_l2_error(prediction, fine_ref),
        "max_abs_error": max_abs_error(prediction, fine_ref),
    }
    if log_path is not None:
        append_run_log(log_path, {**run_info, "rel_l2_error": metrics["rel_l2_error"]})
    return metrics


def format_run_row(row):
    out = []
    for c in RUN_LOG_COLUMNS:
        v = row.get(c, "")
        out.append(f"{v:.17g}" if isinstance(v, float) else str(v))
    return out


def append_run_log(path, row):
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RUN_LOG_COLUMNS)
        w.writerow(format_run_row(row))
