"""Observation datasets: patches of coarse values around each observed fine value."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class PatchSpec:
    """A ``size**dim`` lattice with spacing ``spacing`` centred on the observation point."""

    size: int = 1
    spacing: float = 1.0
    boundary_policy: str = "clamp"

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"patch size must be a positive odd integer, got {self.size}")
        if not self.spacing > 0:
            raise ValueError(f"patch spacing must be positive, got {self.spacing}")
        if self.boundary_policy != "clamp":
            raise ValueError(f"unsupported boundary policy {self.boundary_policy!r}")

    def width(self, dim):
        return self.size**dim


@dataclass(frozen=True)
class ObservationLattice:
    """Tensor lattice of observation points (may have a single node per axis)."""

    axes: tuple

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class ObservationTriplet:
    branch_input: np.ndarray
    location: np.ndarray
    label: float
    clean_label: float


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Column-wise storage of N_p triplets sharing one :class:`PatchSpec`."""

    branch: np.ndarray  # (N, p**d)
    locations: np.ndarray  # (N, d)
    labels: np.ndarray
    clean_labels: np.ndarray
    spec: PatchSpec
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        n = len(self.labels)
        if n < 1:
            raise ShapeError("an observation set needs at least one triplet")
        d = self.locations.shape[1]
        if self.branch.shape != (n, self.spec.width(d)):
            raise ShapeError(
                f"branch inputs have shape {self.branch.shape}, expected {(n, self.spec.width(d))}"
            )
        if len(np.unique(self.locations, axis=0)) != n:
            raise ValueError("observation locations must be pairwise distinct")
        for arr in (self.branch, self.locations, self.labels, self.clean_labels):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.locations.shape[1]

    @property
    def triplets(self):
        return [
            ObservationTriplet(self.branch[i], self.locations[i], float(self.labels[i]),
                               float(self.clean_labels[i]))
            for i in range(len(self))
        ]

    def with_labels(self, labels):
        return ObservationSet(self.branch.copy(), self.locations.copy(), np.array(labels, dtype=float),
                              self.clean_labels.copy(), self.spec, self.noise_sigma, self.rng_seed)

    def to_csv(self, path):
        Path(path).write_text(format_observation_csv(self))


def patch_offsets(spec, dim):
    """Lattice offsets in lexicographic order of (k_1, ..., k_d), shape ``(p**d, dim)``."""
    half = (spec.size - 1) // 2
    ks = range(-half, half + 1)
    return np.array(list(itertools.product(ks, repeat=dim)), dtype=float) * spec.spacing


def patch_points_many(points, spec, lo, hi):
    """Patch lattices around every row of ``points``; shape ``(m, p**d, d)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    offs = patch_offsets(spec, pts.shape[1])
    out = pts[:, None, :] + offs[None, :, :]
    out = np.clip(out, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    # centre is the observation point itself, unrounded
    out[:, len(offs) // 2, :] = pts
    return out


def patch_points(x, spec, domain=None):
    """Patch lattice around ``x``, clamped to ``domain`` (a Grid; unit cube if omitted)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = _bounds(domain, x.size)
    return patch_points_many(x[None, :], spec, lo, hi)[0]


def _bounds(domain, dim):
    if domain is None:
        return (0.0,) * dim, (1.0,) * dim
    return domain.lo, domain.hi


def observation_grid(domain, count_per_axis):
    """Interior uniform lattice ``lo + j*(hi - lo)/(count + 1)``, j = 1..count."""
    if count_per_axis < 1:
        raise ValueError("count_per_axis must be at least 1")
    j = np.arange(1, count_per_axis + 1)
    return ObservationLattice(tuple(
        lo + j * (hi - lo) / (count_per_axis + 1) for lo, hi in zip(domain.lo, domain.hi)
    ))


def branch_inputs(coarse, points, spec):
    """Coarse-field values over the patch of every point, shape ``(m, p**d)``."""
    g = coarse.grid
    patches = patch_points_many(points, spec, g.lo, g.hi)
    m, w, d = patches.shape
    return coarse.interpolate(patches.reshape(m * w, d)).reshape(m, w)


def build_observation_set(coarse, fine_ref, obs, spec, noise_sigma=0.0, seed=0):
    """Triplets (coarse patch, location, fine value + noise) at every observation point.

    ``obs`` is an :class:`ObservationLattice`, a :class:`~downscale_op.grid.Grid`,
    or an ``(m, d)`` array of points.
    """
    pts = obs.points() if hasattr(obs, "points") else np.atleast_2d(np.asarray(obs, dtype=float))
    for name, f in (("coarse", coarse), ("reference", fine_ref)):
        inside = f.grid.contains(pts)
        if not np.all(inside):
            raise DomainError(f"observation point {tuple(pts[~inside][0])} outside the {name} field")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    clean = fine_ref.interpolate(pts)
    noise = np.random.default_rng(seed).standard_normal(len(pts))
    labels = clean + noise_sigma * noise if noise_sigma > 0 else clean.copy()
    return ObservationSet(branch_inputs(coarse, pts, spec), pts.copy(), labels, clean, spec,
                          float(noise_sigma), int(seed))


def default_spacing(coarse_grid):
    """Patch spacing used when none is configured: a quarter of the coarse spacing."""
    return min(coarse_grid.h) / 4.0


# -- CSV ---------------------------------------------------------------------

def format_observation_csv(ds):
    d = ds.dim
    w = ds.spec.width(d)
    head = (f"# observations: p={ds.spec.size},delta={ds.spec.spacing:.17g},"
            f"sigma={ds.noise_sigma:.17g},seed={ds.rng_seed},dim={d}")
    cols = [f"x{k}" for k in range(d)] + [f"b{k}" for k in range(w)] + ["label", "clean_label"]
    lines = [head, ",".join(cols)]
    for i in range(len(ds)):
        row = list(ds.locations[i]) + list(ds.branch[i]) + [ds.labels[i], ds.clean_labels[i]]
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def read_observation_csv(path):
    lines = Path(path).read_text().splitlines()
    meta = dict(kv.split("=") for kv in lines[0].split(":", 1)[1].strip().split(","))
    d = int(meta["dim"])
    spec = PatchSpec(int(meta["p"]), float(meta["delta"]))
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln.strip()])
    w = spec.width(d)
    return ObservationSet(rows[:, d : d + w].copy(), rows[:, :d].copy(), rows[:, d + w].copy(),
                          rows[:, d + w + 1].copy(), spec, float(meta["sigma"]), int(meta["seed"]))
