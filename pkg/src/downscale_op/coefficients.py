"""Multiscale permeability fields.

Every field is an isotropic scalar coefficient ``kappa(x)`` evaluated on an
``(m, dim)`` array of points. ``c_min`` is a lower bound on the coefficient
over the unit domain (analytic where available, otherwise sampled).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EllipticityError, ShapeError

TWO_PI = 2.0 * np.pi

# scale parameters of the non-separable coefficient (eps_0 .. eps_7)
MULTISCALE_EPS = (1 / 5, 1 / 4, 1 / 25, 1 / 16, 1 / 16, 1 / 32, 1 / 3, 1 / 9)


@dataclass(frozen=True)
class PermeabilityField:
    kind: str
    params: dict
    evaluator: Callable = field(repr=False, compare=False)
    dim: int
    c_min: float
    periodic_cell: bool = False

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.dim)
        if pts.shape[1] != self.dim:
            raise ShapeError(f"coefficient is {self.dim}D, got points of dimension {pts.shape[1]}")
        return self.evaluator(pts)

    def cell(self):
        """The same coefficient as a function of the fast variable ``y = x/eps``."""
        if "eps" not in self.params and self.kind != "constant":
            raise ValueError(f"{self.kind} coefficient has no single period")
        p = dict(self.params)
        p["eps"] = 1.0
        return _FACTORIES[self.kind](**p)


def _checked_positive(values, where="coefficient"):
    bad = ~(values > 0.0)
    if np.any(bad):
        raise EllipticityError(f"non-positive {where} sample: min value {np.min(values):.6g}")
    return values


def constant(c, dim=1, eps=1.0):
    c = float(c)
    if not c > 0:
        raise EllipticityError(f"constant coefficient must be positive, got {c}")
    return PermeabilityField(
        "constant", {"c": c, "dim": dim, "eps": eps},
        lambda pts: np.full(len(pts), c), dim, c, periodic_cell=True,
    )


def oscillatory_1d(eps=1 / 16, amplitude=0.5, offset=0.8):
    """``a(x) = amplitude*sin(2 pi x/eps) + offset``."""
    def ev(pts):
        return amplitude * np.sin(TWO_PI * pts[:, 0] / eps) + offset

    return PermeabilityField(
        "oscillatory-1d",
        {"eps": eps, "amplitude": amplitude, "offset": offset},
        ev, 1, offset - abs(amplitude), periodic_cell=True,
    )


def fast_2d(eps=1 / 8, amplitude=1.0, offset=2.0):
    """``kappa = offset + amplitude*sin(2 pi x/eps) cos(2 pi y/eps)``."""
    def ev(pts):
        return offset + amplitude * np.sin(TWO_PI * pts[:, 0] / eps) * np.cos(TWO_PI * pts[:, 1] / eps)

    return PermeabilityField(
        "fast-2d",
        {"eps": eps, "amplitude": amplitude, "offset": offset},
        ev, 2, offset - abs(amplitude), periodic_cell=True,
    )


def separable_2d(profile, eps=1.0, c_min=None):
    """``kappa(x, y) = profile(x/eps)``; ``profile`` maps an array to an array."""
    def ev(pts):
        return np.asarray(profile(pts[:, 0] / eps), dtype=float)

    if c_min is None:
        c_min = float(np.min(profile(np.linspace(0.0, 1.0, 4097))))
    return PermeabilityField(
        "separable-2d", {"profile": profile, "eps": eps, "c_min": c_min},
        ev, 2, c_min, periodic_cell=True,
    )


def multiscale_2d(eps=MULTISCALE_EPS, offset=2.0):
    """Non-separable coefficient with eight incommensurate scales.

    ``kappa = offset + s0 c1/(2 + c2 s3) + s4 c5/(2 + c6 s7)`` where
    ``s_k = sin(2 pi ./eps_k)`` and ``c_k = cos(2 pi ./eps_k)`` act on x for
    even k and y for odd k. ``offset = 1`` lets kappa go negative on part
    of the unit square.
    """
    e = tuple(float(v) for v in eps)
    if len(e) != 8 or min(e) <= 0:
        raise ValueError("multiscale coefficient needs eight positive scales")

    def ev(pts):
        x, y = pts[:, 0], pts[:, 1]
        t1 = np.sin(TWO_PI * x / e[0]) * np.cos(TWO_PI * y / e[1]) / (
            2.0 + np.cos(TWO_PI * x / e[2]) * np.sin(TWO_PI * y / e[3]))
        t2 = np.sin(TWO_PI * x / e[4]) * np.cos(TWO_PI * y / e[5]) / (
            2.0 + np.cos(TWO_PI * x / e[6]) * np.sin(TWO_PI * y / e[7]))
        return offset + t1 + t2

    s = np.linspace(0.0, 1.0, 1025)
    X, Y = np.meshgrid(s, s, indexing="ij")
    c_min = float(np.min(ev(np.stack([X.ravel(), Y.ravel()], axis=1))))
    return PermeabilityField("multiscale-2d", {"eps": e, "offset": offset}, ev, 2, c_min)


def tabulated(field_):
    """Coefficient given by (bi)linear interpolation of a nodal field."""
    c_min = float(np.min(field_.values))
    return PermeabilityField(
        "tabulated", {"field": field_}, field_.interpolate, field_.grid.dim, c_min,
    )


def min_scale(a):
    eps = a.params.get("eps", 1.0)
    return float(min(eps)) if isinstance(eps, tuple) else float(eps)


_FACTORIES = {
    "constant": constant,
    "oscillatory-1d": oscillatory_1d,
    "fast-2d": fast_2d,
    "separable-2d": separable_2d,
}
