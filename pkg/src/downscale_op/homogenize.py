"""Periodic homogenization: cell problems, effective tensors, u0 and the first-order corrector.

Cell problems are posed for a scalar coefficient ``a(y)`` on the unit cell
with periodic boundary conditions::

    -div(a grad chi_k) = d a / d y_k,   chi_k periodic with zero mean,

and the effective tensor is ``a*_ik = <a (delta_ik + d chi_k / d y_i)>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import DEFAULT_TOL, pcg, solve_constant_coefficient
from .errors import CompatibilityError, DomainError, EllipticityError, ShapeError
from .grid import Grid, GridField


@dataclass(frozen=True)
class CellSolution:
    chi: tuple  # one GridField per direction on the closed unit cell
    mean: tuple

    @property
    def dim(self):
        return len(self.chi)

    @property
    def cell_n(self):
        return self.chi[0].grid.n[0]

    def at(self, y):
        """Periodic interpolation of every chi_k at fast-variable points ``y``."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        frac = y - np.floor(y)
        return np.stack([c.interpolate(frac) for c in self.chi], axis=1)


@dataclass(frozen=True)
class EffectiveCoefficient:
    a_star: np.ndarray

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.a_star)


@dataclass(frozen=True)
class CorrectorExpansion:
    u0: GridField
    chi: CellSolution
    epsilon: float


def _cell_coefficient(a):
    """The coefficient as a function of the fast variable."""
    return a.cell() if a.params.get("eps", 1.0) != 1.0 else a


def effective_coefficient_1d(a, quad_n=4096):
    """Harmonic mean of the cell coefficient by the composite trapezoid rule."""
    if quad_n < 16:
        raise ValueError("quad_n must be at least 16")
    ac = _cell_coefficient(a)
    y = np.linspace(0.0, 1.0, quad_n + 1)
    vals = ac(y[:, None])
    if not np.all(vals > 0):
        raise EllipticityError(f"non-positive cell coefficient (min {np.min(vals):.6g})")
    if np.all(vals == vals[0]):
        return EffectiveCoefficient(np.array([[float(vals[0])]]))
    w = np.full(quad_n + 1, 1.0 / quad_n)
    w[[0, -1]] *= 0.5
    return EffectiveCoefficient(np.array([[1.0 / np.dot(w, 1.0 / vals)]]))


def _close_periodic(v):
    """Append the periodic copy of the first row/column (nodes at y = 1)."""
    out = np.concatenate([v, v[:1]], axis=0)
    if v.ndim == 2:
        out = np.concatenate([out, out[:, :1]], axis=1)
    return out


def solve_cell_problem_1d(a, cell_n=1024):
    """chi' = a*/a - 1 integrated exactly on the cell grid, zero nodal mean."""
    ac = _cell_coefficient(a)
    h = 1.0 / cell_n
    mid = ac(((np.arange(cell_n) + 0.5) * h)[:, None])
    if not np.all(mid > 0):
        raise EllipticityError(f"non-positive cell coefficient (min {np.min(mid):.6g})")
    a_star = 1.0 / np.mean(1.0 / mid)
    chi = np.concatenate([[0.0], np.cumsum(h * (a_star / mid - 1.0))])[:-1]
    chi -= chi.mean()
    grid = Grid((0.0,), (1.0,), (cell_n,))
    return CellSolution((GridField(grid, _close_periodic(chi)),), (float(chi.mean()),))


def _cell_edges(ac, n):
    h = 1.0 / n
    s = np.arange(n) * h
    X, Y = np.meshgrid(s + 0.5 * h, s, indexing="ij")
    ax = ac(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(n, n)
    X, Y = np.meshgrid(s, s + 0.5 * h, indexing="ij")
    ay = ac(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(n, n)
    if not (np.all(ax > 0) and np.all(ay > 0)):
        raise EllipticityError("non-positive cell coefficient at an edge midpoint")
    return ax, ay


def _periodic_operator(ax, ay, h):
    # ax[i, j] lives on the edge (i+1/2, j); ay[i, j] on (i, j+1/2)
    w = 1.0 / h**2
    ax_l = np.roll(ax, 1, axis=0)
    ay_l = np.roll(ay, 1, axis=1)

    def apply(u):
        out = w * (ax * (u - np.roll(u, -1, axis=0)) + ax_l * (u - np.roll(u, 1, axis=0)))
        out += w * (ay * (u - np.roll(u, -1, axis=1)) + ay_l * (u - np.roll(u, 1, axis=1)))
        return out

    return apply, w * (ax + ax_l + ay + ay_l)


def _zero_mean(v):
    return v - v.mean()


def solve_cell_problem_2d(a, cell_n=128, tol=DEFAULT_TOL, max_iter=None):
    """Periodic 5-point cell problems for both directions, mean projected out in PCG."""
    if a.dim != 2:
        raise ShapeError("solve_cell_problem_2d needs a 2D coefficient")
    if cell_n < 8:
        raise ValueError("cell_n must be at least 8")
    ac = _cell_coefficient(a)
    h = 1.0 / cell_n
    ax, ay = _cell_edges(ac, cell_n)
    apply, diag = _periodic_operator(ax, ay, h)
    grid = Grid((0.0, 0.0), (1.0, 1.0), (cell_n, cell_n))
    chis, means = [], []
    for edge, axis in ((ax, 0), (ay, 1)):
        rhs = (edge - np.roll(edge, 1, axis=axis)) / h
        if abs(rhs.mean()) > 1e-8 * max(1.0, np.abs(rhs).max()):
            raise CompatibilityError(f"cell right-hand side has mean {rhs.mean():.3e}")
        chi, _ = pcg(apply, rhs, diag, tol=tol, max_iter=max_iter, project=_zero_mean)
        chi = _zero_mean(chi)
        chis.append(GridField(grid, _close_periodic(chi)))
        means.append(float(chi.mean()))
    return CellSolution(tuple(chis), tuple(means))


def effective_coefficient_2d(a, chi):
    """Edge-midpoint quadrature of <a (delta_ik + D_i chi_k)>, symmetrised."""
    n = chi.cell_n
    if chi.dim != 2:
        raise ShapeError("effective_coefficient_2d needs a 2D cell solution")
    h = 1.0 / n
    ax, ay = _cell_edges(_cell_coefficient(a), n)
    A = np.zeros((2, 2))
    for k in range(2):
        c = chi.chi[k].values[:-1, :-1]
        dx = (np.roll(c, -1, axis=0) - c) / h
        dy = (np.roll(c, -1, axis=1) - c) / h
        A[0, k] = np.mean(ax * ((k == 0) + dx))
        A[1, k] = np.mean(ay * ((k == 1) + dy))
    return EffectiveCoefficient(0.5 * (A + A.T))


def solve_homogenized(a_star, forcing, grid, tol=DEFAULT_TOL, max_iter=None):
    """u0 from the constant-coefficient problem -div(a* grad u0) = f."""
    A = a_star.a_star if isinstance(a_star, EffectiveCoefficient) else a_star
    return solve_constant_coefficient(A, forcing, grid, tol=tol, max_iter=max_iter)


def homogenized_1d_closed_form(a_star, f, x):
    """u0 = f x (1 - x) / (2 a*) on [0, 1] with constant forcing."""
    a = float(np.asarray(a_star.a_star if isinstance(a_star, EffectiveCoefficient) else a_star).ravel()[0])
    x = np.asarray(x, dtype=float)
    return f * x * (1.0 - x) / (2.0 * a)


def _u0_gradients(u0):
    g = u0.grid
    if g.dim == 1:
        grads = [np.gradient(u0.values, g.h[0], edge_order=1)]
    else:
        grads = np.gradient(u0.values, *g.h, edge_order=1)
    return [GridField(g, d) for d in grads]


def corrector_values(exp, points):
    """u0 + eps * sum_j chi_j(frac(x/eps)) d u0/d x_j at an ``(m, dim)`` array of points."""
    g = exp.u0.grid
    pts = np.asarray(points, dtype=float).reshape(-1, g.dim)
    if not np.all(g.contains(pts)):
        bad = pts[~g.contains(pts)][0]
        raise DomainError(f"point {tuple(bad)} outside the domain {g.lo}-{g.hi}")
    base = exp.u0.interpolate(pts)
    if exp.epsilon == 0.0:
        return base
    chi = exp.chi.at(pts / exp.epsilon)
    corr = sum(chi[:, j] * d.interpolate(pts) for j, d in enumerate(_u0_gradients(exp.u0)))
    return base + exp.epsilon * corr


def corrector_solution(exp, x):
    return float(corrector_values(exp, np.atleast_1d(x))[0])


def corrector_field(exp, grid):
    return GridField(grid, corrector_values(exp, grid.points()))


def cell_to_csv(chi, a_star, directory):
    """Write each chi_k and a* with the ``# cell`` header flag."""
    from pathlib import Path

    from .grid import format_field_csv

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, c in enumerate(chi.chi):
        p = out / f"chi_{k + 1}.csv"
        p.write_text(format_field_csv(c, tag="cell"))
        paths.append(p)
    A = np.atleast_2d(a_star.a_star)
    p = out / "a_star.csv"
    p.write_text(
        f"# cell: a_star {A.shape[0]}x{A.shape[1]}\n"
        + "\n".join(",".join(f"{v:.17g}" for v in row) for row in A) + "\n"
    )
    paths.append(p)
    return paths
