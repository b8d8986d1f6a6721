import time

import numpy as np
import pytest

from downscale_op import coefficients as C
from downscale_op.elliptic import (
    EllipticProblem,
    dirichlet_operator,
    pcg,
    residual_norm,
    solve_coarse_2d,
    solve_constant_coefficient,
    solve_fine_1d,
    solve_fine_2d,
)
from downscale_op.errors import EllipticityError, IterationLimitError, ShapeError
from downscale_op.grid import Grid, GridField, interpolate, relative_l2_error, restrict

# u(0.5, 0.5) for kappa = 2 + sin(16 pi x) cos(16 pi y), f = 1; n=256 and n=512 agree to 6e-7
FAST_2D_CENTRE = 0.038024
# u(0.5) for the oscillatory 1D problem; identical to 12 digits for n = 2048, 4096, 8192
OSC_1D_CENTRE = 0.100080096128


def sine_forcing(p):
    return 2.0 * np.pi**2 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def sine_exact(grid):
    return GridField.from_function(grid, lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]))


def manufactured_error(n):
    g = Grid.unit(2, n)
    u = solve_fine_2d(EllipticProblem(C.constant(1.0, 2), sine_forcing, g))
    return relative_l2_error(u, sine_exact(g))


@pytest.mark.parametrize("c,expected", [(1.0, 0.0625), (2.0, 0.03125)])
def test_1d_constant(c, expected):
    u = solve_fine_1d(EllipticProblem(C.constant(c), 0.5, Grid.unit(1, 256)))
    assert interpolate(u, 0.5) == pytest.approx(expected, abs=1e-4)


def test_1d_oscillatory_regression():
    u = solve_fine_1d(EllipticProblem(C.oscillatory_1d(), 0.5, Grid.unit(1, 4096)))
    assert u.is_finite()
    assert interpolate(u, 0.5) == pytest.approx(OSC_1D_CENTRE, abs=1e-10)


def test_1d_symmetry():
    # 0.5 sin(32 pi x) flips sign under x -> 1 - x, so use a cosine profile
    a = C.PermeabilityField("custom", {}, lambda p: 0.5 * np.cos(32 * np.pi * p[:, 0]) + 0.8, 1, 0.3)
    v = solve_fine_1d(EllipticProblem(a, 0.5, Grid.unit(1, 4096))).flat
    assert np.max(np.abs(v - v[::-1])) <= 1e-8 * np.linalg.norm(v)


def test_manufactured_order():
    e32, e64 = manufactured_error(32), manufactured_error(64)
    assert 3.6 <= e32 / e64 <= 4.4
    assert np.log2(e32 / e64) >= 1.9


def test_zero_forcing_gives_zero():
    u = solve_fine_2d(EllipticProblem(C.fast_2d(), 0.0, Grid.unit(2, 16)))
    assert np.all(u.values == 0.0)


def test_maximum_principle():
    u = solve_fine_2d(EllipticProblem(C.fast_2d(), lambda p: 1.0 + p[:, 0], Grid.unit(2, 48)))
    assert u.values.min() >= -1e-10 * 2.0


def test_fast_2d_regression():
    u = solve_fine_2d(EllipticProblem(C.fast_2d(), 1.0, Grid.unit(2, 256)))
    assert interpolate(u, (0.5, 0.5)) == pytest.approx(FAST_2D_CENTRE, abs=1e-5)
    assert residual_norm(EllipticProblem(C.fast_2d(), 1.0, Grid.unit(2, 256)), u) < 1e-9


def test_operator_symmetric(rng):
    kx = rng.uniform(0.5, 2.0, (9, 8))
    ky = rng.uniform(0.5, 2.0, (10, 7))
    apply, diag = dirichlet_operator(kx, ky, 1 / 9, 1 / 7)
    v, w = rng.normal(size=(8, 6)), rng.normal(size=(8, 6))
    assert abs(np.vdot(apply(v), w) - np.vdot(v, apply(w))) <= 1e-10 * np.abs(np.vdot(apply(v), w))
    assert np.all(diag > 0)


def test_pcg_iteration_limit():
    kx, ky = np.ones((16, 17)), np.ones((17, 16))
    apply, diag = dirichlet_operator(kx, ky, 1 / 16, 1 / 16)
    with pytest.raises(IterationLimitError) as info:
        pcg(apply, np.ones((15, 15)), diag, tol=1e-12, max_iter=2)
    assert info.value.residual > 0


def test_ellipticity_error():
    bad = C.PermeabilityField("custom", {}, lambda p: p[:, 0] - 0.5, 2, -0.5)
    with pytest.raises(EllipticityError):
        solve_fine_2d(EllipticProblem(bad, 1.0, Grid.unit(2, 8)))
    bad1 = C.PermeabilityField("custom", {}, lambda p: p[:, 0] - 0.5, 1, -0.5)
    with pytest.raises(EllipticityError):
        solve_fine_1d(EllipticProblem(bad1, 1.0, Grid.unit(1, 8)))


def test_dimension_checks():
    with pytest.raises(ShapeError):
        EllipticProblem(C.constant(1.0, 1), 1.0, Grid.unit(2, 4))
    with pytest.raises(ShapeError):
        solve_fine_2d(EllipticProblem(C.constant(1.0, 1), 1.0, Grid.unit(1, 4)))


def test_coarse_constant_matches_fine():
    a = C.constant(1.7, 2)
    p = EllipticProblem(a, 1.0, Grid.unit(2, 16))
    np.testing.assert_allclose(solve_coarse_2d(p, 16).values, solve_fine_2d(p).values, atol=1e-10)


def test_coarse_manufactured():
    p = EllipticProblem(C.constant(1.0, 2), sine_forcing, Grid.unit(2, 16))
    u = solve_coarse_2d(p, 16)
    assert relative_l2_error(u, sine_exact(u.grid)) <= 0.02


def test_coarse_refuses_resolving_grid():
    with pytest.raises(ValueError):
        solve_coarse_2d(EllipticProblem(C.fast_2d(1 / 8), 1.0, Grid.unit(2, 64)), 64)


@pytest.mark.slow
def test_coarse_multiscale_window():
    a = C.multiscale_2d()
    fine = solve_fine_2d(EllipticProblem(a, 1.0, Grid.unit(2, 512)))
    coarse = solve_coarse_2d(EllipticProblem(a, 1.0, Grid.unit(2, 512)), 16)
    err = relative_l2_error(coarse, restrict(fine, coarse.grid))
    assert 0.01 <= err <= 0.30


def test_constant_tensor_solver():
    g = Grid.unit(2, 32)
    u = solve_constant_coefficient(np.eye(2), sine_forcing, g)
    assert relative_l2_error(u, sine_exact(g)) < 2e-3
    # anisotropic diagonal tensor: u = sin(pi x) sin(pi y) with f = pi^2 (a + b) u
    f = lambda p: np.pi**2 * 3.0 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
    u = solve_constant_coefficient(np.diag([1.0, 2.0]), f, g)
    assert relative_l2_error(u, sine_exact(g)) < 2e-3
    # full tensor: f = pi^2 (a + c) s s - 2 b pi^2 cos cos
    A = np.array([[1.0, 0.3], [0.3, 1.5]])
    f = lambda p: np.pi**2 * (2.5 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
                              - 0.6 * np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]))
    u = solve_constant_coefficient(A, f, g)
    assert relative_l2_error(u, sine_exact(g)) < 5e-3
    with pytest.raises(EllipticityError):
        solve_constant_coefficient(np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0, g)


def test_fine_2d_runtime():
    t0 = time.perf_counter()
    manufactured_error(64)
    assert time.perf_counter() - t0 < 10.0
