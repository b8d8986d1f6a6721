import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from downscale_op.don import (
    DonArchitecture,
    DonParams,
    don_forward,
    don_loss_and_grad,
    forward_batch,
    init_params,
    load_params,
    predict_field,
    zeros,
)
from downscale_op.errors import ShapeError
from downscale_op.grid import Grid, GridField
from downscale_op.patches import PatchSpec, build_observation_set, observation_grid

from oracles import don_gradient_error, random_instance


def small_arch():
    return DonArchitecture((9, 6, 4), (2, 5, 4))


def test_architecture_checks():
    with pytest.raises(ShapeError):
        DonArchitecture((3, 8, 4), (1, 8, 5))
    arch = DonArchitecture.default(9, 2)
    assert arch.branch_layers == (9, 64, 64, 64) and arch.trunk_layers == (2, 64, 64, 64)
    assert arch.K == 64
    expected = sum(a * b + b for a, b in [(9, 64), (64, 64), (64, 64), (2, 64), (64, 64), (64, 64)]) + 1
    assert arch.n_params == expected


def test_flatten_unflatten_identity(rng):
    arch = small_arch()
    v = rng.normal(size=arch.n_params)
    p = DonParams.unflatten(arch, v)
    assert p.flatten().tobytes() == v.tobytes()
    # views share the flat storage, in the documented order
    W1, b1 = p.branch[0]
    assert np.array_equal(W1.ravel(), v[:54]) and np.array_equal(b1, v[54:60])
    assert p.output_bias == v[-1]
    with pytest.raises(ShapeError):
        DonParams(arch, v[:-1])


def test_zero_network():
    arch = small_arch()
    p = zeros(arch)
    assert don_forward(p, arch, np.ones(9), [0.3, 0.4]) == 0.0
    p.vector[-1] = 2.5
    assert don_forward(p, arch, np.ones(9), [0.3, 0.4]) == 2.5


def test_hand_computed_forward():
    # K=1; branch ends in a constant 1, trunk is one tanh layer then identity
    arch = DonArchitecture((2, 2, 1), (2, 2, 1))
    p = zeros(arch)
    (Wb1, bb1), (Wb2, bb2) = p.branch
    bb2[:] = 1.0
    (Wt1, bt1), (Wt2, bt2) = p.trunk
    Wt1[:] = [[1.0, 0.5], [-0.5, 2.0]]
    bt1[:] = [0.1, -0.2]
    Wt2[:] = [[1.0], [-1.0]]
    x = np.array([0.3, 0.7])
    h = np.tanh(x @ np.array([[1.0, 0.5], [-0.5, 2.0]]) + [0.1, -0.2])
    assert don_forward(p, arch, [5.0, -3.0], x) == pytest.approx(h[0] - h[1], abs=1e-15)


def test_shape_errors():
    arch = small_arch()
    p = zeros(arch)
    with pytest.raises(ShapeError):
        don_forward(p, arch, np.ones(4), [0.1, 0.2])
    with pytest.raises(ShapeError):
        don_forward(p, arch, np.ones(9), [0.1])
    with pytest.raises(ShapeError):
        don_forward(p, DonArchitecture((9, 3, 4), (2, 5, 4)), np.ones(9), [0.1, 0.2])


def test_init_params():
    arch = DonArchitecture.default(9, 2, width=16, K=8)
    a, b, c = init_params(arch, 1), init_params(arch, 1), init_params(arch, 2)
    assert a.vector.tobytes() == b.vector.tobytes()
    assert not np.array_equal(a.vector, c.vector)
    for W, bias in a.branch + a.trunk:
        assert np.all(np.abs(W) <= np.sqrt(6.0 / sum(W.shape)))
        assert np.all(bias == 0.0)


def test_forward_deterministic(rng):
    arch, params, ds = random_instance(3)
    a = forward_batch(params, ds.branch, ds.locations)
    b = forward_batch(params, ds.branch, ds.locations)
    assert a.tobytes() == b.tobytes()


def test_branch_order_matters():
    arch, params, ds = random_instance(4)
    out = forward_batch(params, ds.branch, ds.locations)
    swapped = forward_batch(params, ds.branch[:, ::-1], ds.locations)
    assert not np.allclose(out, swapped)


def test_loss_trivial_cases():
    arch = small_arch()
    ds = build_observation_set(
        GridField(Grid.unit(2, 4), np.zeros(25)), GridField(Grid.unit(2, 4), np.zeros(25)),
        observation_grid(Grid.unit(2, 4), 2), PatchSpec(3, 0.1))
    loss, grad = don_loss_and_grad(zeros(arch), arch, ds)
    assert loss == 0.0 and np.all(grad.vector == 0.0)
    # one triplet, output bias only: loss (b - y)^2, gradient 2 (b - y)
    one = build_observation_set(GridField(Grid.unit(2, 4), np.zeros(25)),
                                GridField(Grid.unit(2, 4), np.full(25, 0.75)),
                                np.array([[0.5, 0.5]]), PatchSpec(3, 0.1))
    p = zeros(arch)
    p.vector[-1] = 2.0
    loss, grad = don_loss_and_grad(p, arch, one)
    assert loss == pytest.approx(1.25**2) and grad.output_bias == pytest.approx(2 * 1.25)
    assert np.count_nonzero(grad.vector) == 1


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    assert don_gradient_error(seed) <= 1e-5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), step=st.just(1e-4))
def test_small_step_decreases_loss(seed, step):
    arch, params, ds = random_instance(seed)
    loss, grad = don_loss_and_grad(params, arch, ds)
    moved = DonParams(arch, params.vector - step * grad.vector)
    assert don_loss_and_grad(moved, arch, ds)[0] <= loss


def test_predict_field():
    arch = DonArchitecture.default(9, 2, width=8, K=4)
    p = zeros(arch)
    p.vector[-1] = -1.5
    coarse = GridField.from_function(Grid.unit(2, 16), lambda x: x[:, 0])
    eval_grid = Grid.unit(2, 100)
    pred = predict_field(p, arch, coarse, PatchSpec(3, 1 / 64), eval_grid)
    assert pred.values.size == 10201 and np.all(pred.values == -1.5)


def test_predict_consistent_with_training_points(rng):
    arch = DonArchitecture.default(1, 2, width=8, K=4)
    p = DonParams(arch, rng.normal(scale=0.3, size=arch.n_params))
    coarse = GridField.from_function(Grid.unit(2, 16), lambda x: x[:, 0] * x[:, 1])
    obs = observation_grid(coarse.grid, 3)
    ds = build_observation_set(coarse, coarse, obs, PatchSpec(1, 0.1))
    on_grid = predict_field(p, arch, coarse, PatchSpec(1, 0.1), Grid((0.25, 0.25), (0.75, 0.75), (2, 2)))
    np.testing.assert_array_equal(on_grid.flat, forward_batch(p, ds.branch, ds.locations))


def test_save_load(tmp_path, rng):
    arch = small_arch()
    p = DonParams(arch, rng.normal(size=arch.n_params))
    p.to_csv(tmp_path / "p.csv")
    q = load_params(tmp_path / "p.csv")
    assert q.arch == arch and q.vector.tobytes() == p.vector.tobytes()
