import numpy as np
import pytest

from downscale_op import experiments as ex
from downscale_op.config import parse_config

TINY = """
experiment = elliptic-1d
patch_sizes = 1, 3
fine_n = 256
coarse_n = 32
eval_n = 128
seeds = 3
epochs = 40
"""


def run(tmp_path, name, text=TINY, **overrides):
    cfg = parse_config(text, out_dir=str(tmp_path / name), **overrides)
    return cfg, ex.run_experiment(cfg)


def test_table_shape_and_invariants(tmp_path):
    cfg, result = run(tmp_path, "a")
    t = result.table
    assert [r.sweep_value for r in t.rows] == [1.0, 3.0]
    assert all(r.n_seeds == 3 and r.mean >= 0 and r.std >= 0 and r.method == "DON" for r in t.rows)
    assert len(result.runs) == 6 and result.baseline_error > 0


def test_deterministic_and_thread_independent(tmp_path, monkeypatch):
    monkeypatch.delenv(ex.THREADS_ENV, raising=False)
    run(tmp_path, "a")
    ex.clear_cache()
    run(tmp_path, "b", threads=2)
    a, b = (tmp_path / "a" / "trend.csv").read_bytes(), (tmp_path / "b" / "trend.csv").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "trend.svg").read_bytes() == (tmp_path / "b" / "trend.svg").read_bytes()


def test_aggregate_population_std():
    runs = [{"method": "DON", "sweep_value": 3, "rel_l2_error": e} for e in (0.1, 0.2, 0.4)]
    row = ex.aggregate(runs).row(3.0, "DON")
    assert row.mean == pytest.approx(0.7 / 3) and row.std == pytest.approx(np.std([0.1, 0.2, 0.4]))


def test_stage_error_names_stage(tmp_path):
    cfg = parse_config("experiment = elliptic-2d-multiscale\nfine_n = 128\ncoarse_n = 128\nseeds = 1",
                       out_dir=str(tmp_path))
    with pytest.raises(ex.StageError, match="coarse solve"):
        ex.run_experiment(cfg)


def test_train_stage_error_carries_sweep_value(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("nan loss")

    monkeypatch.setattr(ex, "train_don", boom)
    cfg = parse_config(TINY, out_dir=str(tmp_path))
    with pytest.raises(ex.StageError) as info:
        ex.run_experiment(cfg)
    assert info.value.stage == "train DON" and info.value.sweep_value == 1


def test_threads_env_overrides(monkeypatch):
    cfg = parse_config(TINY)
    monkeypatch.setenv(ex.THREADS_ENV, "3")
    assert ex.resolve_threads(cfg) == 3
    monkeypatch.setenv(ex.THREADS_ENV, "many")
    assert ex.resolve_threads(cfg) == 1


def test_noisy_bayes_rows(tmp_path):
    text = ("experiment = elliptic-2d-fast\nsweep = noisy-bayes\nnoise_sigma = 0.005\nfine_n = 64\n"
            "coarse_n = 16\ncell_n = 32\neval_n = 20\npatch_sizes = 1\nobservation_counts = 9\nseeds = 1\n"
            "epochs = 30\nburn_in = 20\nthin = 2\nensemble_size = 5\n")
    _, result = run(tmp_path, "bayes", text)
    assert sorted(r.method for r in result.table.rows) == ["B-DON", "noisy-DON"]
    (detail,) = result.details
    assert detail["members"] == 5 and detail["min_variance"] >= 0.0


def test_langevin_step_scaling():
    assert ex.langevin_step(2e-3, 0.01, 8) == pytest.approx(2e-3 * 2e-4 / 8)
