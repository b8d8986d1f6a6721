from pathlib import Path

import numpy as np
import pytest

from downscale_op.cli import main
from downscale_op.config import ExperimentConfig, format_config, load_config, parse_config
from downscale_op.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY = """
experiment = elliptic-1d
patch_sizes = 1, 3
fine_n = 256
coarse_n = 32
eval_n = 128
seeds = 2
epochs = 30
"""


def test_defaults_per_experiment():
    one = ExperimentConfig()
    assert one.epsilon == 1 / 16 and one.forcing == 0.5 and one.eval_n == 1024 and one.seeds == 20
    fast = ExperimentConfig(experiment="elliptic-2d-fast")
    assert fast.epsilon == 1 / 8 and fast.eval_n == 100 and fast.dim == 2
    multi = ExperimentConfig(experiment="elliptic-2d-multiscale")
    assert multi.coarse_n == 16 and len(multi.multiscale_eps) == 8


def test_parse_values():
    cfg = parse_config("experiment = elliptic-2d-fast  # comment\nepsilon = 1/8\n"
                       "observation_counts = 9, 25, 49\nsweep = n-observations\nnormalize = no\n")
    assert cfg.epsilon == 0.125 and cfg.observation_counts == (9, 25, 49)
    assert cfg.sweep_values == (9, 25, 49) and cfg.normalize is False


@pytest.mark.parametrize("text", [
    "experiment = elliptic-3d",
    "sweep = everything",
    "patch_sizes = 1, 4",
    "epsilon = -1",
    "epsilon = 1/0",
    "seeds = 2.5",
    "no_such_key = 1",
    "experiment = elliptic-2d-fast\nobservation_counts = 10",
    "sweep = noisy-bayes",
    "this line has no separator",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_round_trip_is_canonical():
    cfg = parse_config(TINY)
    text = format_config(cfg)
    again = parse_config(text)
    assert again == cfg and format_config(again) == text


def test_shipped_configs_parse():
    paths = sorted(CONFIGS.glob("*.cfg"))
    assert len(paths) >= 6
    for p in paths:
        load_config(p)


def test_missing_config_exit_2(capsys):
    assert main(["experiment", "--config", "/does/not/exist.cfg"]) == 2
    assert "/does/not/exist.cfg" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["solve", "--bogus-flag"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_value_exit_2(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("patch_sizes = 2\n")
    assert main(["experiment", "--config", str(p)]) == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("experiment = elliptic-2d-multiscale\n")
    # the multiscale coefficient has no single period, so there is no cell problem
    assert main(["cell", "--config", str(p)]) == 2
    # a 128-cell coarse grid resolves the finest multiscale period: the coarse solver refuses
    p.write_text("experiment = elliptic-2d-multiscale\nfine_n = 128\ncoarse_n = 128\n")
    assert main(["solve", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 1
    assert "resolves the fine scale" in capsys.readouterr().err
    assert main(["plot", str(tmp_path / "no_table.csv")]) == 1


def test_experiment_smoke(tmp_path, capsys):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    assert main(["experiment", "--config", str(p), "--out-dir", str(tmp_path / "out")]) == 0
    for name in ("trend.csv", "trend.svg", "runs.csv", "config.cfg"):
        assert (tmp_path / "out" / name).is_file()
    assert main(["plot", str(tmp_path / "out" / "trend.csv"), "-o", str(tmp_path / "p.svg")]) == 0
    assert (tmp_path / "p.svg").read_text().startswith("<svg")


def test_cell_prints_bounded_tensor(tmp_path, capsys):
    assert main(["cell", "--config", str(CONFIGS / "cell2d.cfg"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    eig = [float(v) for v in out.split("eigenvalues:")[1].split(",")]
    assert len(eig) == 2 and all(1.0 <= e <= 3.0 for e in eig)
    assert (tmp_path / "chi_1.csv").is_file() and (tmp_path / "a_star.csv").is_file()


def test_pipeline_subcommands(tmp_path):
    p = tmp_path / "b.cfg"
    p.write_text("experiment = elliptic-2d-fast\nfine_n = 64\ncoarse_n = 16\ncell_n = 32\neval_n = 20\n"
                 "patch_sizes = 3\nobservation_counts = 9\nnoise_sigma = 0.005\nepochs = 20\n"
                 "burn_in = 10\nthin = 2\nensemble_size = 4\n")
    for cmd in ("solve", "dataset", "train", "bayes"):
        assert main([cmd, "--config", str(p), "--out-dir", str(tmp_path)]) == 0, cmd
    for name in ("fine.csv", "coarse.csv", "observations.csv", "params.csv", "prediction.csv",
                 "ensemble_mean.csv", "ensemble_variance.csv"):
        assert (tmp_path / name).is_file(), name
    var = np.loadtxt(tmp_path / "ensemble_variance.csv", comments="#")
    assert np.all(var >= 0)
