import importlib
import sys

import pytest
from pydantic import ValidationError

from exposuredrift.config import ChainConfig, Hyperparams, RunConfig, TransformOptions, read_config_file


def reload_config(monkeypatch, **env):
    for key, value in env.items():
        if value is None:
            monkeypatch.delenv(key, raising=False)
        else:
            monkeypatch.setenv(key, value)
    module_name = "exposuredrift.config"
    if module_name in sys.modules:
        del sys.modules[module_name]
    config = importlib.import_module(module_name)
    importlib.reload(config)
    return config


def test_env_overrides_logging_and_threads(monkeypatch):
    config = reload_config(monkeypatch, LOG_FORMAT="text", LOG_TO_FILE="yes", EXPOSUREDRIFT_THREADS="4")
    assert config.Config.LOG_FORMAT == "text"
    assert config.Config.LOG_TO_FILE is True
    assert config.Config.DEFAULT_THREADS == 4
    assert config.Config.as_dict()["DEFAULT_THREADS"] == 4


def test_unparseable_thread_count_falls_back_to_one(monkeypatch):
    config = reload_config(monkeypatch, EXPOSUREDRIFT_THREADS="many", LOG_TO_FILE=None)
    assert config.Config.DEFAULT_THREADS == 1
    assert config.Config.LOG_TO_FILE is False


def test_hyperparams_default_to_small_values():
    hyper = Hyperparams()
    assert hyper.tau_mu == 0.01
    assert {hyper.a_eta, hyper.b_eta, hyper.a_theta, hyper.b_theta, hyper.a_gamma, hyper.b_gamma} == {0.01}
    with pytest.raises(ValidationError):
        Hyperparams(a_eta=0.0)


def test_chain_defaults_match_long_schedule():
    chain = ChainConfig()
    assert (chain.n_iterations, chain.n_burnin, chain.thin) == (400_000, 200_000, 20)
    assert chain.effective_adapt_window == 100_000
    assert chain.adapt_batch == 100
    assert chain.target_acceptance == (0.22, 0.30)
    assert chain.initial_proposal_sd == 0.1
    assert chain.expected_draws == 10_000


def test_chain_schedule_invariants():
    with pytest.raises(ValidationError):
        ChainConfig(n_iterations=100, n_burnin=100)
    with pytest.raises(ValidationError):
        ChainConfig(n_iterations=100, n_burnin=50, adapt_window=60)
    with pytest.raises(ValidationError):
        ChainConfig(thin=0)
    with pytest.raises(ValidationError):
        ChainConfig(target_acceptance=(0.4, 0.3))
    with pytest.raises(ValidationError):
        ChainConfig(seed=2**64)
    assert ChainConfig(n_iterations=1000, n_burnin=500, thin=10).expected_draws == 50


def test_transform_options_reject_zero_top_k():
    with pytest.raises(ValidationError):
        TransformOptions(top_k=0)
    assert TransformOptions().epsilon == 1e-8


def test_flags_override_file_values(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        """
        # chain schedule
        [chain]
        n_iterations = 2000
        n_burnin = 1000
        thin = 10
        a_eta = 0.5
        target_acceptance = [0.2, 0.35]
        record_decisions = true
        """,
        encoding="utf-8",
    )
    config = RunConfig.from_file(path, {"thin": 25, "seed": None, "epsilon": 1e-6})
    assert config.chain.n_iterations == 2000
    assert config.chain.thin == 25
    assert config.chain.seed is None
    assert config.chain.target_acceptance == (0.2, 0.35)
    assert config.chain.record_decisions is True
    assert config.hyper.a_eta == 0.5
    assert config.transform.epsilon == 1e-6


def test_config_file_written_back_reads_identically(tmp_path):
    original = RunConfig.merged(
        {"n_iterations": 3000, "n_burnin": 1000, "seed": 11, "b_gamma": 0.2, "top_k": 5}, None
    )
    path = tmp_path / "echo.conf"
    original.to_file(path)
    restored = RunConfig.from_file(path)
    assert restored.flat() == original.flat()


def test_malformed_config_line_is_rejected(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("n_iterations 10\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_config_file(path)


def test_missing_input_path_is_rejected(tmp_path):
    with pytest.raises(ValidationError):
        RunConfig(input_path=tmp_path / "absent.csv")


def test_quoted_values_keep_hash_characters(tmp_path):
    output = tmp_path / "run#1"
    path = tmp_path / "paths.conf"
    path.write_text(f'output_dir = "{output.as_posix()}"  # trailing comment\nthin = 5\n', encoding="utf-8")
    values = read_config_file(path)
    assert values == {"output_dir": output.as_posix(), "thin": 5}
    assert RunConfig.from_file(path).output_dir == output


def test_config_file_paths_round_trip_and_can_be_left_out(tmp_path):
    source = tmp_path / "edges #2.csv"
    source.write_text("period,lender,borrower,weight\n", encoding="utf-8")
    original = RunConfig.merged({"input_path": source, "output_dir": tmp_path / "out"}, None)
    with_paths = tmp_path / "with.conf"
    original.to_file(with_paths)
    assert RunConfig.from_file(with_paths).flat() == original.flat()
    without_paths = tmp_path / "without.conf"
    original.to_file(without_paths, include_paths=False)
    assert "input_path" not in read_config_file(without_paths)
    assert "output_dir" not in read_config_file(without_paths)
