from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from exposuredrift.config import ChainConfig, Hyperparams
from exposuredrift.logging_utils import clear_run_context
from exposuredrift.models import DynamicNetwork
from exposuredrift.services.model import ModelParams, PreparedData
from exposuredrift.services.synthetic import SynthSpec, generate

EDGE_LIST_TEXT = """period,lender,borrower,weight
0,10,20,4.0
0,20,10,2.0
0,20,30,1.0
0,30,10,3.0
0,40,50,2.5
0,50,40,1.5
0,10,40,0.5
1,10,20,8.0
1,20,10,4.0
1,20,30,2.0
1,30,10,6.0
1,40,50,5.0
1,50,40,3.0
1,30,50,1.0
2,10,20,4.0
2,20,10,2.0
2,20,30,1.0
2,30,10,3.0
2,40,50,2.5
2,50,40,1.5
2,50,10,9.0
"""


def random_params(rng: np.random.Generator, n_periods: int, n_nodes: int, scale: float = 0.5) -> ModelParams:
    return ModelParams.from_free_gamma(
        rng.normal(0.0, scale, size=n_periods),
        rng.normal(0.0, scale, size=n_nodes),
        rng.normal(0.0, scale, size=n_nodes - 1),
        tau_eta=float(rng.gamma(2.0, 0.5)),
        tau_theta=float(rng.gamma(2.0, 0.5)),
        tau_gamma=float(rng.gamma(2.0, 0.5)),
    )


def random_relative_network(rng: np.random.Generator, n_periods: int, n_nodes: int) -> DynamicNetwork:
    matrices = rng.uniform(0.05, 1.0, size=(n_periods, n_nodes, n_nodes))
    for t in range(n_periods):
        np.fill_diagonal(matrices[t], 0.0)
    matrices /= matrices.sum(axis=2, keepdims=True)
    return DynamicNetwork(
        matrices=matrices,
        node_labels=tuple(range(n_nodes)),
        period_labels=tuple(str(t) for t in range(n_periods)),
        provenance="Y",
        mask=np.zeros((n_periods, n_nodes), dtype=bool),
    )


@pytest.fixture(autouse=True)
def _reset_run_context():
    yield
    clear_run_context()
    logging.disable(logging.NOTSET)


@pytest.fixture
def hyper() -> Hyperparams:
    return Hyperparams()


@pytest.fixture
def edge_list_file(tmp_path: Path) -> Path:
    path = tmp_path / "edges.csv"
    path.write_text(EDGE_LIST_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def small_network() -> DynamicNetwork:
    net, _ = generate(SynthSpec(n_nodes=4, n_periods=2, seed=3))
    return net


@pytest.fixture
def small_data(small_network) -> PreparedData:
    return PreparedData.from_network(small_network)


@pytest.fixture
def quick_chain() -> ChainConfig:
    return ChainConfig(n_iterations=200, n_burnin=100, thin=5, adapt_batch=20, seed=7)
