import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from exposuredrift.cli import EXIT_OK, main
from exposuredrift.services.edge_list import read_network_dir
from exposuredrift.services.model import ModelParams, PreparedData, log_likelihood

GOLDEN = Path(__file__).resolve().parent / "golden" / "transform"
LABELS = "q1,q2,q3"
TABLES = [
    ("relevance.csv", {"period": str}),
    ("relevance_by_period.csv", None),
    ("entropy.csv", None),
    ("entropy_changes.csv", None),
    ("entropy_change_summary.csv", None),
    ("stats.csv", None),
]


def _assert_frames_match(actual: pd.DataFrame, expected: pd.DataFrame) -> None:
    assert list(actual.columns) == list(expected.columns)
    assert len(actual) == len(expected)
    for column in expected.columns:
        if pd.api.types.is_numeric_dtype(expected[column]):
            np.testing.assert_allclose(
                actual[column].to_numpy(dtype=float),
                expected[column].to_numpy(dtype=float),
                rtol=1e-9,
                atol=1e-12,
                err_msg=column,
            )
        else:
            assert actual[column].astype(str).tolist() == expected[column].astype(str).tolist(), column


@pytest.fixture
def golden_run(tmp_path):
    out = tmp_path / "out"
    code = main(["transform", str(GOLDEN / "edges.csv"), str(out), "--period-labels", LABELS, "--epsilon", "0"])
    assert code == EXIT_OK
    return out


@pytest.mark.parametrize("name, dtype", TABLES)
def test_transform_tables_match_frozen_output(golden_run, name, dtype):
    actual = pd.read_csv(golden_run / name, dtype=dtype)
    expected = pd.read_csv(GOLDEN / name, dtype=dtype)
    _assert_frames_match(actual, expected)


def test_relative_network_matches_frozen_shares(golden_run):
    net = read_network_dir(golden_run / "network")
    assert net.node_labels == (1, 2, 3, 4, 5)
    assert net.period_labels == ("q1", "q2", "q3")
    assert not net.mask.any()
    expected = np.zeros((3, 5, 5))
    shares = pd.read_csv(GOLDEN / "relative.csv")
    for period, lender, borrower, share in shares.itertuples(index=False):
        expected[int(period), net.index_of(int(lender)), net.index_of(int(borrower))] = share
    np.testing.assert_allclose(net.matrices, expected, rtol=1e-12, atol=1e-15)


def test_rescale_report_matches_frozen_factors(golden_run):
    report = json.loads((golden_run / "rescale_report.json").read_text(encoding="utf-8"))
    expected = json.loads((GOLDEN / "rescale.json").read_text(encoding="utf-8"))
    transitions = report["transitions"]
    assert [item["ratio"] for item in transitions] == pytest.approx(expected["ratios"], rel=1e-12)
    assert [item["sample_size"] for item in transitions] == expected["sample_sizes"]
    assert report["cumulative_factors"] == pytest.approx(expected["cumulative_factors"], rel=1e-12)
    assert report["largest_exposure"] == pytest.approx(expected["largest_exposure"], rel=1e-12)


def test_likelihood_of_pipeline_output_matches_frozen_values(tmp_path):
    expected = json.loads((GOLDEN / "likelihood.json").read_text(encoding="utf-8"))
    out = tmp_path / "floored"
    code = main(
        ["transform", str(GOLDEN / "edges.csv"), str(out), "--epsilon", repr(expected["epsilon"])]
    )
    assert code == EXIT_OK
    data = PreparedData.from_network(read_network_dir(out / "network"))
    assert int(data.active.sum()) == expected["active_rows"]
    flat = ModelParams.zeros(3, 5)
    assert log_likelihood(flat, data) == pytest.approx(expected["log_likelihood_alpha_one"], rel=1e-10)
    doubled = ModelParams.from_free_gamma([math.log(2.0)] * 3, np.zeros(5), np.zeros(4))
    assert log_likelihood(doubled, data) == pytest.approx(expected["log_likelihood_alpha_two"], rel=1e-10)
