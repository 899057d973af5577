import warnings
from dataclasses import replace

import numpy as np
import pytest

from edgeorch.domain import DEFAULT_POOL, JointAction, make_scenario
from edgeorch.harness.calibrate import SHARED_SLOTS, calibrate, cost_order, load_targets
from edgeorch.simenv import CalibrationTable, default_calibration, evaluate_joint


@pytest.fixture(scope="module")
def fit():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return calibrate(inference_slots=SHARED_SLOTS)


def test_shipped_table_is_the_fit(fit):
    assert fit.table.to_dict() == default_calibration().to_dict()


def test_fit_is_deterministic(fit):
    again = calibrate(inference_slots=SHARED_SLOTS)
    assert again.table.to_dict() == fit.table.to_dict()


def test_min_threshold_row_within_ten_percent():
    sc = make_scenario("exp_a", 5, "Min")
    avg = evaluate_joint(JointAction.parse(["d7,L"] * 5), sc)[1]
    assert abs(avg - 72.08) <= 0.10 * 72.08


def test_most_rows_within_fifteen_percent(fit):
    within = [abs(r.relative) <= 0.15 for r in fit.residuals]
    assert np.mean(within) >= 0.8


def test_synthetic_targets_are_recovered():
    fixed, targets = load_targets()
    truth = default_calibration()
    synthetic = [replace(t, avg_response_ms=evaluate_joint(t.action, t.scenario, truth)[1]) for t in targets]
    got = calibrate(synthetic, fixed=fixed, inference_slots=SHARED_SLOTS)
    assert got.rms_ms < 1e-3
    for m, tiers in truth.compute_ms.items():
        for tier, v in tiers.items():
            assert got.table.compute_ms[m][tier] == pytest.approx(v, rel=1e-4)
    assert got.table.offload_hop_ms == pytest.approx(truth.offload_hop_ms, rel=1e-6)
    assert got.table.transmit_request_ms == pytest.approx(truth.transmit_request_ms, rel=1e-6)


def test_fitted_costs_respect_orderings(fit):
    c = fit.table.compute_ms
    order = cost_order(DEFAULT_POOL)
    ends = [c[m]["End"] for m in order]
    assert all(b >= a for a, b in zip(ends, ends[1:]))
    for m in c:
        assert c[m]["End"] > c[m]["Edge"] > c[m]["Cloud"] > 0


def test_large_residuals_warn():
    fixed, targets = load_targets()
    i = next(i for i, t in enumerate(targets) if t.source == "fixed_policy" and t.action[0].placement.value == "Local")
    targets[i] = replace(targets[i], avg_response_ms=2 * targets[i].avg_response_ms)
    with pytest.warns(UserWarning, match="off by more than"):
        calibrate(targets, fixed=fixed, inference_slots=SHARED_SLOTS)


def test_report_lists_every_row(fit):
    text = fit.report()
    assert text.startswith("rms residual")
    assert len(text.splitlines()) == len(fit.residuals) + 1


def test_table_round_trip(tmp_path, fit):
    fit.table.save(tmp_path / "c.json")
    assert CalibrationTable.load(tmp_path / "c.json").to_dict() == fit.table.to_dict()
