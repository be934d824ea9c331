import csv
import json

import pytest

from fracheat.classify import SUBCRITICAL, SUPERCRITICAL
from fracheat.nonlinearity import make_nonlinearity
from fracheat.sweep import (EXISTS, NO_EXIST, SweepPlan, cell_alpha, config_hash,
                            predicted_label, resolve_workers, run_cell, run_sweep)

CELLS = {"f": ["upow:3"], "theta": [1.5], "N": [1], "r": [0.55, 0.9]}


def _key(v):
    cert = v.certificate or {}
    return (tuple(sorted(v.cell.items())), v.empirical, v.scan_slope, v.status,
            v.blowup_time, v.refined_blowup_time, cert.get("min_residual"), v.config_hash)


@pytest.fixture(scope="module")
def serial():
    return run_sweep(SweepPlan(CELLS))


def test_plan_validation():
    with pytest.raises(ValueError):
        SweepPlan({"g": [1], "r": [1.0]})
    with pytest.raises(ValueError):
        SweepPlan({"theta": [1.0]})
    with pytest.raises(ValueError):
        SweepPlan({"r": [1.0]}, config={"grid": 3})
    with pytest.raises(ValueError):
        SweepPlan({"r": [0.1 * k for k in range(1, 11)]}, budget=5)
    with pytest.raises(ValueError):
        SweepPlan({"f": ["cube"], "r": [1.0]})


def test_cells_cross_product_with_defaults():
    plan = SweepPlan({"theta": [1.0, 2.0], "r": [0.5, 1.0, 2.0]})
    cells = plan.cells()
    assert len(cells) == 6
    assert all(c["f"] == "upow:3" and c["N"] == 1 for c in cells)


def test_alpha_rule():
    cube = make_nonlinearity("upow:3")
    # supercritical: midpoint of (theta, min(N/r, N/(q-1)))
    assert cell_alpha(cube, 1, 1.5, 0.4, SUPERCRITICAL) == pytest.approx(1.75)
    assert cell_alpha(cube, 1, 1.5, 0.6, SUPERCRITICAL) == pytest.approx((1.5 + 5 / 3) / 2)
    # subcritical: 0.8 min(theta, N/r)
    assert cell_alpha(cube, 1, 1.5, 0.9, SUBCRITICAL) == pytest.approx(0.8 / 0.9)
    assert cell_alpha(cube, 1, 1.5, 2.0, SUBCRITICAL) == pytest.approx(0.4)


def test_predicted_label():
    assert predicted_label("A(ii)", SUPERCRITICAL) == NO_EXIST
    assert predicted_label("A(i-2)", SUBCRITICAL) == EXISTS
    assert predicted_label("Unclassified", SUBCRITICAL) is None


def test_sweep_labels(serial):
    got = {v.cell["r"]: v.empirical for v in serial.verdicts}
    assert got == {0.55: NO_EXIST, 0.9: EXISTS}
    assert serial.agreement == 1.0
    assert serial.summary()["labels"] == {NO_EXIST: 1, EXISTS: 1}


def test_deterministic_and_parallel_matches_serial(serial):
    again = run_sweep(SweepPlan(CELLS, workers=2))
    assert [_key(v) for v in again.verdicts] == [_key(v) for v in serial.verdicts]


def test_single_cell_plan_equals_direct_run(serial):
    plan = SweepPlan({**CELLS, "r": [0.9]})
    direct = run_cell(plan.cells()[0], plan.resolved_config())
    assert _key(direct) == _key(serial.verdicts[1])


def test_worker_override(monkeypatch):
    monkeypatch.setenv("FRACHEAT_WORKERS", "3")
    assert resolve_workers(1) == 3
    monkeypatch.delenv("FRACHEAT_WORKERS")
    assert resolve_workers(2) == 2


def test_config_hash_depends_on_config():
    cell = {"f": "upow:3", "theta": 1.5, "N": 1, "r": 0.9}
    assert config_hash(cell, {"T": 1e-3}) != config_hash(cell, {"T": 2e-3})


def test_outputs_written(tmp_path):
    plan = SweepPlan({**CELLS, "r": [0.9]}, out_dir=str(tmp_path))
    run_sweep(plan)
    rows = list(csv.DictReader(open(tmp_path / "verdicts.csv")))
    assert len(rows) == 1 and rows[0]["empirical"] == EXISTS
    # machine-readable floats round-trip exactly
    assert float(rows[0]["alpha"]) == 0.8 / 0.9
    phase = list(csv.DictReader(open(tmp_path / "phase.csv")))
    assert phase[0]["predicted"] == EXISTS
    cell = json.loads((tmp_path / "cells" / "cell_000.json").read_text())
    assert cell["agrees"] is True
    manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
    assert manifest["cells"] == 1
