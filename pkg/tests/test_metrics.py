import json

import jsonschema
import numpy as np
import pytest

from gdmap.errors import EmptyInput, InvalidArgument
from gdmap.metrics import (
    REPORT_SCHEMA,
    chamfer,
    error_field,
    evaluate,
    evaluate_blockwise,
    iou,
    nearest_distances,
)

from oracles import chamfer_brute, iou_brute, nearest_linear


def test_chamfer_identical_is_zero():
    a = np.random.default_rng(0).normal(size=(30, 3))
    assert chamfer(a, a) == 0.0


def test_chamfer_hand_value():
    # a->b: 1 and 1 (mean 1); b->a: 1 (mean 1)
    assert chamfer([[0, 0, 0], [2, 0, 0]], [[1, 0, 0]]) == pytest.approx(1.0)
    # one-point translation by 3
    assert chamfer([[0, 0, 0]], [[0, 3, 0]]) == 3.0


def test_chamfer_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(40, 3)), rng.normal(size=(25, 3))
    assert chamfer(a, b) == pytest.approx(chamfer(b, a), abs=1e-12)


def test_nearest_distances_match_linear_scan():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(0, 10, (60, 3)), rng.uniform(0, 10, (45, 3))
    d = nearest_distances(a, b)
    assert d.tolist() == pytest.approx([nearest_linear(b, p)[1] for p in a], abs=1e-12)
    assert np.array_equal(error_field(a, b), d)


def test_iou_hand_values():
    assert iou([[0.5, 0.5, 0.5]], [[0.9, 0.1, 0.2]], 1.0) == 100.0
    assert iou([[0.5, 0.5, 0.5]], [[1.5, 0.5, 0.5]], 1.0) == 0.0
    assert iou([[0.5, 0, 0], [1.5, 0, 0]], [[1.5, 0, 0]], 1.0) == 50.0


def test_iou_negative_coordinates_floor():
    # -0.1 lies in cell -1, not cell 0
    assert iou([[-0.1, 0, 0]], [[0.1, 0, 0]], 1.0) == 0.0


@pytest.mark.parametrize("trial", range(10))
def test_brute_force_oracles(trial):
    rng = np.random.default_rng(100 + trial)
    n, m = rng.integers(1, 200, 2)
    a = rng.uniform(-20, 20, (n, 3))
    b = rng.uniform(-20, 20, (m, 3))
    assert abs(chamfer(a, b) - chamfer_brute(a.tolist(), b.tolist())) < 1e-9
    for res in (6.0, 4.0, 2.0):
        assert iou(a, b, res) == iou_brute(a.tolist(), b.tolist(), res)


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        chamfer(np.zeros((0, 3)), [[0, 0, 0]])
    with pytest.raises(EmptyInput):
        iou([[0, 0, 0]], np.zeros((0, 3)), 1.0)


def test_bad_resolution():
    with pytest.raises(InvalidArgument):
        iou([[0, 0, 0]], [[0, 0, 0]], 0.0)
    with pytest.raises(InvalidArgument):
        evaluate([[0, 0, 0]], [[0, 0, 0]], resolutions=())


class TestReport:
    def test_schema(self):
        rng = np.random.default_rng(3)
        rep = evaluate(rng.normal(size=(50, 3)), rng.normal(size=(60, 3)))
        doc = json.loads(rep.to_json())
        jsonschema.validate(doc, REPORT_SCHEMA)
        assert set(doc["iou_pct"]) == {"6", "4", "2"}
        assert doc["n_generated"] == 50 and doc["n_truth"] == 60

    def test_text(self):
        rep = evaluate([[0, 0, 0]], [[0, 1, 0]], resolutions=(0.5,))
        txt = rep.to_text()
        assert "chamfer_m = 1.000000" in txt and "iou_pct@0.5m = 0.0000" in txt

    def test_schema_rejects_bad_iou(self):
        doc = json.loads(evaluate([[0, 0, 0]], [[0, 0, 0]]).to_json())
        doc["iou_pct"]["4"] = 120.0
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(doc, REPORT_SCHEMA)


def test_blockwise_averages_blocks():
    path = np.stack([np.arange(301.0), np.zeros(301), np.zeros(301)], axis=1)
    truth = np.array([[10, 1, 0], [200, 1, 0]], float)
    gen = np.array([[10, 2, 0], [200, 4, 0]], float)
    rep = evaluate_blockwise(gen, truth, path, block_length=150)
    assert rep.blocks == 2
    assert rep.chamfer_m == pytest.approx((1 + 3) / 2)
    whole = evaluate(gen, truth)
    assert whole.chamfer_m == pytest.approx(2.0)
    assert rep.iou_pct[2.0] == 0.0
