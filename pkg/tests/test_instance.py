import json

import numpy as np
import pytest

from coldchain.instance import instance_from_json, instance_to_json, load_instance, save_instance


def test_round_trip(tiny_instance, tmp_path):
    path = save_instance(tiny_instance, tmp_path / "inst.json")
    back = load_instance(path)
    assert back == tiny_instance
    assert np.array_equal(back.demand.mean, tiny_instance.demand.mean)
    doc = json.loads(path.read_text())
    assert set(doc) >= {"horizon", "vaccines", "nodes", "arcs", "wastage", "demand_model"}


def test_infinite_transport_capacity_is_omitted(tiny_instance):
    doc = instance_to_json(tiny_instance)
    assert all("transport_capacity" not in a for a in doc["arcs"])
    assert json.dumps(doc)  # strict JSON, no Infinity


def test_estimated_ovw_is_resolved(tiny_instance):
    w = tiny_instance.resolved_wastage()
    c = tiny_instance.demand.clinic_ids[0]
    assert 0 < w.open_vial_loss("BCG", 20, c, 1) < 1
    assert w.open_vial_loss("PENTA", 1, c, 1) == 0.0


def _doc():
    return {
        "horizon": {"periods": 2},
        "vaccines": [{"id": "V", "regimen_doses": 1, "presentations": [{"vial_size": 10, "packed_volume": 2.0}]}],
        "nodes": [
            {"id": "C", "tier": "Central", "refrigerator_capacity": 100},
            {"id": "K", "tier": "Clinic", "refrigerator_capacity": 10, "region": "r"},
        ],
        "arcs": [{"from": "C", "to": "K", "transport_capacity": 50}],
        "wastage": {"open_vial": [{"vaccine": "V", "vial_size": 10, "value": 0.25}]},
        "demand_model": {"entries": [{"vaccine": "V", "clinic": "K", "mean": 12, "std": 3}]},
    }


def test_minimal_document_defaults():
    inst = instance_from_json(_doc())
    assert inst.topology.arc("C", "K").schedule.sorted() == [1, 2]
    assert inst.wastage.open_vial_loss("V", 10, "K", 1) == 0.25
    assert np.array_equal(inst.demand.mean[0, 0], [12.0, 12.0])
    assert inst.demand.daily("V", "K") == pytest.approx(24 / 60)


def test_unknown_demand_type():
    doc = _doc()
    doc["demand_model"] = {"type": "survey"}
    with pytest.raises(ValueError):
        instance_from_json(doc)
