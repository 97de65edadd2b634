import json
import math
from dataclasses import replace

import numpy as np
import pytest

from coldchain.bssaa import SaaConfig
from coldchain.experiments import (
    Arm,
    ExperimentSpec,
    Shape,
    apply_arm,
    binding_refrigerator_rows,
    make_synthetic_instance,
    r1_spec,
    r2_spec,
    r3_spec,
    run_experiment,
    table1_catalog,
    transform_from_json,
    transform_to_json,
    vial_mix_volumes,
)
from coldchain.instance import load_instance
from coldchain.model import DualChamber, RemoveTier, StorageClass, Thermostable, Tier, VialMix
from conftest import TINY

FAST = SaaConfig(sample_size=6, posterior_size=12, replications=2)


def test_table1_catalog_verbatim():
    rows = {v.id: (v.presentations[0].vial_size, v.presentations[0].packed_volume, v.regimen_doses)
            for v in table1_catalog()}
    assert rows == {
        "BCG": (20, 1.2, 1), "TT": (10, 3.0, 3), "MEA": (10, 2.1, 2),
        "OPV": (20, 1.0, 4), "YF": (10, 2.5, 1), "PENTA": (1, 16.8, 3),
    }
    opv = next(v for v in table1_catalog() if v.id == "OPV")
    assert opv.storage_class is StorageClass.FREEZER_PREFERRED


def test_shape_node_count():
    assert Shape(tiers=4, regions=2, districts_per_region=2, clinics_per_district=3).node_count() == 19
    niger = Shape.niger()
    assert sum(niger.districts()) == 42 and sum(niger.clinics()) == 695
    with pytest.raises(ValueError):
        Shape(tiers=5)


def test_synthetic_instance_structure(tmp_path):
    shape = Shape(tiers=4, regions=2, districts_per_region=2, clinics_per_district=3, capacity_scale=1.0)
    inst = make_synthetic_instance(shape, seed=1, path=tmp_path / "i.json")
    assert len(inst.topology.nodes) == 19
    central_to_regional = inst.topology.arc("C", "R1")
    assert central_to_regional.schedule.sorted() == [1, 4, 7, 10]
    assert len(inst.topology.arc("R1", "D1.1").schedule.active_periods) == 12
    assert load_instance(tmp_path / "i.json") == inst


def test_three_tier_shape():
    inst = make_synthetic_instance(replace(TINY, tiers=3), seed=0)
    assert not inst.topology.by_tier(Tier.REGIONAL)


def test_calibrated_instance_has_binding_refrigerator_rows(default_instance):
    assert default_instance.meta["capacity_scale"] > 0
    assert binding_refrigerator_rows(default_instance)


def test_synthetic_generation_is_deterministic():
    a = make_synthetic_instance(TINY, seed=5)
    b = make_synthetic_instance(TINY, seed=5)
    assert a == b
    assert make_synthetic_instance(TINY, seed=6).demand.mean.sum() != a.demand.mean.sum()


@pytest.mark.parametrize(
    "t",
    [
        RemoveTier(Tier.REGIONAL, Tier.CLINIC),
        Thermostable("PENTA"),
        DualChamber("MEA", 21.09),
        VialMix("MEA", {1: 5.0, 10: 2.1}),
    ],
)
def test_transform_json_round_trip(t):
    assert transform_from_json(transform_to_json(t)) == t


def test_vial_mix_default_rule():
    mea = next(v for v in table1_catalog() if v.id == "MEA")
    vols = vial_mix_volumes(mea, [1, 5, 10])
    assert vols[10] == 2.1
    assert vols[1] == pytest.approx(2.1 * math.sqrt(10), abs=1e-4)
    assert vols[1] > vols[5] > vols[10]


def test_vial_mix_arm_uses_extended_model_and_estimates_ovw(tiny_instance):
    arm = Arm("mix", (VialMix("MEA", {1: float("nan"), 5: float("nan"), 10: float("nan")}),))
    inst = apply_arm(tiny_instance, arm)
    assert inst.vaccine("MEA").vial_sizes == (1, 5, 10)
    assert "MEA" in inst.ovw_estimate
    w = inst.resolved_wastage()
    c = inst.demand.clinic_ids[0]
    assert w.open_vial_loss("MEA", 1, c, 5) == 0.0
    assert w.open_vial_loss("MEA", 10, c, 5) > w.open_vial_loss("MEA", 5, c, 5)


def test_canned_specs():
    assert [a.name for a in r1_spec().arms] == ["four_tier", "three_tier_clinics", "three_tier_districts"]
    assert len(r2_spec().arms) == 3
    r3 = r3_spec()
    assert len([a for a in r3.arms if a.name.startswith("thermo_")]) == 6
    assert r3.arms[0].name == "baseline"


def test_spec_json_round_trip(tmp_path):
    spec = r2_spec(FAST, TINY, seed=4)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_json()))
    back = ExperimentSpec.load(path)
    assert back.to_json() == spec.to_json()


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("empty", ())
    with pytest.raises(ValueError):
        ExperimentSpec("dup", (Arm("a"), Arm("a")))


@pytest.fixture(scope="module")
def r1_tiny(tmp_path_factory):
    spec = replace(r1_spec(FAST, TINY, seed=2), arms=r1_spec().arms[:2])
    out = tmp_path_factory.mktemp("r1")
    return run_experiment(spec, out), out


def test_experiment_bundle_layout(r1_tiny):
    report, out = r1_tiny
    assert not report.partial
    for name in ("summary.csv", "comparisons.csv", "manifest.json", "boxplots.json"):
        assert (out / name).exists()
    for arm in ("four_tier", "three_tier_clinics"):
        for rep in ("rep00", "rep01"):
            for f in ("sr_by_vaccine.csv", "fic_by_region.csv", "posterior_sr_by_vaccine.csv"):
                assert (out / arm / rep / f).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["name"] == "R1"


def test_arms_share_scenario_draws(r1_tiny):
    report, _ = r1_tiny
    digests = [[r.scenario_digest for r in oc.result.replications] for oc in report.arms]
    assert digests[0] == digests[1]
    c = report.comparison("four_tier", "three_tier_clinics", "fic")
    assert c["n"] == FAST.sample_size * FAST.replications


def test_bundle_is_byte_identical_on_rerun(r1_tiny, tmp_path):
    report, out = r1_tiny
    run_experiment(report.spec, tmp_path)
    for f in sorted(out.rglob("*.csv")):
        assert f.read_bytes() == (tmp_path / f.relative_to(out)).read_bytes(), f


def test_failing_arm_marks_bundle_partial(tmp_path):
    spec = ExperimentSpec(
        "broken",
        (Arm("baseline"), Arm("bad", (Thermostable("NOPE"),))),
        FAST,
        synthetic=TINY,
    )
    report = run_experiment(spec, tmp_path)
    assert report.partial
    assert report.arm("baseline").ok
    assert "NOPE" in report.arm("bad").error
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["partial"] is True
