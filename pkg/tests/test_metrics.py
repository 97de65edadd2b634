import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldchain.demand import ScenarioSet
from coldchain.metrics import (
    MetricsError,
    SolutionBundle,
    box_stats,
    compute_fic,
    compute_sr,
    evaluate,
    paired_compare,
    write_fic_csv,
    write_sr_csv,
)
from oracles import paired_t_oracle, type7_quantile


def _fixture():
    # two vaccines (regimens 1 and 2), two clinics in two regions, one period, two scenarios
    served = np.array([[[8.0], [4.0]], [[10.0], [6.0]]])
    bundle = SolutionBundle(("A", "B"), ("K1", "K2"), served, np.array([5.0, 3.0]), np.array([1.0, 2.0]))
    values = np.array(
        [
            [[[10.0], [4.0]], [[20.0], [8.0]]],
            [[[5.0], [0.0]], [[10.0], [0.0]]],
        ]
    )
    scen = ScenarioSet(("A", "B"), ("K1", "K2"), values, seed=1)
    return bundle, scen


def test_sr_by_hand():
    bundle, scen = _fixture()
    sr = compute_sr(bundle, scen)
    # vaccine A: (8+4)/(10+4) and (8+4)/5; vaccine B: (10+6)/(20+8) and (10+6)/10
    assert np.allclose(sr, [[12 / 14, 12 / 5], [16 / 28, 16 / 10]])
    capped = compute_sr(bundle, scen, cap_at_demand=True)
    assert np.allclose(capped, [[12 / 14, 1.0], [16 / 28, 1.0]])


def test_sr_zero_demand_scenario_is_one():
    bundle, scen = _fixture()
    zero = ScenarioSet(scen.vaccine_ids, scen.clinic_ids, np.zeros_like(scen.values), 0)
    assert np.all(compute_sr(bundle, zero) == 1.0)


def test_fic_by_hand_dose_and_cohort_denominators():
    bundle, scen = _fixture()
    t = compute_fic(bundle, scen, {"K1": "north", "K2": "south"})
    # K1 demand over vaccines: 30 and 15; K2: 12 and 0
    assert np.allclose(t.clinic, [[500 / 30, 500 / 15], [300 / 12, 0.0]])
    assert t.regions == ("north", "south")
    assert np.allclose(t.region, t.clinic)
    assert any("K2" in d for d in t.diagnostics)
    cohort = compute_fic(bundle, scen, {"K1": "north", "K2": "south"}, denominator="cohort")
    # K1, scenario 1: children = mean(10/1, 20/2) = 10
    assert cohort.clinic[0, 0] == pytest.approx(50.0)
    with pytest.raises(ValueError):
        compute_fic(bundle, scen, denominator="bogus")


def test_region_pooling_weights_by_demand():
    bundle, scen = _fixture()
    t = compute_fic(bundle, scen, {"K1": "all", "K2": "all"})
    assert np.allclose(t.region[0], [800 / 42, 800 / 15])


def test_index_mismatch():
    bundle, scen = _fixture()
    other = ScenarioSet(("A", "C"), scen.clinic_ids, scen.values, 1)
    with pytest.raises(MetricsError, match="index mismatch"):
        compute_sr(bundle, other)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_box_stats_type7(values):
    b = box_stats(values)
    for key, q in (("q1", 0.25), ("median", 0.5), ("q3", 0.75)):
        assert b[key] == pytest.approx(type7_quantile(values, q), rel=1e-9, abs=1e-6)
    assert b["min"] <= b["q1"] <= b["median"] <= b["q3"] <= b["max"]


def test_box_stats_rejects_empty():
    with pytest.raises(MetricsError):
        box_stats([])


@pytest.mark.parametrize("seed", range(6))
def test_paired_t_against_incomplete_beta_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 60))
    a = rng.normal(10, 2, n)
    b = a + rng.normal(0.3 * (seed - 2), 1.0, n)
    mean, t, p = paired_t_oracle(a, b)
    res = paired_compare(a, b)
    assert res.mean_difference == pytest.approx(mean, rel=1e-12)
    assert res.t_statistic == pytest.approx(t, rel=1e-10)
    assert res.p_value == pytest.approx(p, rel=1e-8, abs=1e-14)
    one = paired_compare(a, b, alternative="greater")
    expected = p / 2 if t > 0 else 1 - p / 2
    assert one.p_value == pytest.approx(expected, rel=1e-8, abs=1e-14)


def test_paired_zero_variance():
    a = np.arange(5.0)
    res = paired_compare(a, a + 2.0, alternative="greater")
    assert res.p_value == 0.0 and res.significant and "zero variance" in res.note
    same = paired_compare(a, a)
    assert same.p_value == 1.0 and not same.significant


def test_paired_requires_same_draws():
    bundle, scen = _fixture()
    r1 = evaluate(bundle, scen, {"K1": "n", "K2": "s"})
    shifted = ScenarioSet(scen.vaccine_ids, scen.clinic_ids, scen.values + 1.0, 2)
    r2 = evaluate(bundle, shifted, {"K1": "n", "K2": "s"})
    with pytest.raises(MetricsError, match="unpaired"):
        paired_compare(r1, r2)
    with pytest.raises(MetricsError, match="unpaired"):
        paired_compare([1.0, 2.0], [1.0, 2.0, 3.0])


def test_csv_layout_and_precision(tmp_path):
    bundle, scen = _fixture()
    r = evaluate(bundle, scen, {"K1": "n", "K2": "s"})
    sr_path = write_sr_csv(r, tmp_path / "sr.csv")
    fic_path = write_fic_csv(r, tmp_path / "fic.csv")
    rows = list(csv.reader(sr_path.open()))
    assert rows[0] == ["group", "scenario", "value"]
    assert rows[1][:2] == ["A", "1"]
    assert float(rows[1][2]) == r.sr[0, 0]  # repr round-trips exactly
    assert len(list(csv.reader(fic_path.open()))) == 1 + 2 * 2


def test_report_summary_shapes():
    bundle, scen = _fixture()
    r = evaluate(bundle, scen, {"K1": "n", "K2": "s"})
    assert r.per_scenario("sr").shape == (2,)
    assert set(r.box()["sr"]) == {"A", "B"}
    assert set(r.summary()) == {"sr_mean", "fic_mean", "box"}
    with pytest.raises(ValueError):
        r.per_scenario("cost")
