from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coldchain.demand import DemandModel, sample_scenarios  # noqa: E402
from coldchain.experiments import Shape, make_synthetic_instance  # noqa: E402
from coldchain.model import (  # noqa: E402
    TRANSIT_MODES,
    Arc,
    NetworkTopology,
    Node,
    ScheduleMask,
    StorageClass,
    Tier,
    VaccineType,
    VialPresentation,
    WastageProfile,
)

TINY = Shape(tiers=4, regions=1, districts_per_region=1, clinics_per_district=2, periods=4, capacity_scale=1.25)


def zero_wastage() -> WastageProfile:
    return WastageProfile({"R": 0.0, "F": 0.0}, {m: 0.0 for m in TRANSIT_MODES}, {}, {})


def miniature(mean=(10.0, 10.0), clinic_refrigerator=50.0):
    """One central store feeding one clinic, one single-dose vaccine, two periods."""
    vac = VaccineType("V", "V", 1, StorageClass.REFRIGERATOR_ONLY, (VialPresentation(1, 1.0),))
    nodes = (
        Node("C0", Tier.CENTRAL, 1000.0, 0.0),
        Node("K1", Tier.CLINIC, clinic_refrigerator, 0.0, region="r"),
    )
    topology = NetworkTopology(nodes, (Arc("C0", "K1", float("inf"), ScheduleMask.monthly(2)),))
    demand = DemandModel(
        ("V",), ("K1",), np.array([[list(mean)]]), np.zeros((1, 1, 2)), np.array([[sum(mean) / 60.0]])
    )
    return topology, [vac], zero_wastage(), demand, sample_scenarios(demand, 1, 0)


@pytest.fixture(scope="session")
def tiny_instance():
    return make_synthetic_instance(TINY, seed=3)


@pytest.fixture(scope="session")
def default_instance():
    return make_synthetic_instance(Shape(), seed=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
