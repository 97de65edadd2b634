"""Instance files: one JSON document describing network, catalog, wastage and demand.

Top-level keys: ``horizon``, ``vaccines``, ``nodes``, ``arcs``, ``wastage``,
``demand_model``. See README for the schema.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .demand import DemandModel
from .model import (
    Arc,
    Horizon,
    NetworkTopology,
    Node,
    ScheduleMask,
    StorageClass,
    Tier,
    VaccineType,
    VialPresentation,
    WastageProfile,
)
from .ovw import OvwQuery, estimate_ovw


@dataclass(frozen=True)
class Instance:
    horizon: Horizon
    catalog: tuple[VaccineType, ...]
    topology: NetworkTopology
    wastage: WastageProfile
    demand: DemandModel
    # vaccines whose open-vial wastage is estimated from demand instead of given
    ovw_estimate: tuple[str, ...] = ()
    sessions_per_period: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def vaccine(self, vaccine_id: str) -> VaccineType:
        for v in self.catalog:
            if v.id == vaccine_id:
                return v
        raise KeyError(vaccine_id)

    def resolved_wastage(self) -> WastageProfile:
        """Wastage profile with estimated open-vial fractions filled in for the current catalog."""
        if not self.ovw_estimate:
            return self.wastage
        table = {}
        for v in self.catalog:
            if v.id not in self.ovw_estimate:
                continue
            for p in v.presentations:
                for c in self.demand.clinic_ids:
                    q = OvwQuery(
                        self.demand.daily(v.id, c),
                        p.vial_size,
                        self.sessions_per_period,
                        self.horizon.period_length_days,
                    )
                    table[(v.id, p.vial_size, c)] = estimate_ovw(q)
        return self.wastage.with_open_vial(table)

    def with_catalog(self, catalog) -> "Instance":
        return replace(self, catalog=tuple(catalog))

    def with_topology(self, topology: NetworkTopology) -> "Instance":
        return replace(self, topology=topology)


# --------------------------------------------------------------------------
# JSON


def _vaccine_from_json(d: dict) -> VaccineType:
    pres = tuple(
        VialPresentation(int(p["vial_size"]), float(p["packed_volume"]), float(p.get("diluent_volume", 0.0)))
        for p in d["presentations"]
    )
    return VaccineType(
        id=str(d["id"]),
        name=str(d.get("name", d["id"])),
        regimen_doses=int(d["regimen_doses"]),
        storage_class=StorageClass(d.get("storage_class", "RefrigeratorOnly")),
        presentations=pres,
        thermostable=bool(d.get("thermostable", False)),
        dual_chamber=bool(d.get("dual_chamber", False)),
    )


def _vaccine_to_json(v: VaccineType) -> dict:
    return {
        "id": v.id,
        "name": v.name,
        "regimen_doses": v.regimen_doses,
        "storage_class": v.storage_class.value,
        "thermostable": v.thermostable,
        "dual_chamber": v.dual_chamber,
        "presentations": [
            {"vial_size": p.vial_size, "packed_volume": p.packed_volume, "diluent_volume": p.diluent_volume}
            for p in v.presentations
        ],
    }


def _node_from_json(d: dict) -> Node:
    rep = d.get("replenishment_periods")
    return Node(
        id=str(d["id"]),
        tier=Tier.parse(d["tier"]),
        refrigerator_capacity=float(d.get("refrigerator_capacity", 0.0)),
        freezer_capacity=float(d.get("freezer_capacity", 0.0)),
        region=str(d.get("region", "")),
        replenishment=ScheduleMask(frozenset(int(t) for t in rep)) if rep is not None else None,
    )


def _node_to_json(n: Node) -> dict:
    out: dict[str, Any] = {
        "id": n.id,
        "tier": n.tier.name.title(),
        "refrigerator_capacity": n.refrigerator_capacity,
        "freezer_capacity": n.freezer_capacity,
        "region": n.region,
    }
    if n.replenishment is not None:
        out["replenishment_periods"] = n.replenishment.sorted()
    return out


def _wastage_from_json(d: dict | None) -> tuple[WastageProfile, list[str], int | None]:
    d = d or {}
    storage = {"R": 0.0, "F": 0.0}
    storage.update({k: float(v) for k, v in d.get("storage", {}).items()})
    transit = {m: 0.0 for m in ("RR", "RF", "FR", "FF")}
    transit.update({k: float(v) for k, v in d.get("transit", {}).items()})
    open_vial: dict[tuple, float] = {}
    estimate: list[str] = []
    for e in d.get("open_vial", []):
        if e.get("ovw") == "estimate":
            estimate.append(str(e["vaccine"]))
            continue
        if "clinic" in e:
            open_vial[(str(e["vaccine"]), int(e["vial_size"]), str(e["clinic"]))] = float(e["value"])
        else:
            open_vial[(str(e["vaccine"]), int(e["vial_size"]))] = float(e["value"])
    overrides = {}
    for e in d.get("overrides", []):
        key = list(e["key"])
        key[2] = int(key[2])
        key[-1] = int(key[-1])
        overrides[tuple(key)] = float(e["value"])
    sessions = d.get("sessions_per_period")
    return WastageProfile(storage, transit, open_vial, overrides), estimate, sessions


def _wastage_to_json(w: WastageProfile, estimate: tuple[str, ...], sessions: int | None) -> dict:
    ov = []
    for key, val in sorted(w.open_vial.items(), key=lambda kv: tuple(map(str, kv[0]))):
        entry: dict[str, Any] = {"vaccine": key[0], "vial_size": key[1], "value": val}
        if len(key) == 3:
            entry["clinic"] = key[2]
        ov.append(entry)
    ov += [{"vaccine": v, "ovw": "estimate"} for v in estimate]
    out = {
        "storage": dict(w.storage),
        "transit": dict(w.transit),
        "open_vial": ov,
        "overrides": [
            {"key": list(k), "value": v}
            for k, v in sorted(w.overrides.items(), key=lambda kv: tuple(map(str, kv[0])))
        ],
    }
    if sessions is not None:
        out["sessions_per_period"] = sessions
    return out


def _demand_from_json(d: dict, topology, catalog, horizon) -> DemandModel:
    kind = d.get("type", "explicit")
    dist = d.get("distribution", "normal")
    if kind == "regional":
        return DemandModel.from_regions(
            topology,
            list(catalog),
            horizon,
            d["regions"],
            cv=float(d.get("cv", 0.2)),
            warmup_periods=int(d.get("warmup_periods", 0)),
            distribution=dist,
        )
    if kind != "explicit":
        raise ValueError(f"unknown demand model type {kind!r}")
    vids = [v.id for v in catalog]
    nodes: list[str] = []
    for e in d["entries"]:
        if e["clinic"] not in nodes:
            nodes.append(e["clinic"])
    T = horizon.periods
    mean = np.zeros((len(vids), len(nodes), T))
    std = np.zeros_like(mean)
    daily = np.zeros((len(vids), len(nodes)))
    for e in d["entries"]:
        i, j = vids.index(e["vaccine"]), nodes.index(e["clinic"])
        m = e["mean"]
        mean[i, j] = m if isinstance(m, list) else [m] * T
        s = e.get("std", 0.0)
        std[i, j] = s if isinstance(s, list) else [s] * T
        daily[i, j] = e.get("daily_mean", mean[i, j].sum() / (T * horizon.period_length_days))
    return DemandModel(tuple(vids), tuple(nodes), mean, std, daily, dist)


def instance_from_json(doc: dict) -> Instance:
    h = doc["horizon"]
    horizon = Horizon(int(h["periods"]), int(h.get("period_length_days", 30)))
    catalog = tuple(_vaccine_from_json(v) for v in doc["vaccines"])
    nodes = tuple(_node_from_json(n) for n in doc["nodes"])
    arcs = tuple(
        Arc(
            str(a["from"]),
            str(a["to"]),
            float(a.get("transport_capacity", float("inf"))),
            ScheduleMask(frozenset(int(t) for t in a.get("active_periods", range(1, horizon.periods + 1)))),
        )
        for a in doc["arcs"]
    )
    topology = NetworkTopology(nodes, arcs)
    wastage, estimate, sessions = _wastage_from_json(doc.get("wastage"))
    demand = _demand_from_json(doc["demand_model"], topology, catalog, horizon)
    return Instance(horizon, catalog, topology, wastage, demand, tuple(estimate), sessions, dict(doc.get("meta", {})))


def _arc_to_json(a: Arc) -> dict:
    out: dict[str, Any] = {"from": a.source, "to": a.target, "active_periods": a.schedule.sorted()}
    # unlimited transport is the default and is left out (JSON has no infinity)
    if np.isfinite(a.transport_capacity):
        out["transport_capacity"] = a.transport_capacity
    return out


def instance_to_json(inst: Instance) -> dict:
    doc = {
        "horizon": {"periods": inst.horizon.periods, "period_length_days": inst.horizon.period_length_days},
        "vaccines": [_vaccine_to_json(v) for v in inst.catalog],
        "nodes": [_node_to_json(n) for n in inst.topology.nodes],
        "arcs": [_arc_to_json(a) for a in inst.topology.arcs],
        "wastage": _wastage_to_json(inst.wastage, inst.ovw_estimate, inst.sessions_per_period),
        "demand_model": inst.demand.to_json(),
    }
    if inst.meta:
        doc["meta"] = inst.meta
    return doc


def load_instance(path: str | Path) -> Instance:
    return instance_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_instance(inst: Instance, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_json(inst), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path
