"""Domain types for the vaccine cold-chain network.

Everything here is immutable. Volumes are in cc, capacities in cc, periods are
1-based months ``1..horizon.periods``. Period 0 is the empty initial state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union


class Tier(enum.IntEnum):
    CENTRAL = 0
    REGIONAL = 1
    DISTRICT = 2
    CLINIC = 3

    @classmethod
    def parse(cls, value: str | int | "Tier") -> "Tier":
        if isinstance(value, Tier):
            return value
        if isinstance(value, int):
            return cls(value)
        return cls[value.strip().upper()]


class StorageClass(enum.Enum):
    REFRIGERATOR_ONLY = "RefrigeratorOnly"
    REFRIGERATOR_OR_FREEZER = "RefrigeratorOrFreezer"
    FREEZER_PREFERRED = "FreezerPreferred"


@dataclass(frozen=True)
class VialPresentation:
    vial_size: int
    packed_volume: float  # cc per dose
    diluent_volume: float = 0.0  # cc per dose

    def __post_init__(self) -> None:
        if int(self.vial_size) != self.vial_size or self.vial_size < 1:
            raise ValueError(f"vial_size must be a positive integer, got {self.vial_size}")
        if not self.packed_volume > 0:
            raise ValueError(f"packed_volume must be > 0, got {self.packed_volume}")
        if self.diluent_volume < 0:
            raise ValueError(f"diluent_volume must be >= 0, got {self.diluent_volume}")


@dataclass(frozen=True)
class VaccineType:
    id: str
    name: str
    regimen_doses: int
    storage_class: StorageClass
    presentations: tuple[VialPresentation, ...]
    thermostable: bool = False
    dual_chamber: bool = False

    def __post_init__(self) -> None:
        if int(self.regimen_doses) != self.regimen_doses or self.regimen_doses < 1:
            raise ValueError(f"{self.id}: regimen_doses must be >= 1")
        if not self.presentations:
            raise ValueError(f"{self.id}: at least one presentation required")
        sizes = [p.vial_size for p in self.presentations]
        if len(set(sizes)) != len(sizes):
            raise ValueError(f"{self.id}: duplicate vial sizes {sizes}")

    @property
    def refrigerator_only(self) -> bool:
        """Membership in the set whose freezer stock must be empty at the horizon end."""
        return self.storage_class is StorageClass.REFRIGERATOR_ONLY

    @property
    def vial_sizes(self) -> tuple[int, ...]:
        return tuple(p.vial_size for p in self.presentations)

    @property
    def diluent_volume(self) -> float:
        return max(p.diluent_volume for p in self.presentations)

    def presentation(self, vial_size: int) -> VialPresentation:
        for p in self.presentations:
            if p.vial_size == vial_size:
                return p
        raise KeyError(f"{self.id} has no {vial_size}-dose presentation")


@dataclass(frozen=True)
class ScheduleMask:
    active_periods: frozenset[int]

    @classmethod
    def every(cls, step: int, horizon: int, start: int = 1) -> "ScheduleMask":
        return cls(frozenset(range(start, horizon + 1, step)))

    @classmethod
    def monthly(cls, horizon: int) -> "ScheduleMask":
        return cls.every(1, horizon)

    def __contains__(self, period: int) -> bool:
        return period in self.active_periods

    def sorted(self) -> list[int]:
        return sorted(self.active_periods)


@dataclass(frozen=True)
class Node:
    id: str
    tier: Tier
    refrigerator_capacity: float
    freezer_capacity: float
    region: str = ""
    # inbound replenishment schedule; only meaningful for the central store
    replenishment: ScheduleMask | None = None

    def __post_init__(self) -> None:
        if self.refrigerator_capacity < 0 or self.freezer_capacity < 0:
            raise ValueError(f"node {self.id}: negative capacity")


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    transport_capacity: float
    schedule: ScheduleMask

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class Horizon:
    periods: int
    period_length_days: int = 30

    def __post_init__(self) -> None:
        if self.periods < 1:
            raise ValueError("horizon must contain at least one period")
        if self.period_length_days < 1:
            raise ValueError("period_length_days must be positive")

    @property
    def range(self) -> range:
        return range(1, self.periods + 1)


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def by_tier(self, tier: Tier) -> list[Node]:
        return [n for n in self.nodes if n.tier is tier]

    @property
    def clinics(self) -> list[Node]:
        return self.by_tier(Tier.CLINIC)

    @property
    def tiers(self) -> list[Tier]:
        return sorted({n.tier for n in self.nodes})

    def arc(self, source: str, target: str) -> Arc:
        for a in self.arcs:
            if a.source == source and a.target == target:
                return a
        raise KeyError((source, target))

    def total_refrigerator_capacity(self) -> Fraction:
        return sum((Fraction(n.refrigerator_capacity) for n in self.nodes), Fraction(0))

    def total_freezer_capacity(self) -> Fraction:
        return sum((Fraction(n.freezer_capacity) for n in self.nodes), Fraction(0))


TRANSIT_MODES = ("RR", "RF", "FR", "FF")


@dataclass(frozen=True)
class WastageProfile:
    """Loss fractions with defaults and sparse per-index overrides.

    Override keys:
      ("R"|"F", vaccine, vial_size, node, period)            storage loss
      ("RR"|"RF"|"FR"|"FF", vaccine, vial_size, src, dst, period)  transit loss
      ("O", vaccine, vial_size, clinic, period)               open-vial wastage
    ``open_vial`` maps (vaccine, vial_size) or (vaccine, vial_size, clinic) to a
    period-constant fraction. Open-vial wastage of a single-dose vial is always 0.
    """

    storage: Mapping[str, float] = field(default_factory=lambda: {"R": 0.0, "F": 0.0})
    transit: Mapping[str, float] = field(
        default_factory=lambda: {m: 0.0 for m in TRANSIT_MODES}
    )
    open_vial: Mapping[tuple, float] = field(default_factory=dict)
    overrides: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = list(self.storage.values()) + list(self.transit.values())
        values += list(self.open_vial.values()) + list(self.overrides.values())
        for v in values:
            if not 0.0 <= v < 1.0:
                raise ValueError(f"wastage fraction {v} outside [0, 1)")

    def storage_loss(self, mode: str, vaccine: str, vial_size: int, node: str, period: int) -> float:
        key = (mode, vaccine, vial_size, node, period)
        return self.overrides.get(key, self.storage.get(mode, 0.0))

    def transit_loss(
        self, mode: str, vaccine: str, vial_size: int, src: str, dst: str, period: int
    ) -> float:
        key = (mode, vaccine, vial_size, src, dst, period)
        return self.overrides.get(key, self.transit.get(mode, 0.0))

    def open_vial_loss(self, vaccine: str, vial_size: int, clinic: str, period: int) -> float:
        if vial_size == 1:
            return 0.0
        key = ("O", vaccine, vial_size, clinic, period)
        if key in self.overrides:
            return self.overrides[key]
        if (vaccine, vial_size, clinic) in self.open_vial:
            return self.open_vial[(vaccine, vial_size, clinic)]
        return self.open_vial.get((vaccine, vial_size), 0.0)

    def with_open_vial(self, table: Mapping[tuple, float]) -> "WastageProfile":
        merged = dict(self.open_vial)
        merged.update(table)
        return replace(self, open_vial=merged)

    def is_zero(self) -> bool:
        vals = list(self.storage.values()) + list(self.transit.values())
        vals += list(self.open_vial.values()) + list(self.overrides.values())
        return all(v == 0 for v in vals)


# --------------------------------------------------------------------------
# topology validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def __bool__(self) -> bool:
        return self.ok


def validate_topology(topology: NetworkTopology, demand=None, horizon: Horizon | None = None) -> ValidationReport:
    """Report structural problems; an empty ``violations`` list means valid.

    ``demand`` is an optional :class:`coldchain.demand.DemandModel`; when given,
    demand placement and low-mean warnings are checked too.
    """
    report = ValidationReport()
    ids = [n.id for n in topology.nodes]
    if len(set(ids)) != len(ids):
        report.violations.append(Violation("duplicate node", "node ids are not unique"))
    known = set(ids)
    tier_of = {n.id: n.tier for n in topology.nodes}
    seen_arcs: set[tuple[str, str]] = set()
    for a in topology.arcs:
        label = f"{a.source}->{a.target}"
        if a.source == a.target:
            report.violations.append(Violation("self-loop", f"arc {label} starts and ends at the same node"))
        if a.source not in known or a.target not in known:
            report.violations.append(Violation("dangling arc", f"arc {label} references an unknown node"))
            continue
        if a.key in seen_arcs:
            report.violations.append(Violation("duplicate arc", f"arc {label} declared twice"))
        seen_arcs.add(a.key)
        if not a.schedule.active_periods:
            report.violations.append(Violation("empty schedule", f"arc {label} has no active period"))
        elif horizon is not None and (
            min(a.schedule.active_periods) < 1 or max(a.schedule.active_periods) > horizon.periods
        ):
            report.violations.append(Violation("schedule outside horizon", f"arc {label}"))
        if a.transport_capacity < 0:
            report.violations.append(Violation("negative transport capacity", f"arc {label}"))
        if tier_of[a.target] <= tier_of[a.source] and a.source != a.target:
            report.violations.append(Violation("upstream arc", f"arc {label} does not point downstream"))
    if not any(n.tier is Tier.CENTRAL for n in topology.nodes):
        report.violations.append(Violation("no central store", "network has no central store"))

    if demand is not None:
        means = demand.period_totals()
        for (vaccine, node_id), total in means.items():
            if node_id not in known:
                report.violations.append(Violation("demand on unknown node", f"{vaccine}@{node_id}"))
                continue
            node = topology.node(node_id)
            if node.tier is not Tier.CLINIC and total > 0:
                report.violations.append(
                    Violation("demand on storage facility", f"{vaccine} demand attached to {node.tier.name} {node_id}")
                )
            elif total > 0 and node.refrigerator_capacity == 0 and node.freezer_capacity == 0:
                report.violations.append(
                    Violation("zero-capacity clinic", f"clinic {node_id} has demand but no cold storage")
                )
        low = demand.low_mean_entries(threshold=10.0)
        if low:
            report.warnings.append(
                Violation("normal approximation", f"{len(low)} (vaccine, clinic, period) means are in (0, 10]")
            )
    return report


# --------------------------------------------------------------------------
# redesigns and presentation swaps


@dataclass(frozen=True)
class RemoveTier:
    tier: Tier
    relocate_to: Tier  # Tier.CLINIC or Tier.DISTRICT


def _equal_split(total: Fraction, node_ids: Sequence[str]) -> dict[str, Fraction]:
    # whole cc per node, remainder to the lowest id
    n = len(node_ids)
    share = Fraction((total / n).__floor__())
    out = {nid: share for nid in node_ids}
    out[min(node_ids)] += total - share * n
    return out


def apply_redesign(topology: NetworkTopology, redesign: RemoveTier) -> NetworkTopology:
    tier = Tier.parse(redesign.tier)
    target = Tier.parse(redesign.relocate_to)
    if tier in (Tier.CENTRAL, Tier.CLINIC):
        raise ValueError("tier not removable")
    removed = {n.id for n in topology.nodes if n.tier is tier}
    if not removed:
        raise ValueError(f"tier {tier.name} not present")
    if target <= tier:
        raise ValueError(f"capacity must be relocated downstream of {tier.name}")
    receivers = sorted(n.id for n in topology.nodes if n.tier is target)
    if not receivers:
        raise ValueError(f"no {target.name} nodes to receive relocated capacity")

    total_r = sum((Fraction(n.refrigerator_capacity) for n in topology.nodes if n.id in removed), Fraction(0))
    total_f = sum((Fraction(n.freezer_capacity) for n in topology.nodes if n.id in removed), Fraction(0))
    add_r = _equal_split(total_r, receivers)
    add_f = _equal_split(total_f, receivers)

    nodes = []
    for n in topology.nodes:
        if n.id in removed:
            continue
        if n.id in add_r:
            n = replace(
                n,
                refrigerator_capacity=float(Fraction(n.refrigerator_capacity) + add_r[n.id]),
                freezer_capacity=float(Fraction(n.freezer_capacity) + add_f[n.id]),
            )
        nodes.append(n)

    kept = [a for a in topology.arcs if a.source not in removed and a.target not in removed]
    existing = {a.key for a in kept}
    rewired: list[Arc] = []
    for mid in sorted(removed):
        ups = [a for a in topology.arcs if a.target == mid and a.source not in removed]
        downs = [a for a in topology.arcs if a.source == mid and a.target not in removed]
        for up in ups:
            for down in downs:
                key = (up.source, down.target)
                if key in existing:
                    continue
                existing.add(key)
                rewired.append(
                    Arc(
                        up.source,
                        down.target,
                        max(up.transport_capacity, down.transport_capacity),
                        down.schedule,
                    )
                )
    return NetworkTopology(tuple(nodes), tuple(kept + rewired))


@dataclass(frozen=True)
class Thermostable:
    vaccine: str


@dataclass(frozen=True)
class DualChamber:
    vaccine: str
    per_dose_volume: float


@dataclass(frozen=True)
class VialMix:
    """Offer several vial sizes; ``volumes`` maps vial size to packed cc/dose."""

    vaccine: str
    volumes: Mapping[int, float]


PresentationSwap = Union[Thermostable, DualChamber, VialMix]


def apply_presentation_swap(catalog: Iterable[VaccineType], swap: PresentationSwap) -> list[VaccineType]:
    catalog = list(catalog)
    if swap.vaccine not in {v.id for v in catalog}:
        raise KeyError(f"unknown vaccine id {swap.vaccine!r}")
    out = []
    for v in catalog:
        if v.id != swap.vaccine:
            out.append(v)
            continue
        if isinstance(swap, Thermostable):
            out.append(replace(v, thermostable=True))
        elif isinstance(swap, DualChamber):
            pres = VialPresentation(1, swap.per_dose_volume, v.diluent_volume)
            out.append(replace(v, presentations=(pres,), dual_chamber=True))
        elif isinstance(swap, VialMix):
            r = v.diluent_volume
            pres = tuple(
                VialPresentation(int(b), float(q), r) for b, q in sorted(swap.volumes.items())
            )
            out.append(replace(v, presentations=pres))
        else:
            raise TypeError(f"unsupported swap {swap!r}")
    return out
