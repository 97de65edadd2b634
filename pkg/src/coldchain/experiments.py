"""Synthetic instances and the declarative experiment harness.

An experiment is a base instance plus a list of arms. Each arm is an ordered
list of transformations (tier removal, vial-size mixes, thermostable or
dual-chamber presentations). All arms share one SaaConfig and master seed, so
replication ``m`` of every arm sees the same demand draws and arms can be
compared scenario by scenario.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bssaa import RunResult, SaaConfig, run_bssaa
from .builder import DefConfig, build_def, capacity_volume, diluent_volume
from .demand import DemandModel, derive_seed, sample_scenarios
from .instance import Instance, load_instance
from .metrics import paired_compare, write_fic_csv, write_sr_csv
from .model import (
    Arc,
    DualChamber,
    Horizon,
    NetworkTopology,
    Node,
    RemoveTier,
    ScheduleMask,
    StorageClass,
    Thermostable,
    Tier,
    VaccineType,
    VialMix,
    VialPresentation,
    WastageProfile,
    apply_presentation_swap,
    apply_redesign,
)
from .ovw import OvwQuery, estimate_ovw
from .solver import Status, solve

# --------------------------------------------------------------------------
# catalog


def table1_catalog() -> tuple[VaccineType, ...]:
    """The six EPI vaccines: vial size, cc/dose, diluent cc/dose, regimen, storage."""
    rows = [
        ("BCG", "BCG", 20, 1.2, 0.7, 1, StorageClass.REFRIGERATOR_OR_FREEZER),
        ("TT", "Tetanus", 10, 3.0, 0.0, 3, StorageClass.REFRIGERATOR_ONLY),
        ("MEA", "Measles", 10, 2.1, 0.5, 2, StorageClass.REFRIGERATOR_ONLY),
        ("OPV", "Oral Polio", 20, 1.0, 0.0, 4, StorageClass.FREEZER_PREFERRED),
        ("YF", "Yellow Fever", 10, 2.5, 6.0, 1, StorageClass.REFRIGERATOR_OR_FREEZER),
        ("PENTA", "DTP-HepB-Hib", 1, 16.8, 0.0, 3, StorageClass.REFRIGERATOR_ONLY),
    ]
    return tuple(
        VaccineType(vid, name, a, storage, (VialPresentation(b, q, r),))
        for vid, name, b, q, r, a, storage in rows
    )


# smaller vials take more packed volume per dose: q(b) = q_ref * (b_ref / b) ** VIAL_VOLUME_EXPONENT
VIAL_VOLUME_EXPONENT = 0.5


def vial_mix_volumes(vaccine: VaccineType, sizes: Sequence[int], exponent: float = VIAL_VOLUME_EXPONENT) -> dict:
    ref = vaccine.presentations[0]
    return {
        int(b): round(ref.packed_volume * (ref.vial_size / b) ** exponent, 4) for b in sorted(set(sizes))
    }


# --------------------------------------------------------------------------
# synthetic instances


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


@dataclass(frozen=True)
class Shape:
    tiers: int = 4  # 4: central/regional/district/clinic; 3: no regional stores
    regions: int = 2
    districts_per_region: int | tuple[int, ...] = 3
    clinics_per_district: int | tuple[int, ...] = 4
    capacity_scale: float | None = None  # None: calibrate
    demand_scale: float = 1.0
    periods: int = 12
    cv: float = 0.2
    warmup_periods: int | None = None  # None: tiers - 1, the pipeline fill time

    def __post_init__(self) -> None:
        if self.tiers not in (3, 4):
            raise ValueError("tiers must be 3 or 4")
        if self.regions < 1 or self.periods < 1 or self.demand_scale <= 0:
            raise ValueError("shape parameters must be positive")

    @classmethod
    def niger(cls) -> "Shape":
        """1 central, 8 regional, 42 district stores and 695 clinics."""
        districts = tuple(_split(42, 8))
        return cls(4, 8, districts, tuple(_split(695, 42)))

    def districts(self) -> list[int]:
        d = self.districts_per_region
        return list(d) if isinstance(d, tuple) else [int(d)] * self.regions

    def clinics(self) -> list[int]:
        c = self.clinics_per_district
        n = sum(self.districts())
        return list(c) if isinstance(c, tuple) else [int(c)] * n

    @property
    def warmup(self) -> int:
        w = self.tiers - 1 if self.warmup_periods is None else self.warmup_periods
        return min(w, self.periods - 1)

    def node_count(self) -> int:
        regional = self.regions if self.tiers == 4 else 0
        return 1 + regional + sum(self.districts()) + sum(self.clinics())


CENTRAL_REPLENISH_EVERY = 2
REGIONAL_SHIP_EVERY = 3
DEFAULT_CAPACITY_SCALE = 1.25  # smallest scale at which p = 0.7 is attainable on the default shape
MONTHLY_COHORT_RATE = 0.004  # surviving infants per inhabitant per month


def _network(shape: Shape) -> tuple[list[Node], list[tuple[str, str, int]], dict[str, str]]:
    """Nodes with zero capacity, arcs as (src, dst, ship_every), clinic -> region."""
    T = shape.periods
    nodes = [Node("C", Tier.CENTRAL, 0.0, 0.0, "", ScheduleMask.every(CENTRAL_REPLENISH_EVERY, T))]
    arcs: list[tuple[str, str, int]] = []
    region_of: dict[str, str] = {}
    d_counts, c_counts = shape.districts(), shape.clinics()
    if len(d_counts) != shape.regions or len(c_counts) != sum(d_counts):
        raise ValueError("shape lists do not match region/district counts")
    k = 0
    for r in range(shape.regions):
        rid = f"R{r + 1}"
        region = f"region{r + 1}"
        if shape.tiers == 4:
            nodes.append(Node(rid, Tier.REGIONAL, 0.0, 0.0, region))
            arcs.append(("C", rid, REGIONAL_SHIP_EVERY))
        for d in range(d_counts[r]):
            did = f"D{r + 1}.{d + 1}"
            nodes.append(Node(did, Tier.DISTRICT, 0.0, 0.0, region))
            arcs.append((rid if shape.tiers == 4 else "C", did, 1))
            for c in range(c_counts[k]):
                cid = f"K{r + 1}.{d + 1}.{c + 1}"
                nodes.append(Node(cid, Tier.CLINIC, 0.0, 0.0, region))
                arcs.append((did, cid, 1))
                region_of[cid] = region
            k += 1
    return nodes, arcs, region_of


def calibrate_capacities(
    topology: NetworkTopology,
    catalog: Sequence[VaccineType],
    demand: DemandModel,
    wastage: WastageProfile,
    scale: float,
    cover: dict[str, int],
) -> NetworkTopology:
    """Set cold capacities to ``scale`` times the volume each node must hold.

    A node must hold ``cover[node]`` periods of the peak downstream demand
    volume (open-vial losses included). Freezable vaccines are assigned to the
    freezer where the node has one (clinics do not). Refrigerators also get the
    diluent allowance so the adjusted right-hand side stays positive.
    """
    periods_mean = demand.mean.max(axis=2)  # (I, J) peak period mean
    vids = list(demand.vaccine_ids)
    clinic_pos = {c: j for j, c in enumerate(demand.clinic_ids)}
    children: dict[str, list[str]] = {n.id: [] for n in topology.nodes}
    for a in topology.arcs:
        children[a.source].append(a.target)

    def downstream_clinics(nid: str) -> list[str]:
        if nid in clinic_pos:
            return [nid]
        out: list[str] = []
        for ch in children[nid]:
            out += downstream_clinics(ch)
        return sorted(set(out))

    nodes = []
    for n in topology.nodes:
        fridge = freezer = 0.0
        has_freezer = n.tier is not Tier.CLINIC
        for c in downstream_clinics(n.id):
            j = clinic_pos[c]
            for v in catalog:
                i = vids.index(v.id)
                p = v.presentations[0]
                wo = wastage.open_vial_loss(v.id, p.vial_size, c, 1)
                vol = periods_mean[i, j] * capacity_volume(v, p.vial_size) / (1.0 - wo)
                if has_freezer and not v.refrigerator_only:
                    freezer += vol
                else:
                    fridge += vol
        k = cover.get(n.id, 1)
        dil = sum(diluent_volume(v) * demand.daily(v.id, n.id) for v in catalog)
        nodes.append(
            replace(
                n,
                refrigerator_capacity=round(scale * k * fridge + dil, 1),
                freezer_capacity=round(scale * k * freezer, 1),
            )
        )
    return NetworkTopology(tuple(nodes), topology.arcs)


def make_synthetic_instance(shape: Shape = Shape(), seed: int = 0, path: str | Path | None = None) -> Instance:
    """Table 1 catalog on a tiered network with region-level demand.

    Region populations are drawn from ``seed``; each region's demand is split
    equally over its clinics. Capacities come from :func:`calibrate_capacities`
    at ``shape.capacity_scale`` (default 1.25), then the scale is reduced until
    some refrigerator row binds at the mean-demand optimum.
    """
    from .instance import save_instance

    horizon = Horizon(shape.periods)
    catalog = table1_catalog()
    nodes, arc_specs, region_of = _network(shape)
    arcs = tuple(
        Arc(s, d, math.inf, ScheduleMask.every(step, shape.periods)) for s, d, step in arc_specs
    )
    topology = NetworkTopology(tuple(nodes), arcs)
    rng = np.random.default_rng(derive_seed("synthetic", seed))
    regions = {}
    for r in range(shape.regions):
        pop = float(np.round(rng.uniform(250_000, 550_000), -3)) * shape.demand_scale
        regions[f"region{r + 1}"] = {"population": pop, "per_capita_rate": MONTHLY_COHORT_RATE}
    demand = DemandModel.from_regions(
        topology, list(catalog), horizon, regions, cv=shape.cv, warmup_periods=shape.warmup
    )
    multi = tuple(v.id for v in catalog if v.presentations[0].vial_size > 1)
    wastage = WastageProfile()
    probe = Instance(horizon, catalog, topology, wastage, demand, multi, None)
    resolved = probe.resolved_wastage()

    cover = {}
    for n in topology.nodes:
        if n.tier is Tier.CENTRAL:
            cover[n.id] = REGIONAL_SHIP_EVERY if shape.tiers == 4 else CENTRAL_REPLENISH_EVERY
        elif n.tier is Tier.REGIONAL:
            cover[n.id] = REGIONAL_SHIP_EVERY
        else:
            cover[n.id] = 1
    scale = DEFAULT_CAPACITY_SCALE if shape.capacity_scale is None else shape.capacity_scale
    calibrated = shape.capacity_scale is None
    for _ in range(8):
        topo = calibrate_capacities(topology, catalog, demand, resolved, scale, cover)
        inst = Instance(
            horizon,
            catalog,
            topo,
            wastage,
            demand,
            multi,
            None,
            {"shape": _shape_json(shape), "seed": seed, "capacity_scale": scale},
        )
        if not calibrated or binding_refrigerator_rows(inst):
            break
        scale *= 0.8
    if path is not None:
        save_instance(inst, path)
    return inst


def _shape_json(shape: Shape) -> dict:
    d = asdict(shape)
    for k in ("districts_per_region", "clinics_per_district"):
        if isinstance(d[k], tuple):
            d[k] = list(d[k])
    return d


def binding_refrigerator_rows(instance: Instance, tol: float = 1e-6) -> list[tuple]:
    """Refrigerator capacity rows that bind when planning for mean demand."""
    S = 1
    scen = sample_scenarios(replace(instance.demand, std=np.zeros_like(instance.demand.std)), S, 0)
    extended = any(len(v.presentations) > 1 for v in instance.catalog)
    problem = build_def(
        instance.topology,
        instance.catalog,
        instance.resolved_wastage(),
        scen,
        DefConfig(extended=extended),
        demand=instance.demand,
    )
    sol = solve(problem, method="highs")
    if sol.status is not Status.OPTIMAL:
        return []
    out = []
    for r, key in enumerate(problem.row_keys):
        if key[0] == "capR" and problem.rhs[r] - sol.activities[r] <= tol * (1 + abs(problem.rhs[r])):
            out.append(key)
    return out


# --------------------------------------------------------------------------
# experiment specs


def transform_from_json(d: dict):
    kind = d["type"]
    if kind == "RemoveTier":
        return RemoveTier(Tier.parse(d["tier"]), Tier.parse(d.get("relocate_to", "Clinic")))
    if kind == "Thermostable":
        return Thermostable(d["vaccine"])
    if kind == "DualChamber":
        return DualChamber(d["vaccine"], float(d["volume"]))
    if kind == "VialMix":
        vols = d.get("volumes")
        if vols is not None:
            return VialMix(d["vaccine"], {int(k): float(v) for k, v in vols.items()})
        return VialMix(d["vaccine"], {int(b): float("nan") for b in d["sizes"]})
    raise ValueError(f"unknown transformation {kind!r}")


def transform_to_json(t) -> dict:
    if isinstance(t, RemoveTier):
        return {"type": "RemoveTier", "tier": t.tier.name.title(), "relocate_to": t.relocate_to.name.title()}
    if isinstance(t, Thermostable):
        return {"type": "Thermostable", "vaccine": t.vaccine}
    if isinstance(t, DualChamber):
        return {"type": "DualChamber", "vaccine": t.vaccine, "volume": t.per_dose_volume}
    if isinstance(t, VialMix):
        if all(math.isnan(v) for v in t.volumes.values()):
            return {"type": "VialMix", "vaccine": t.vaccine, "sizes": sorted(t.volumes)}
        return {"type": "VialMix", "vaccine": t.vaccine, "volumes": {str(k): v for k, v in sorted(t.volumes.items())}}
    raise TypeError(t)


@dataclass(frozen=True)
class Arm:
    name: str
    transforms: tuple = ()


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    arms: tuple[Arm, ...]
    saa: SaaConfig = SaaConfig()
    instance_path: str | None = None
    synthetic: Shape | None = None  # used when instance_path is None
    synthetic_seed: int = 0
    output: str | None = None
    reference: str | None = None  # arm compared against every other arm; default: first arm

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("experiment needs at least one arm")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")

    @classmethod
    def from_json(cls, doc: dict, base_dir: str | Path | None = None) -> "ExperimentSpec":
        arms = tuple(
            Arm(a["name"], tuple(transform_from_json(t) for t in a.get("transforms", []))) for a in doc["arms"]
        )
        saa = SaaConfig(**doc.get("saa", {}))
        path = doc.get("instance")
        if path is not None and base_dir is not None and not Path(path).is_absolute():
            path = str(Path(base_dir) / path)
        shape = None
        if "synthetic" in doc:
            sd = dict(doc["synthetic"])
            for k in ("districts_per_region", "clinics_per_district"):
                if isinstance(sd.get(k), list):
                    sd[k] = tuple(sd[k])
            shape = Shape(**sd)
        return cls(
            doc["name"],
            arms,
            saa,
            path,
            shape,
            int(doc.get("synthetic_seed", 0)),
            doc.get("output"),
            doc.get("reference"),
        )

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "arms": [{"name": a.name, "transforms": [transform_to_json(t) for t in a.transforms]} for a in self.arms],
            "saa": asdict(self.saa),
            "synthetic_seed": self.synthetic_seed,
        }
        if self.instance_path is not None:
            out["instance"] = self.instance_path
        if self.synthetic is not None:
            out["synthetic"] = _shape_json(self.synthetic)
        if self.output is not None:
            out["output"] = self.output
        if self.reference is not None:
            out["reference"] = self.reference
        return out

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def base_instance(self) -> Instance:
        if self.instance_path is not None:
            return load_instance(self.instance_path)
        return make_synthetic_instance(self.synthetic or Shape(), self.synthetic_seed)


def apply_arm(instance: Instance, arm: Arm) -> Instance:
    inst = instance
    for t in arm.transforms:
        if isinstance(t, RemoveTier):
            inst = inst.with_topology(apply_redesign(inst.topology, t))
        else:
            if isinstance(t, VialMix) and all(math.isnan(v) for v in t.volumes.values()):
                t = VialMix(t.vaccine, vial_mix_volumes(inst.vaccine(t.vaccine), sorted(t.volumes)))
            catalog = apply_presentation_swap(inst.catalog, t)
            inst = inst.with_catalog(catalog)
            if isinstance(t, VialMix) and t.vaccine not in inst.ovw_estimate:
                inst = replace(inst, ovw_estimate=inst.ovw_estimate + (t.vaccine,))
    return inst


# canned designs


def r1_spec(saa: SaaConfig = SaaConfig(), shape: Shape = Shape(), seed: int = 0) -> ExperimentSpec:
    return ExperimentSpec(
        "R1",
        (
            Arm("four_tier"),
            Arm("three_tier_clinics", (RemoveTier(Tier.REGIONAL, Tier.CLINIC),)),
            Arm("three_tier_districts", (RemoveTier(Tier.REGIONAL, Tier.DISTRICT),)),
        ),
        saa,
        synthetic=shape,
        synthetic_seed=seed,
    )


def r2_spec(saa: SaaConfig = SaaConfig(), shape: Shape = Shape(), seed: int = 0) -> ExperimentSpec:
    nan = float("nan")
    measles = VialMix("MEA", {1: nan, 5: nan, 10: nan})
    bcg = VialMix("BCG", {10: nan, 20: nan})
    return ExperimentSpec(
        "R2",
        (Arm("baseline"), Arm("measles_mix", (measles,)), Arm("measles_bcg_mix", (measles, bcg))),
        saa,
        synthetic=shape,
        synthetic_seed=seed,
    )


def r3_spec(saa: SaaConfig = SaaConfig(), shape: Shape = Shape(), seed: int = 0) -> ExperimentSpec:
    arms = [Arm("baseline")]
    arms += [Arm(f"thermo_{v.id}", (Thermostable(v.id),)) for v in table1_catalog()]
    arms.append(Arm("dual_chamber_MEA", (DualChamber("MEA", 21.09),)))
    return ExperimentSpec("R3", tuple(arms), saa, synthetic=shape, synthetic_seed=seed)


# --------------------------------------------------------------------------
# running


@dataclass
class ArmOutcome:
    arm: Arm
    result: RunResult | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None and not self.error and not self.result.partial


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    arms: list[ArmOutcome]
    comparisons: list[dict] = field(default_factory=list)
    output: Path | None = None

    @property
    def partial(self) -> bool:
        return any(not a.ok for a in self.arms)

    def arm(self, name: str) -> ArmOutcome:
        for a in self.arms:
            if a.arm.name == name:
                return a
        raise KeyError(name)

    def comparison(self, arm_a: str, arm_b: str, metric: str = "fic") -> dict:
        for c in self.comparisons:
            if (c["arm_a"], c["arm_b"], c["metric"]) == (arm_a, arm_b, metric):
                return c
        raise KeyError((arm_a, arm_b, metric))


def _pooled(result: RunResult, metric: str) -> tuple[np.ndarray, list[str]]:
    vals, digests = [], []
    for r in result.replications:
        vals.append(r.training.per_scenario(metric))
        digests.append(r.scenario_digest)
    return np.concatenate(vals), digests


def compare_arms(reference: ArmOutcome, other: ArmOutcome, metric: str, level: float = 0.05) -> dict:
    a, da = _pooled(reference.result, metric)
    b, db = _pooled(other.result, metric)
    if da != db:
        raise ValueError("arms were not run on the same scenario draws")
    two = paired_compare(a, b, level, alternative="two-sided")
    one = paired_compare(a, b, level, alternative="greater")
    return {
        "arm_a": reference.arm.name,
        "arm_b": other.arm.name,
        "metric": metric,
        "n": two.n,
        "mean_a": float(a.mean()),
        "mean_b": float(b.mean()),
        "mean_difference": two.mean_difference,
        "t_statistic": two.t_statistic,
        "p_two_sided": two.p_value,
        "p_greater": one.p_value,
        "significant": two.significant,
        "note": two.note,
    }


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def run_experiment(spec: ExperimentSpec, output: str | Path | None = None) -> ExperimentReport:
    """Run every arm, compare each with the reference arm and write the bundle.

    A failing arm is recorded and the others still run; the report is then
    marked partial.
    """
    out = Path(output) if output is not None else (Path(spec.output) if spec.output else None)
    base = spec.base_instance()
    outcomes: list[ArmOutcome] = []
    for arm in spec.arms:
        oc = ArmOutcome(arm)
        try:
            inst = apply_arm(base, arm)
            oc.result = run_bssaa(inst, spec.saa)
            if oc.result.partial:
                oc.error = "; ".join(r.error for r in oc.result.replications if r.error)
        except Exception as exc:
            oc.error = f"{type(exc).__name__}: {exc}"
        outcomes.append(oc)
    report = ExperimentReport(spec, outcomes, [], out)
    ref_name = spec.reference or spec.arms[0].name
    ref = report.arm(ref_name)
    if ref.ok:
        for oc in outcomes:
            if oc is ref or not oc.ok:
                continue
            for metric in ("fic", "sr"):
                try:
                    report.comparisons.append(compare_arms(ref, oc, metric, 0.05))
                except Exception as exc:
                    report.comparisons.append(
                        {"arm_a": ref_name, "arm_b": oc.arm.name, "metric": metric, "error": str(exc)}
                    )
    if out is not None:
        write_bundle(report, out)
    return report


def write_bundle(report: ExperimentReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    box: dict = {}
    for oc in report.arms:
        if oc.result is None:
            continue
        for r in oc.result.replications:
            if not r.ok:
                continue
            d = out / oc.arm.name / f"rep{r.index:02d}"
            write_sr_csv(r.training, d / "sr_by_vaccine.csv")
            write_fic_csv(r.training, d / "fic_by_region.csv")
            if r.posterior is not None:
                write_sr_csv(r.posterior.metrics, d / "posterior_sr_by_vaccine.csv")
                write_fic_csv(r.posterior.metrics, d / "posterior_fic_by_region.csv")
            summary_rows.append(
                (
                    oc.arm.name,
                    r.index,
                    r.seed,
                    r.bundle.base_objective,
                    r.training.sr_mean(),
                    r.training.fic_mean(),
                    r.posterior.metrics.sr_mean() if r.posterior else "",
                    r.posterior.metrics.fic_mean() if r.posterior else "",
                    r.posterior.pass_rate() if r.posterior else "",
                    r.state.iterations,
                    int(r.state.counts.max(initial=0)),
                )
            )
            box.setdefault(oc.arm.name, {})[f"rep{r.index:02d}"] = r.training.box()
    (out / "summary.csv").write_text(
        _csv_text(
            (
                "arm",
                "replication",
                "seed",
                "base_objective",
                "sr",
                "fic",
                "posterior_sr",
                "posterior_fic",
                "posterior_pass_rate",
                "bisection_iterations",
                "max_shortage_count",
            ),
            summary_rows,
        ),
        encoding="utf-8",
    )
    cmp_rows = [
        (
            c["arm_a"],
            c["arm_b"],
            c["metric"],
            c.get("n", ""),
            c.get("mean_difference", ""),
            c.get("t_statistic", ""),
            c.get("p_two_sided", ""),
            c.get("p_greater", ""),
            c.get("significant", ""),
            c.get("note", c.get("error", "")),
        )
        for c in report.comparisons
    ]
    (out / "comparisons.csv").write_text(
        _csv_text(
            ("arm_a", "arm_b", "metric", "n", "mean_difference", "t_statistic", "p_two_sided", "p_greater", "significant", "note"),
            cmp_rows,
        ),
        encoding="utf-8",
    )
    manifest = {
        "spec": report.spec.to_json(),
        "partial": report.partial,
        "arms": {
            oc.arm.name: {
                "error": oc.error,
                "run": oc.result.manifest() if oc.result is not None else None,
            }
            for oc in report.arms
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=_json_default) + "\n")
    (out / "boxplots.json").write_text(json.dumps(box, indent=1, sort_keys=True) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
