"""Assembly of the penalised scenario LP (the deterministic equivalent).

Variables, rows and objective follow the cold-chain inventory model:

* inventory balance per (vaccine, vial size, node, period) for refrigerator and
  freezer stock, with storage, transit and open-vial losses;
* refrigerator / freezer capacity per (node, period), the refrigerator right-hand
  side reduced by the diluent kept cold for one day of demand;
* zero initial stock, no freezer stock of refrigerator-only vaccines at the end;
* transport capacity per active (arc, period);
* fully-immunised-children linking rows per (vaccine, clinic);
* one scenario row per (vaccine, clinic, period, scenario) with shortage ``v``
  and excess ``z`` slacks.

Base mode counts everything in doses. Extended mode counts stock, shipments and
administrations in vials and weights them by the vial size wherever doses are
meant (capacity, FIC, scenario rows, objective).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .demand import ScenarioSet
from .model import Arc, NetworkTopology, Tier, VaccineType, WastageProfile

SHIP_MODES = ("RR", "RF", "FR", "FF")
SENSES = ("L", "E", "G")


class BuildError(ValueError):
    pass


# --------------------------------------------------------------------------
# variable index


class VariableIndex:
    """Dense ids for structural variables plus two arithmetic slack blocks.

    Structural keys:
      ("xR"|"xF", vaccine, vial_size, clinic, t)
      ("n", clinic)
      ("IR"|"IF", vaccine, vial_size, node, t)          t = 0..T
      ("SRR"|"SRF"|"SFR"|"SFF", vaccine, vial_size, src, dst, t)
      ("supR"|"supF", vaccine, vial_size, node, t)      inbound replenishment
    Slack keys: ("v"|"z", vaccine, clinic, t, s), s = 0..S-1.
    """

    def __init__(self) -> None:
        self._keys: list[tuple] = []
        self._ids: dict[tuple, int] = {}
        self.cells: list[tuple[str, str, int]] = []
        self.n_scenarios = 0
        self.v_offset = -1
        self.z_offset = -1

    def add(self, key: tuple) -> int:
        if self.v_offset >= 0:
            raise RuntimeError("structural variables must be added before slack blocks")
        if key in self._ids:
            raise KeyError(f"duplicate variable {key}")
        self._ids[key] = len(self._keys)
        self._keys.append(key)
        return self._ids[key]

    def add_slacks(self, cells: Sequence[tuple[str, str, int]], n_scenarios: int) -> None:
        self.cells = list(cells)
        self._cell_pos = {c: k for k, c in enumerate(self.cells)}
        self.n_scenarios = n_scenarios
        self.v_offset = len(self._keys)
        self.z_offset = self.v_offset + len(self.cells) * n_scenarios

    @property
    def n_structural(self) -> int:
        return len(self._keys)

    def __len__(self) -> int:
        if self.v_offset < 0:
            return len(self._keys)
        return self.z_offset + len(self.cells) * self.n_scenarios

    def __contains__(self, key: tuple) -> bool:
        try:
            self.id(key)
        except KeyError:
            return False
        return True

    def get(self, key: tuple) -> int | None:
        return self._ids.get(key)

    def id(self, key: tuple) -> int:
        if key[0] in ("v", "z"):
            _, vac, clinic, t, s = key
            pos = self._cell_pos[(vac, clinic, t)]
            if not 0 <= s < self.n_scenarios:
                raise KeyError(key)
            base = self.v_offset if key[0] == "v" else self.z_offset
            return base + pos * self.n_scenarios + s
        return self._ids[key]

    def key(self, vid: int) -> tuple:
        if vid < 0 or vid >= len(self):
            raise IndexError(vid)
        if vid < len(self._keys):
            return self._keys[vid]
        kind = "v" if vid < self.z_offset else "z"
        rel = vid - (self.v_offset if kind == "v" else self.z_offset)
        pos, s = divmod(rel, self.n_scenarios)
        vac, clinic, t = self.cells[pos]
        return (kind, vac, clinic, t, s)

    def structural(self) -> Iterator[tuple[int, tuple]]:
        return enumerate(self._keys)

    def ids_of_kind(self, kind: str) -> list[int]:
        if kind == "v":
            return list(range(self.v_offset, self.z_offset))
        if kind == "z":
            return list(range(self.z_offset, len(self)))
        return [i for i, k in enumerate(self._keys) if k[0] == kind]

    def v_block(self) -> slice:
        return slice(self.v_offset, self.z_offset)

    def z_block(self) -> slice:
        return slice(self.z_offset, len(self))

    def name(self, vid: int) -> str:
        key = self.key(vid)
        return f"{key[0]}[{','.join(str(p) for p in key[1:])}]"

    def lookup_name(self, name: str) -> int:
        kind, _, rest = name.partition("[")
        if not rest.endswith("]"):
            raise KeyError(name)
        parts = rest[:-1].split(",") if rest[:-1] else []
        if kind in ("v", "z"):
            vac, clinic, t, s = parts
            return self.id((kind, vac, clinic, int(t), int(s)))
        if kind == "n":
            return self._ids[(kind, parts[0])]
        if kind in ("xR", "xF", "IR", "IF", "supR", "supF"):
            vac, b, node, t = parts
            return self._ids[(kind, vac, int(b), node, int(t))]
        vac, b, src, dst, t = parts
        return self._ids[(kind, vac, int(b), src, dst, int(t))]


# --------------------------------------------------------------------------
# problem container


@dataclass(frozen=True)
class DefConfig:
    service_level: float = 0.7  # required satisfaction probability per (vaccine, clinic, period)
    eps_weight: float | None = None  # None: 1 / total mean demand
    penalties: np.ndarray | float | None = None  # per (vaccine, clinic, period); None -> 0
    extended: bool = False
    # no cell administers more than its largest sampled demand; without this
    # a vaccine needing no cold space can be administered without limit
    cap_administration: bool = True


@dataclass(frozen=True)
class DefProblem:
    """A maximisation LP: max c'x  s.t.  A x (<=,=,>=) rhs,  lb <= x <= ub."""

    A: sp.csr_matrix
    senses: np.ndarray  # 'L' | 'E' | 'G'
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    index: VariableIndex
    row_keys: list[tuple]
    vaccine_ids: tuple[str, ...]
    clinic_ids: tuple[str, ...]
    periods: int
    penalties: np.ndarray  # (vaccines, clinics, periods)
    eps_weight: float
    service_level: float
    extended: bool
    scenario_digest: str
    served_weights: sp.csr_matrix  # (cells, n): dose-weighted x per (vaccine, clinic, period)
    regimen: np.ndarray  # a_i per vaccine
    diagnostics: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def n_scenarios(self) -> int:
        return self.index.n_scenarios

    def row_id(self, key: tuple) -> int:
        return self._row_lookup()[key]

    def _row_lookup(self) -> dict:
        cache = self.meta.get("_row_lookup")
        if cache is None:
            cache = {k: r for r, k in enumerate(self.row_keys)}
            self.meta["_row_lookup"] = cache
        return cache

    def row_name(self, r: int) -> str:
        key = self.row_keys[r]
        return f"{key[0]}[{','.join(str(p) for p in key[1:])}]"

    def with_penalties(self, penalties) -> "DefProblem":
        pi = _penalty_array(penalties, self.penalties.shape)
        c = self.c.copy()
        S = self.n_scenarios
        c[self.index.v_block()] = -np.repeat(pi.reshape(-1), S)
        return replace(self, c=c, penalties=pi, meta={})

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def base_objective(self, x: np.ndarray) -> float:
        """FIC plus weighted doses, without the shortage penalty."""
        c = self.c.copy()
        c[self.index.v_block()] = 0.0
        return float(c @ x)

    def activities(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def residuals(self, x: np.ndarray) -> tuple[float, float]:
        """(max row violation, max bound violation) of a candidate point."""
        act = self.A @ x
        r = np.zeros_like(act)
        L, E, G = self.senses == "L", self.senses == "E", self.senses == "G"
        r[L] = np.maximum(0, act[L] - self.rhs[L])
        r[G] = np.maximum(0, self.rhs[G] - act[G])
        r[E] = np.abs(act[E] - self.rhs[E])
        b = np.maximum(np.maximum(0, self.lb - x), np.maximum(0, x - self.ub))
        return float(r.max(initial=0.0)), float(b.max(initial=0.0))

    def served(self, x: np.ndarray) -> np.ndarray:
        """Doses administered per (vaccine, clinic, period)."""
        I, J, T = len(self.vaccine_ids), len(self.clinic_ids), self.periods
        return (self.served_weights @ x).reshape(I, J, T)

    def fic_counts(self, x: np.ndarray) -> np.ndarray:
        return np.array([x[self.index.id(("n", c))] for c in self.clinic_ids])

    def shortages(self, x: np.ndarray) -> np.ndarray:
        """Shortage slack values, shape (vaccines, clinics, periods, S)."""
        I, J, T = len(self.vaccine_ids), len(self.clinic_ids), self.periods
        return x[self.index.v_block()].reshape(I, J, T, self.n_scenarios)

    def shipment_periods(self, arc: tuple[str, str]) -> list[int]:
        out = set()
        for vid, key in self.index.structural():
            if key[0] in ("SRR", "SRF", "SFR", "SFF") and (key[3], key[4]) == arc and self.ub[vid] > 0:
                out.add(key[5])
        return sorted(out)

    def summary(self) -> dict:
        counts: dict[str, int] = {}
        for _, key in self.index.structural():
            counts[key[0]] = counts.get(key[0], 0) + 1
        counts["v"] = counts["z"] = len(self.index.cells) * self.n_scenarios
        rows: dict[str, int] = {}
        for key in self.row_keys:
            rows[key[0]] = rows.get(key[0], 0) + 1
        return {
            "rows": self.n_rows,
            "cols": self.n_cols,
            "nnz": int(self.A.nnz),
            "scenarios": self.n_scenarios,
            "extended": self.extended,
            "variables_by_kind": dict(sorted(counts.items())),
            "rows_by_kind": dict(sorted(rows.items())),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True)


def _penalty_array(penalties, shape) -> np.ndarray:
    if penalties is None:
        return np.zeros(shape)
    pi = np.broadcast_to(np.asarray(penalties, dtype=float), shape).copy()
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise ValueError("penalties must be finite and non-negative")
    return pi


# --------------------------------------------------------------------------
# builder


class _Rows:
    def __init__(self) -> None:
        self.keys: list[tuple] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []

    def add(self, key: tuple, entries, sense: str, rhs: float) -> int:
        r = len(self.keys)
        self.keys.append(key)
        self.senses.append(sense)
        self.rhs.append(rhs)
        for col, val in entries:
            if val != 0.0:
                self.r.append(r)
                self.c.append(col)
                self.v.append(val)
        return r


def capacity_volume(v: VaccineType, vial_size: int) -> float:
    """Cold-storage volume charged per dose."""
    if v.thermostable:
        return 0.0
    p = v.presentation(vial_size)
    if v.dual_chamber:
        return p.packed_volume + p.diluent_volume
    return p.packed_volume


def diluent_volume(v: VaccineType) -> float:
    """Diluent per dose refrigerated ahead of use (zero when it travels with the vaccine)."""
    if v.thermostable or v.dual_chamber:
        return 0.0
    return v.diluent_volume


def build_def(
    topology: NetworkTopology,
    catalog: Sequence[VaccineType],
    wastage: WastageProfile,
    scenarios: ScenarioSet,
    config: DefConfig = DefConfig(),
    demand=None,
) -> DefProblem:
    """Build the penalised deterministic equivalent.

    ``demand`` (a DemandModel) supplies daily means for the diluent adjustment
    and the default dose weight; without it both use the scenario sample.
    """
    catalog = list(catalog)
    T = scenarios.periods
    clinics = [n.id for n in topology.clinics]
    vids = [v.id for v in catalog]
    if not config.extended:
        multi = [v.id for v in catalog if len(v.presentations) != 1]
        if multi:
            raise BuildError(f"base model needs one presentation per vaccine; {multi} have several")

    # scenario values aligned to (catalog, clinics)
    try:
        vi = [scenarios.vaccine_ids.index(v) for v in vids]
        ci = [scenarios.clinic_ids.index(c) for c in clinics]
    except ValueError as exc:
        raise BuildError(f"scenario/topology index mismatch: {exc}") from None
    delta = scenarios.values[:, vi][:, :, ci]  # (S, I, J, T)
    S = delta.shape[0]

    if demand is not None:
        dvi = [demand.vaccine_ids.index(v) for v in vids]
        daily = {}
        for c in clinics:
            for v in vids:
                daily[(v, c)] = demand.daily(v, c)
        total_mean = float(demand.mean[dvi].sum())
    else:
        days = 30
        daily = {
            (v, c): float(delta[:, i, j].mean(axis=0).sum()) / (T * days)
            for i, v in enumerate(vids)
            for j, c in enumerate(clinics)
        }
        total_mean = float(delta.mean(axis=0).sum())

    eps = config.eps_weight
    if eps is None:
        eps = 1.0 / total_mean if total_mean > 0 else 1.0
    pi = _penalty_array(config.penalties, (len(vids), len(clinics), T))

    def unit(b: int) -> float:
        return float(b) if config.extended else 1.0

    idx = VariableIndex()
    obj: dict[int, float] = {}
    ub: dict[int, float] = {}
    pres = [(v, p.vial_size) for v in catalog for p in v.presentations]
    nodes = topology.nodes
    clinic_set = set(clinics)
    inbound: dict[str, list[Arc]] = {n.id: [] for n in nodes}
    outbound: dict[str, list[Arc]] = {n.id: [] for n in nodes}
    for a in topology.arcs:
        inbound[a.target].append(a)
        outbound[a.source].append(a)

    # administrations and FIC counts at clinics
    for c in clinics:
        obj[idx.add(("n", c))] = 1.0
    for v, b in pres:
        for c in clinics:
            for t in range(1, T + 1):
                for kind in ("xR", "xF"):
                    obj[idx.add((kind, v.id, b, c, t))] = eps * unit(b)
    # stock
    for v, b in pres:
        for n in nodes:
            for t in range(0, T + 1):
                idx.add(("IR", v.id, b, n.id, t))
                idx.add(("IF", v.id, b, n.id, t))
    # shipments on active periods only
    for a in topology.arcs:
        for t in a.schedule.sorted():
            if not 1 <= t <= T:
                continue
            for v, b in pres:
                for m in SHIP_MODES:
                    idx.add(("S" + m, v.id, b, a.source, a.target, t))
    # exogenous replenishment at the central store
    for n in nodes:
        if n.tier is not Tier.CENTRAL:
            continue
        periods = n.replenishment.sorted() if n.replenishment is not None else range(1, T + 1)
        for t in periods:
            if 1 <= t <= T:
                for v, b in pres:
                    idx.add(("supR", v.id, b, n.id, t))
                    idx.add(("supF", v.id, b, n.id, t))
    cells = [(v, c, t) for v in vids for c in clinics for t in range(1, T + 1)]
    idx.add_slacks(cells, S)

    rows = _Rows()
    diagnostics: list[str] = []
    g = idx.get

    # inventory balance
    for v, b in pres:
        for n in nodes:
            j = n.id
            for t in range(1, T + 1):
                for mode in ("R", "F"):
                    ent = [(g((f"I{mode}", v.id, b, j, t)), 1.0)]
                    keep = 1.0 - wastage.storage_loss(mode, v.id, b, j, t - 1)
                    ent.append((g((f"I{mode}", v.id, b, j, t - 1)), -keep))
                    for a in inbound[j]:
                        for m in ("R" + mode, "F" + mode):
                            col = g(("S" + m, v.id, b, a.source, j, t - 1))
                            if col is not None:
                                w = wastage.transit_loss(m, v.id, b, a.source, j, t - 1)
                                ent.append((col, -(1.0 - w)))
                    for a in outbound[j]:
                        for m in (mode + "R", mode + "F"):
                            col = g(("S" + m, v.id, b, j, a.target, t))
                            if col is not None:
                                ent.append((col, 1.0))
                    if j in clinic_set:
                        wo = wastage.open_vial_loss(v.id, b, j, t)
                        ent.append((g((f"x{mode}", v.id, b, j, t)), 1.0 / (1.0 - wo)))
                    sup = g((f"sup{mode}", v.id, b, j, t))
                    if sup is not None:
                        ent.append((sup, -1.0))
                    rows.add((f"bal{mode}", v.id, b, j, t), ent, "E", 0.0)

    # storage capacity
    for n in nodes:
        j = n.id
        dil = sum(diluent_volume(v) * daily.get((v.id, j), 0.0) for v in catalog)
        rhs_r = n.refrigerator_capacity - dil
        if rhs_r < 0:
            diagnostics.append(
                f"negative refrigerator capacity at {j}: C^R={n.refrigerator_capacity:g} < diluent {dil:g}"
            )
        for t in range(1, T + 1):
            for mode, rhs in (("R", rhs_r), ("F", n.freezer_capacity)):
                ent = []
                for v, b in pres:
                    coef = capacity_volume(v, b) * unit(b)
                    if coef == 0:
                        continue
                    ent.append((g((f"I{mode}", v.id, b, j, t)), coef))
                    for a in inbound[j]:
                        for m in ("R" + mode, "F" + mode):
                            col = g(("S" + m, v.id, b, a.source, j, t))
                            if col is not None:
                                w = wastage.transit_loss(m, v.id, b, a.source, j, t)
                                ent.append((col, coef * (1.0 - w)))
                rows.add((f"cap{mode}", j, t), ent, "L", rhs)

    # initial and terminal stock
    for v, b in pres:
        for n in nodes:
            rows.add(("initR", v.id, b, n.id), [(g(("IR", v.id, b, n.id, 0)), 1.0)], "E", 0.0)
            rows.add(("initF", v.id, b, n.id), [(g(("IF", v.id, b, n.id, 0)), 1.0)], "E", 0.0)
    for v, b in pres:
        if v.refrigerator_only:
            for n in nodes:
                rows.add(("noFreeze", v.id, b, n.id), [(g(("IF", v.id, b, n.id, T)), 1.0)], "E", 0.0)

    # transport capacity
    for a in topology.arcs:
        if not np.isfinite(a.transport_capacity):
            continue
        for t in a.schedule.sorted():
            if not 1 <= t <= T:
                continue
            ent = []
            for v, b in pres:
                coef = capacity_volume(v, b) * unit(b)
                for m in SHIP_MODES:
                    ent.append((g(("S" + m, v.id, b, a.source, a.target, t)), coef))
            rows.add(("arc", a.source, a.target, t), ent, "L", a.transport_capacity)

    # FIC linking
    for v in catalog:
        for c in clinics:
            ent = [(g(("n", c)), 1.0)]
            for p in v.presentations:
                b = p.vial_size
                for t in range(1, T + 1):
                    for kind in ("xR", "xF"):
                        ent.append((g((kind, v.id, b, c, t)), -unit(b) / v.regimen_doses))
            rows.add(("fic", v.id, c), ent, "L", 0.0)

    if config.cap_administration:
        peak = delta.max(axis=0)  # (I, J, T)
        for v in catalog:
            i = vids.index(v.id)
            for j, c in enumerate(clinics):
                for t in range(1, T + 1):
                    ent = [
                        (g((kind, v.id, p.vial_size, c, t)), unit(p.vial_size))
                        for p in v.presentations
                        for kind in ("xR", "xF")
                    ]
                    rows.add(("admin", v.id, c, t), ent, "L", float(peak[i, j, t - 1]))

    n_struct_rows = len(rows.keys)

    # served-dose map per cell (also the x part of every scenario row)
    sw_r, sw_c, sw_v = [], [], []
    for k, (vid, c, t) in enumerate(cells):
        v = catalog[vids.index(vid)]
        for p in v.presentations:
            for kind in ("xR", "xF"):
                sw_r.append(k)
                sw_c.append(g((kind, vid, p.vial_size, c, t)))
                sw_v.append(unit(p.vial_size))
    n_cols = len(idx)
    served = sp.csr_matrix((sw_v, (sw_r, sw_c)), shape=(len(cells), n_cols))

    # scenario rows, vectorised: row = n_struct_rows + cell*S + s
    n_cells = len(cells)
    cell_of_entry = np.asarray(sw_r, dtype=np.int64)
    scen = np.arange(S, dtype=np.int64)
    x_rows = (n_struct_rows + cell_of_entry[:, None] * S + scen[None, :]).ravel()
    x_cols = np.repeat(np.asarray(sw_c, dtype=np.int64), S)
    x_vals = np.repeat(np.asarray(sw_v, dtype=float), S)
    all_rows = np.arange(n_struct_rows, n_struct_rows + n_cells * S, dtype=np.int64)
    v_cols = np.arange(idx.v_offset, idx.z_offset, dtype=np.int64)
    z_cols = np.arange(idx.z_offset, n_cols, dtype=np.int64)

    r_all = np.concatenate([np.asarray(rows.r, dtype=np.int64), x_rows, all_rows, all_rows])
    c_all = np.concatenate([np.asarray(rows.c, dtype=np.int64), x_cols, v_cols, z_cols])
    v_all = np.concatenate(
        [np.asarray(rows.v, dtype=float), x_vals, np.ones(n_cells * S), -np.ones(n_cells * S)]
    )
    m = n_struct_rows + n_cells * S
    A = sp.csr_matrix((v_all, (r_all, c_all)), shape=(m, n_cols))
    A.sum_duplicates()

    # delta ordered (cell, s) with cell = (i, j, t)
    dem_rhs = np.transpose(delta, (1, 2, 3, 0)).reshape(-1)
    rhs = np.concatenate([np.asarray(rows.rhs, dtype=float), dem_rhs])
    senses = np.array(rows.senses + ["E"] * (n_cells * S), dtype="<U1")
    row_keys = rows.keys + [("dem", vid, c, t, s) for (vid, c, t) in cells for s in range(S)]

    c_vec = np.zeros(n_cols)
    for col, val in obj.items():
        c_vec[col] = val
    c_vec[idx.v_offset : idx.z_offset] = -np.repeat(pi.reshape(-1), S)
    lb = np.zeros(n_cols)
    ub_vec = np.full(n_cols, np.inf)
    for col, val in ub.items():
        ub_vec[col] = val

    return DefProblem(
        A=A,
        senses=senses,
        rhs=rhs,
        lb=lb,
        ub=ub_vec,
        c=c_vec,
        index=idx,
        row_keys=row_keys,
        vaccine_ids=tuple(vids),
        clinic_ids=tuple(clinics),
        periods=T,
        penalties=pi,
        eps_weight=float(eps),
        service_level=float(config.service_level),
        extended=bool(config.extended),
        scenario_digest=scenarios.digest(),
        served_weights=served,
        regimen=np.array([v.regimen_doses for v in catalog], dtype=float),
        diagnostics=tuple(diagnostics),
    )


def freeze_schedule(problem: DefProblem, arc: tuple[str, str] | Arc, periods) -> DefProblem:
    """Fix shipments on ``arc`` to zero outside ``periods``."""
    key = arc.key if isinstance(arc, Arc) else tuple(arc)
    periods = frozenset(int(p) for p in periods)
    if not periods:
        raise ValueError("empty schedule")
    cols = [
        vid
        for vid, k in problem.index.structural()
        if k[0] in ("SRR", "SRF", "SFR", "SFF") and (k[3], k[4]) == key
    ]
    if not cols:
        raise KeyError(f"unknown arc {key}")
    ub = problem.ub.copy()
    lb = problem.lb.copy()
    for vid in cols:
        if problem.index.key(vid)[5] not in periods:
            ub[vid] = 0.0
            lb[vid] = 0.0
    return replace(problem, ub=ub, lb=lb, meta={})
