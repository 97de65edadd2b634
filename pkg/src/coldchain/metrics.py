"""Supply ratio (SR) and fully-immunised-children (FIC) metrics.

SR per (vaccine, scenario) is served doses over scenario demand summed over
clinics and periods. FIC per (clinic, scenario) is ``100 n_j`` over the
scenario demand of that clinic summed over vaccines and periods; regions
aggregate by pooling numerators and denominators, which is the demand-weighted
mean of the clinic values.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .demand import ScenarioSet


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SolutionBundle:
    """Decision values needed for reporting, detached from the LP."""

    vaccine_ids: tuple[str, ...]
    clinic_ids: tuple[str, ...]
    served: np.ndarray  # (vaccines, clinics, periods) doses administered
    fic_counts: np.ndarray  # (clinics,)
    regimen: np.ndarray  # (vaccines,)
    objective: float = float("nan")
    base_objective: float = float("nan")
    shortage_counts: np.ndarray | None = None  # (vaccines, clinics, periods) on the training sample
    status: str = ""

    @classmethod
    def from_solution(cls, problem, solution) -> "SolutionBundle":
        x = solution.x
        counts = None
        if problem.n_scenarios:
            counts = (problem.shortages(x) > 1e-6).sum(axis=3)
        return cls(
            problem.vaccine_ids,
            problem.clinic_ids,
            problem.served(x),
            problem.fic_counts(x),
            problem.regimen.copy(),
            float(solution.objective),
            problem.base_objective(x),
            counts,
            solution.status.value,
        )

    @property
    def periods(self) -> int:
        return self.served.shape[2]


def _aligned_demand(bundle: SolutionBundle, scenarios: ScenarioSet) -> np.ndarray:
    try:
        vi = [scenarios.vaccine_ids.index(v) for v in bundle.vaccine_ids]
        ci = [scenarios.clinic_ids.index(c) for c in bundle.clinic_ids]
    except ValueError as exc:
        raise MetricsError(f"index mismatch: {exc}") from None
    if scenarios.periods != bundle.periods:
        raise MetricsError(f"index mismatch: {scenarios.periods} periods vs {bundle.periods}")
    return scenarios.values[:, vi][:, :, ci]


def compute_sr(bundle: SolutionBundle, scenarios: ScenarioSet, cap_at_demand: bool = False) -> np.ndarray:
    """SR per (vaccine, scenario); 1 where the scenario has no demand.

    ``cap_at_demand`` counts at most the demand of each cell as served, giving
    a fill rate bounded by 1.
    """
    delta = _aligned_demand(bundle, scenarios)  # (S, I, J, T)
    served = np.broadcast_to(bundle.served, delta.shape)
    if cap_at_demand:
        served = np.minimum(served, delta)
    num = served.sum(axis=(2, 3)).T  # (I, S)
    den = delta.sum(axis=(2, 3)).T
    out = np.ones_like(den)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class FicTable:
    clinic: np.ndarray  # (clinics, S), percent
    region: np.ndarray  # (regions, S), percent
    regions: tuple[str, ...]
    diagnostics: tuple[str, ...] = ()


def compute_fic(
    bundle: SolutionBundle,
    scenarios: ScenarioSet,
    grouping: Mapping[str, str] | None = None,
    denominator: str = "doses",
) -> FicTable:
    """FIC per clinic and per region for every scenario.

    ``denominator="doses"`` divides by total dose demand over all vaccines.
    ``"cohort"``, an alternative reading, divides by the expected number of
    children, the dose demand of each vaccine over its regimen averaged over
    vaccines.
    """
    delta = _aligned_demand(bundle, scenarios)
    if denominator == "doses":
        den = delta.sum(axis=(1, 3))  # (S, J)
    elif denominator == "cohort":
        den = (delta.sum(axis=3) / bundle.regimen[None, :, None]).mean(axis=1)
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    den = den.T  # (J, S)
    n = np.asarray(bundle.fic_counts, dtype=float)
    clinic = np.zeros_like(den)
    np.divide(100.0 * n[:, None], den, out=clinic, where=den > 0)
    diags = tuple(
        f"zero demand at {bundle.clinic_ids[j]} in {int((den[j] == 0).sum())} scenarios"
        for j in range(den.shape[0])
        if np.any(den[j] == 0)
    )
    grouping = dict(grouping or {})
    labels = [grouping.get(c, "") for c in bundle.clinic_ids]
    regions = tuple(sorted(set(labels)))
    region = np.zeros((len(regions), den.shape[1]))
    for r, name in enumerate(regions):
        mask = np.array([lab == name for lab in labels])
        d = den[mask].sum(axis=0)
        np.divide(100.0 * n[mask].sum(), d, out=region[r], where=d > 0)
    return FicTable(clinic, region, regions, diags)


def box_stats(values) -> dict[str, float]:
    """Min, quartiles (linear interpolation), max and mean."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise MetricsError("no values")
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75], method="linear")
    return {
        "min": float(a.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(a.max()),
        "mean": float(a.mean()),
    }


@dataclass(frozen=True)
class MetricsReport:
    vaccine_ids: tuple[str, ...]
    clinic_ids: tuple[str, ...]
    regions: tuple[str, ...]
    sr: np.ndarray  # (vaccines, S)
    fic_clinic: np.ndarray  # (clinics, S)
    fic_region: np.ndarray  # (regions, S)
    scenario_digest: str
    scenario_seed: int
    diagnostics: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_scenarios(self) -> int:
        return self.sr.shape[1]

    def sr_mean(self) -> float:
        return float(self.sr.mean())

    def fic_mean(self) -> float:
        """Average regional FIC over regions and scenarios."""
        return float(self.fic_region.mean())

    def per_scenario(self, metric: str) -> np.ndarray:
        if metric == "sr":
            return self.sr.mean(axis=0)
        if metric == "fic":
            return self.fic_region.mean(axis=0)
        raise ValueError(f"unknown metric {metric!r}")

    def box(self) -> dict:
        return {
            "sr": {v: box_stats(self.sr[i]) for i, v in enumerate(self.vaccine_ids)},
            "fic": {r: box_stats(self.fic_region[k]) for k, r in enumerate(self.regions)},
        }

    def summary(self) -> dict:
        return {"sr_mean": self.sr_mean(), "fic_mean": self.fic_mean(), "box": self.box()}


def evaluate(
    bundle: SolutionBundle,
    scenarios: ScenarioSet,
    grouping: Mapping[str, str] | None = None,
    denominator: str = "doses",
    cap_at_demand: bool = False,
) -> MetricsReport:
    sr = compute_sr(bundle, scenarios, cap_at_demand)
    fic = compute_fic(bundle, scenarios, grouping, denominator)
    return MetricsReport(
        bundle.vaccine_ids,
        bundle.clinic_ids,
        fic.regions,
        sr,
        fic.clinic,
        fic.region,
        scenarios.digest(),
        scenarios.seed,
        fic.diagnostics,
    )


# --------------------------------------------------------------------------
# paired comparison


@dataclass(frozen=True)
class PairedTest:
    n: int
    mean_difference: float  # mean(b - a)
    t_statistic: float
    p_value: float
    level: float
    alternative: str
    significant: bool
    note: str = ""


def _paired_values(arm, metric: str) -> tuple[np.ndarray, str | None]:
    if isinstance(arm, MetricsReport):
        return arm.per_scenario(metric), arm.scenario_digest
    return np.asarray(arm, dtype=float).ravel(), None


def paired_compare(
    arm_a,
    arm_b,
    level: float = 0.05,
    metric: str = "fic",
    alternative: str = "two-sided",
) -> PairedTest:
    """Paired t-test on per-scenario values of ``arm_b - arm_a``.

    ``alternative="greater"`` tests whether arm b exceeds arm a. Arms given as
    MetricsReport must come from the same scenario draws.
    """
    from scipy import stats

    a, da = _paired_values(arm_a, metric)
    b, db = _paired_values(arm_b, metric)
    if a.shape != b.shape:
        raise MetricsError(f"unpaired arms: {a.size} vs {b.size} scenarios")
    if da is not None and db is not None and da != db:
        raise MetricsError("unpaired arms: scenario draws differ")
    if a.size < 2:
        raise MetricsError("paired test needs at least two scenarios")
    diff = b - a
    mean = float(diff.mean())
    if np.allclose(diff, diff[0], rtol=0, atol=1e-12 * max(1.0, float(np.abs(diff).max()))):
        if mean == 0:
            return PairedTest(a.size, 0.0, 0.0, 1.0, level, alternative, False, "zero variance, difference 0")
        direction_ok = alternative == "two-sided" or (alternative == "greater") == (mean > 0)
        p = 0.0 if direction_ok else 1.0
        return PairedTest(
            a.size,
            mean,
            math.copysign(math.inf, mean),
            p,
            level,
            alternative,
            p < level,
            f"zero variance, difference {mean:.6g}",
        )
    res = stats.ttest_rel(b, a, alternative=alternative)
    p = float(res.pvalue)
    return PairedTest(a.size, mean, float(res.statistic), p, level, alternative, p < level)


# --------------------------------------------------------------------------
# CSV output


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path: Path, rows: Sequence[tuple]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("group", "scenario", "value"))
    for g, s, v in rows:
        w.writerow((g, s, _fmt(v)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_sr_csv(report: MetricsReport, path: str | Path) -> Path:
    rows = [(v, s + 1, report.sr[i, s]) for i, v in enumerate(report.vaccine_ids) for s in range(report.n_scenarios)]
    return _write_rows(Path(path), rows)


def write_fic_csv(report: MetricsReport, path: str | Path) -> Path:
    rows = [(r, s + 1, report.fic_region[k, s]) for k, r in enumerate(report.regions) for s in range(report.n_scenarios)]
    return _write_rows(Path(path), rows)
