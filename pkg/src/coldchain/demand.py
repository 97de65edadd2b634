"""Demand means and reproducible scenario sampling.

Each (vaccine, clinic, period) cell has its own counter-keyed random stream,
so draws are independent across cells, and a sample of size S is a prefix of
any larger sample drawn with the same seed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .model import Horizon, NetworkTopology, Tier, VaccineType

TRAINING_STREAM = 0x5452_4149  # "TRAI"
POSTERIOR_STREAM = 0x504F_5354  # "POST"

_MASK64 = (1 << 64) - 1


def stable_hash(text: str) -> int:
    """64-bit hash of an identifier that does not depend on PYTHONHASHSEED."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(*parts: int | str) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True, eq=False)
class DemandModel:
    vaccine_ids: tuple[str, ...]
    clinic_ids: tuple[str, ...]
    mean: np.ndarray  # (vaccines, clinics, periods), doses per period
    std: np.ndarray  # same shape
    daily_mean: np.ndarray  # (vaccines, clinics), doses per day
    distribution: str = "normal"  # or "poisson" for small-mean stress tests

    def __post_init__(self) -> None:
        shape = (len(self.vaccine_ids), len(self.clinic_ids))
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        daily = np.asarray(self.daily_mean, dtype=float)
        if mean.ndim != 3 or mean.shape[:2] != shape or std.shape != mean.shape:
            raise ValueError("mean/std must have shape (vaccines, clinics, periods)")
        if daily.shape != shape:
            raise ValueError("daily_mean must have shape (vaccines, clinics)")
        for name, arr in (("mean", mean), ("std", std), ("daily_mean", daily)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if np.any((mean == 0) & (std != 0)):
            raise ValueError("zero mean requires zero std")
        if self.distribution not in ("normal", "poisson"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        mean.setflags(write=False)
        std.setflags(write=False)
        daily.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "daily_mean", daily)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DemandModel):
            return NotImplemented
        return (
            self.vaccine_ids == other.vaccine_ids
            and self.clinic_ids == other.clinic_ids
            and self.distribution == other.distribution
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("mean", "std", "daily_mean"))
        )

    __hash__ = None

    @property
    def periods(self) -> int:
        return self.mean.shape[2]

    def period_totals(self) -> dict[tuple[str, str], float]:
        tot = self.mean.sum(axis=2)
        return {
            (v, c): float(tot[i, j])
            for i, v in enumerate(self.vaccine_ids)
            for j, c in enumerate(self.clinic_ids)
        }

    def low_mean_entries(self, threshold: float = 10.0) -> list[tuple[str, str, int]]:
        idx = np.argwhere((self.mean > 0) & (self.mean <= threshold))
        return [(self.vaccine_ids[i], self.clinic_ids[j], int(t) + 1) for i, j, t in idx]

    def daily(self, vaccine: str, clinic: str) -> float:
        if clinic not in self.clinic_ids:
            return 0.0
        return float(self.daily_mean[self.vaccine_ids.index(vaccine), self.clinic_ids.index(clinic)])

    def expected_clamped(self) -> np.ndarray:
        """Mean of max(0, N(mu, sigma)) per cell."""
        from scipy.stats import norm

        mu, sd = self.mean, self.std
        out = mu.copy()
        pos = sd > 0
        z = mu[pos] / sd[pos]
        out[pos] = mu[pos] * norm.cdf(z) + sd[pos] * norm.pdf(z)
        return out

    @classmethod
    def from_regions(
        cls,
        topology: NetworkTopology,
        catalog: list[VaccineType],
        horizon: Horizon,
        regions: dict[str, dict],
        cv: float = 0.2,
        warmup_periods: int = 0,
        distribution: str = "normal",
    ) -> "DemandModel":
        """Region totals (population x monthly per-capita cohort rate) split evenly over clinics.

        Dose demand of vaccine ``i`` is the cohort times its regimen length.
        The first ``warmup_periods`` periods carry no demand.
        """
        clinics = topology.clinics
        clinic_ids = tuple(c.id for c in clinics)
        per_region: dict[str, int] = {}
        for c in clinics:
            per_region[c.region] = per_region.get(c.region, 0) + 1
        I, J, T = len(catalog), len(clinics), horizon.periods
        mean = np.zeros((I, J, T))
        for j, c in enumerate(clinics):
            spec = regions.get(c.region)
            if spec is None:
                raise KeyError(f"no demand spec for region {c.region!r}")
            cohort = float(spec["population"]) * float(spec["per_capita_rate"]) / per_region[c.region]
            for i, v in enumerate(catalog):
                mean[i, j, warmup_periods:] = cohort * v.regimen_doses
        std = cv * mean
        active = max(T - warmup_periods, 1)
        daily = mean.sum(axis=2) / (active * horizon.period_length_days)
        return cls(tuple(v.id for v in catalog), clinic_ids, mean, std, daily, distribution)

    def to_json(self) -> dict:
        return {
            "type": "explicit",
            "distribution": self.distribution,
            "entries": [
                {
                    "vaccine": v,
                    "clinic": c,
                    "mean": self.mean[i, j].tolist(),
                    "std": self.std[i, j].tolist(),
                    "daily_mean": float(self.daily_mean[i, j]),
                }
                for i, v in enumerate(self.vaccine_ids)
                for j, c in enumerate(self.clinic_ids)
            ],
        }


@dataclass(frozen=True)
class ScenarioSet:
    vaccine_ids: tuple[str, ...]
    clinic_ids: tuple[str, ...]
    values: np.ndarray  # (S, vaccines, clinics, periods)
    seed: int
    stream: int = TRAINING_STREAM
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def probability(self) -> float:
        return 1.0 / self.size

    @property
    def periods(self) -> int:
        return self.values.shape[3]

    def prefix(self, n: int) -> "ScenarioSet":
        if not 1 <= n <= self.size:
            raise ValueError(f"prefix length {n} outside 1..{self.size}")
        return ScenarioSet(self.vaccine_ids, self.clinic_ids, self.values[:n], self.seed, self.stream)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.vaccine_ids, self.clinic_ids, self.values.shape)).encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()

    def cell(self, vaccine: str, clinic: str, period: int) -> np.ndarray:
        return self.values[:, self.vaccine_ids.index(vaccine), self.clinic_ids.index(clinic), period - 1]


def _draw(model: DemandModel, size: int, seed: int, stream: int) -> np.ndarray:
    if size < 1:
        raise ValueError(f"sample size must be >= 1, got {size}")
    I, J, T = model.mean.shape
    out = np.zeros((size, I, J, T))
    seed64 = int(seed) & _MASK64
    vkeys = [stable_hash(v) for v in model.vaccine_ids]
    ckeys = [stable_hash(c) for c in model.clinic_ids]
    for i in range(I):
        for j in range(J):
            for t in range(T):
                mu = model.mean[i, j, t]
                sd = model.std[i, j, t]
                if mu == 0 and sd == 0:
                    continue
                if sd == 0 and model.distribution == "normal":
                    out[:, i, j, t] = mu
                    continue
                ss = np.random.SeedSequence([seed64, stream, vkeys[i], ckeys[j], t + 1])
                rng = np.random.Generator(np.random.Philox(ss))
                if model.distribution == "poisson":
                    out[:, i, j, t] = rng.poisson(mu, size)
                else:
                    out[:, i, j, t] = np.maximum(0.0, mu + sd * rng.standard_normal(size))
    return out


def sample_scenarios(model: DemandModel, S: int, seed: int) -> ScenarioSet:
    values = _draw(model, S, seed, TRAINING_STREAM)
    values.setflags(write=False)
    return ScenarioSet(model.vaccine_ids, model.clinic_ids, values, int(seed), TRAINING_STREAM)


def posterior_sample(model: DemandModel, S_prime: int, seed: int) -> ScenarioSet:
    """Fresh evaluation sample, on a stream disjoint from training draws."""
    values = _draw(model, S_prime, seed, POSTERIOR_STREAM)
    values.setflags(write=False)
    return ScenarioSet(model.vaccine_ids, model.clinic_ids, values, int(seed), POSTERIOR_STREAM)
