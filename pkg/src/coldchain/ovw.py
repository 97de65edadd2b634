"""Expected open-vial wastage for multi-dose vials.

Session model: arrivals in one session are Poisson, every child is served from
a freshly opened vial once the previous one is empty, and partially used vials
are discarded when the session ends.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

TAIL_MASS = 1e-12


@dataclass(frozen=True)
class OvwQuery:
    daily_mean: float
    vial_size: int
    sessions_per_period: int | None = None  # defaults to one session per day
    period_length_days: int = 30

    def __post_init__(self) -> None:
        if self.daily_mean < 0:
            raise ValueError("daily_mean must be >= 0")
        if self.vial_size < 1:
            raise ValueError("vial_size must be >= 1")
        if self.sessions_per_period is not None and self.sessions_per_period < 1:
            raise ValueError("sessions_per_period must be >= 1")

    @property
    def session_mean(self) -> float:
        sessions = self.sessions_per_period or self.period_length_days
        return self.daily_mean * self.period_length_days / sessions


def estimate_ovw(query: OvwQuery) -> float:
    """Fraction of opened doses that are discarded, E[b*ceil(D/b) - D] / E[b*ceil(D/b)]."""
    b = int(query.vial_size)
    lam = query.session_mean
    if b == 1 or lam == 0:
        return 0.0
    k_max = int(poisson.ppf(1.0 - TAIL_MASS, lam))
    # ppf can stop one short of the requested mass
    while poisson.cdf(k_max, lam) < 1.0 - TAIL_MASS:
        k_max += 1
    k = np.arange(k_max + 1)
    pmf = poisson.pmf(k, lam)
    opened = b * np.ceil(k / b)
    used = float(np.dot(pmf, opened))
    if used == 0:
        return 0.0
    waste = float(np.dot(pmf, opened - k))
    return waste / used


def ovw_table(catalog, demand, horizon, sessions_per_period: int | None = None) -> dict[tuple, float]:
    """Open-vial fractions keyed ``(vaccine, vial_size, clinic)`` for every clinic in ``demand``."""
    out = {}
    for v in catalog:
        for p in v.presentations:
            for c in demand.clinic_ids:
                q = OvwQuery(
                    demand.daily(v.id, c), p.vial_size, sessions_per_period, horizon.period_length_days
                )
                out[(v.id, p.vial_size, c)] = estimate_ovw(q)
    return out
