"""Independent reference computations used by the tests.

Nothing here imports the solver or the builder; each oracle works from first
principles so agreement is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def vertex_enumeration(A, senses, b, lb, ub, c, tol=1e-9):
    """Best objective of max c'x over a bounded polyhedron, or None if empty.

    Every basic solution is the intersection of n linearly independent active
    constraints; try them all.
    """
    A = np.asarray(A, float)
    m, n = A.shape
    G, h, eq = [], [], []
    for i in range(m):
        if senses[i] == "L":
            G.append(A[i]), h.append(b[i])
        elif senses[i] == "G":
            G.append(-A[i]), h.append(-b[i])
        else:
            eq.append(i)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        G.append(e), h.append(ub[j])
        G.append(-e), h.append(-lb[j])
    G, h = np.array(G), np.array(h)
    Aeq, beq = A[eq], np.asarray(b, float)[eq]
    P = np.vstack([Aeq, G])
    q = np.concatenate([beq, h])
    combos = np.array(list(itertools.combinations(range(len(P)), n)))
    M = P[combos]  # (k, n, n), one candidate basis per combination
    keep = np.abs(np.linalg.det(M)) >= 1e-10
    if not keep.any():
        return None
    X = np.linalg.solve(M[keep], q[combos[keep]][..., None])[..., 0]
    ok = np.all(X @ G.T <= h + tol, axis=1)
    if len(eq):
        ok &= np.all(np.abs(X @ Aeq.T - beq) <= tol, axis=1)
    return float((X[ok] @ np.asarray(c, float)).max()) if ok.any() else None


def random_lp(rng, max_vars=6, max_rows=8, infeasible_share=0.15):
    """Small bounded LP with integer coefficients; mostly feasible by construction."""
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A = rng.integers(-5, 6, (m, n)).astype(float)
    senses = rng.choice(list("LLLGE"), m)
    x0 = rng.uniform(0, 3, n)
    slack = rng.uniform(0, 3, m)
    b = A @ x0 + np.where(senses == "L", slack, np.where(senses == "G", -slack, 0.0))
    if rng.random() < infeasible_share:
        b = b + rng.normal(0, 5, m)
    lb = np.zeros(n)
    ub = rng.uniform(2, 8, n)
    c = rng.normal(size=n)
    return A, senses, b, lb, ub, c


def ovw_monte_carlo(mu, b, sessions, seed, chunk=1_000_000):
    """Ratio estimate of discarded over opened doses and its delta-method standard error."""
    rng = np.random.default_rng(seed)
    sw = su = sww = suu = swu = 0.0
    done = 0
    while done < sessions:
        k = min(chunk, sessions - done)
        d = rng.poisson(mu, k).astype(float)
        opened = b * np.ceil(d / b)
        w = opened - d
        sw += w.sum()
        su += opened.sum()
        sww += (w * w).sum()
        suu += (opened * opened).sum()
        swu += (w * opened).sum()
        done += k
    n = float(sessions)
    mw, mu_ = sw / n, su / n
    r = mw / mu_
    # variance of w - r*u, from raw moments
    var = (sww - 2 * r * swu + r * r * suu) / n - (mw - r * mu_) ** 2
    return r, math.sqrt(max(var, 0.0) / n) / mu_


def clamped_normal_mean(mu, sigma):
    """E[max(0, N(mu, sigma^2))] from the closed form using math.erf only."""
    if sigma == 0:
        return max(mu, 0.0)
    z = mu / sigma
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return mu * cdf + sigma * pdf


def _betacf(a, b, x, iters=400, eps=1e-15):
    # continued fraction for the regularised incomplete beta (modified Lentz)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, iters + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def incomplete_beta(a, b, x):
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1) / (a + b + 2):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def paired_t_oracle(a, b):
    """(mean difference b-a, t statistic, two-sided p) for a paired t-test, by hand."""
    d = [y - x for x, y in zip(a, b)]
    n = len(d)
    mean = sum(d) / n
    var = sum((v - mean) ** 2 for v in d) / (n - 1)
    t = mean / math.sqrt(var / n)
    nu = n - 1
    p = incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t))
    return mean, t, p


def type7_quantile(values, q):
    """Hyndman-Fan type 7 quantile written out longhand."""
    x = sorted(values)
    h = (len(x) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])
