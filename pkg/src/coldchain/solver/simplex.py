"""Bounded-variable revised primal simplex.

Works on ``max c'x  s.t.  A x (<=,=,>=) b,  l <= x <= u`` by appending one
logical variable per row (``A x + s = b``) whose bounds encode the row sense.
Phase 1 drives artificial variables to zero; phase 2 optimises ``c``.

The basis is held as a dense LU factorisation plus a product-form eta file,
refactorised every ``refactor_every`` pivots. Pricing is Dantzig's rule and
switches to Bland's rule for good after ``stall_limit`` consecutive pivots
without objective progress.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


@dataclass
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray
    duals: np.ndarray
    iterations: int
    phase1_iterations: int
    infeasible_rows: list[int]
    farkas: np.ndarray | None
    ray: np.ndarray | None
    solve_time: float


def geometric_scaling(A: sp.csr_matrix, passes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors r, s so that diag(r) A diag(s) has entries near 1."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    if A.nnz == 0:
        return r, s
    B = sp.coo_matrix(A)
    rows, cols, vals = B.row, B.col, np.abs(B.data)
    keep = vals > 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    for _ in range(passes):
        v = vals * r[rows] * s[cols]
        rmax = np.zeros(m)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, rows, v)
        np.minimum.at(rmin, rows, v)
        ok = rmax > 0
        r[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        v = vals * r[rows] * s[cols]
        cmax = np.zeros(n)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, cols, v)
        np.minimum.at(cmin, cols, v)
        ok = cmax > 0
        s[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    # powers of two keep the scaling exact in floating point
    r = np.exp2(np.round(np.log2(r)))
    s = np.exp2(np.round(np.log2(s)))
    return r, s


class _Basis:
    def __init__(self, M: sp.csc_matrix, head: list[int], refactor_every: int) -> None:
        self.M = M
        self.head = head
        self.refactor_every = refactor_every
        self.refactor()

    def refactor(self) -> None:
        m = len(self.head)
        B = self.M[:, self.head].toarray() if m else np.zeros((0, 0))
        self.lu = la.lu_factor(B, check_finite=False) if m else None
        self.etas: list[tuple[int, np.ndarray]] = []

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.M.shape[0])
        start, end = self.M.indptr[j], self.M.indptr[j + 1]
        col[self.M.indices[start:end]] = self.M.data[start:end]
        return col

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = la.lu_solve(self.lu, a, check_finite=False)
        for r, alpha in self.etas:
            xr = x[r] / alpha[r]
            x -= alpha * xr
            x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        w = c.copy()
        for r, alpha in reversed(self.etas):
            w[r] = (w[r] - (alpha @ w - alpha[r] * w[r])) / alpha[r]
        return la.lu_solve(self.lu, w, trans=1, check_finite=False)

    def replace(self, pos: int, j: int, alpha: np.ndarray) -> None:
        self.head[pos] = j
        if len(self.etas) + 1 >= self.refactor_every:
            self.refactor()
        else:
            self.etas.append((pos, alpha.copy()))


def simplex(
    A,
    senses,
    rhs,
    lb,
    ub,
    c,
    *,
    tol: float = 1e-9,
    max_iters: int = 50_000,
    refactor_every: int = 100,
    stall_limit: int = 50,
    scale: bool = True,
) -> SimplexResult:
    t0 = time.perf_counter()
    A = sp.csr_matrix(A, dtype=float)
    m, n = A.shape
    senses = np.asarray(senses)
    b = np.asarray(rhs, dtype=float)
    lo = np.asarray(lb, dtype=float)
    hi = np.asarray(ub, dtype=float)
    cost = np.asarray(c, dtype=float)

    if scale:
        rs, cs = geometric_scaling(A)
    else:
        rs, cs = np.ones(m), np.ones(n)
    As = sp.diags(rs) @ A @ sp.diags(cs)
    bs = b * rs
    los, his, cs_cost = lo / cs, hi / cs, cost * cs

    # logical variables: A x + s = b
    slo = np.where(senses == "G", -np.inf, 0.0)
    shi = np.where(senses == "L", np.inf, 0.0)

    # nonbasic starting values for structurals
    xs = np.where(np.isfinite(los), los, np.where(np.isfinite(his), his, 0.0))
    resid = bs - As @ xs
    s_val = np.clip(resid, slo, shi)
    gap = resid - s_val
    art_rows = np.flatnonzero(np.abs(gap) > tol * (1 + np.abs(bs)))

    n_art = len(art_rows)
    N = n + m + n_art
    sign = np.sign(gap[art_rows])
    art = sp.csc_matrix((sign, (art_rows, np.arange(n_art))), shape=(m, n_art))
    M = sp.hstack([As.tocsc(), sp.identity(m, format="csc"), art], format="csc")
    low = np.concatenate([los, slo, np.zeros(n_art)])
    up = np.concatenate([his, shi, np.full(n_art, np.inf)])
    x = np.concatenate([xs, s_val, np.abs(gap[art_rows])])

    state = np.empty(N, dtype=np.int8)
    for j in range(N):
        if np.isfinite(low[j]) and x[j] == low[j]:
            state[j] = AT_LOWER
        elif np.isfinite(up[j]) and x[j] == up[j]:
            state[j] = AT_UPPER
        else:
            state[j] = AT_ZERO
    head = list(range(n, n + m))
    for k, i in enumerate(art_rows):
        head[i] = n + m + k
    for j in head:
        state[j] = BASIC
    basis = _Basis(M, head, refactor_every)
    MT = M.T.tocsr()

    iterations = 0
    phase1_iterations = 0

    def run(obj: np.ndarray, phase: int):
        nonlocal iterations
        bland = False
        stall = 0
        last = obj @ x
        since_refactor = 0
        while True:
            if iterations >= max_iters:
                return "iteration_limit", None
            head_arr = np.asarray(basis.head)
            if since_refactor == 0:
                # recompute basic values from nonbasic ones to shed drift
                nb = np.ones(N, dtype=bool)
                nb[head_arr] = False
                x[head_arr] = basis.ftran(bs - M[:, nb] @ x[nb]) if m else x[head_arr]
            y = basis.btran(obj[head_arr]) if m else np.zeros(0)
            d = obj - MT @ y
            d[head_arr] = 0.0
            inc = ((state == AT_LOWER) | (state == AT_ZERO)) & (d > tol) & (up > low)
            dec = ((state == AT_UPPER) | (state == AT_ZERO)) & (d < -tol) & (up > low)
            cand = np.flatnonzero(inc | dec)
            if cand.size == 0:
                return "optimal", y
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0
            alpha = basis.ftran(basis.column(q)) if m else np.zeros(0)

            theta = np.inf
            leave = -1
            leave_to = AT_LOWER
            if np.isfinite(up[q]) and np.isfinite(low[q]):
                theta = up[q] - low[q]
            rate = -direction * alpha
            xb = x[head_arr]
            lb_b, ub_b = low[head_arr], up[head_arr]
            piv_tol = 1e-9
            dn = np.flatnonzero((rate < -piv_tol) & np.isfinite(lb_b))
            upp = np.flatnonzero((rate > piv_tol) & np.isfinite(ub_b))
            ratios = np.concatenate(
                [np.maximum(xb[dn] - lb_b[dn], 0) / -rate[dn], np.maximum(ub_b[upp] - xb[upp], 0) / rate[upp]]
            )
            pos = np.concatenate([dn, upp])
            to = np.concatenate([np.full(dn.size, AT_LOWER), np.full(upp.size, AT_UPPER)])
            if ratios.size:
                best = ratios.min()
                if best < theta:
                    ties = np.flatnonzero(ratios <= best + 1e-12)
                    if bland:
                        k = ties[np.argmin(head_arr[pos[ties]])]
                    else:
                        k = ties[np.argmax(np.abs(alpha[pos[ties]]))]
                    theta = ratios[k]
                    leave = int(pos[k])
                    leave_to = int(to[k])
            if not np.isfinite(theta):
                return "unbounded", (q, direction, alpha)

            iterations += 1
            x[q] += direction * theta
            x[head_arr] = xb + theta * rate
            if leave < 0:
                state[q] = AT_UPPER if direction > 0 else AT_LOWER
                x[q] = up[q] if direction > 0 else low[q]
            else:
                j_out = basis.head[leave]
                x[j_out] = low[j_out] if leave_to == AT_LOWER else up[j_out]
                state[j_out] = leave_to
                if phase == 1 and j_out >= n + m:
                    # artificials never come back
                    up[j_out] = 0.0
                    state[j_out] = AT_LOWER
                    x[j_out] = 0.0
                state[q] = BASIC
                basis.replace(leave, q, alpha)
                since_refactor = len(basis.etas)
            now = obj @ x
            if now > last + tol * (1 + abs(last)):
                stall = 0
            else:
                stall += 1
                if stall >= stall_limit:
                    bland = True
            last = now

    # phase 1
    status = "optimal"
    infeasible_rows: list[int] = []
    farkas = None
    if n_art:
        obj1 = np.zeros(N)
        obj1[n + m :] = -1.0
        status, y1 = run(obj1, 1)
        phase1_iterations = iterations
        if status == "iteration_limit":
            return _finish("iteration_limit", x, n, m, cs, rs, None, iterations, phase1_iterations, t0)
        infeas = x[n + m :].sum()
        if infeas > 1e-7 * (1 + np.abs(bs).max(initial=0)):
            infeasible_rows = sorted(int(art_rows[k]) for k in np.flatnonzero(x[n + m :] > 1e-9))
            farkas = y1 * rs if y1 is not None else None
            res = _finish("infeasible", x, n, m, cs, rs, None, iterations, phase1_iterations, t0)
            res.infeasible_rows = infeasible_rows
            res.farkas = farkas
            return res
        up[n + m :] = 0.0
        for j in range(n + m, N):
            if state[j] != BASIC:
                state[j] = AT_LOWER
                x[j] = 0.0

    obj2 = np.zeros(N)
    obj2[:n] = cs_cost
    status, extra = run(obj2, 2)
    if status == "unbounded":
        q, direction, alpha = extra
        ray = np.zeros(N)
        ray[q] = direction
        ray[np.asarray(basis.head)] = -direction * alpha
        res = _finish("unbounded", x, n, m, cs, rs, None, iterations, phase1_iterations, t0)
        res.ray = ray[:n] * cs
        return res
    return _finish(status, x, n, m, cs, rs, extra, iterations, phase1_iterations, t0)


def _finish(status, x, n, m, cs, rs, y, iterations, phase1_iterations, t0) -> SimplexResult:
    duals = y * rs if y is not None else np.full(m, np.nan)
    return SimplexResult(
        status=status,
        x=x[:n] * cs,
        duals=duals,
        iterations=iterations,
        phase1_iterations=phase1_iterations,
        infeasible_rows=[],
        farkas=None,
        ray=None,
        solve_time=time.perf_counter() - t0,
    )
