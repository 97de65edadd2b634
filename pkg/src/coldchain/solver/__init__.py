"""LP solving for the deterministic equivalent.

``solve`` dispatches to the in-repo revised simplex or to HiGHS (through
SciPy). ``method="auto"`` uses the simplex for problems up to
``AUTO_SIMPLEX_MAX_ROWS`` rows and HiGHS above that.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .simplex import simplex

AUTO_SIMPLEX_MAX_ROWS = 200  # the dense-LU simplex is fine below this, HiGHS beyond


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    # imported points whose optimality is unknown
    FEASIBLE = "Feasible"
    NOT_FEASIBLE = "NotFeasible"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """Plain maximisation LP with the same attribute names as DefProblem."""

    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray

    @classmethod
    def from_dense(cls, A, senses, rhs, c, lb=None, ub=None) -> "LinearProgram":
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
        n = A.shape[1]
        return cls(
            A,
            np.asarray(list(senses), dtype="<U1"),
            np.asarray(rhs, dtype=float),
            np.zeros(n) if lb is None else np.asarray(lb, dtype=float),
            np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float),
            np.asarray(c, dtype=float),
        )

    def permuted_rows(self, perm) -> "LinearProgram":
        perm = np.asarray(perm)
        return LinearProgram(self.A[perm], self.senses[perm], self.rhs[perm], self.lb, self.ub, self.c)


@dataclass
class LpSolution:
    status: Status
    objective: float
    x: np.ndarray
    activities: np.ndarray
    duals: np.ndarray
    iterations: int = 0
    solve_time: float = 0.0
    method: str = ""
    primal_residual: float = 0.0
    bound_residual: float = 0.0
    certificate: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _residuals(problem, x: np.ndarray) -> tuple[np.ndarray, float, float]:
    act = problem.A @ x
    senses = np.asarray(problem.senses)
    rhs = np.asarray(problem.rhs, dtype=float)
    scale = 1.0 + np.abs(rhs)
    r = np.zeros_like(act)
    L, E, G = senses == "L", senses == "E", senses == "G"
    r[L] = np.maximum(0, act[L] - rhs[L])
    r[G] = np.maximum(0, rhs[G] - act[G])
    r[E] = np.abs(act[E] - rhs[E])
    bnd = np.maximum(np.maximum(0, problem.lb - x), np.maximum(0, x - problem.ub))
    return act, float((r / scale).max(initial=0.0)), float(bnd.max(initial=0.0))


def lagrangian_bound(problem, duals: np.ndarray) -> float:
    """Upper bound on the max objective implied by row multipliers ``duals``.

    Equals ``max_{l<=x<=u} c'x - y'(Ax - b)`` restricted to sign-consistent
    multipliers; infinite when some reduced cost points at an infinite bound.
    """
    y = np.asarray(duals, dtype=float)
    senses = np.asarray(problem.senses)
    # sign feasibility: y >= 0 on <= rows, y <= 0 on >= rows (maximisation)
    y = np.where(senses == "L", np.maximum(y, 0), np.where(senses == "G", np.minimum(y, 0), y))
    d = problem.c - problem.A.T @ y
    total = float(y @ problem.rhs)
    for dj, lo, hi in zip(d, problem.lb, problem.ub):
        if dj > 0:
            total += dj * hi if np.isfinite(hi) else (np.inf if dj > 1e-12 else 0.0)
        elif dj < 0:
            total += dj * lo if np.isfinite(lo) else (np.inf if dj < -1e-12 else 0.0)
    return total


def _solve_simplex(problem, tol: float, max_iters: int) -> LpSolution:
    res = simplex(
        problem.A, problem.senses, problem.rhs, problem.lb, problem.ub, problem.c, tol=tol, max_iters=max_iters
    )
    status = {
        "optimal": Status.OPTIMAL,
        "infeasible": Status.INFEASIBLE,
        "unbounded": Status.UNBOUNDED,
        "iteration_limit": Status.ITERATION_LIMIT,
    }[res.status]
    cert: dict = {}
    if status is Status.INFEASIBLE:
        cert = {"rows": res.infeasible_rows, "farkas": res.farkas}
    elif status is Status.UNBOUNDED:
        cert = {"ray": res.ray}
    x = res.x
    if status is Status.OPTIMAL:
        x = np.clip(x, problem.lb, problem.ub)
    act, pr, br = _residuals(problem, x)
    return LpSolution(
        status=status,
        objective=float(problem.c @ x) if status is Status.OPTIMAL else float("nan"),
        x=x,
        activities=act,
        duals=res.duals,
        iterations=res.iterations,
        solve_time=res.solve_time,
        method="simplex",
        primal_residual=pr,
        bound_residual=br,
        certificate=cert,
    )


def _solve_highs(problem, tol: float, max_iters: int) -> LpSolution:
    from scipy.optimize import linprog

    t0 = time.perf_counter()
    A = sp.csr_matrix(problem.A)
    senses = np.asarray(problem.senses)
    L, G, E = np.flatnonzero(senses == "L"), np.flatnonzero(senses == "G"), np.flatnonzero(senses == "E")
    ub_rows = np.concatenate([L, G])
    A_ub = sp.vstack([A[L], -A[G]], format="csr") if ub_rows.size else None
    b_ub = np.concatenate([problem.rhs[L], -problem.rhs[G]]) if ub_rows.size else None
    A_eq = A[E] if E.size else None
    b_eq = problem.rhs[E] if E.size else None
    lo = np.where(np.isfinite(problem.lb), problem.lb, -np.inf)
    hi = np.where(np.isfinite(problem.ub), problem.ub, np.inf)
    res = linprog(
        -np.asarray(problem.c),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lo, hi]),
        method="highs",
        options={
            "primal_feasibility_tolerance": min(tol * 10, 1e-7),
            "dual_feasibility_tolerance": min(tol * 10, 1e-7),
            "maxiter": max_iters,
            "presolve": True,
        },
    )
    status = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(
        res.status
    )
    if status is None:
        raise SolverError(f"HiGHS failed: {res.message}")
    n = A.shape[1]
    x = res.x if res.x is not None else np.full(n, np.nan)
    duals = np.full(A.shape[0], np.nan)
    if status is Status.OPTIMAL:
        x = np.clip(x, problem.lb, problem.ub)
        if L.size:
            duals[L] = -res.ineqlin.marginals[: L.size]
        if G.size:
            duals[G] = res.ineqlin.marginals[L.size :]
        if E.size:
            duals[E] = -res.eqlin.marginals
    act, pr, br = _residuals(problem, np.nan_to_num(x))
    cert = {}
    if status is Status.INFEASIBLE:
        cert = {"rows": [], "message": res.message}
    return LpSolution(
        status=status,
        objective=float(problem.c @ x) if status is Status.OPTIMAL else float("nan"),
        x=x,
        activities=act,
        duals=duals,
        iterations=int(getattr(res, "nit", 0) or 0),
        solve_time=time.perf_counter() - t0,
        method="highs",
        primal_residual=pr,
        bound_residual=br,
        certificate=cert,
    )


def _solve_compact(problem, tol: float, max_iters: int, inner: str) -> LpSolution:
    from .compact import CompactForm

    t0 = time.perf_counter()
    form = CompactForm(problem)
    if inner == "auto":
        inner = "simplex" if form.lp.A.shape[0] <= AUTO_SIMPLEX_MAX_ROWS else "highs"
    sub = _solve_simplex(form.lp, tol, max_iters) if inner == "simplex" else _solve_highs(form.lp, tol, max_iters)
    if sub.status is not Status.OPTIMAL:
        n = problem.A.shape[1]
        return LpSolution(
            sub.status, float("nan"), np.full(n, np.nan), np.full(problem.A.shape[0], np.nan),
            np.full(problem.A.shape[0], np.nan), sub.iterations, time.perf_counter() - t0,
            f"compact/{inner}", certificate=sub.certificate,
        )
    x = form.expand(sub.x)
    act, pr, br = _residuals(problem, x)
    return LpSolution(
        status=Status.OPTIMAL,
        objective=float(problem.c @ x),
        x=x,
        activities=act,
        duals=form.expand_duals(sub.duals, x),
        iterations=sub.iterations,
        solve_time=time.perf_counter() - t0,
        method=f"compact/{inner}",
        primal_residual=pr,
        bound_residual=br,
    )


def solve(problem, method: str = "auto", tol: float = 1e-9, max_iters: int = 200_000) -> LpSolution:
    """Solve a maximisation LP (a DefProblem or LinearProgram).

    Methods: ``simplex`` (in-repo), ``highs``, ``compact`` (scenario rows
    collapsed exactly, then ``auto`` on the smaller LP), ``auto``. ``auto``
    picks the simplex for small problems, ``compact`` for larger problems with
    a scenario block and ``highs`` otherwise.
    """
    from .compact import compact_applicable

    if problem.A.shape[1] == 0:
        raise SolverError("no variables")
    if method == "auto":
        if problem.A.shape[0] <= AUTO_SIMPLEX_MAX_ROWS:
            method = "simplex"
        elif compact_applicable(problem):
            method = "compact"
        else:
            method = "highs"
    if method == "simplex":
        return _solve_simplex(problem, tol, max_iters)
    if method == "highs":
        return _solve_highs(problem, tol, max_iters)
    if method.startswith("compact"):
        if not compact_applicable(problem):
            raise SolverError("compact form needs a problem with a free scenario slack block")
        inner = method.partition("/")[2] or "auto"
        return _solve_compact(problem, tol, max_iters, inner)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# external solutions


def write_solution(problem, solution: LpSolution, path: str | Path, names: str = "long") -> Path:
    """Two-column ``name value`` text file. ``names="mps"`` uses the MPS column codes."""
    from ..mps import column_code

    path = Path(path)
    lines = []
    for vid, val in enumerate(solution.x):
        name = problem.index.name(vid) if names == "long" else column_code(vid)
        lines.append(f"{name} {float(val)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def import_solution(problem, path: str | Path, tol: float = 1e-7) -> LpSolution:
    """Read ``name value`` pairs produced by an external solver.

    Names may be the long variable names or the MPS column codes. Variables not
    listed are taken as zero. Residuals are recomputed; a point violating rows or
    bounds by more than ``tol`` (relative) is returned as NOT_FEASIBLE.
    """
    from ..mps import parse_column_code

    x = np.zeros(problem.A.shape[1])
    unknown = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith(("#", "*")):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise SolverError(f"malformed solution line: {raw!r}")
        name, value = parts[0], parts[-1]
        vid = parse_column_code(name)
        if vid is None:
            try:
                vid = problem.index.lookup_name(name)
            except (KeyError, ValueError):
                vid = None
        if vid is None or not 0 <= vid < x.size:
            unknown.append(name)
            continue
        x[vid] = float(value)
    if unknown:
        raise SolverError(f"unknown variables in solution file: {', '.join(unknown)}")
    act, pr, br = _residuals(problem, x)
    status = Status.FEASIBLE if pr <= tol and br <= tol else Status.NOT_FEASIBLE
    return LpSolution(
        status=status,
        objective=float(problem.c @ x),
        x=x,
        activities=act,
        duals=np.full(problem.A.shape[0], np.nan),
        method="import",
        primal_residual=pr,
        bound_residual=br,
    )
