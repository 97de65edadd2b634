"""Fixed-format MPS writer and reader.

Names are 8-character codes (``C0000001`` for columns, ``R0000001`` for rows)
so every name fits its fixed field. Numbers are written with 12 significant
digits; the few that need more than 12 characters overflow their field, which
is why the reader splits on whitespace rather than on column positions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

OBJ_ROW = "OBJ"
_COL_RE = re.compile(r"^C(\d{7})$")


class MpsError(ValueError):
    pass


def column_code(vid: int) -> str:
    return f"C{vid:07d}"


def row_code(rid: int) -> str:
    return f"R{rid:07d}"


def parse_column_code(name: str) -> int | None:
    m = _COL_RE.match(name)
    return int(m.group(1)) if m else None


def fmt_number(v: float) -> str:
    s = f"{v:.12g}"
    if "e" in s:
        mant, exp = s.split("e")
        s = f"{mant}e{int(exp)}"
    return s


def _field_line(code: str, name1: str, name2: str, value: float) -> str:
    # columns: 2-3 code, 5-12 name, 15-22 name, 25-36 number
    return f" {code:<2} {name1:<8}  {name2:<8}  {fmt_number(value):<12}".rstrip()


def export_lp(problem, path: str | Path, name: str = "COLDCHN", objsense: bool = True) -> Path:
    """Write ``problem`` (maximisation) as fixed-format MPS.

    With ``objsense=False`` the OBJSENSE section is omitted and the objective is
    negated, so readers that only minimise get the equivalent problem.
    """
    A = sp.csc_matrix(problem.A)
    m, n = A.shape
    if n == 0:
        raise MpsError("no variables")
    c = np.asarray(problem.c, dtype=float)
    if not objsense:
        c = -c
    path = Path(path)
    out: list[str] = [f"NAME          {name}"]
    if objsense:
        out += ["OBJSENSE", "    MAX"]
    out.append("ROWS")
    out.append(f" N  {OBJ_ROW}")
    for r, s in enumerate(problem.senses):
        out.append(f" {s}  {row_code(r)}")
    out.append("COLUMNS")
    for j in range(n):
        col = column_code(j)
        if c[j] != 0:
            out.append(_field_line("", col, OBJ_ROW, c[j]))
        start, end = A.indptr[j], A.indptr[j + 1]
        for r, v in zip(A.indices[start:end], A.data[start:end]):
            if v != 0:
                out.append(_field_line("", col, row_code(int(r)), v))
        if c[j] == 0 and start == end:
            # keep empty columns visible to readers
            out.append(_field_line("", col, OBJ_ROW, 0.0))
    out.append("RHS")
    for r, v in enumerate(problem.rhs):
        if v != 0:
            out.append(_field_line("", "RHS", row_code(r), v))
    out.append("BOUNDS")
    for j in range(n):
        lo, hi = float(problem.lb[j]), float(problem.ub[j])
        col = column_code(j)
        if lo == hi:
            out.append(_field_line("FX", "BND", col, lo))
            continue
        if lo == -np.inf and hi == np.inf:
            out.append(f" FR BND       {col}")
            continue
        if lo == -np.inf:
            out.append(f" MI BND       {col}")
        elif lo != 0:
            out.append(_field_line("LO", "BND", col, lo))
        if hi != np.inf:
            out.append(_field_line("UP", "BND", col, hi))
    out.append("ENDATA")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="ascii")
    return path


@dataclass
class MpsModel:
    name: str
    maximize: bool
    row_names: list[str]
    senses: np.ndarray
    rhs: np.ndarray
    col_names: list[str]
    A: sp.csr_matrix
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def as_maximization(self) -> "MpsModel":
        if self.maximize:
            return self
        return MpsModel(
            self.name, True, self.row_names, self.senses, self.rhs, self.col_names, self.A, -self.c, self.lb, self.ub
        )


def read_mps(path: str | Path) -> MpsModel:
    name = ""
    maximize = False
    section = None
    obj_row = None
    row_names: list[str] = []
    row_pos: dict[str, int] = {}
    senses: list[str] = []
    col_names: list[str] = []
    col_pos: dict[str, int] = {}
    entries: list[tuple[int, int, float]] = []
    cost: dict[int, float] = {}
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, int, float | None]] = []

    def col_id(cname: str) -> int:
        if cname not in col_pos:
            col_pos[cname] = len(col_names)
            col_names.append(cname)
        return col_pos[cname]

    for lineno, raw in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME":
                name = head[1] if len(head) > 1 else ""
            elif section == "OBJSENSE" and len(head) > 1:
                maximize = head[1].upper() in ("MAX", "MAXIMIZE")
            elif section == "ENDATA":
                break
            elif section not in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "OBJSENSE", "RANGES"):
                raise MpsError(f"line {lineno}: unknown section {section}")
            continue
        tok = raw.split()
        if section == "OBJSENSE":
            maximize = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            kind, rname = tok[0].upper(), tok[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            if kind not in ("L", "E", "G"):
                raise MpsError(f"line {lineno}: bad row type {kind}")
            row_pos[rname] = len(row_names)
            row_names.append(rname)
            senses.append(kind)
        elif section == "COLUMNS":
            if "'MARKER'" in tok:
                raise MpsError("integer markers are not supported")
            j = col_id(tok[0])
            for rname, val in zip(tok[1::2], tok[2::2]):
                v = float(val)
                if rname == obj_row:
                    cost[j] = cost.get(j, 0.0) + v
                elif rname in row_pos:
                    entries.append((row_pos[rname], j, v))
                else:
                    raise MpsError(f"line {lineno}: unknown row {rname}")
        elif section == "RHS":
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for rname, val in zip(pairs[0::2], pairs[1::2]):
                if rname == obj_row:
                    continue
                rhs[row_pos[rname]] = float(val)
        elif section == "BOUNDS":
            kind = tok[0].upper()
            if kind in ("FR", "MI", "PL", "BV"):
                bounds.append((kind, col_id(tok[2] if len(tok) > 2 else tok[1]), None))
            else:
                bounds.append((kind, col_id(tok[-2]), float(tok[-1])))
        elif section == "RANGES":
            raise MpsError("RANGES are not supported")

    n, m = len(col_names), len(row_names)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for kind, j, val in bounds:
        if kind == "UP":
            ub[j] = val
            if val < 0 and lb[j] == 0:
                lb[j] = -np.inf
        elif kind == "LO":
            lb[j] = val
        elif kind == "FX":
            lb[j] = ub[j] = val
        elif kind == "FR":
            lb[j], ub[j] = -np.inf, np.inf
        elif kind == "MI":
            lb[j] = -np.inf
        elif kind == "PL":
            ub[j] = np.inf
        else:
            raise MpsError(f"unsupported bound type {kind}")
    if entries:
        r, cidx, v = zip(*entries)
    else:
        r, cidx, v = (), (), ()
    A = sp.csr_matrix((np.asarray(v, float), (np.asarray(r, int), np.asarray(cidx, int))), shape=(m, n))
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    return MpsModel(name, maximize, row_names, np.asarray(senses, dtype="<U1"), b, col_names, A, c, lb, ub)


def same_problem(problem, model: MpsModel, digits: int = 12) -> bool:
    """True when ``model`` encodes ``problem`` to ``digits`` significant digits."""
    model = model.as_maximization()
    m, n = problem.A.shape
    if model.A.shape != (m, n):
        return False
    if model.col_names != [column_code(j) for j in range(n)]:
        return False
    if list(model.senses) != list(problem.senses):
        return False
    rtol = 10.0 ** (1 - digits)

    def close(a, b) -> bool:
        a, b = np.asarray(a, float), np.asarray(b, float)
        inf_ok = np.array_equal(np.isinf(a), np.isinf(b)) and np.array_equal(a[np.isinf(a)], b[np.isinf(b)])
        fin = np.isfinite(a)
        return inf_ok and np.allclose(a[fin], b[fin], rtol=rtol, atol=0)

    diff = sp.csr_matrix(problem.A) - model.A
    scale = np.abs(sp.csr_matrix(problem.A)).max() if problem.A.nnz else 1.0
    if diff.nnz and np.abs(diff.data).max() > rtol * max(scale, 1.0):
        return False
    return close(problem.c, model.c) and close(problem.rhs, model.rhs) and close(problem.lb, model.lb) and close(
        problem.ub, model.ub
    )
