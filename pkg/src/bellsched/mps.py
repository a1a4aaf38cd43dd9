"""MPS serialization of :class:`~bellsched.lp.LpModel` and the external-solver bridge files."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from .lp import LpModel

OBJ_ROW = "COST"


class MpsFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _fixed_line(code: str, name1: str = "", name2: str = "", num1: str = "", name3: str = "", num2: str = "") -> str:
    # field columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    line = f" {code:<2} {name1:<8}  {name2:<8}  {num1:>12}"
    if name3:
        line += f"   {name3:<8}  {num2:>12}"
    return line.rstrip()


def export_mps(model: LpModel, name: str = "BELLSCHED") -> bytes:
    """Write ``model`` as MPS (minimization).

    Fixed format is used when every name fits in 8 characters and every
    number in 12; otherwise the file is free-format and starts with a
    ``* WARNING`` comment record.
    """
    A = model.A.tocsc()
    names = [OBJ_ROW, *model.row_names, *model.col_names]
    numbers = [_num(v) for v in np.concatenate([A.data, model.objective, model.rhs, model.lo[np.isfinite(model.lo)], model.hi[np.isfinite(model.hi)]])]
    fixed = all(len(s) <= 8 and " " not in s for s in names) and all(len(s) <= 12 for s in numbers)

    out: list[str] = []
    if not fixed:
        msg = "names or numbers exceed fixed-MPS field widths; writing free-format MPS"
        warnings.warn(msg, UserWarning, stacklevel=2)
        out.append(f"* WARNING: {msg}")

    def entry(code, a="", b="", x="", c="", y=""):
        if fixed:
            out.append(_fixed_line(code, a, b, x, c, y))
        else:
            out.append(" " + " ".join(t for t in (code, a, b, x, c, y) if t != ""))

    out.append(f"NAME          {name}" if fixed else f"NAME {name}")
    out.append("OBJSENSE")
    out.append("    MIN")
    out.append("ROWS")
    entry("N", OBJ_ROW)
    for rn, s in zip(model.row_names, model.senses):
        entry(str(s), rn)
    out.append("COLUMNS")
    for j, cn in enumerate(model.col_names):
        pairs = []
        if model.objective[j] != 0:
            pairs.append((OBJ_ROW, _num(model.objective[j])))
        for k in range(A.indptr[j], A.indptr[j + 1]):
            pairs.append((model.row_names[A.indices[k]], _num(A.data[k])))
        if not pairs:
            pairs.append((OBJ_ROW, "0"))
        for p in range(0, len(pairs), 2):
            if p + 1 < len(pairs):
                entry("", cn, pairs[p][0], pairs[p][1], pairs[p + 1][0], pairs[p + 1][1])
            else:
                entry("", cn, pairs[p][0], pairs[p][1])
    out.append("RHS")
    for rn, v in zip(model.row_names, model.rhs):
        if v != 0:
            entry("", "RHS", rn, _num(v))
    bounds = []
    for cn, lo, hi in zip(model.col_names, model.lo, model.hi):
        if lo == hi:
            bounds.append(("FX", cn, _num(lo)))
            continue
        if np.isneginf(lo) and np.isposinf(hi):
            bounds.append(("FR", cn, ""))
            continue
        if np.isneginf(lo):
            bounds.append(("MI", cn, ""))
        elif lo != 0:
            bounds.append(("LO", cn, _num(lo)))
        if np.isfinite(hi):
            bounds.append(("UP", cn, _num(hi)))
    if bounds:
        out.append("BOUNDS")
        for code, cn, v in bounds:
            entry(code, "BND", cn, v)
    out.append("ENDATA")
    return ("\n".join(out) + "\n").encode("ascii")


def import_mps(data: bytes | str) -> LpModel:
    """Parse fixed or free MPS (names without spaces) into a generic model."""
    text = data.decode("ascii") if isinstance(data, bytes) else data
    section = None
    obj_row = None
    sense_max = False
    row_index: dict[str, int] = {}
    row_names: list[str] = []
    senses: list[str] = []
    col_index: dict[str, int] = {}
    col_names: list[str] = []
    entries: list[tuple[int, int, float]] = []
    obj: dict[int, float] = {}
    rhs: dict[int, float] = {}
    ranges: dict[int, float] = {}
    bounds: list[tuple[str, str, float | None]] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0].upper()
            if section == "OBJSENSE" and len(tok) > 1:
                sense_max = tok[1].upper() in ("MAX", "MAXIMIZE")
            if section == "ENDATA":
                break
            continue
        if section == "OBJSENSE":
            sense_max = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            code, rn = tok[0].upper(), tok[1]
            if code == "N":
                if obj_row is None:
                    obj_row = rn
                continue
            if code not in ("L", "G", "E"):
                raise MpsFormatError(f"line {lineno}: unknown row type {code}")
            row_index[rn] = len(row_names)
            row_names.append(rn)
            senses.append(code)
        elif section == "COLUMNS":
            if "'MARKER'" in tok:
                continue
            cn = tok[0]
            if cn not in col_index:
                col_index[cn] = len(col_names)
                col_names.append(cn)
            j = col_index[cn]
            for rn, val in zip(tok[1::2], tok[2::2]):
                v = float(val)
                if rn == obj_row:
                    obj[j] = obj.get(j, 0.0) + v
                elif rn in row_index:
                    entries.append((row_index[rn], j, v))
                else:
                    raise MpsFormatError(f"line {lineno}: unknown row {rn}")
        elif section in ("RHS", "RANGES"):
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            target = rhs if section == "RHS" else ranges
            for rn, val in zip(pairs[0::2], pairs[1::2]):
                if rn == obj_row:
                    continue
                if rn not in row_index:
                    raise MpsFormatError(f"line {lineno}: unknown row {rn}")
                target[row_index[rn]] = float(val)
        elif section == "BOUNDS":
            code = tok[0].upper()
            if code in ("FR", "MI", "PL", "BV"):
                cn = tok[2] if len(tok) >= 3 else tok[1]
                bounds.append((code, cn, None))
            else:
                cn, val = (tok[2], tok[3]) if len(tok) >= 4 else (tok[1], tok[2])
                bounds.append((code, cn, float(val)))
        else:
            raise MpsFormatError(f"line {lineno}: data outside a known section")

    m, n = len(row_names), len(col_names)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    for code, cn, v in bounds:
        if cn not in col_index:
            raise MpsFormatError(f"bound for unknown column {cn}")
        j = col_index[cn]
        if code == "UP":
            hi[j] = v
            if v < 0 and lo[j] == 0:
                lo[j] = -np.inf
        elif code == "LO":
            lo[j] = v
        elif code == "FX":
            lo[j] = hi[j] = v
        elif code == "FR":
            lo[j], hi[j] = -np.inf, np.inf
        elif code == "MI":
            lo[j] = -np.inf
        elif code == "PL":
            hi[j] = np.inf
        elif code == "BV":
            lo[j], hi[j] = 0.0, 1.0
        else:
            raise MpsFormatError(f"unsupported bound type {code}")

    rows = [e[0] for e in entries]
    cols = [e[1] for e in entries]
    vals = [e[2] for e in entries]
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
    A.sum_duplicates()
    b = np.array([rhs.get(k, 0.0) for k in range(m)])
    sense_arr = np.array(senses, dtype="<U1")
    if ranges:
        # each ranged row becomes a pair of one-sided rows
        extra_rows, extra_b, extra_s, extra_names = [], [], [], []
        for k, R in sorted(ranges.items()):
            s = sense_arr[k]
            if s == "E":
                lo_r, hi_r = (b[k], b[k] + R) if R >= 0 else (b[k] + R, b[k])
            elif s == "L":
                lo_r, hi_r = b[k] - abs(R), b[k]
            else:
                lo_r, hi_r = b[k], b[k] + abs(R)
            sense_arr[k], b[k] = "G", lo_r
            extra_rows.append(A[k])
            extra_b.append(hi_r)
            extra_s.append("L")
            extra_names.append(row_names[k] + "_rng")
        A = sp.vstack([A, *extra_rows], format="csr")
        b = np.concatenate([b, extra_b])
        sense_arr = np.concatenate([sense_arr, np.array(extra_s, dtype="<U1")])
        row_names = row_names + extra_names
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v
    if sense_max:
        c = -c
    fams = np.array(["mps"] * len(row_names), dtype="<U4")
    return LpModel(c, A, sense_arr, b, lo, hi, col_names, row_names, fams, {}, "generic")


def read_solution(text: str, model: LpModel) -> np.ndarray:
    """Values from ``<column name> <value>`` lines; unlisted columns are zero."""
    index = {name: j for j, name in enumerate(model.col_names)}
    values = np.zeros(model.num_vars)
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        if len(tok) != 2:
            raise MpsFormatError(f"solution line {lineno}: expected '<column> <value>'")
        if tok[0] not in index:
            raise MpsFormatError(f"solution line {lineno}: unknown column {tok[0]}")
        values[index[tok[0]]] = float(tok[1])
    return values


def write_solution(model: LpModel, values) -> str:
    return "".join(f"{name} {float(v)!r}\n" for name, v in zip(model.col_names, values))
