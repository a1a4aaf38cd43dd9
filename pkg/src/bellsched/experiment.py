"""Gap experiments: generate instances, solve the LP, round, compare with greedy and the oracle."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .exact import MAX_ROUTES, MAX_SLOTS, exact_opt
from .greedy import greedy_search
from .instance import SIZE_CLASSES, Family, GeneratorSpec, Instance, derived_stats, generate_instance
from .lp import ExtractionError, LpModel, Z_KEY, build_lp3s, extract_fractional
from .mps import export_mps, read_solution
from .rounding import best_of_k
from .schedule import HorizonMode
from .simplex import solve

log = logging.getLogger(__name__)

#: Desk-scale stand-ins for the standard sizes: same M and N, smaller gamma_max.
DESK_SIZES: dict[str, tuple[int, int, int]] = {
    "1p": (10, 5, 15),
    "2p": (30, 50, 15),
    "3p": (50, 50, 30),
    "4p": (50, 100, 30),
}

CSV_COLUMNS = ["size", "instance", "lp_opt", "rounding", "ip_opt", "lp_gap", "rounding_gap", "total_gap"]
SUMMARY_COLUMNS = ["family", "size", "avg_lp_gap", "avg_rounding_gap", "avg_total_gap", "max_total_gap"]
MISSING = "---"


class ConfigError(ValueError):
    pass


def size_dims(label: str) -> tuple[int, int, int]:
    """``"1".."4"`` (standard), ``"1p".."4p"`` (desk scale, ``2'`` also accepted), ``"MxNxG"`` or ``"M,N,G"``."""
    label = str(label).strip()
    if label.endswith("'"):
        label = label[:-1] + "p"
    if label.isdigit() and int(label) in SIZE_CLASSES:
        return SIZE_CLASSES[int(label)]
    if label in DESK_SIZES:
        return DESK_SIZES[label]
    parts = label.replace("x", ",").split(",")
    if len(parts) == 3 and all(p.strip().isdigit() and int(p) > 0 for p in parts):
        return tuple(int(p) for p in parts)
    raise ConfigError(f"unknown size {label!r}")


@dataclass
class ExperimentConfig:
    families: list[Family] = field(default_factory=lambda: list(Family))
    sizes: list[str] = field(default_factory=lambda: ["2p"])
    instances: int = 5
    seed: int = 0
    trials: int = 1000
    mode: HorizonMode = HorizonMode.PAPER
    solver: str = "bundled"
    lp_method: str = "auto"
    oracle: str = "auto"  # auto | on | off
    node_budget: int = 2_000_000
    jobs: int = 1

    def __post_init__(self):
        self.families = [Family(f) for f in self.families]
        self.mode = HorizonMode(self.mode)
        self.sizes = [str(s) for s in self.sizes]
        if self.instances < 1:
            raise ConfigError("instances per cell must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.oracle not in ("auto", "on", "off"):
            raise ConfigError(f"oracle must be auto, on or off, got {self.oracle!r}")
        if not (self.solver == "bundled" or self.solver.startswith("cmd:")):
            raise ConfigError(f"solver must be 'bundled' or 'cmd:<template>', got {self.solver!r}")
        for s in self.sizes:
            size_dims(s)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = [f.value for f in self.families]
        d["mode"] = self.mode.value
        return d


@dataclass
class InstanceRow:
    family: str
    size: str
    instance: int
    seed: int
    M: int = 0
    N: int = 0
    total_routes: int = 0
    gamma_max: int = 0
    lp_opt: float | None = None
    rounding: int | None = None
    rounding_extended: int | None = None
    ip_opt: int | None = None
    greedy_U: int | None = None
    greedy_buses: int | None = None
    z_rand: float | None = None
    within_z_rand: float | None = None
    lp_method: str = ""
    lp_iterations: int = 0
    lp_seconds: float = 0.0
    status: str = "ok"
    error: str = ""

    @property
    def lp_gap(self) -> float | None:
        if self.ip_opt is None or not self.lp_opt:
            return None
        return (self.ip_opt - self.lp_opt) / self.lp_opt

    @property
    def rounding_gap(self) -> float | None:
        if self.ip_opt is None or self.rounding is None:
            return None
        return (self.rounding - self.ip_opt) / self.ip_opt

    @property
    def total_gap(self) -> float | None:
        if self.rounding is None or not self.lp_opt:
            return None
        return (self.rounding - self.lp_opt) / self.lp_opt

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(lp_gap=self.lp_gap, rounding_gap=self.rounding_gap, total_gap=self.total_gap)
        return d


@dataclass
class ExperimentReport:
    rows: list[InstanceRow]
    config: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[InstanceRow]:
        return [r for r in self.rows if r.status != "ok"]

    def families(self) -> list[str]:
        return list(dict.fromkeys(r.family for r in self.rows))

    def cells(self) -> list[tuple[str, str, list[InstanceRow]]]:
        out: dict[tuple[str, str], list[InstanceRow]] = {}
        for r in self.rows:
            out.setdefault((r.family, r.size), []).append(r)
        return [(f, s, rows) for (f, s), rows in out.items()]

    def summary(self) -> list[dict]:
        result = []
        for fam, size, rows in self.cells():
            ok = [r for r in rows if r.status == "ok"]

            def avg(name):
                vals = [getattr(r, name) for r in ok]
                if not vals or any(v is None for v in vals):
                    return None
                return float(np.mean(vals))

            totals = [r.total_gap for r in ok if r.total_gap is not None]
            result.append({
                "family": fam, "size": size,
                "avg_lp_gap": avg("lp_gap"), "avg_rounding_gap": avg("rounding_gap"),
                "avg_total_gap": avg("total_gap"), "max_total_gap": max(totals) if totals else None,
                "instances": len(rows), "failures": len(rows) - len(ok),
            })
        return result

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": [r.to_dict() for r in self.rows], "summary": self.summary()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        props = {"lp_gap", "rounding_gap", "total_gap"}
        rows = [InstanceRow(**{k: v for k, v in r.items() if k not in props}) for r in doc["rows"]]
        return cls(rows, doc.get("config", {}))


# ---------------------------------------------------------------------------
# per-instance pipeline

def instance_seed(base_seed: int, family: Family, size: str, index: int) -> int:
    fam_idx = list(Family).index(Family(family))
    ss = np.random.SeedSequence([int(base_seed), fam_idx, zlib.crc32(size.encode()), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def solve_external(model: LpModel, template: str) -> np.ndarray:
    """Shell out to ``template`` with ``{mps}`` and ``{sol}`` replaced by file paths."""
    with tempfile.TemporaryDirectory(prefix="bellsched-") as tmp:
        mps_path = os.path.join(tmp, "model.mps")
        sol_path = os.path.join(tmp, "model.sol")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = export_mps(model)
        with open(mps_path, "wb") as fh:
            fh.write(data)
        cmd = template.format(mps=shlex.quote(mps_path), sol=shlex.quote(sol_path))
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"external solver exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        with open(sol_path) as fh:
            return read_solution(fh.read(), model)


def oracle_fits(inst: Instance) -> bool:
    return inst.total_routes <= MAX_ROUTES and inst.M <= MAX_SLOTS


def run_instance(config: ExperimentConfig, family: Family, size: str, index: int) -> InstanceRow:
    seed = instance_seed(config.seed, family, size, index)
    row = InstanceRow(family=Family(family).value, size=size, instance=index + 1, seed=seed)
    try:
        M, N, G = size_dims(size)
        inst = generate_instance(GeneratorSpec(Family(family), M=M, N=N, gamma_max=G, seed=seed))
        stats = derived_stats(inst)
        row.M, row.N, row.total_routes, row.gamma_max = inst.M, inst.N, inst.total_routes, stats.gamma_max

        model = build_lp3s(inst, config.mode)
        t0 = time.perf_counter()
        if config.solver == "bundled":
            sol = solve(model, method=config.lp_method)
            row.lp_method, row.lp_iterations = sol.method, sol.iterations
            if not sol.optimal:
                raise RuntimeError(f"LP solve ended with status {sol.status.value}")
            values = sol.values
        else:
            values = solve_external(model, config.solver[len("cmd:"):])
            row.lp_method = "external"
        row.lp_seconds = time.perf_counter() - t0
        frac = extract_fractional(model, values)
        row.lp_opt = float(values[model.var_keys[Z_KEY]])

        bk = best_of_k(inst, frac, config.trials, seed)
        row.rounding = bk.best.z_paper
        row.rounding_extended = bk.best.z_extended
        row.z_rand = bk.trials.z_rand
        row.within_z_rand = bk.trials.within_z_rand

        greedy = greedy_search(inst.as_ssp())
        row.greedy_U, row.greedy_buses = greedy.U, greedy.bus_usage

        run_oracle = config.oracle == "on" or (config.oracle == "auto" and oracle_fits(inst))
        if run_oracle:
            ex = exact_opt(inst, config.mode, config.node_budget, incumbent=bk.best.schedule,
                           max_routes=max(MAX_ROUTES, inst.total_routes) if config.oracle == "on" else MAX_ROUTES,
                           max_slots=max(MAX_SLOTS, inst.M) if config.oracle == "on" else MAX_SLOTS)
            if ex.optimal:
                row.ip_opt = ex.opt
    except (ExtractionError, RuntimeError, ValueError) as exc:
        row.status, row.error = "failed", f"{type(exc).__name__}: {exc}"
        log.warning("instance %s/%s/%d failed: %s", row.family, size, index + 1, exc)
    return row


def _run_task(args):
    return run_instance(*args)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    tasks = [(config, fam, size, k) for fam in config.families for size in config.sizes for k in range(config.instances)]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    fam_order = {f.value: i for i, f in enumerate(config.families)}
    size_order = {s: i for i, s in enumerate(config.sizes)}
    rows.sort(key=lambda r: (fam_order[r.family], size_order[r.size], r.instance))
    return ExperimentReport(rows, config.to_dict())


# ---------------------------------------------------------------------------
# report formatting

def fmt_pct(v: float | None) -> str:
    return MISSING if v is None else f"{100 * v:.2f}%"


def _csv_row(r: InstanceRow) -> list[str]:
    return [
        r.size,
        str(r.instance),
        MISSING if r.lp_opt is None else f"{r.lp_opt:.1f}",
        MISSING if r.rounding is None else str(r.rounding),
        MISSING if r.ip_opt is None else str(r.ip_opt),
        fmt_pct(r.lp_gap),
        fmt_pct(r.rounding_gap),
        fmt_pct(r.total_gap),
    ]


def emit_report(report: ExperimentReport, fmt: str = "csv", family: str | None = None) -> bytes:
    """CSV mirroring the per-type result tables, or lossless JSON.

    CSV rows of a report spanning several families get a leading ``family``
    column unless ``family`` selects one of them.
    """
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True).encode("utf-8")
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    rows = report.rows if family is None else [r for r in report.rows if r.family == family]
    with_family = family is None and len(report.families()) > 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((["family"] if with_family else []) + CSV_COLUMNS)
    for r in rows:
        w.writerow(([r.family] if with_family else []) + _csv_row(r))
    return buf.getvalue().encode("utf-8")


def emit_summary(report: ExperimentReport) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for cell in report.summary():
        w.writerow([cell["family"], cell["size"]] + [fmt_pct(cell[k]) for k in SUMMARY_COLUMNS[2:]])
    return buf.getvalue().encode("utf-8")


def parse_pct(text: str) -> float | None:
    return None if text == MISSING else float(text.rstrip("%")) / 100


def gap_identity_holds(row: InstanceRow, places: int = 4) -> bool:
    """``1 + total = (1 + lp)(1 + rounding)`` whenever the integer optimum is known."""
    if row.ip_opt is None or row.total_gap is None:
        return True
    return math.isclose(1 + row.total_gap, (1 + row.lp_gap) * (1 + row.rounding_gap), abs_tol=10 ** -places)
