"""The adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE and its command line."""
import argparse
import csv
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .adaptivity import H_REFINE, P_REFINE, PATTERNS, apply_plan, build_plan
from .estimator import estimate
from .mesh import make_l_shape_mesh
from .problems import BENCHMARKS
from .space import distribute_dofs
from .stokes import SolverError, assemble, energy_error, solve
from .vtk import write_vtk

log = logging.getLogger(__name__)

MODES = {"h": (H_REFINE,), "p": (P_REFINE,), "hp": PATTERNS}
CSV_HEADER = ("cycle", "n_cells", "n_dofs", "error_u", "error_p", "error_total",
              "eta", "i_eff", "n_h", "n_p", "seconds")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Settings of one adaptive run; ``None`` picks the benchmark default."""

    example: str = "smooth-l"
    mode: str = "hp"
    theta: float = None
    alpha: float = 0.0
    initial_degree: int = None
    max_cycles: int = 8
    max_dofs: int = 30000
    out: str = None
    # False writes 0 in the seconds column so reruns give identical files
    record_time: bool = True

    def __post_init__(self):
        if self.example not in BENCHMARKS:
            raise ConfigError(f"unknown example {self.example!r}; choose from {sorted(BENCHMARKS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {sorted(MODES)}")
        bench = BENCHMARKS[self.example]()
        if self.theta is None:
            self.theta = bench.theta
        if self.initial_degree is None:
            self.initial_degree = bench.initial_degree
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.initial_degree < 2:
            raise ConfigError(f"initial degree must be >= 2, got {self.initial_degree}")
        if self.max_cycles < 0:
            raise ConfigError(f"max cycles must be >= 0, got {self.max_cycles}")
        if self.max_dofs < 1:
            raise ConfigError(f"max dofs must be positive, got {self.max_dofs}")


@dataclass
class CycleRecord:
    cycle: int
    n_cells: int
    n_dofs: int
    error_u: float
    error_p: float
    error_total: float
    eta: float
    i_eff: float
    n_h: int
    n_p: int
    seconds: float
    plan: object = field(default=None, repr=False, compare=False)
    report: object = field(default=None, repr=False, compare=False)

    def row(self):
        out = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            out.append(str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}")
        return out


def write_history(path, records):
    """CSV with one row per cycle, full double precision, LF line endings."""
    if not records:
        raise ValueError("no cycle records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


def read_history(path):
    """Parse a history file back into a list of dicts."""
    ints = {"cycle", "n_cells", "n_dofs", "n_h", "n_p"}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ints else float(v)) for k, v in row.items()} for row in rows]


def _cell_data(mesh, space, report, plan):
    n = space.n_cells
    labels = space.cx.labels
    data = {
        "degree": np.array(space.degrees, dtype=int),
        "level": np.array([mesh.level[c] for c in labels], dtype=int),
        "r1": report.r1,
        "r2": report.r2,
        "b": report.b,
        "osc": report.osc,
        "eta": report.eta_cells,
    }
    if plan is None:
        data.update(k_h=np.zeros(n), k_p=np.zeros(n), k_chosen=np.zeros(n),
                    pattern=np.zeros(n, dtype=int), marked=np.zeros(n, dtype=int))
    else:
        marked = np.zeros(n, dtype=int)
        marked[plan.marked] = 1
        data.update(k_h=np.nan_to_num(plan.k[:, 0]), k_p=np.nan_to_num(plan.k[:, 1]),
                    k_chosen=plan.k_chosen, pattern=plan.pattern.astype(int), marked=marked)
    return data


def _log_table(records):
    log.info("%6s %8s %8s %6s %6s", "level", "#cells", "#dofs", "#h", "#p")
    for r in records:
        log.info("%6d %8d %8d %6d %6d", r.cycle, r.n_cells, r.n_dofs, r.n_h, r.n_p)


def run(config):
    """Execute the adaptive loop and return the list of :class:`CycleRecord`.

    Cycles ``0..max_cycles`` are solved; refinement stops early once the next
    space would exceed ``max_dofs`` or no cell is marked.  With ``config.out`` set, ``history.csv``
    is rewritten after every cycle and ``cycle_<k>.vtk`` is written per cycle,
    so a solver failure leaves the partial history on disk.
    """
    problem = BENCHMARKS[config.example]()
    patterns = MODES[config.mode]
    if config.out:
        os.makedirs(config.out, exist_ok=True)
    mesh = make_l_shape_mesh(problem.n_initial)
    degrees = {c: config.initial_degree for c in mesh.active_cells()}
    records = []
    space = distribute_dofs(mesh, degrees)
    for cycle in range(config.max_cycles + 1):
        t0 = time.perf_counter()
        try:
            solution = solve(assemble(space, problem))
        except SolverError:
            if config.out and records:
                write_history(os.path.join(config.out, "history.csv"), records)
            raise
        err = energy_error(solution, problem)
        report = estimate(solution, problem, config.alpha)
        plan = None
        next_space = None
        if cycle < config.max_cycles:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                plan = build_plan(solution, problem, report, config.theta, patterns)
            for w in caught:
                log.warning("cycle %d: %s", cycle, w.message)
        if plan is not None and plan.marked:
            new_mesh, new_degrees = apply_plan(mesh.copy(), degrees, plan)
            candidate = distribute_dofs(new_mesh, new_degrees)
            if candidate.n_dofs <= config.max_dofs:
                mesh, degrees, next_space = new_mesh, new_degrees, candidate
        applied = next_space is not None
        total = err.total
        record = CycleRecord(
            cycle=cycle,
            n_cells=space.n_cells,
            n_dofs=space.n_dofs,
            error_u=err.velocity,
            error_p=err.pressure,
            error_total=total,
            eta=report.eta,
            i_eff=report.eta / total if total > 0 else math.inf,
            n_h=plan.n_h if applied else 0,
            n_p=plan.n_p if applied else 0,
            seconds=time.perf_counter() - t0 if config.record_time else 0.0,
            plan=plan,
            report=report,
        )
        records.append(record)
        log.debug("cycle %d: %d dofs, error %.3e, eta %.3e", cycle, space.n_dofs, total, report.eta)
        if config.out:
            write_vtk(os.path.join(config.out, f"cycle_{cycle}.vtk"), space.cx,
                      _cell_data(space.mesh, space, report, plan))
            write_history(os.path.join(config.out, "history.csv"), records)
        if not applied:
            break
        space = next_space
    _log_table(records)
    return records


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="hpstokes", description="hp-adaptive Taylor-Hood Stokes solver on the L-shape")
    p.add_argument("--example", choices=sorted(BENCHMARKS), default="smooth-l")
    p.add_argument("--mode", choices=sorted(MODES), default="hp")
    p.add_argument("--theta", type=float, default=None, help="marking fraction (benchmark default)")
    p.add_argument("--alpha", type=float, default=0.0, help="estimator weight exponent in [0, 1]")
    p.add_argument("--initial-degree", type=int, default=None)
    p.add_argument("--max-cycles", type=int, default=8)
    p.add_argument("--max-dofs", type=int, default=30000)
    p.add_argument("--out", default="out")
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 in the seconds column for reproducible files")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger("hpstokes").setLevel(logging.DEBUG)
        names = {f.name for f in fields(RunConfig)}
        opts = {k: v for k, v in vars(args).items() if k in names}
        config = RunConfig(**opts, record_time=not args.no_timing)
    except ConfigError as err:
        print(f"hpstokes: error: {err}", file=sys.stderr)
        return 1
    try:
        run(config)
    except SolverError as err:
        print(f"hpstokes: solver failure: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"hpstokes: cannot write output: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
