"""
Timing and verification harness for the H_p1 operator.

Every (strategy, worker count, repeat) combination starts from a fresh,
seeded initial state and runs ``iterations`` consecutive steps. Only the
particle loop and the reduction are timed.
"""
import csv
import hashlib
import io
import os
import statistics
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .execution import ExecConfig
from .hp1 import Hp1Operator
from .init_state import DEFAULT_V_SCALE, InitSpec, init

SERIAL = "serial"
ALL_STRATEGIES = (SERIAL, "replicated", "padded", "pooled", "atomic")

# relative L2 tolerance on j per strategy when run on more than one worker
TOLERANCES = {"replicated": 1e-10, "padded": 1e-10, "pooled": 1e-10, "atomic": 1e-9}


@dataclass
class BenchConfig:
    particles: int = 10**6
    grid: tuple = (16, 8, 8)
    degree: int = 3
    dt: float = 0.05
    iterations: int = 3
    repeats: int = 1
    worker_list: tuple = (1,)
    strategies: tuple = ("pooled",)
    seed: int = 1
    csv_path: str = None
    mode: str = "bench"
    deterministic: bool = False
    v_scale: float = DEFAULT_V_SCALE
    lengths: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.iterations < 1 or self.repeats < 1:
            raise ValueError("iterations and repeats must be >= 1")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")
        if not self.worker_list or min(self.worker_list) < 1:
            raise ValueError("every worker count must be >= 1")
        bad = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if bad or not self.strategies:
            raise ValueError(f"unknown strategies {bad}; choose from {ALL_STRATEGIES}")
        if self.mode not in ("bench", "verify", "sweep"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def paper(cls, **overrides):
        """10 million particles on a 16x8x8 mesh, cubic splines, 3 iterations."""
        return replace(cls(particles=10**7, grid=(16, 8, 8), degree=3, iterations=3,
                           dt=0.05), **overrides)

    def init_spec(self):
        return InitSpec(seed=self.seed, n_particles=self.particles, n_grid=tuple(self.grid),
                        lengths=tuple(self.lengths), degree=self.degree, v_scale=self.v_scale)


@dataclass
class BenchRecord:
    strategy: str
    workers: int
    particles: int
    grid: str
    degree: int
    iteration: int
    repeat: int
    compute_seconds: float
    contribute_seconds: float
    j_checksum: str
    particle_checksum: str


CSV_COLUMNS = [f.name for f in fields(BenchRecord)]


def checksum(array):
    """64-bit BLAKE2b digest of the array bytes in C order, as 16 hex digits."""
    data = np.ascontiguousarray(array, dtype=np.float64)
    return hashlib.blake2b(data.tobytes(), digest_size=8).hexdigest()


def exec_for(strategy, workers, deterministic):
    if strategy == SERIAL:
        return ExecConfig(1, strategy=None, deterministic=deterministic)
    return ExecConfig(workers, strategy=strategy, deterministic=deterministic)


def _combinations(config):
    for strategy in config.strategies:
        # the serial loop has no worker count
        workers = (1,) if strategy == SERIAL else config.worker_list
        for w in workers:
            yield strategy, w


def run_bench(config, log=print):
    """Time every configuration; write CSV if ``config.csv_path`` is set."""
    spec = config.init_spec()
    op = Hp1Operator(spec.grid, config.degree)
    grid_str = "x".join(str(n) for n in config.grid)
    records = []
    warm_group, warm_fields = init(replace(spec, n_particles=min(spec.n_particles, 256)))
    for strategy, workers in _combinations(config):
        exec_config = exec_for(strategy, workers, config.deterministic)
        # JIT compilation for this argument layout happens outside the timed region
        op.step(warm_group.copy(), warm_fields, config.dt, exec_config)
        for rep in range(config.repeats):
            group, fields_ = init(spec)
            for it in range(config.iterations):
                op.step(group, fields_, config.dt, exec_config)
                compute, contribute = op.last_timing
                records.append(BenchRecord(
                    strategy, workers, config.particles, grid_str, config.degree, it, rep,
                    compute, contribute, checksum(fields_.j_dofs_local),
                    checksum(group.particle_array)))
            del group, fields_
    if config.csv_path:
        write_csv(records, config.csv_path)
    if log is not None:
        log(format_summary(summarize(records)))
    return records


def summarize(records):
    """Per (strategy, workers): mean/median compute time and speedup."""
    groups = {}
    for r in records:
        groups.setdefault((r.strategy, r.workers), []).append(r.compute_seconds + r.contribute_seconds)
    rows = []
    baseline = groups.get((SERIAL, 1))
    base_mean = statistics.fmean(baseline) if baseline else None
    for (strategy, workers), times in groups.items():
        mean = statistics.fmean(times)
        ref = base_mean
        if ref is None and (strategy, 1) in groups:
            ref = statistics.fmean(groups[(strategy, 1)])
        rows.append({
            "strategy": strategy, "workers": workers, "samples": len(times),
            "mean_seconds": mean, "median_seconds": statistics.median(times),
            "speedup": (ref / mean) if ref else None,
        })
    return rows


def format_summary(rows):
    out = io.StringIO()
    out.write(f"{'strategy':<11} {'workers':>7} {'n':>4} {'mean[s]':>10} {'median[s]':>10} {'speedup':>8}\n")
    for r in rows:
        sp = f"{r['speedup']:.2f}" if r["speedup"] else "n/a"
        out.write(f"{r['strategy']:<11} {r['workers']:>7} {r['samples']:>4} "
                  f"{r['mean_seconds']:>10.4f} {r['median_seconds']:>10.4f} {sp:>8}\n")
    return out.getvalue().rstrip("\n")


def write_csv(records, path):
    """Write ``records`` to ``path`` atomically (temp file in the same directory + rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".bench-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in records:
                row = asdict(r)
                row["compute_seconds"] = repr(float(row["compute_seconds"]))
                row["contribute_seconds"] = repr(float(row["contribute_seconds"]))
                writer.writerow([row[c] for c in CSV_COLUMNS])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class VerifyResult:
    strategy: str
    workers: int
    j_rel_l2: float
    particle_max_abs: float
    bitwise: bool
    tolerance: float
    passed: bool


@dataclass
class VerifyReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]

    @property
    def max_j_rel_l2(self):
        return max((r.j_rel_l2 for r in self.results), default=0.0)

    @property
    def max_particle_abs(self):
        return max((r.particle_max_abs for r in self.results), default=0.0)

    def format(self):
        lines = [f"{'strategy':<11} {'workers':>7} {'j rel L2':>11} {'part abs':>11} {'tol':>8}  result"]
        for r in self.results:
            tol = "bitwise" if r.tolerance == 0.0 else f"{r.tolerance:.0e}"
            lines.append(f"{r.strategy:<11} {r.workers:>7} {r.j_rel_l2:>11.3e} "
                         f"{r.particle_max_abs:>11.3e} {tol:>8}  {'PASS' if r.passed else 'FAIL'}")
        lines.append("verification " + ("passed" if self.passed else "FAILED"))
        return "\n".join(lines)


def tolerance_for(strategy, workers):
    if strategy == SERIAL or (strategy == "replicated" and workers == 1):
        return 0.0
    return TOLERANCES[strategy]


def _trajectory(op, spec, config, exec_config):
    group, fields_ = init(spec)
    js = []
    for _ in range(config.iterations):
        op.step(group, fields_, config.dt, exec_config)
        js.append(fields_.j_dofs_local.copy())
    return js, group.particle_array


def run_verify(config, log=print):
    """Compare every requested (strategy, workers) run against the serial loop."""
    spec = config.init_spec()
    op = Hp1Operator(spec.grid, config.degree)
    ref_js, ref_parts = _trajectory(op, spec, config, exec_for(SERIAL, 1, True))
    report = VerifyReport()
    for strategy, workers in _combinations(config):
        js, parts = _trajectory(op, spec, config,
                                exec_for(strategy, workers, config.deterministic))
        rel = 0.0
        bitwise = np.array_equal(parts, ref_parts)
        for j, jr in zip(js, ref_js):
            norm = np.linalg.norm(jr)
            diff = np.linalg.norm(j - jr)
            rel = max(rel, diff / norm if norm > 0 else diff)
            bitwise = bitwise and np.array_equal(j, jr)
        pdev = float(np.max(np.abs(parts - ref_parts))) if parts.size else 0.0
        tol = tolerance_for(strategy, workers)
        ok = bitwise if tol == 0.0 else (rel <= tol and pdev <= tol)
        report.results.append(VerifyResult(strategy, workers, float(rel), pdev, bitwise, tol, ok))
    if log is not None:
        log(report.format())
    return report
