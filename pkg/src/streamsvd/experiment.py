"""Experiment protocol: drive every algorithm over the same stream and record
error, runtime and memory on a common time grid.

Errors are ``||Y_t - Y_hat_t||_F^2 / t`` for the algorithms that estimate the
data itself (``moses``, ``naive``, ``offline``) and ``||Y_t - P Y_t||_F^2 / t``
for the subspace-only baselines.  Between their own update points all
algorithms are step-held: the last completed estimate is used, and columns
not yet folded in are represented by their projection onto the current
subspace estimate.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, baselines, ingest, metrics, moses, reference, synth
from .linalg import InvalidArgumentError

log = logging.getLogger(__name__)

ALGORITHMS = ("moses", "naive", "offline", "fd", "pm", "grouse")
TRACE_HEADER = "t,error,runtime_s,memory_bytes"
BOUND_HEADER = "k,theta,innovation_sq,partial_bound"
MAX_ENTRIES = 10_000_000
WARMUP_UPDATES = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Defaults follow the synthetic comparison: n=200, r=10, b=2r, alpha=1."""

    source: str = "synthetic"
    spectrum: str = "power_law:1.0"
    T: int = 2000
    csv_path: str | None = None
    delimiter: str = ","
    has_header: bool = False
    orientation: str = ingest.ROWS_ARE_SENSORS
    algorithms: tuple = ("moses", "offline", "fd", "pm", "grouse")
    n: int = 200
    r: int = 10
    b: int | None = None
    pm_block: int | None = None
    fd_buffer: int | None = None
    grouse_step: float = baselines.GROUSE_STEP
    seeds: tuple = tuple(range(10))
    p: float = metrics.DEFAULT_P
    eval_stride: int | None = None
    center: bool = True
    allow_large: bool = False
    timing: bool = False
    jobs: int = 1

    def resolved(self, n: int | None = None, t: int | None = None) -> ExperimentConfig:
        """Fill in the derived defaults (b=2r, pm_block=2n, ...)."""
        n = self.n if n is None else n
        t = self.T if t is None else t
        b = self.b if self.b is not None else 2 * self.r
        return replace(self, n=n, T=t, b=b,
                       pm_block=self.pm_block if self.pm_block is not None else 2 * n,
                       fd_buffer=self.fd_buffer if self.fd_buffer is not None else 2 * self.r,
                       eval_stride=self.eval_stride if self.eval_stride is not None else b)

    def validate(self) -> None:
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown source {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source needs csv_path")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        b = self.b if self.b is not None else 2 * self.r
        if not 1 <= self.r <= b <= self.T:
            raise ConfigError(f"need 1 <= r <= b <= T, got r={self.r}, b={b}, T={self.T}")
        if b > self.n:
            raise ConfigError(f"block size b={b} exceeds n={self.n}")
        if self.eval_stride is not None and self.eval_stride < 1:
            raise ConfigError("eval_stride must be >= 1")
        if not self.p > 1:
            raise ConfigError(f"p must be > 1, got {self.p}")
        if self.n * self.T > MAX_ENTRIES and not self.allow_large:
            raise ConfigError(
                f"n*T = {self.n * self.T} exceeds {MAX_ENTRIES} dense entries; "
                "pass allow_large to override")
        if self.pm_block is not None and self.pm_block < 1:
            raise ConfigError("pm_block must be >= 1")
        if self.fd_buffer is not None and self.fd_buffer < 1:
            raise ConfigError("fd_buffer must be >= 1")


def parse_spectrum(text: str, n: int, seed: int = 0) -> synth.SpectrumSpec:
    """``power_law:ALPHA``, ``spiked:RANK:LAMBDA`` or ``explicit:v1,v2,...``."""
    kind, _, rest = text.strip().partition(":")
    try:
        if kind == "power_law":
            spec = synth.SpectrumSpec.power_law(n, float(rest or 1.0), seed)
        elif kind == "spiked":
            rank, lam = rest.split(":")
            spec = synth.SpectrumSpec.spiked(n, int(rank), float(lam), seed)
        elif kind == "explicit":
            spec = synth.SpectrumSpec.explicit([float(v) for v in rest.split(",")], seed, n=n)
        else:
            raise ConfigError(f"unknown spectrum kind {kind!r}")
        spec.eigenvalues()
    except (ValueError, InvalidArgumentError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad spectrum {text!r}: {exc}") from None
    return spec


@dataclass
class RunOutput:
    traces: dict
    bound: metrics.BoundReport | None = None
    meta: dict = field(default_factory=dict)


# -- per-algorithm drivers ----------------------------------------------------

def memory_report(obj) -> int:
    """Bytes of factor payload held by an algorithm state (8 bytes per entry)."""
    if isinstance(obj, moses.MosesState):
        return 8 * obj.factor_entries()
    if isinstance(obj, reference.NaiveMosesState):
        return 0 if obj.y_hat is None else 8 * obj.y_hat.size
    if isinstance(obj, baselines.SketchState):
        if obj.variant == "fd":
            return 8 * obj.aux.size
        if obj.variant == "power_method":
            return 8 * (obj.basis.size + obj.filled * obj.n)
        return 8 * obj.basis.size
    if isinstance(obj, np.ndarray):
        return 8 * obj.size
    if obj is None:
        return 0
    raise TypeError(f"no memory accounting for {type(obj).__name__}")


class _Driver:
    def __init__(self, y: np.ndarray, timing: bool):
        self.y = y
        self.t_done = 0
        self.timing = timing
        self.updates = 0
        self.elapsed = 0.0
        self.timed = 0

    def _timed(self, fn, *args):
        if not self.timing:
            self.updates += 1
            return fn(*args)
        start = time.perf_counter()
        out = fn(*args)
        dt = time.perf_counter() - start
        self.updates += 1
        if self.updates > WARMUP_UPDATES:
            self.elapsed += dt
            self.timed += 1
        return out

    def runtime(self) -> float:
        return self.elapsed / self.timed if self.timed else 0.0


class _BlockDriver(_Driver):
    """MOSES and its naive twin: update on whole blocks only."""

    def __init__(self, y, cfg: ExperimentConfig, naive: bool):
        super().__init__(y, cfg.timing)
        self.b, self.r, self.naive = cfg.b, cfg.r, naive
        self.moses_cfg = moses.MosesConfig(cfg.n, cfg.r, cfg.b, moses.FlushPolicy.never())
        self.state = reference.NaiveMosesState(cfg.r) if naive else None

    def advance(self, t: int) -> None:
        while self.t_done + self.b <= t:
            block = self.y[:, self.t_done:self.t_done + self.b]
            if self.naive:
                self.state = self._timed(reference.naive_update, self.state, block)
            elif self.state is None:
                self.state = self._timed(moses.init, self.moses_cfg, block)
            else:
                self.state = self._timed(moses.update, self.state, block)
            self.t_done += self.b

    def _held(self):
        if self.state is None or self.t_done == 0:
            return np.zeros((self.y.shape[0], 0)), np.zeros((self.y.shape[0], 0))
        if self.naive:
            y_hat = self.state.y_hat
            basis = reference.offline_truncated(y_hat, self.r).u if np.any(y_hat) else y_hat[:, :0]
            return y_hat, basis
        return moses.reconstruct(self.state), self.state.s_hat

    def error(self, t: int) -> float:
        y_hat, basis = self._held()
        rest = self.y[:, self.t_done:t]
        est = np.hstack([y_hat, basis @ (basis.T @ rest)])
        return metrics.moses_error(self.y[:, :t], est)

    def memory(self) -> int:
        return memory_report(self.state)


class _OfflineDriver(_Driver):
    def __init__(self, y, cfg):
        super().__init__(y, cfg.timing)
        self.r = cfg.r

    def advance(self, t: int) -> None:
        self.t_done = t

    def error(self, t: int) -> float:
        return self._timed(reference.residual_sq, self.y[:, :t], self.r) / t

    def memory(self) -> int:
        return 8 * self.y.shape[0] * self.t_done


class _SketchDriver(_Driver):
    def __init__(self, y, cfg, variant: str, seed: int):
        super().__init__(y, cfg.timing)
        n, r = cfg.n, cfg.r
        if variant == "fd":
            self.state = baselines.fd_init(n, r, ell=cfg.fd_buffer)
            self.step = baselines.fd_update
        elif variant == "pm":
            self.state = baselines.pm_init(n, r, seed, block=cfg.pm_block)
            self.step = baselines.pm_push
        else:
            self.state = baselines.grouse_init(n, r, seed, step=cfg.grouse_step)
            self.step = baselines.grouse_update

    def advance(self, t: int) -> None:
        while self.t_done < t:
            self._timed(self.step, self.state, self.y[:, self.t_done])
            self.t_done += 1

    def error(self, t: int) -> float:
        return baselines.projection_error(baselines.basis(self.state), self.y[:, :t])

    def memory(self) -> int:
        return memory_report(self.state)


def _make_driver(name: str, y, cfg, seed):
    if name in ("moses", "naive"):
        return _BlockDriver(y, cfg, naive=name == "naive")
    if name == "offline":
        return _OfflineDriver(y, cfg)
    return _SketchDriver(y, cfg, name, seed)


# -- protocol -----------------------------------------------------------------

def time_grid(t_total: int, stride: int) -> list[int]:
    grid = list(range(stride, t_total + 1, stride))
    if not grid or grid[-1] != t_total:
        grid.append(t_total)
    return grid


def load_stream(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    if cfg.source == "synthetic":
        return synth.generate(parse_spectrum(cfg.spectrum, cfg.n, seed), cfg.T)
    ds = ingest.load_csv(cfg.csv_path, cfg.delimiter, cfg.has_header, cfg.orientation,
                         center=cfg.center)
    return ds.data


def prepare(cfg: ExperimentConfig) -> ExperimentConfig:
    """Validate ``cfg``, binding ``n`` and ``T`` to the dataset for CSV sources."""
    if cfg.source == "csv":
        if not cfg.csv_path:
            raise ConfigError("csv source needs csv_path")
        ds = ingest.load_csv(cfg.csv_path, cfg.delimiter, cfg.has_header, cfg.orientation,
                             center=cfg.center)
        cfg = replace(cfg, n=ds.n, T=ds.t_total)
    cfg.validate()
    return cfg.resolved()


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    y_full = load_stream(cfg, seed)
    usable = (y_full.shape[1] // cfg.b) * cfg.b
    y = y_full[:, :usable]
    grid = time_grid(usable, cfg.eval_stride)
    traces = {}
    for name in cfg.algorithms:
        driver = _make_driver(name, y, cfg, seed)
        trace = metrics.ErrorTrace(name)
        for t in grid:
            driver.advance(t)
            err = driver.error(t)
            trace.append(t, err, driver.runtime(), driver.memory())
        traces[name] = trace
    return traces


def _average(per_seed: list[dict], algorithms) -> dict:
    out = {}
    for name in algorithms:
        runs = [d[name] for d in per_seed]
        avg = metrics.ErrorTrace(name)
        for i, t in enumerate(runs[0].t_values):
            avg.append(t,
                       float(np.mean([r.errors[i] for r in runs])),
                       float(np.mean([r.runtimes[i] for r in runs])),
                       int(round(np.mean([r.memory_bytes[i] for r in runs]))))
        out[name] = avg
    return out


def run_experiment(cfg: ExperimentConfig, with_bound: bool = False) -> RunOutput:
    """Run every selected algorithm for every seed and average pointwise."""
    started = time.time()
    cfg = prepare(cfg)
    dropped = ingest.dropped_columns(cfg.T, cfg.b)
    if dropped:
        log.warning("dropping %d trailing columns that do not fill a block of %d",
                    dropped, cfg.b)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            per_seed = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    else:
        per_seed = [run_seed(cfg, s) for s in cfg.seeds]
    traces = _average(per_seed, cfg.algorithms)

    bound = None
    if with_bound:
        y = load_stream(cfg, cfg.seeds[0])
        bound = metrics.error_bound(ingest.as_blocks(y, cfg.b), cfg.r, cfg.p, check=False)
    meta = {key: value for key, value in asdict(cfg).items()}
    meta["version"] = __version__
    meta["dropped_columns"] = dropped
    meta["wall_clock_s"] = round(time.time() - started, 3)
    return RunOutput(traces, bound, meta)


# -- files --------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_traces(out: RunOutput, directory) -> list[Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, trace in out.traces.items():
            path = directory / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                fh.write(TRACE_HEADER + "\n")
                for row in zip(trace.t_values, trace.errors, trace.runtimes,
                               trace.memory_bytes):
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            written.append(path)
        if out.bound is not None:
            path = directory / "bound.csv"
            write_bound(out.bound, path)
            written.append(path)
        path = directory / "meta.txt"
        with open(path, "w") as fh:
            for key, value in out.meta.items():
                fh.write(f"{key}={value}\n")
        written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {directory}: {exc}") from exc
    return written


def write_bound(report: metrics.BoundReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(BOUND_HEADER + "\n")
        for i, (th, inn, part) in enumerate(zip(report.growth_factors, report.innovations,
                                                 report.partial_bounds), start=2):
            fh.write(f"{i},{_fmt(th)},{_fmt(inn)},{_fmt(part)}\n")


def read_trace(path) -> metrics.ErrorTrace:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        trace = metrics.ErrorTrace(path.stem)
        for line in fh:
            t, err, rt, mem = line.strip().split(",")
            trace.append(int(t), float(err), float(rt), int(mem))
    return trace
