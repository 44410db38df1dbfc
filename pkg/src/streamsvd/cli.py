"""Command line entry point: ``streamsvd {run,bound-check,bench}``.

Options mirror :class:`~streamsvd.experiment.ExperimentConfig` fields in
kebab-case.  ``--config FILE`` reads the same keys from ``key=value`` lines
(``#`` comments allowed); explicit flags override the file.

Exit status: 0 success, 1 configuration/input error, 2 numerical failure
(including a violated deterministic bound).
"""
from __future__ import annotations

import argparse
import csv
import logging
import statistics
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import experiment, ingest, metrics, moses, synth
from .experiment import ConfigError, ExperimentConfig
from .linalg import InvalidArgumentError, NumericalFailureError

log = logging.getLogger("streamsvd")

_BOOL_FIELDS = {"has_header", "center", "allow_large", "timing"}


def _int_tuple(text: str) -> tuple:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


def _str_tuple(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_CONVERTERS = {
    "T": int, "n": int, "r": int, "b": int, "pm_block": int, "fd_buffer": int,
    "eval_stride": int, "jobs": int, "grouse_step": float, "p": float,
    "seeds": _int_tuple, "algorithms": _str_tuple,
}


def _convert(key: str, value):
    if key in _BOOL_FIELDS:
        return _bool(value)
    conv = _CONVERTERS.get(key, str)
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def read_config_file(path) -> dict:
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key == "no_center":
            key, value = "center", str(not _bool(value))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value.strip())
    return out


def _add_config_options(p: argparse.ArgumentParser) -> None:
    add = p.add_argument
    add("--config", help="key=value file with any of the options below")
    add("--source", choices=["synthetic", "csv"])
    add("--spectrum", help="power_law:ALPHA | spiked:RANK:LAMBDA | explicit:v1,v2,...")
    add("--T", "--t", dest="T", help="stream length for synthetic sources")
    add("--csv-path")
    add("--delimiter")
    add("--has-header", action="store_const", const="true")
    add("--orientation", choices=[ingest.ROWS_ARE_SENSORS, ingest.ROWS_ARE_TIMESTEPS])
    add("--algorithms", help=f"comma list from {','.join(experiment.ALGORITHMS)}")
    add("--n")
    add("--r")
    add("--b")
    add("--pm-block")
    add("--fd-buffer")
    add("--grouse-step")
    add("--seeds", help="comma list or LO..HI")
    add("--p")
    add("--eval-stride")
    add("--no-center", dest="center", action="store_const", const="false")
    add("--allow-large", action="store_const", const="true")
    add("--timing", action="store_const", const="true",
            help="record wall-clock per update (output is then not reproducible)")
    add("--jobs")
    add("--out", default="results", help="output directory")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _convert(f.name, raw)
    return ExperimentConfig(**values)


def cmd_run(args) -> int:
    cfg = build_config(args)
    out = experiment.run_experiment(cfg)
    paths = experiment.write_traces(out, args.out)
    for name, trace in out.traces.items():
        print(f"{name:8s} final t={trace.t_values[-1]} error={trace.errors[-1]:.6g}")
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def cmd_bound_check(args) -> int:
    cfg = experiment.prepare(build_config(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for i, seed in enumerate(cfg.seeds):
        y = experiment.load_stream(cfg, seed)
        report = metrics.error_bound(ingest.as_blocks(y, cfg.b), cfg.r, cfg.p, check=False)
        if i == 0:
            experiment.write_bound(report, out_dir / "bound.csv")
        status = "ok" if report.holds else "VIOLATED"
        failures += not report.holds
        print(f"seed {seed}: actual={report.actual_error_sq:.6g} "
              f"bound={report.bound_value:.6g} slack={report.slack_ratio:.3g} "
              f"(without first-block term {report.stated_bound:.6g}) {status}")
    if failures:
        print(f"{failures} bound violations", file=sys.stderr)
        return 2
    return 0


def bench_updates(n: int, r: int, b: int, updates: int, seed: int = 0,
                  flush_policy: moses.FlushPolicy | None = None) -> tuple[list, int]:
    """Per-update wall-clock of MOSES on a power-law stream, after warm-up."""
    cfg = moses.MosesConfig(n, r, b, flush_policy or moses.FlushPolicy.never())
    handle = synth.make_stream(synth.SpectrumSpec.power_law(n, 1.0, seed))
    state = moses.init(cfg, synth.next_block(handle, b))
    blocks = [synth.next_block(handle, b) for _ in range(updates + experiment.WARMUP_UPDATES)]
    times = []
    for i, block in enumerate(blocks):
        start = time.perf_counter()
        state = moses.update(state, block)
        if i >= experiment.WARMUP_UPDATES:
            times.append(time.perf_counter() - start)
    return times, experiment.memory_report(state)


def cmd_bench(args) -> int:
    cfg = build_config(args).resolved()
    ns = _int_tuple(args.ns) if args.ns else (cfg.n, 2 * cfg.n)
    policy = moses.FlushPolicy.parse(args.flush)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in ns:
        times, mem = bench_updates(n, cfg.r, cfg.b, args.updates, cfg.seeds[0], policy)
        rows.append((n, cfg.r, cfg.b, len(times), statistics.median(times), mem))
        print(f"n={n:6d} median update {rows[-1][4] * 1e3:.3f} ms, state {mem} bytes")
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "r", "b", "updates", "median_update_s", "memory_bytes"])
        w.writerows(rows)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamsvd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="error/runtime/memory traces for each algorithm")
    _add_config_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bound-check", help="check the deterministic MOSES error bound")
    _add_config_options(p)
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("bench", help="per-update MOSES timing across ambient dimensions")
    _add_config_options(p)
    p.add_argument("--ns", help="ambient dimensions to time (default n and 2n)")
    p.add_argument("--updates", type=int, default=200)
    p.add_argument("--flush", default="never", help="never | every:M | rows:M")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError, ingest.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailureError, metrics.DegenerateSpectrumError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
