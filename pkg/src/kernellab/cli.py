"""Command-line entry point: ``kernellab <command> --config <file>``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, RunConfig, read_config
from .discretize import AssemblyError
from .model import HypothesisError
from .pipeline import EXIT_FAIL, EXIT_INFRA, EXIT_OK, STAGES, OracleDisagreement, ensure_dir, write_meta
from .propagate import StepError
from .quadrature import QuadratureError
from .spectral import SpectralError
from .verify import OracleError

log = logging.getLogger("kernellab")

INFRA_ERRORS = (
    ConfigError,
    HypothesisError,
    OSError,
    SpectralError,
    StepError,
    QuadratureError,
    OracleError,
    OracleDisagreement,
    AssemblyError,
)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kernellab", description=__doc__)
    ap.add_argument("command", choices=sorted(STAGES))
    ap.add_argument("--config", required=True, help="configuration file")
    ap.add_argument("--out", default=None, help="output directory (default: [output] directory)")
    ap.add_argument("--sweep", default=None, help="file listing one config path per line")
    ap.add_argument("--emit-plot-data", action="store_true", help="write (x, y) series files")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def run(command: str, cfg: RunConfig, out, plot_data: bool = False) -> int:
    """Run one stage; infrastructure failures map to exit code 2."""
    t0 = time.perf_counter()
    try:
        out = ensure_dir(out)
        status = STAGES[command](cfg, out, plot_data)
    except INFRA_ERRORS as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INFRA
    except Exception:
        log.exception("unexpected failure in %s", command)
        return EXIT_INFRA
    try:
        write_meta(out, command, cfg, time.perf_counter() - t0, status)
    except OSError as exc:
        log.error("cannot write metadata: %s", exc)
        return EXIT_INFRA
    return status


def _sweep_job(args):
    command, cfg_path, out, plot_data = args
    logging.basicConfig(level=logging.WARNING)
    try:
        cfg = read_config(cfg_path)
    except (ConfigError, OSError) as exc:
        log.error("%s: %s", cfg_path, exc)
        return EXIT_INFRA
    return run(command, cfg, out, plot_data)


def run_sweep(command: str, sweep_file, out, plot_data: bool = False, workers: int | None = None) -> int:
    """Each listed config runs in its own subdirectory; the worst exit code wins."""
    base = Path(sweep_file).parent
    paths = []
    for line in Path(sweep_file).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            p = Path(line)
            paths.append(p if p.is_absolute() else base / p)
    if not paths:
        raise ConfigError(f"{sweep_file}: no configs listed")
    jobs = [(command, str(p), str(Path(out) / p.stem), plot_data) for p in paths]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(_sweep_job, jobs))
    for p, code in zip(paths, codes):
        log.info("%s: exit %d", p, code)
    return max(codes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = read_config(args.config)
        out = args.out or cfg.output.directory
        if args.sweep:
            return run_sweep(args.command, args.sweep, out, args.emit_plot_data)
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INFRA
    return run(args.command, cfg, out, args.emit_plot_data)


if __name__ == "__main__":
    sys.exit(main())
