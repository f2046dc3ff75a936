"""Run configuration: ``key = value`` lines grouped under ``[section]`` headers."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional

from .model import HypothesisError, OperatorParams, validate_params


class ConfigError(ValueError):
    pass


@dataclass
class ParamsSection:
    N: int = 3
    alpha: float = 3.0
    beta: float = 4.0
    b: float = 0.0
    c: float = 1.0


@dataclass
class GridSection:
    R: float = 20.0
    n: int = 4000
    grading: str = "geometric"
    ratio: float = 1.0005


@dataclass
class SolverSection:
    m: int = 8
    dt: float = 1e-3
    quad_rel_tol: float = 1e-10
    k_terms: Optional[int] = None
    scheme: str = "extrapolated_euler"


@dataclass
class VerifySection:
    t_grid: tuple = (0.05, 0.1, 0.2, 0.5, 1.0)
    large_t_grid: tuple = (1.0, 2.0, 3.0)
    diag_t_grid: tuple = (0.5, 1.0, 2.0)
    kernel_radii: int = 30
    r_min: float = 0.1
    bumps: int = 16
    f_count: int = 16
    eps_grid: tuple = (1e-3, 10.0, 13.0)
    ratio_max: float = 3.0
    slope_max: float = 0.1
    fit_rel_tol: float = 0.1
    stability: float = 0.2
    diag_variation: float = 0.2
    refine_factor: int = 2
    shooting: bool = True
    corrupt_comparator: bool = False


@dataclass
class KernelSection:
    times: tuple = (0.5, 1.0)
    radii: tuple = (1.0, 2.0, 5.0)


@dataclass
class OutputSection:
    directory: str = "kernellab_out"
    formats: tuple = ("tsv", "json")


@dataclass
class RunConfig:
    params: ParamsSection = field(default_factory=ParamsSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    verify: VerifySection = field(default_factory=VerifySection)
    kernel: KernelSection = field(default_factory=KernelSection)
    output: OutputSection = field(default_factory=OutputSection)

    def operator_params(self) -> OperatorParams:
        q = self.params
        return validate_params(q.N, q.alpha, q.beta, q.b, q.c)


SECTIONS = [f.name for f in fields(RunConfig)]
_STRING_TUPLES = {("output", "formats")}


def _convert(section: str, name: str, default, text: str):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [s.strip() for s in text.split(",") if s.strip()]
        if (section, name) in _STRING_TUPLES:
            return tuple(items)
        return tuple(float(s) for s in items)
    if default is None:
        return None if text.lower() in ("auto", "none", "") else int(text)
    return text


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text.

    Raises
    ------
    ConfigError
        With the offending line number for syntax errors, unknown sections or
        keys, bad values and duplicates (naming both lines); parameter
        hypothesis violations are reported with the hypothesis name.
    """
    cfg = RunConfig()
    seen: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (s.strip() for s in line.split("=", 1))
        sect = getattr(cfg, section)
        names = {f.name: f for f in fields(sect)}
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in seen:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} in [{section}] (first set on line {seen[section, key]})"
            )
        seen[section, key] = lineno
        default = getattr(type(sect)(), key)
        try:
            setattr(sect, key, _convert(section, key, default, value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        cfg.operator_params()
    except HypothesisError as exc:
        raise ConfigError(f"[params]: {exc}") from exc
    _check(cfg)
    return cfg


def _check(cfg: RunConfig) -> None:
    g, s = cfg.grid, cfg.solver
    if g.grading not in ("uniform", "geometric"):
        raise ConfigError(f"[grid]: unknown grading {g.grading!r}")
    if g.n < 100 or g.R < 10:
        raise ConfigError("[grid]: need n >= 100 and R >= 10")
    if not 1.0 < g.ratio <= 1.1:
        raise ConfigError("[grid]: ratio must lie in (1, 1.1]")
    if not 1 <= s.m <= (g.n - 1) // 10:
        raise ConfigError("[solver]: need 1 <= m <= n/10")
    if s.dt <= 0 or not 0 < s.quad_rel_tol <= 1e-3:
        raise ConfigError("[solver]: need dt > 0 and quad_rel_tol in (0, 1e-3]")
    if not set(cfg.output.formats) <= {"tsv", "json"} or "json" not in cfg.output.formats:
        raise ConfigError("[output]: formats must include json and may add tsv")
    if s.scheme not in ("crank_nicolson", "implicit_euler", "extrapolated_euler"):
        raise ConfigError(f"[solver]: unknown scheme {s.scheme!r}")


def read_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dumps(cfg: RunConfig) -> str:
    """Config text that parses back to an equal ``RunConfig``."""
    out = []
    for name in SECTIONS:
        out.append(f"[{name}]")
        for f in fields(getattr(cfg, name)):
            out.append(f"{f.name} = {_format(getattr(getattr(cfg, name), f.name))}")
        out.append("")
    return "\n".join(out)


def replace_section(cfg: RunConfig, section: str, **changes) -> RunConfig:
    new = dataclasses.replace(cfg)
    setattr(new, section, dataclasses.replace(getattr(cfg, section), **changes))
    return new
