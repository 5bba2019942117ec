"""Run configuration files.

One text format: ``key = value`` pairs under ``[section]`` headers, parsed
with the stdlib parser.  Sections are ``[model]``, ``[controls]``,
``[scenario]`` and ``[run]``; sweep files add ``[sweep]``.  Every field has
a default, unknown fields or sections are rejected by name, and
``load_config(save_config(cfg)) == cfg`` holds exactly.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from dyadicflow import analysis
from dyadicflow.integrate import Scheme, StepControls
from dyadicflow.model import DomainError, DyadicState, ModelParams, Tail
from dyadicflow.scenarios import gen_bump, gen_front, gen_geometric

PARALLELISM_ENV = "DYADIC_FLOW_THREADS"


class ConfigError(ValueError):
    """Config file problem, carrying file/field context in the message."""


@dataclass(frozen=True)
class BumpScenario:
    kind = "bump"


@dataclass(frozen=True)
class FrontScenario:
    kind = "front"
    k0: int = 4
    q: float = 1.2
    r: float = 0.5
    amplitude: float = 1.0


@dataclass(frozen=True)
class GeometricScenario:
    kind = "geometric"
    rate: float = 0.5


@dataclass(frozen=True)
class CustomScenario:
    kind = "custom"
    values: tuple[float, ...] = ()


Scenario = Union[BumpScenario, FrontScenario, GeometricScenario, CustomScenario]


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=lambda: ModelParams(alpha=0.25, trunc_k=16))
    controls: StepControls = field(default_factory=StepControls)
    scenario: Scenario = field(default_factory=BumpScenario)
    t_end: float = 1.0
    delta: float = 0.5
    checks: tuple[str, ...] = ("monotone_nonneg", "max_principle")
    output_prefix: str = "out/run"

    def __post_init__(self):
        if not (self.t_end > 0.0):
            raise DomainError("t_end must be positive")
        if not (0.0 < self.delta < 1.0):
            raise DomainError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...]
    ks: tuple[int, ...]
    base: RunConfig
    parallelism: int = 1

    def __post_init__(self):
        if not self.alphas or not self.ks:
            raise DomainError("sweep lists must be non-empty")
        if any(a < 0.0 for a in self.alphas):
            raise DomainError("sweep alphas must be >= 0")
        if self.parallelism < 1:
            raise DomainError("parallelism must be >= 1")


def build_initial_state(scenario: Scenario, trunc_k: int) -> DyadicState:
    """Materialize the initial data for a scenario at truncation K."""
    if isinstance(scenario, BumpScenario):
        return gen_bump(trunc_k)
    if isinstance(scenario, FrontScenario):
        return gen_front(trunc_k, scenario.k0, scenario.q, scenario.r, scenario.amplitude)
    if isinstance(scenario, GeometricScenario):
        return gen_geometric(trunc_k, scenario.rate)
    if isinstance(scenario, CustomScenario):
        if len(scenario.values) != trunc_k + 1:
            raise ConfigError(
                f"custom scenario has {len(scenario.values)} values, "
                f"trunc_k={trunc_k} needs {trunc_k + 1}"
            )
        return DyadicState(t=0.0, a=list(scenario.values))
    raise ConfigError(f"unknown scenario object {scenario!r}")


_SCHEME_TOKENS = {s.value: s for s in Scheme}
_TAIL_TOKENS = {t.value: t for t in Tail}

_KNOWN_FIELDS = {
    "model": {"alpha", "trunc_k", "norm_s", "tail"},
    "controls": {
        "rel_tol", "abs_tol", "dt_init", "dt_min", "max_steps", "scheme", "record_every",
    },
    "scenario": {"kind", "k0", "q", "r", "amplitude", "rate", "values"},
    "run": {"t_end", "delta", "checks", "output_prefix"},
}
_SWEEP_FIELDS = {"alphas", "ks", "parallelism"}


class _SectionReader:
    def __init__(self, parser, section, path):
        self.raw = dict(parser[section]) if parser.has_section(section) else {}
        self.section = section
        self.path = path

    def _fail(self, key, value, kind):
        raise ConfigError(
            f"{self.path}: [{self.section}] {key} = {value!r} is not a valid {kind}"
        )

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def get_float(self, key, default):
        if key not in self.raw:
            return default
        try:
            return float(self.raw[key])
        except ValueError:
            self._fail(key, self.raw[key], "number")

    def get_int(self, key, default):
        if key not in self.raw:
            return default
        try:
            return int(self.raw[key])
        except ValueError:
            self._fail(key, self.raw[key], "integer")

    def get_token(self, key, table, default):
        if key not in self.raw:
            return default
        token = self.raw[key].strip().lower()
        if token not in table:
            raise ConfigError(
                f"{self.path}: [{self.section}] {key} = {token!r} must be one of "
                f"{sorted(table)}"
            )
        return table[token]

    def get_floats(self, key, default):
        if key not in self.raw:
            return default
        try:
            return tuple(float(x) for x in self.raw[key].split(",") if x.strip())
        except ValueError:
            self._fail(key, self.raw[key], "comma-separated number list")

    def get_ints(self, key, default):
        if key not in self.raw:
            return default
        try:
            return tuple(int(x) for x in self.raw[key].split(",") if x.strip())
        except ValueError:
            self._fail(key, self.raw[key], "comma-separated integer list")


def _parse_file(path, extra_sections=frozenset()):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    known = dict(_KNOWN_FIELDS)
    for name in extra_sections:
        known[name] = _SWEEP_FIELDS
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigError(f"{path}: unknown field {key!r} in [{section}]")
    return parser


def _config_from_parser(parser, path) -> RunConfig:
    model = _SectionReader(parser, "model", path)
    params = ModelParams(
        alpha=model.get_float("alpha", 0.25),
        trunc_k=model.get_int("trunc_k", 16),
        norm_s=model.get_float("norm_s", 1.5),
        tail=model.get_token("tail", _TAIL_TOKENS, Tail.PLATEAU),
    )

    ctrl = _SectionReader(parser, "controls", path)
    scheme_table = dict(_SCHEME_TOKENS, auto=None)
    controls = StepControls(
        rel_tol=ctrl.get_float("rel_tol", 1e-8),
        abs_tol=ctrl.get_float("abs_tol", 1e-11),
        dt_init=ctrl.get_float("dt_init", 1e-3),
        dt_min=ctrl.get_float("dt_min", 1e-13),
        max_steps=ctrl.get_int("max_steps", 2_000_000),
        scheme=ctrl.get_token("scheme", scheme_table, None),
        record_every=ctrl.get_float("record_every", 0.01),
    )

    scen = _SectionReader(parser, "scenario", path)
    kind = scen.get("kind", "bump").strip().lower()
    if kind == "bump":
        scenario: Scenario = BumpScenario()
    elif kind == "front":
        scenario = FrontScenario(
            k0=scen.get_int("k0", 4),
            q=scen.get_float("q", 1.2),
            r=scen.get_float("r", 0.5),
            amplitude=scen.get_float("amplitude", 1.0),
        )
    elif kind == "geometric":
        scenario = GeometricScenario(rate=scen.get_float("rate", 0.5))
    elif kind == "custom":
        scenario = CustomScenario(values=scen.get_floats("values", ()))
    else:
        raise ConfigError(
            f"{path}: [scenario] kind = {kind!r} must be one of "
            "['bump', 'custom', 'front', 'geometric']"
        )

    run = _SectionReader(parser, "run", path)
    checks_raw = run.get("checks")
    if checks_raw is None:
        checks = ("monotone_nonneg", "max_principle")
    else:
        checks = tuple(x.strip() for x in checks_raw.split(",") if x.strip())
    for name in checks:
        if name not in analysis.CHECKS:
            raise ConfigError(
                f"{path}: unknown check {name!r}; known: {sorted(analysis.CHECKS)}"
            )

    try:
        return RunConfig(
            params=params,
            controls=controls,
            scenario=scenario,
            t_end=run.get_float("t_end", 1.0),
            delta=run.get_float("delta", 0.5),
            checks=checks,
            output_prefix=run.get("output_prefix", "out/run"),
        )
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse a run configuration, filling defaults for absent fields."""
    parser = _parse_file(path)
    return _config_from_parser(parser, path)


def load_sweep(path) -> SweepSpec:
    """Parse a sweep file: a run configuration plus a [sweep] section."""
    parser = _parse_file(path, extra_sections={"sweep"})
    base = _config_from_parser(parser, path)
    sweep = _SectionReader(parser, "sweep", path)
    default_par = int(os.environ.get(PARALLELISM_ENV, "1") or "1")
    try:
        return SweepSpec(
            alphas=sweep.get_floats("alphas", (base.params.alpha,)),
            ks=sweep.get_ints("ks", (base.params.trunc_k,)),
            base=base,
            parallelism=sweep.get_int("parallelism", default_par),
        )
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _scenario_lines(s: Scenario) -> list[str]:
    if isinstance(s, BumpScenario):
        return ["kind = bump"]
    if isinstance(s, FrontScenario):
        return [
            "kind = front", f"k0 = {s.k0}", f"q = {s.q!r}", f"r = {s.r!r}",
            f"amplitude = {s.amplitude!r}",
        ]
    if isinstance(s, GeometricScenario):
        return ["kind = geometric", f"rate = {s.rate!r}"]
    return ["kind = custom", "values = " + ",".join(repr(v) for v in s.values)]


def config_text(cfg: RunConfig, sweep: Optional[SweepSpec] = None) -> str:
    """Render a configuration (optionally with a sweep section) as file text."""
    p, c = cfg.params, cfg.controls
    lines = [
        "[model]",
        f"alpha = {p.alpha!r}",
        f"trunc_k = {p.trunc_k}",
        f"norm_s = {p.norm_s!r}",
        f"tail = {p.tail.value}",
        "",
        "[controls]",
        f"rel_tol = {c.rel_tol!r}",
        f"abs_tol = {c.abs_tol!r}",
        f"dt_init = {c.dt_init!r}",
        f"dt_min = {c.dt_min!r}",
        f"max_steps = {c.max_steps}",
        "scheme = " + ("auto" if c.scheme is None else c.scheme.value),
        f"record_every = {c.record_every!r}",
        "",
        "[scenario]",
        *_scenario_lines(cfg.scenario),
        "",
        "[run]",
        f"t_end = {cfg.t_end!r}",
        f"delta = {cfg.delta!r}",
        "checks = " + ",".join(cfg.checks),
        f"output_prefix = {cfg.output_prefix}",
    ]
    if sweep is not None:
        lines += [
            "",
            "[sweep]",
            "alphas = " + ",".join(repr(a) for a in sweep.alphas),
            "ks = " + ",".join(str(k) for k in sweep.ks),
            f"parallelism = {sweep.parallelism}",
        ]
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path, sweep: Optional[SweepSpec] = None) -> None:
    """Write a configuration file that reloads equal to ``cfg``."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(config_text(cfg, sweep))
    os.replace(tmp, path)


def cell_config(base: RunConfig, alpha: float, trunc_k: int) -> RunConfig:
    """Specialize a base configuration to one sweep cell."""
    return replace(base, params=replace(base.params, alpha=alpha, trunc_k=trunc_k))
