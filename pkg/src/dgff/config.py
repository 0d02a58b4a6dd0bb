"""Experiment configuration: an INI file with typed sections.

Grammar (every key optional unless marked)::

    [run]
    manifold = torus1            ; torus1 | torus2 | sphere2      (required)
    grid = lattice               ; lattice | iid                  (required)
    n_list = 16, 32, 64          ; strictly ascending             (required)
    seed = 12345                 ; unsigned 64-bit master seed
    draws = 2000                 ; Monte Carlo draws per estimate, 0 disables MC columns
    output = runs/example        ; default output directory

    [bandwidth]                  ; iid grids only, ignored on lattices
    policy = schedule            ; fixed | wasserstein | schedule
    t = 0.1                      ; fixed policy only
    safety = 0.1                 ; W_1 <= safety * t^(d/2+2)
    reference_factor = 10        ; reference sample size / N for two-sample W_1
    max_j = 8                    ; schedule: largest step j tried (t = 1/j)
    ladder = 16, 32, 64          ; schedule: extra N used to certify the gap

    [functions]                  ; name = j:c, j:c, ...   ("0" is the zero function)
    cos1 = 2:1.0

    [semigroup]
    times = 0.25, 0.5, 1.0

    [sobolev]
    s = 1.0
    modes = 41                   ; truncation J; default covers lambda <= 400 (tori), l <= 20 (sphere)
    probes_per_cell = 200
    draws = 2000

    [thresholds]
    gap_floor = 0.5              ; running inf of lambda_2^N >= gap_floor * lambda_2
    semigroup_abs = 0.01
    covariance_rel = 0.1
    char_sigmas = 5
    lift_sigmas = 5
    tightness_spread = 0.2

Lattice grids exist only on tori.  Unknown sections or keys are errors that
name the offending ``section.key``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .manifolds import Manifold, TestFunction, Torus, make_manifold
from .seeding import MAX_SEED


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BandwidthConfig:
    policy: str = "schedule"
    t: float | None = None
    safety: float = 0.1
    reference_factor: int = 10
    max_j: int = 8
    ladder: tuple[int, ...] = ()


@dataclass(frozen=True)
class SobolevConfig:
    s: float = 1.0
    modes: int | None = None
    probes_per_cell: int = 200
    draws: int = 2000


@dataclass(frozen=True)
class Thresholds:
    gap_floor: float = 0.5
    semigroup_abs: float = 1e-2
    covariance_rel: float = 0.1
    char_sigmas: float = 5.0
    lift_sigmas: float = 5.0
    tightness_spread: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: str
    grid: str
    n_list: tuple[int, ...]
    functions: dict[str, str]
    seed: int = 0
    draws: int = 2000
    output: str | None = None
    times: tuple[float, ...] = (0.25, 0.5, 1.0)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    sobolev: SobolevConfig = field(default_factory=SobolevConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)

    def model(self) -> Manifold:
        return make_manifold(self.manifold)

    def test_functions(self) -> dict[str, TestFunction]:
        model = self.model()
        return {name: _parse_function(model, text) for name, text in self.functions.items()}

    def with_seed(self, seed: int) -> ExperimentConfig:
        _check_seed(seed, "run.seed")
        return replace(self, seed=int(seed))


def _parse_function(model: Manifold, text: str) -> TestFunction:
    if text.strip() == "0":
        return TestFunction(model, {})
    return TestFunction.parse(model, text)


def _check_seed(seed, where):
    if not 0 <= int(seed) <= MAX_SEED:
        raise ConfigError(f"{where}: seed must be an unsigned 64-bit integer")


_RUN_KEYS = {"manifold", "grid", "n_list", "seed", "draws", "output"}
_SECTIONS = {
    "run": _RUN_KEYS,
    "bandwidth": {f.name for f in fields(BandwidthConfig)},
    "functions": None,
    "semigroup": {"times"},
    "sobolev": {f.name for f in fields(SobolevConfig)},
    "thresholds": {f.name for f in fields(Thresholds)},
}


def _ints(text: str, where: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected a list of integers, got {text!r}") from None


def _floats(text: str, where: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected a list of numbers, got {text!r}") from None


def _scalar(kind, text: str, where: str):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}") from None


def _section(cp, name, cls):
    if not cp.has_section(name):
        return cls()
    kwargs = {}
    for f in fields(cls):
        if f.name not in cp[name]:
            continue
        where, text = f"{name}.{f.name}", cp[name][f.name]
        if f.name == "ladder":
            kwargs[f.name] = _ints(text, where)
        elif "int" in str(f.type):
            kwargs[f.name] = _scalar(int, text, where)
        elif "float" in str(f.type):
            kwargs[f.name] = _scalar(float, text, where)
        else:
            kwargs[f.name] = text.strip()
    return cls(**kwargs)


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str  # keep function names case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTIONS[section]
        if allowed is None:
            continue
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError(f"{section}.{key}: unknown key")
    if not cp.has_section("run"):
        raise ConfigError("missing [run] section")
    run = cp["run"]
    for key in ("manifold", "grid", "n_list"):
        if key not in run:
            raise ConfigError(f"run.{key}: required")

    manifold = run["manifold"].strip()
    try:
        model = make_manifold(manifold)
    except ValueError as exc:
        raise ConfigError(f"run.manifold: {exc}") from None
    grid = run["grid"].strip()
    if grid not in ("lattice", "iid"):
        raise ConfigError(f"run.grid: expected 'lattice' or 'iid', got {grid!r}")
    if grid == "lattice" and not isinstance(model, Torus):
        raise ConfigError("run.grid: lattice grids are only defined on tori")

    n_list = _ints(run["n_list"], "run.n_list")
    if not n_list:
        raise ConfigError("run.n_list: empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError(f"run.n_list: must be strictly ascending, got {list(n_list)}")
    if min(n_list) < 2:
        raise ConfigError("run.n_list: every N must be at least 2")
    if grid == "lattice":
        d = model.dim
        sides = [round(n ** (1 / d)) for n in n_list]
        if any(s**d != n or s < 3 for s, n in zip(sides, n_list)):
            raise ConfigError(f"run.n_list: lattice sizes must be perfect {d}-th powers of sides >= 3")

    seed = _scalar(int, run.get("seed", "0"), "run.seed")
    _check_seed(seed, "run.seed")
    draws = _scalar(int, run.get("draws", "2000"), "run.draws")
    if draws < 0:
        raise ConfigError("run.draws: must be nonnegative")
    output = run.get("output")

    functions = dict(cp["functions"]) if cp.has_section("functions") else {}
    if not functions:
        raise ConfigError("functions: at least one test function is required")
    for name, text in functions.items():
        try:
            _parse_function(model, text)
        except ValueError as exc:
            raise ConfigError(f"functions.{name}: {exc}") from None
    functions = {name: _parse_function(model, text).format() or "0" for name, text in functions.items()}

    times = (0.25, 0.5, 1.0)
    if cp.has_section("semigroup") and "times" in cp["semigroup"]:
        times = _floats(cp["semigroup"]["times"], "semigroup.times")
        if any(t <= 0 for t in times):
            raise ConfigError("semigroup.times: times must be positive")

    bandwidth = _section(cp, "bandwidth", BandwidthConfig)
    if grid == "iid":
        if bandwidth.policy not in ("fixed", "wasserstein", "schedule"):
            raise ConfigError(f"bandwidth.policy: unknown policy {bandwidth.policy!r}")
        if (bandwidth.policy == "fixed") != (bandwidth.t is not None):
            raise ConfigError("bandwidth.t: required for the fixed policy and only allowed there")
        if bandwidth.t is not None and bandwidth.t <= 0:
            raise ConfigError("bandwidth.t: must be positive")
        if not 0 < bandwidth.safety < 1:
            raise ConfigError("bandwidth.safety: must lie in (0, 1)")
        if bandwidth.reference_factor < 10:
            raise ConfigError("bandwidth.reference_factor: must be at least 10")
        if bandwidth.max_j < 1:
            raise ConfigError("bandwidth.max_j: must be at least 1")
        if any(n < 2 for n in bandwidth.ladder):
            raise ConfigError("bandwidth.ladder: every N must be at least 2")
    else:
        bandwidth = BandwidthConfig()

    sobolev = _section(cp, "sobolev", SobolevConfig)
    if sobolev.modes is not None and sobolev.modes < 2:
        raise ConfigError("sobolev.modes: must be at least 2")
    if sobolev.probes_per_cell < 1 or sobolev.draws < 2:
        raise ConfigError("sobolev: probes_per_cell >= 1 and draws >= 2 required")

    return ExperimentConfig(manifold, grid, n_list, functions, seed, draws, output, times, bandwidth, sobolev,
                            _section(cp, "thresholds", Thresholds))


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _join(xs) -> str:
    return ", ".join(repr(x) for x in xs)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Normalized INI text; parse_config_text inverts it exactly."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {"manifold": cfg.manifold, "grid": cfg.grid, "n_list": _join(cfg.n_list),
                 "seed": str(cfg.seed), "draws": str(cfg.draws)}
    if cfg.output is not None:
        cp["run"]["output"] = cfg.output
    if cfg.grid == "iid":
        b = cfg.bandwidth
        cp["bandwidth"] = {"policy": b.policy, "safety": repr(b.safety), "reference_factor": str(b.reference_factor),
                           "max_j": str(b.max_j)}
        if b.t is not None:
            cp["bandwidth"]["t"] = repr(b.t)
        if b.ladder:
            cp["bandwidth"]["ladder"] = _join(b.ladder)
    cp["functions"] = dict(cfg.functions)
    cp["semigroup"] = {"times": _join(cfg.times)}
    s = cfg.sobolev
    cp["sobolev"] = {"s": repr(s.s), "probes_per_cell": str(s.probes_per_cell), "draws": str(s.draws)}
    if s.modes is not None:
        cp["sobolev"]["modes"] = str(s.modes)
    cp["thresholds"] = {f.name: repr(getattr(cfg.thresholds, f.name)) for f in fields(Thresholds)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
