"""Experiment configuration: flat INI sections, canonical text, shipped presets.

A config has five sections (``problem``, ``solver``, ``runs``, ``outputs``,
``ablate``) of ``key = value`` lines. :func:`dumps` writes every key in a
fixed order with a fixed number format, so ``dumps(loads(text)) == text``
for any canonical ``text``, and the SHA-256 of that text identifies the run.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field, fields

from .core import CorrectionConfig, Rng, Schedule, make_edm_schedule
from .operators import OperatorSpec

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "SolverConfig",
    "RunsConfig",
    "OutputsConfig",
    "AblateConfig",
    "ExperimentConfig",
    "PRESETS",
    "loads",
    "dumps",
    "load",
    "preset",
]


class ConfigError(ValueError):
    """Malformed, inconsistent or unreadable configuration."""


OPERATORS = ("identity", "mask", "blur", "downsample", "magnitude", "hdr_clip",
             "blur_then_saturate", "square")
PRIORS = ("gaussian", "gmm")
MODES = ("pixel", "latent", "hybrid")


@dataclass(frozen=True)
class ProblemConfig:
    operator: str = "blur"
    n: int = 64
    blur_width: float = 1.5
    blur_taps: int = 9
    keep_fraction: float = 0.5
    factor: int = 2
    gain: float = 2.0
    m: int = 0
    prior: str = "gaussian"
    length: float = 4.0
    scale: float = 0.5
    nugget: float = 1e-4
    gmm_shift: float = 0.5
    beta: float = 0.05
    signal: str = "generated"
    latent_dim: int = 0
    ae_seed: int = 0

    def check(self, base_dir: str = ".") -> None:
        if self.operator not in OPERATORS:
            raise ConfigError(f"problem.operator must be one of {', '.join(OPERATORS)}")
        if self.prior not in PRIORS:
            raise ConfigError(f"problem.prior must be one of {', '.join(PRIORS)}")
        if self.n < 1:
            raise ConfigError("problem.n must be positive")
        if not self.beta >= 0:
            raise ConfigError("problem.beta must be non-negative")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("problem.keep_fraction must lie in (0, 1]")
        if not 0 <= self.latent_dim <= self.n:
            raise ConfigError("problem.latent_dim must lie in [0, n]")
        if self.signal != "generated":
            path = self.signal_path(base_dir)
            if not os.path.isfile(path):
                raise ConfigError(f"problem.signal file not found: {path}")

    def signal_path(self, base_dir: str = ".") -> str:
        return os.path.join(base_dir, self.signal)

    def operator_spec(self) -> OperatorSpec:
        """Operator description; random masks and transforms are drawn from ``ae_seed``."""
        params: dict = {}
        kind = self.operator
        if kind in ("blur", "blur_then_saturate"):
            params = {"width": self.blur_width, "taps": self.blur_taps}
            if kind == "blur_then_saturate":
                params["gain"] = self.gain
        elif kind == "mask":
            keep = Rng(self.ae_seed, 5).uniform((self.n,)) < self.keep_fraction
            params = {"bitmap": keep}
        elif kind == "downsample":
            params = {"factor": self.factor}
        elif kind == "hdr_clip":
            params = {"gain": self.gain}
        elif kind == "magnitude":
            m = self.m or self.n
            params = {"matrix": Rng(self.ae_seed, 6).normal((2 * m, self.n)) / math.sqrt(2 * self.n)}
        return OperatorSpec(kind, self.n, params)


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "pixel"
    T: int = 50
    sigma_min: float = 0.1
    sigma_max: float = 100.0
    rho_sched: float = 7.0
    rho: float = 200.0
    K: int = 3
    S: int = 2
    epsilon: float = 0.05
    epsilon_mode: str = "rms"
    eta: float = 1e-3
    bt_shrink: float = 0.5
    bt_max: int = 20
    gamma_rule: str = "sigma_squared"
    gamma_value: float = 1.0
    step_mode: str = "jvp"
    alpha: float = 1e-3
    sigma_switch: float = 1.0
    latent_rho: float = 200.0
    latent_K: int = 5
    latent_S: int = 3

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"solver.mode must be one of {', '.join(MODES)}")
        try:
            self.correction()
            self.latent_correction()
            self.schedule()
        except ValueError as exc:
            raise ConfigError(f"solver: {exc}") from exc
        if not self.sigma_switch >= 0:
            raise ConfigError("solver.sigma_switch must be non-negative")

    def correction(self) -> CorrectionConfig:
        return CorrectionConfig(
            rho=self.rho, K=self.K, S=self.S, epsilon=self.epsilon, eta=self.eta,
            bt_shrink=self.bt_shrink, bt_max=self.bt_max, gamma_rule=self.gamma_rule,
            gamma_value=self.gamma_value, step_mode=self.step_mode, alpha=self.alpha,
            epsilon_mode=self.epsilon_mode)

    def latent_correction(self) -> CorrectionConfig:
        return self.correction().replace(rho=self.latent_rho, K=self.latent_K, S=self.latent_S)

    def schedule(self) -> Schedule:
        return make_edm_schedule(self.sigma_min, self.sigma_max, self.T, self.rho_sched)


@dataclass(frozen=True)
class RunsConfig:
    repeats: int = 1
    seed: int = 0

    def check(self) -> None:
        if self.repeats < 1:
            raise ConfigError("runs.repeats must be at least 1")
        if self.seed < 0:
            raise ConfigError("runs.seed must be non-negative")


@dataclass(frozen=True)
class OutputsConfig:
    dir: str = "runs"
    trace: bool = True
    final: bool = True

    def check(self) -> None:
        if not self.dir:
            raise ConfigError("outputs.dir must not be empty")


@dataclass(frozen=True)
class AblateConfig:
    solvers: tuple = ("admm", "qdp")
    steps: tuple = ("constant", "jvp", "fd")

    def check(self) -> None:
        if not self.solvers or any(s not in ("admm", "qdp") for s in self.solvers):
            raise ConfigError("ablate.solvers takes a comma list of admm, qdp")
        if not self.steps or any(s not in ("constant", "jvp", "fd") for s in self.steps):
            raise ConfigError("ablate.steps takes a comma list of constant, jvp, fd")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    runs: RunsConfig = field(default_factory=RunsConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)
    base_dir: str = field(default=".", compare=False, repr=False)

    SECTIONS = ("problem", "solver", "runs", "outputs", "ablate")

    def check(self) -> "ExperimentConfig":
        self.problem.check(self.base_dir)
        self.solver.check()
        self.runs.check()
        self.outputs.check()
        self.ablate.check()
        return self

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        part = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: part})

    def dumps(self) -> str:
        return dumps(self)

    def digest(self, length: int = 12) -> str:
        """Hex SHA-256 prefix of the canonical text, ignoring the seed and output directory."""
        text = dumps(self.replace("runs", seed=0).replace("outputs", dir="runs"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(value)
    return str(value)


def _parse(text: str, default, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            value = float(text)
            if math.isnan(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {type(default).__name__}") from None
    if isinstance(default, tuple):
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical text: all sections, all keys, declaration order."""
    out = []
    for name in ExperimentConfig.SECTIONS:
        part = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(part):
            out.append(f"{f.name} = {_format(getattr(part, f.name))}")
        out.append("")
    return "\n".join(out)


def loads(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse INI text; missing keys take their defaults, unknown ones are errors."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - set(ExperimentConfig.SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    parts = {}
    for name in ExperimentConfig.SECTIONS:
        cls = {f.name: f for f in fields(ExperimentConfig)}[name].default_factory
        defaults = cls()
        known = {f.name for f in fields(cls)}
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key {name}.{key}")
                values[key] = _parse(raw, getattr(defaults, key), f"{name}.{key}")
        parts[name] = cls(**values)
    return ExperimentConfig(**parts, base_dir=base_dir).check()


def load(path) -> ExperimentConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _latent_solver(**kw) -> SolverConfig:
    return SolverConfig(mode="hybrid", sigma_max=10.0, **kw)


PRESETS: dict[str, ExperimentConfig] = {
    "gauss-blur-1d": ExperimentConfig(),
    "inpaint-1d": ExperimentConfig(
        problem=ProblemConfig(operator="mask", keep_fraction=0.5),
        solver=SolverConfig(T=50, K=3, S=1)),
    "downsample-1d": ExperimentConfig(
        problem=ProblemConfig(operator="downsample", factor=2),
        solver=SolverConfig(T=50, K=3, S=1)),
    "hdr-1d": ExperimentConfig(
        problem=ProblemConfig(operator="hdr_clip", gain=2.0),
        solver=SolverConfig(T=150, K=2, S=5, rho=5.0)),
    "phase-1d": ExperimentConfig(
        problem=ProblemConfig(operator="magnitude", n=32, m=64),
        solver=SolverConfig(T=150, K=2, S=5)),
    "saturate-blur-1d": ExperimentConfig(
        problem=ProblemConfig(operator="blur_then_saturate", gain=1.0),
        solver=SolverConfig(T=150, K=2, S=5, step_mode="fd")),
    "latent-blur-1d": ExperimentConfig(
        problem=ProblemConfig(latent_dim=48),
        solver=_latent_solver(sigma_switch=1.0, latent_K=5, latent_S=3)),
    "latent-hdr-1d": ExperimentConfig(
        problem=ProblemConfig(operator="hdr_clip", latent_dim=48),
        solver=_latent_solver(T=150, K=2, S=5, rho=5.0, sigma_switch=5.0,
                              latent_K=10, latent_S=3)),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None
