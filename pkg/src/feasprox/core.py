"""Noise schedules, solver configuration records and the shared RNG."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Schedule",
    "make_edm_schedule",
    "CorrectionConfig",
    "NoiseModel",
    "Rng",
    "gamma_at",
]

GAMMA_RULES = ("sigma_squared", "constant")
STEP_MODES = ("jvp", "fd", "constant")
EPSILON_MODES = ("rms", "raw")


@dataclass(frozen=True)
class Schedule:
    """Descending noise levels ``sigma_T, ..., sigma_0``."""

    sigmas: tuple[float, ...]
    sigma_min: float
    sigma_max: float
    rho_sched: float = 7.0

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("a schedule needs at least two noise levels")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("noise levels must be finite and positive")
        if np.any(np.diff(s) >= 0):
            raise ValueError("noise levels must be strictly decreasing")
        if s[0] != self.sigma_max or s[-1] != self.sigma_min:
            raise ValueError("endpoints must equal sigma_max and sigma_min")

    @property
    def T(self) -> int:
        return len(self.sigmas) - 1

    def __len__(self) -> int:
        return len(self.sigmas)

    def __iter__(self):
        return iter(self.sigmas)

    def __getitem__(self, i):
        return self.sigmas[i]


def make_edm_schedule(sigma_min: float = 0.1, sigma_max: float = 100.0,
                      T: int = 50, rho_sched: float = 7.0) -> Schedule:
    """Karras-style power interpolation between ``sigma_max`` and ``sigma_min``.

    ``sigma_i = (a + (i/T) (b - a)) ** rho`` with ``a = sigma_max**(1/rho)`` and
    ``b = sigma_min**(1/rho)``, for ``i = 0..T``. The endpoints are pinned to the
    inputs exactly so the rounding of the power does not leak into them.
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be an integer >= 1, got {T!r}")
    if not (0 < sigma_min < sigma_max) or not math.isfinite(sigma_max):
        raise ValueError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    if rho_sched <= 0:
        raise ValueError("rho_sched must be positive")
    T = int(T)
    inv = 1.0 / rho_sched
    a, b = sigma_max ** inv, sigma_min ** inv
    ramp = np.arange(T + 1, dtype=float) / T
    sigmas = (a + ramp * (b - a)) ** rho_sched
    sigmas[0], sigmas[-1] = sigma_max, sigma_min
    return Schedule(tuple(float(s) for s in sigmas), float(sigma_min),
                    float(sigma_max), float(rho_sched))


@dataclass(frozen=True)
class CorrectionConfig:
    """Parameters of one per-level feasibility correction.

    ``epsilon`` is interpreted per ``epsilon_mode``: ``"rms"`` scales it by
    ``sqrt(m)`` for ``m`` measurements, ``"raw"`` uses it as the ball radius.
    ``gamma_rule`` is ``"sigma_squared"`` or ``"constant"`` (uses ``gamma_value``);
    ``step_mode`` is ``"jvp"``, ``"fd"`` or ``"constant"`` (uses ``alpha``).
    """

    rho: float = 200.0
    K: int = 3
    S: int = 2
    epsilon: float = 0.05
    eta: float = 1e-3
    bt_shrink: float = 0.5
    bt_max: int = 20
    gamma_rule: str = "sigma_squared"
    gamma_value: float = 1.0
    step_mode: str = "jvp"
    alpha: float = 1e-3
    epsilon_mode: str = "rms"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError("K must be a non-negative integer")
        if int(self.S) != self.S or self.S < 1:
            raise ValueError("S must be a positive integer")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 < self.bt_shrink < 1:
            raise ValueError("bt_shrink must lie in (0, 1)")
        if int(self.bt_max) != self.bt_max or self.bt_max < 1:
            raise ValueError("bt_max must be a positive integer")
        if self.gamma_rule not in GAMMA_RULES:
            raise ValueError(f"gamma_rule must be one of {GAMMA_RULES}")
        if self.gamma_rule == "constant" and not self.gamma_value > 0:
            raise ValueError("constant gamma must be positive")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}")
        if self.step_mode == "constant" and not self.alpha > 0:
            raise ValueError("constant step size must be positive")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ValueError(f"epsilon_mode must be one of {EPSILON_MODES}")

    def radius(self, m: int) -> float:
        """Feasibility-ball radius for ``m`` measurements."""
        if self.epsilon_mode == "rms":
            return self.epsilon * math.sqrt(m)
        return self.epsilon

    def replace(self, **changes) -> "CorrectionConfig":
        return replace(self, **changes)


def gamma_at(config: CorrectionConfig, sigma_t: float) -> float:
    """Proximal weight at noise level ``sigma_t``."""
    if config.gamma_rule == "sigma_squared":
        return float(sigma_t) ** 2
    return float(config.gamma_value)


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian measurement noise with standard deviation ``beta``."""

    beta: float = 0.05

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")

    def sample(self, clean: np.ndarray, rng: "Rng") -> np.ndarray:
        clean = np.asarray(clean, dtype=float)
        if self.beta == 0:
            return clean.copy()
        return clean + self.beta * rng.normal(clean.shape)


_TWO_POW_53 = float(2 ** 53)


@dataclass
class Rng:
    """Counter-based generator (Philox4x64 keyed by ``(seed, stream)``).

    Gaussian draws use Box-Muller on the raw 64-bit words, so the stream only
    depends on the key and the draw order. Separate streams come from
    :meth:`split`; they never share a key with the parent.
    """

    seed: int
    stream: int = 0
    _bits: np.random.Philox = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64 or not 0 <= self.stream < 2 ** 64:
            raise ValueError("seed and stream must be unsigned 64-bit integers")
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def split(self, stream: int) -> "Rng":
        """Independent child stream; ``stream`` must be non-zero."""
        if stream == 0:
            raise ValueError("stream 0 is the root stream")
        return Rng(self.seed, (self.stream * 1_000_003 + stream) % 2 ** 64)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(int(n))

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws on ``[0, 1)`` with 53 random bits each."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(float) / _TWO_POW_53
        return u.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        words = self.raw(2 * pairs) >> np.uint64(11)
        # u1 in (0, 1] keeps the log finite
        u1 = (words[0::2].astype(float) + 1.0) / _TWO_POW_53
        u2 = words[1::2].astype(float) / _TWO_POW_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n].reshape(shape)
