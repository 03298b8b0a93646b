"""Annealed outer loops around the per-level correction.

At every level the denoiser proposes an anchor, the anchor is corrected into
the measurement feasibility ball, and the corrected estimate is re-noised at
the next level's sigma. The latent variant runs the same loop on ``z`` with
the operator composed with the decoder; the hybrid switches from pixel to
latent corrections once ``sigma_t <= sigma_switch``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import CorrectionConfig, Rng, Schedule, gamma_at
from .correction import CorrectionResult, admm_correct
from .operators import ForwardOperator
from .priors import LinearAutoencoder

__all__ = [
    "reanneal",
    "LevelRecord",
    "RunRecord",
    "HybridConfig",
    "DecodedOperator",
    "compose_decoder",
    "run_pixel",
    "run_latent_hybrid",
]

Denoiser = Callable[[np.ndarray, float], np.ndarray]
Corrector = Callable[[np.ndarray, np.ndarray, ForwardOperator, float, CorrectionConfig],
                     CorrectionResult]


def reanneal(x_corr, sigma_next: float, rng: Rng) -> np.ndarray:
    """``x_corr + sigma_next * xi`` with ``xi`` standard normal."""
    if sigma_next < 0:
        raise ValueError("sigma_next must be non-negative")
    x_corr = np.asarray(x_corr, dtype=float)
    if sigma_next == 0:
        return x_corr.copy()
    return x_corr + sigma_next * rng.normal(x_corr.shape)


@dataclass
class LevelRecord:
    index: int
    sigma: float
    sigma_next: float
    mode: str
    gamma: float
    anchor_residual: float
    residual: float
    feas_gap: float
    primal_gap: float
    steps: int
    rejected: int
    f_first: float
    f_last: float
    calls: dict = field(default_factory=dict)
    correction: CorrectionResult | None = field(default=None, repr=False)


@dataclass
class RunRecord:
    """Per-level diagnostics plus the final estimate.

    ``calls`` on each level holds operator call counts for that level when the
    operator passed in keeps a ``counts`` mapping (see ``CountingOperator``).

    ``output`` is the last corrected estimate; ``output_noised`` is the same
    estimate after the final re-annealing step with ``sigma_0``.
    """

    levels: list[LevelRecord]
    output: np.ndarray
    output_noised: np.ndarray
    seed: int

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "levels": len(self.levels),
            "modes": sorted({lv.mode for lv in self.levels}),
            "final_residual": self.levels[-1].residual if self.levels else math.nan,
            "final_feas_gap": self.levels[-1].feas_gap if self.levels else math.nan,
            "rejected_steps": sum(lv.rejected for lv in self.levels),
        }


@dataclass(frozen=True)
class HybridConfig:
    """Pixel corrections while ``sigma_t > sigma_switch``, latent ones afterwards."""

    sigma_switch: float
    pixel_cfg: CorrectionConfig
    latent_cfg: CorrectionConfig

    def __post_init__(self):
        if not self.sigma_switch >= 0:
            raise ValueError("sigma_switch must be non-negative")


class DecodedOperator(ForwardOperator):
    """``A o D`` for a linear decoder; derivatives follow the chain rule."""

    def __init__(self, op: ForwardOperator, ae: LinearAutoencoder):
        if op.input_dim != ae.dim:
            raise ValueError(f"operator expects {op.input_dim} pixels, decoder yields {ae.dim}")
        self.op, self.ae = op, ae
        self.input_dim = ae.latent_dim
        self.output_dim = op.output_dim
        self.has_exact_jvp = op.has_exact_jvp
        self.linear = op.linear
        self.default_eta = op.default_eta

    def _apply(self, z):
        return self.op.apply(self.ae.decode(z))

    def _vjp(self, z, r):
        return self.ae.vjp(z, self.op.vjp(self.ae.decode(z), r))

    def _jvp(self, z, g):
        return self.op.jvp(self.ae.decode(z), self.ae.jvp(z, g))


def compose_decoder(op: ForwardOperator, ae: LinearAutoencoder) -> DecodedOperator:
    return DecodedOperator(op, ae)


def _counts(op):
    counts = getattr(op, "counts", None)
    return dict(counts) if counts is not None else {}


def _level(index, sigma, sigma_next, mode, gamma, y, result, before, after):
    trace = result.trace
    return LevelRecord(
        index=index, sigma=sigma, sigma_next=sigma_next, mode=mode, gamma=gamma,
        anchor_residual=float(np.linalg.norm(result.anchor_ax - y)),
        residual=result.residual,
        feas_gap=float(np.linalg.norm(result.v - y)),
        primal_gap=float(np.linalg.norm(result.ax - result.v)),
        steps=len(trace),
        rejected=result.rejected_steps,
        f_first=trace[0].f_before if trace else math.nan,
        f_last=trace[-1].f_after if trace else math.nan,
        calls={k: after[k] - before.get(k, 0) for k in after},
        correction=result,
    )


def run_pixel(y, op: ForwardOperator, denoiser: Denoiser, schedule: Schedule,
              config: CorrectionConfig, rng: Rng,
              corrector: Corrector | None = None) -> RunRecord:
    """Pixel-space annealed correction over ``schedule.T`` levels.

    ``corrector`` replaces :func:`admm_correct` (same signature); the ablation
    harness uses it to plug in the penalty baseline.
    """
    corrector = corrector or admm_correct
    y = np.asarray(y, dtype=float).reshape(-1)
    sigmas = schedule.sigmas
    x = sigmas[0] * rng.normal((op.input_dim,))
    levels = []
    x_corr = x
    for i in range(schedule.T):
        sigma, sigma_next = sigmas[i], sigmas[i + 1]
        anchor = np.asarray(denoiser(x, sigma), dtype=float)
        gamma = gamma_at(config, sigma)
        before = _counts(op)
        try:
            result = corrector(anchor, y, op, gamma, config)
        except FloatingPointError as exc:
            raise FloatingPointError(f"level {i} (sigma={sigma:g}): {exc}") from exc
        x_corr = result.x
        levels.append(_level(i, sigma, sigma_next, "pixel", gamma, y, result, before, _counts(op)))
        x = reanneal(x_corr, sigma_next, rng)
    return RunRecord(levels=levels, output=x_corr, output_noised=x, seed=rng.seed)


def run_latent_hybrid(y, op: ForwardOperator, latent_denoiser: Denoiser,
                      ae: LinearAutoencoder, schedule: Schedule, hybrid: HybridConfig,
                      rng: Rng) -> RunRecord:
    """Latent annealing with early pixel corrections.

    While ``sigma_t > sigma_switch`` the decoded anchor is corrected in pixel
    space against ``op`` and re-encoded; afterwards the latent anchor is
    corrected against ``op o decode``. Noise is always injected in latent space.
    """
    if op.input_dim != ae.dim:
        raise ValueError("autoencoder pixel dimension does not match the operator")
    y = np.asarray(y, dtype=float).reshape(-1)
    latent_op = compose_decoder(op, ae)
    sigmas = schedule.sigmas
    z = sigmas[0] * rng.normal((ae.latent_dim,))
    z_corr = z
    levels = []
    for i in range(schedule.T):
        sigma, sigma_next = sigmas[i], sigmas[i + 1]
        z_anchor = np.asarray(latent_denoiser(z, sigma), dtype=float)
        before = _counts(op)
        try:
            if sigma > hybrid.sigma_switch:
                cfg = hybrid.pixel_cfg
                gamma = gamma_at(cfg, sigma)
                x_anchor = ae.decode(z_anchor)
                result = admm_correct(x_anchor, y, op, gamma, cfg)
                z_corr = ae.encode(result.x)
                mode = "pixel"
            else:
                cfg = hybrid.latent_cfg
                gamma = gamma_at(cfg, sigma)
                result = admm_correct(z_anchor, y, latent_op, gamma, cfg)
                z_corr = result.x
                mode = "latent"
        except FloatingPointError as exc:
            raise FloatingPointError(f"level {i} (sigma={sigma:g}): {exc}") from exc
        levels.append(_level(i, sigma, sigma_next, mode, gamma, y, result, before, _counts(op)))
        z = reanneal(z_corr, sigma_next, rng)
    return RunRecord(levels=levels, output=ae.decode(z_corr), output_noised=ae.decode(z),
                     seed=rng.seed)
