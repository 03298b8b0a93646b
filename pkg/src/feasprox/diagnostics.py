"""Independent oracles and optimality checks for the correction step."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .operators import ForwardOperator

__all__ = [
    "KktReport",
    "kkt_residual",
    "KlBoundInput",
    "kl_gaussian_injected",
    "oracle_constrained_prox",
    "golden_section_linesearch",
    "oracle_anneal",
    "mse",
    "psnr",
]


@dataclass
class KktReport:
    lambda_star: float
    stationarity_norm: float
    complementarity: float
    primal_gap: float
    feasible: bool
    active: bool

    def as_dict(self) -> dict:
        return asdict(self)


def kkt_residual(x, v, u, anchor, y, op: ForwardOperator, gamma: float, epsilon: float,
                 rho: float, active_tol: float = 1e-6) -> KktReport:
    """KKT residuals of the constrained proximal problem at an ADMM state.

    With the constraint active the multiplier is ``rho ||u||`` and the normal
    direction is ``u / ||u||``, so the stationarity residual is
    ``(1/gamma)(x - anchor) + rho J^T u``. The constraint counts as active when
    ``||A(x) - y|| >= epsilon (1 - active_tol)``; the stationarity residual
    always uses ``rho u``, which is zero at interior fixed points.
    """
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    ax = op.apply(x)
    misfit = float(np.linalg.norm(ax - y))
    active = misfit >= epsilon * (1.0 - active_tol)
    # rho * u is the multiplier vector lambda * nu at a fixed point; it vanishes
    # in the interior, so it is used for stationarity either way
    lam = rho * float(np.linalg.norm(u)) if active else 0.0
    stat = (x - anchor) / gamma + op.vjp(x, rho * u)
    return KktReport(
        lambda_star=lam,
        stationarity_norm=float(np.linalg.norm(stat)),
        complementarity=lam * (misfit - epsilon),
        primal_gap=float(np.linalg.norm(ax - np.asarray(v, float))),
        feasible=misfit <= epsilon + 1e-9 * (1.0 + epsilon),
        active=bool(active),
    )


@dataclass
class KlBoundInput:
    m_t: np.ndarray
    Sigma_t: np.ndarray
    x_corr: np.ndarray
    sigma_next: float


def _x_minus_log1p(x: np.ndarray) -> np.ndarray:
    # x - log(1 + x) >= 0, evaluated without cancellation for small x
    x = np.asarray(x, float)
    out = x - np.log1p(x)
    small = x < 1e-2
    if np.any(small):
        xs = x[small]
        series = np.zeros_like(xs)
        for k in range(10, 1, -1):
            series = xs * ((-1) ** k / k + series)
        out[small] = xs * series
    return out


def kl_gaussian_injected(inp: KlBoundInput) -> tuple[float, float]:
    """``KL(N(m, Sigma + s^2 I) || N(x_corr, s^2 I))`` and its closed-form bound.

    The bound is ``||m - x_corr||^2 / (2 s^2) + ||Sigma||_F^2 / (4 s^4)``;
    both quantities are assembled from the same clamped eigenvalues so the
    termwise inequality ``t - log(1 + t) <= t^2 / 2`` carries over in floats.
    """
    s2 = float(inp.sigma_next) ** 2
    if not s2 > 0:
        raise ValueError("sigma_next must be positive")
    S = np.atleast_2d(np.asarray(inp.Sigma_t, float))
    d = np.asarray(inp.m_t, float).reshape(-1) - np.asarray(inp.x_corr, float).reshape(-1)
    if S.shape != (d.size, d.size):
        raise ValueError("covariance and mean dimensions differ")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > 1e-12 * scale:
        raise ValueError("Sigma_t is not symmetric")
    lam = np.linalg.eigvalsh(0.5 * (S + S.T))
    if lam.min() < -1e-12 * scale:
        raise ValueError(f"Sigma_t is not positive semidefinite (min eigenvalue {lam.min():.3g})")
    t = np.clip(lam, 0.0, None) / s2
    mean_term = float(d @ d) / (2.0 * s2)
    exact = mean_term + 0.5 * float(np.sum(_x_minus_log1p(t)))
    bound = mean_term + 0.25 * float(np.sum(t * t))
    return exact, bound


def oracle_constrained_prox(anchor, y, A, gamma: float, epsilon: float,
                            max_doublings: int = 200) -> tuple[np.ndarray, float]:
    """Exact solution of the constrained proximal problem for a dense linear ``A``.

    On the active branch ``x(lam) = ((1/gamma) I + lam A^T A)^{-1}
    ((1/gamma) anchor + lam A^T y)`` and ``||A x(lam) - y||`` decreases in
    ``lam``. The multiplier is bracketed by doubling from ``[0, 1]`` and then
    located with Brent's method to full double precision. One
    eigendecomposition of ``A^T A`` turns every ``x(lam)`` into a diagonal solve.
    """
    A = np.asarray(A, float)
    anchor = np.asarray(anchor, float).reshape(-1)
    y = np.asarray(y, float).reshape(-1)
    if np.linalg.norm(A @ anchor - y) <= epsilon:
        return anchor.copy(), 0.0
    mu, Q = np.linalg.eigh(A.T @ A)
    mu = np.clip(mu, 0.0, None)
    qa, qy, AQ = Q.T @ anchor / gamma, Q.T @ (A.T @ y), A @ Q
    inv_gamma = 1.0 / gamma

    def excess(lam):
        d = AQ @ ((qa + lam * qy) / (inv_gamma + lam * mu)) - y
        return math.sqrt(float(d @ d)) - epsilon

    # doubling bracket, 32 candidates lam = 2^j per vectorized evaluation
    lo, hi = 0.0, None
    for j0 in range(0, max_doublings + 1, 32):
        lams = np.ldexp(1.0, np.arange(j0, j0 + 32))[:, None]
        d = ((qa + lams * qy) / (inv_gamma + lams * mu)) @ AQ.T - y
        inside = np.flatnonzero(np.sqrt(np.einsum("ij,ij->i", d, d)) <= epsilon)
        if inside.size:
            i = int(inside[0])
            hi = float(lams[i, 0])
            lo = float(lams[i - 1, 0]) if i > 0 else lo
            break
        lo = float(lams[-1, 0])
    if hi is None:
        raise RuntimeError(f"multiplier bracket exhausted at lambda={lo:.3g}")
    lam = brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return Q @ ((qa + lam * qy) / (inv_gamma + lam * mu)), float(lam)


def oracle_anneal(y, A, denoiser, sigmas, radius: float, rng) -> np.ndarray:
    """Annealed loop with the exact constrained prox in place of ADMM.

    Uses the same draw order as ``run_pixel`` (initial noise, then one
    re-annealing draw per level), so equal seeds give comparable trajectories.
    Returns the last corrected estimate.
    """
    A = np.asarray(A, float)
    x = sigmas[0] * rng.normal((A.shape[1],))
    x_corr = x
    for i in range(len(sigmas) - 1):
        anchor = np.asarray(denoiser(x, sigmas[i]), float)
        x_corr, _ = oracle_constrained_prox(anchor, y, A, sigmas[i] ** 2, radius)
        x = x_corr + sigmas[i + 1] * rng.normal(x_corr.shape) if sigmas[i + 1] > 0 else x_corr
    return x_corr


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_linesearch(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]`` to within ``tol``."""
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if not (math.isfinite(fc) and math.isfinite(fd)):
            raise FloatingPointError("non-finite objective value in line search")
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def mse(x, ref) -> float:
    x = np.asarray(x, float)
    ref = np.asarray(ref, float)
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    diff = x - ref
    return float(np.mean(diff * diff))


def psnr(x, ref, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    err = mse(x, ref)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)
