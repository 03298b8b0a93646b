"""Per-level hard-constrained proximal correction.

Solves ``min_x 1/(2 gamma) ||x - anchor||^2  s.t.  ||A(x) - y|| <= eps`` by a
fixed number of scaled-ADMM iterations on the split ``v = A(x)``. The
``x``-update is a few steepest-descent steps on

    F(x) = 1/(2 gamma) ||x - anchor||^2 + rho/2 ||A(x) - b||^2,   b = v - u,

with the step length taken from the 1-D quadratic model of ``F`` along
``-grad F`` and refined by backtracking. Only VJPs and JVPs (or a single
forward probe) of ``A`` are needed; no adjoint is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CorrectionConfig
from .operators import ForwardOperator

__all__ = [
    "project_ball",
    "StepModel",
    "objective",
    "grad_f",
    "alpha_star",
    "alpha_fd",
    "backtrack",
    "TraceRow",
    "CorrectionResult",
    "admm_correct",
    "qdp_correct",
]


def project_ball(w, y, epsilon: float) -> np.ndarray:
    """Euclidean projection of ``w`` onto ``{v : ||v - y|| <= epsilon}``."""
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if w.shape != y.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {y.shape}")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    d = w - y
    dist = float(np.linalg.norm(d))
    if dist <= epsilon:
        return w.copy()
    return y + (epsilon / dist) * d


@dataclass
class StepModel:
    """Quantities of one steepest-descent step on ``F``.

    ``s = x - anchor``, ``r = A(x) - b``, ``g = grad F(x)``, ``jg`` the
    directional Jacobian term ``J_A(x) g`` (or its forward-difference
    surrogate), ``ax = A(x)``.
    """

    s: np.ndarray
    r: np.ndarray
    g: np.ndarray
    ax: np.ndarray
    jg: np.ndarray | None = None
    alpha: float = 0.0

    def value(self, gamma: float, rho: float) -> float:
        return 0.5 / gamma * float(self.s @ self.s) + 0.5 * rho * float(self.r @ self.r)


def objective(x, anchor, gamma: float, rho: float, b, op: ForwardOperator, ax=None) -> float:
    """``F(x)``; pass ``ax = A(x)`` to skip the forward call."""
    if ax is None:
        ax = op.apply(x)
    s = np.asarray(x, float) - anchor
    r = ax - b
    return 0.5 / gamma * float(s @ s) + 0.5 * rho * float(r @ r)


def grad_f(x, anchor, gamma: float, rho: float, b, op: ForwardOperator, ax=None) -> StepModel:
    """Gradient ``(1/gamma)(x - anchor) + rho J_A(x)^T (A(x) - b)`` and its pieces."""
    if not (gamma > 0 and rho > 0):
        raise ValueError("gamma and rho must be positive")
    x = np.asarray(x, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if x.shape != anchor.shape:
        raise ValueError("x and anchor differ in shape")
    if ax is None:
        ax = op.apply(x)
    s = x - anchor
    r = ax - b
    g = s / gamma + rho * op.vjp(x, r)
    return StepModel(s=s, r=r, g=g, ax=ax)


def alpha_star(model: StepModel, gamma: float, rho: float) -> float:
    """Minimizer of the quadratic model of ``F(x - alpha g)``.

    The numerator ``(1/gamma)<s, g> + rho <r, Jg>`` equals ``||g||^2`` exactly,
    so that form is used; the result is non-negative by construction.
    """
    if model.jg is None:
        raise ValueError("step model has no directional Jacobian term")
    gg = float(model.g @ model.g)
    if gg == 0.0:
        return 0.0
    den = gg / gamma + rho * float(model.jg @ model.jg)
    if not den > 0:
        return 0.0
    return max(gg / den, 0.0)


def alpha_fd(model: StepModel, delta_a, eta: float, gamma: float, rho: float) -> float:
    """Step from a forward probe ``delta_a = A(x + eta g) - A(x)``.

    Scaled by ``eta**2`` so nothing is divided by the small probe size.
    """
    delta_a = np.asarray(delta_a, dtype=float)
    num = eta * eta / gamma * float(model.s @ model.g) + eta * rho * float(model.r @ delta_a)
    den = eta * eta / gamma * float(model.g @ model.g) + rho * float(delta_a @ delta_a)
    if not den > 0:
        return 0.0
    return max(num / den, 0.0)


def backtrack(x, g, alpha0: float, f, bt_shrink: float = 0.5, bt_max: int = 20, f0=None):
    """Shrink ``alpha`` until ``f(x - alpha g) < f(x)``.

    Returns ``(alpha, x_new, count)``. ``count == bt_max`` means every trial
    failed; ``x_new`` is then ``x`` itself. A zero direction or a
    non-positive ``alpha0`` is a no-op with ``count == 0``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if alpha0 <= 0 or not np.any(g):
        return 0.0, x, 0
    if f0 is None:
        f0 = f(x)
    alpha = float(alpha0)
    for count in range(bt_max):
        trial = x - alpha * g
        if f(trial) < f0:
            return alpha, trial, count
        alpha *= bt_shrink
    return alpha, x, bt_max


@dataclass
class TraceRow:
    """One descent step: objective before/after, step, backtracking and gaps."""

    k: int
    s: int
    f_before: float
    f_after: float
    alpha: float
    backtracks: int
    accepted: bool
    evals: int
    primal_gap: float = math.nan
    feas_gap: float = math.nan


@dataclass
class CorrectionResult:
    """Corrected iterate, final split/dual variables and the per-step trace."""

    x: np.ndarray
    v: np.ndarray
    u: np.ndarray
    ax: np.ndarray
    radius: float
    trace: list[TraceRow] = field(default_factory=list)
    y: np.ndarray | None = None
    anchor: np.ndarray | None = None
    anchor_ax: np.ndarray | None = None

    @property
    def x_corr(self) -> np.ndarray:
        return self.x

    @property
    def residual(self) -> float:
        """Measurement misfit ``||A(x) - y||`` of the returned iterate."""
        return float(np.linalg.norm(self.ax - self.y))

    @property
    def rejected_steps(self) -> int:
        return sum(1 for row in self.trace if not row.accepted and row.evals > 0)


def _descent_step(x, ax, anchor, gamma, rho, b, op, config, k, s):
    model = grad_f(x, anchor, gamma, rho, b, op, ax=ax)
    f0 = model.value(gamma, rho)
    if not math.isfinite(f0):
        raise FloatingPointError(f"objective is not finite at step k={k}, s={s}")
    if config.step_mode == "jvp":
        model.jg = op.jvp(x, model.g)
        alpha0 = alpha_star(model, gamma, rho)
    elif config.step_mode == "fd":
        delta = op.fd_probe(x, model.g, config.eta, ax=ax)
        model.jg = delta / config.eta
        alpha0 = alpha_fd(model, delta, config.eta, gamma, rho)
    else:
        alpha0 = config.alpha
    model.alpha = alpha0

    seen = {}

    def f(xt):
        at = op.apply(xt)
        seen["n"] = seen.get("n", 0) + 1
        seen["ax"] = at
        return objective(xt, anchor, gamma, rho, b, op, ax=at)

    alpha, x_new, count = backtrack(x, model.g, alpha0, f, config.bt_shrink, config.bt_max, f0=f0)
    evals = seen.get("n", 0)
    accepted = evals > 0 and count < config.bt_max
    if accepted:
        ax_new = seen["ax"]
        f1 = objective(x_new, anchor, gamma, rho, b, op, ax=ax_new)
    else:
        x_new, ax_new, f1 = x, ax, f0
    row = TraceRow(k=k, s=s, f_before=f0, f_after=f1, alpha=alpha if accepted else 0.0,
                   backtracks=count, accepted=accepted, evals=evals)
    return x_new, ax_new, row


def admm_correct(anchor, y, op: ForwardOperator, gamma: float,
                 config: CorrectionConfig) -> CorrectionResult:
    """Run ``config.K`` scaled-ADMM iterations from ``x = anchor, v = A(x), u = 0``.

    Each iteration takes ``config.S`` backtracked gradient steps on ``F`` with
    ``b = v - u`` held fixed, then ``v <- proj(A(x) + u)`` and
    ``u <- u + A(x) - v``. ``A(x)`` is cached between these updates.
    """
    anchor = np.asarray(anchor, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != op.output_dim:
        raise ValueError(f"y has length {y.size}, operator outputs {op.output_dim}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    eps = config.radius(op.output_dim)
    rho = config.rho

    x = anchor.copy()
    ax = op.apply(x)
    anchor_ax = ax
    v = ax.copy()
    u = np.zeros_like(v)
    trace = []
    for k in range(config.K):
        b = v - u
        rows = []
        for s in range(config.S):
            x, ax, row = _descent_step(x, ax, anchor, gamma, rho, b, op, config, k, s)
            rows.append(row)
        v = project_ball(ax + u, y, eps)
        u = u + ax - v
        primal = float(np.linalg.norm(ax - v))
        feas = float(np.linalg.norm(v - y))
        for row in rows:
            row.primal_gap, row.feas_gap = primal, feas
        trace.extend(rows)
    return CorrectionResult(x=x, v=v, u=u, ax=ax, radius=eps, trace=trace, y=y,
                            anchor=anchor, anchor_ax=anchor_ax)


def qdp_correct(anchor, y, op: ForwardOperator, gamma: float, beta: float, steps: int,
                config: CorrectionConfig) -> CorrectionResult:
    """Unsplit quadratic-penalty baseline.

    Backtracked gradient descent on
    ``1/(2 gamma) ||x - anchor||^2 + 1/(2 beta^2) ||A(x) - y||^2`` with the same
    step-size machinery as :func:`admm_correct` (``b = y``, ``rho = 1/beta^2``).
    No projection takes place, so ``v`` is just ``A(x)``.
    """
    if not beta > 0:
        raise ValueError("the penalty baseline needs beta > 0")
    anchor = np.asarray(anchor, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != op.output_dim:
        raise ValueError(f"y has length {y.size}, operator outputs {op.output_dim}")
    rho = 1.0 / (beta * beta)
    eps = config.radius(op.output_dim)
    x = anchor.copy()
    ax = op.apply(x)
    anchor_ax = ax
    trace = []
    per = max(config.S, 1)
    for i in range(int(steps)):
        x, ax, row = _descent_step(x, ax, anchor, gamma, rho, y, op, config, i // per, i % per)
        row.primal_gap = 0.0
        row.feas_gap = float(np.linalg.norm(ax - y))
        trace.append(row)
    return CorrectionResult(x=x, v=ax.copy(), u=np.zeros_like(ax), ax=ax, radius=eps,
                            trace=trace, y=y, anchor=anchor, anchor_ax=anchor_ax)
