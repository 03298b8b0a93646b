import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feasprox import (CorrectionConfig, KlBoundInput, admm_correct, alpha_star, grad_f,
                      golden_section_linesearch, kkt_residual, kl_gaussian_injected, mse,
                      objective, oracle_constrained_prox, psnr)
from feasprox.operators import MatrixOp


def _instance(n, m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n)) / math.sqrt(n)
    x0 = rng.normal(size=n)
    noise = 0.1 * rng.normal(size=m)
    return A, A @ x0 + noise, x0 + 0.5 * rng.normal(size=n), float(np.linalg.norm(noise))


def test_kkt_at_feasible_anchor():
    A, y, _, eps = _instance(6, 4, 0)
    x = np.linalg.lstsq(A, y, rcond=None)[0]
    rep = kkt_residual(x, A @ x, np.zeros(4), x, y, MatrixOp(A), 1.0, eps, 1.0)
    assert rep.lambda_star == 0.0 and rep.stationarity_norm == 0.0
    assert rep.complementarity == 0.0 and rep.primal_gap == 0.0 and rep.feasible


@pytest.fixture(scope="module")
def converged():
    A, y, anchor, eps = _instance(8, 5, 1)
    op = MatrixOp(A)
    cfg = CorrectionConfig(rho=1.0, K=500, S=1, epsilon=eps, epsilon_mode="raw")
    res = admm_correct(anchor, y, op, 1.0, cfg)
    return A, y, anchor, eps, op, res


def test_kkt_at_converged_admm(converged):
    A, y, anchor, eps, op, res = converged
    rep = kkt_residual(res.x, res.v, res.u, anchor, y, op, 1.0, eps, 1.0)
    _, lam = oracle_constrained_prox(anchor, y, A, 1.0, eps)
    assert rep.active
    assert rep.stationarity_norm <= 1e-6
    assert abs(rep.complementarity) <= 1e-8
    # the oracle multiplier weights the squared misfit; scale it to the norm constraint
    assert rep.lambda_star == pytest.approx(lam * eps, rel=1e-4)


def test_kkt_detects_perturbation(converged):
    A, y, anchor, eps, op, res = converged
    base = kkt_residual(res.x, res.v, res.u, anchor, y, op, 1.0, eps, 1.0)
    nudge = 1e-2 * np.random.default_rng(2).normal(size=res.x.size)
    moved = kkt_residual(res.x + nudge, res.v, res.u, anchor, y, op, 1.0, eps, 1.0)
    assert moved.stationarity_norm >= 10 * base.stationarity_norm


def test_kl_examples():
    z = np.zeros(3)
    assert kl_gaussian_injected(KlBoundInput(z, np.zeros((3, 3)), z, 1.0)) == (0.0, 0.0)
    exact, bound = kl_gaussian_injected(KlBoundInput(np.array([1.0, 0.0]), np.zeros((2, 2)),
                                                     np.zeros(2), 1.0))
    assert exact == bound == pytest.approx(0.5)
    exact, bound = kl_gaussian_injected(KlBoundInput(np.zeros(1), np.eye(1), np.zeros(1), 1.0))
    with mpmath.workdps(30):
        ref = float((1 - mpmath.log(2)) / 2)
    assert exact == pytest.approx(ref, rel=1e-14)
    assert exact == pytest.approx(0.15342640972002734529, rel=1e-14)
    assert bound == pytest.approx(0.25)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2 ** 32 - 1), st.floats(0.05, 20.0))
def test_kl_exact_never_exceeds_bound(d, seed, sigma):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(d, rng.integers(1, d + 1)))
    inp = KlBoundInput(rng.normal(size=d), B @ B.T, rng.normal(size=d), sigma)
    exact, bound = kl_gaussian_injected(inp)
    assert 0.0 <= exact <= bound


def test_kl_bound_decreases_with_sigma():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(5, 5))
    m, c = rng.normal(size=5), rng.normal(size=5)
    vals = [kl_gaussian_injected(KlBoundInput(m, B @ B.T, c, s)) for s in (0.5, 1, 2, 4, 1e3)]
    bounds = [b for _, b in vals]
    assert all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))
    assert vals[-1][0] < 1e-5


def test_kl_rejects_bad_covariance():
    with pytest.raises(ValueError):
        kl_gaussian_injected(KlBoundInput(np.zeros(2), -np.eye(2), np.zeros(2), 1.0))
    with pytest.raises(ValueError):
        kl_gaussian_injected(KlBoundInput(np.zeros(2), np.eye(2), np.zeros(2), 0.0))


def test_oracle_examples():
    A = np.eye(2)
    x, lam = oracle_constrained_prox([0.5, 0.0], np.zeros(2), A, 1.0, 1.0)
    assert np.array_equal(x, [0.5, 0.0]) and lam == 0.0
    x, lam = oracle_constrained_prox([2.0, 0.0], np.zeros(2), A, 1.0, 1.0)
    assert np.allclose(x, [1.0, 0.0], atol=1e-9) and lam == pytest.approx(1.0, rel=1e-8)


def test_oracle_satisfies_kkt():
    A, y, anchor, eps = _instance(8, 5, 4)
    gamma = 0.7
    x, lam = oracle_constrained_prox(anchor, y, A, gamma, eps)
    res = A @ x - y
    assert abs(np.linalg.norm(res) - eps) <= 1e-9
    nu = res / np.linalg.norm(res)
    assert np.linalg.norm((x - anchor) / gamma + lam * np.linalg.norm(res) * A.T @ nu) <= 1e-9


def test_golden_section_examples():
    assert golden_section_linesearch(lambda a: (a - 0.3) ** 2, 0.0, 1.0) == pytest.approx(0.3, abs=1e-8)
    assert golden_section_linesearch(lambda a: a, 0.0, 1.0) == pytest.approx(0.0, abs=1e-9)
    rng = np.random.default_rng(5)
    op = MatrixOp(rng.normal(size=(4, 6)))
    x, anchor, b = rng.normal(size=6), rng.normal(size=6), rng.normal(size=4)
    model = grad_f(x, anchor, 0.5, 3.0, b, op)
    model.jg = op.jvp(x, model.g)
    got = golden_section_linesearch(
        lambda t: objective(x - t * model.g, anchor, 0.5, 3.0, b, op), 0.0, 1.0, 1e-12)
    assert got == pytest.approx(alpha_star(model, 0.5, 3.0), abs=1e-6)
    with pytest.raises(ValueError):
        golden_section_linesearch(lambda a: a, 1.0, 0.0)


def test_psnr_and_mse():
    x = np.array([0.1, -0.4, 0.9])
    assert mse(x, x) == 0.0 and psnr(x, x) == math.inf
    ref = np.zeros(5)
    assert mse(ref + 0.1, ref) == pytest.approx(0.01)
    assert psnr(ref + 0.1, ref) == pytest.approx(10 * math.log10(400), rel=1e-12)
    assert psnr(ref + 0.1, ref) == pytest.approx(26.020599913279624, rel=1e-12)
    perm = np.random.default_rng(0).permutation(3)
    ref3 = np.array([0.0, 0.2, 0.5])
    assert psnr(x[perm], ref3[perm]) == pytest.approx(psnr(x, ref3), rel=1e-14)
    with pytest.raises(ValueError):
        mse(np.zeros(2), np.zeros(3))
