"""Analytic denoisers standing in for a trained diffusion prior.

Each prior returns the exact posterior mean ``E[x0 | xt]`` under
``xt = x0 + sigma * xi``. Covariances are eigendecomposed once at
construction, which makes every ``sigma`` a diagonal solve.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

__all__ = ["GaussianPrior", "GmmPrior", "LinearAutoencoder", "latent_prior",
           "squared_exponential_cov"]


def _psd_eig(C, tol=1e-12):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("covariance must be square")
    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    if np.max(np.abs(C - C.T), initial=0.0) > tol * scale:
        raise ValueError("covariance is not symmetric")
    lam, Q = np.linalg.eigh(0.5 * (C + C.T))
    if lam.size and lam.min() < -tol * scale:
        raise ValueError(f"covariance has a negative eigenvalue {lam.min():.3g}")
    return np.clip(lam, 0.0, None), Q


class GaussianPrior:
    """``N(mean, cov)`` prior; ``cov`` may be singular."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float).reshape(-1)
        self.cov = np.asarray(cov, dtype=float)
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError("mean and covariance dimensions differ")
        if self.dim > 4096:
            raise ValueError("dense priors are capped at dimension 4096")
        self.eigvals, self.eigvecs = _psd_eig(self.cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def denoise(self, xt, sigma: float) -> np.ndarray:
        """Posterior mean ``mean + C (C + sigma^2 I)^{-1} (xt - mean)``."""
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        xt = np.asarray(xt, dtype=float).reshape(-1)
        Q, lam = self.eigvecs, self.eigvals
        coef = (Q.T @ (xt - self.mean)) * (lam / (lam + sigma * sigma))
        return self.mean + Q @ coef

    __call__ = denoise

    def posterior_cov(self, sigma: float) -> np.ndarray:
        """Covariance of ``x0 | xt``: ``C - C (C + sigma^2 I)^{-1} C``."""
        lam = self.eigvals
        post = lam * sigma * sigma / (lam + sigma * sigma)
        cov = (self.eigvecs * post) @ self.eigvecs.T
        return 0.5 * (cov + cov.T)

    def score(self, xt, sigma: float) -> np.ndarray:
        """Gradient of ``log p_sigma`` at ``xt``."""
        xt = np.asarray(xt, dtype=float).reshape(-1)
        Q, lam = self.eigvecs, self.eigvals
        return -Q @ ((Q.T @ (xt - self.mean)) / (lam + sigma * sigma))

    def log_density(self, xt, sigma: float) -> float:
        """Log density of the noised marginal ``N(mean, C + sigma^2 I)``."""
        xt = np.asarray(xt, dtype=float).reshape(-1)
        var = self.eigvals + sigma * sigma
        proj = self.eigvecs.T @ (xt - self.mean)
        return float(-0.5 * (np.sum(proj * proj / var) + np.sum(np.log(var))
                             + self.dim * np.log(2 * np.pi)))

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        shape = (self.dim,) if n is None else (n, self.dim)
        xi = rng.normal(shape)
        root = self.eigvecs * np.sqrt(self.eigvals)
        return self.mean + xi @ root.T

    def posterior_mean(self, H, y, beta: float) -> np.ndarray:
        """``E[x0 | y]`` for ``y = H x0 + beta * n`` with dense ``H``."""
        H = np.asarray(H, dtype=float)
        CHt = self.cov @ H.T
        S = H @ CHt + beta * beta * np.eye(H.shape[0])
        return self.mean + CHt @ np.linalg.solve(S, y - H @ self.mean)


class GmmPrior:
    """Gaussian mixture prior."""

    def __init__(self, weights, components):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or w.size != len(components):
            raise ValueError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        self.weights = w
        self.components = [c if isinstance(c, GaussianPrior) else GaussianPrior(*c)
                           for c in components]
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("components have different dimensions")
        self.dim = dims.pop()

    def responsibilities(self, xt, sigma: float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        logp = np.array([c.log_density(xt, sigma) for c in self.components]) + logw
        total = logsumexp(logp)
        if not np.isfinite(total):
            # every component underflowed: fall back to the nearest one
            r = np.zeros(len(self.components))
            r[int(np.argmin(self._mahalanobis(xt, sigma)))] = 1.0
            return r
        return np.exp(logp - total)

    def _mahalanobis(self, xt, sigma):
        out = []
        for c in self.components:
            proj = c.eigvecs.T @ (np.asarray(xt, float).reshape(-1) - c.mean)
            out.append(float(np.sum(proj * proj / (c.eigvals + sigma * sigma))))
        return np.array(out)

    def denoise(self, xt, sigma: float) -> np.ndarray:
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        r = self.responsibilities(xt, sigma)
        return sum(rj * c.denoise(xt, sigma) for rj, c in zip(r, self.components) if rj > 0)

    __call__ = denoise


class LinearAutoencoder:
    """``encode(x) = W^T (x - c)``, ``decode(z) = W z + c``; ``W`` has orthonormal columns."""

    def __init__(self, W, offset=None, tol=1e-10):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[1] > W.shape[0] or W.size == 0:
            raise ValueError("W must be a tall (dim x k) matrix")
        gram_err = np.max(np.abs(W.T @ W - np.eye(W.shape[1])))
        if gram_err > tol:
            raise ValueError(f"W columns are not orthonormal (max |W^T W - I| = {gram_err:.2e})")
        self.W = W
        self.offset = np.zeros(W.shape[0]) if offset is None else np.asarray(offset, float).reshape(-1)
        if self.offset.size != W.shape[0]:
            raise ValueError("offset length must equal the pixel dimension")

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def identity(cls, n: int) -> "LinearAutoencoder":
        return cls(np.eye(n))

    @classmethod
    def random(cls, n: int, k: int, rng, offset=None) -> "LinearAutoencoder":
        Q, R = np.linalg.qr(rng.normal((n, k)))
        return cls(Q * np.sign(np.diag(R)), offset)

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"pixel vector has length {x.size}, expected {self.dim}")
        return self.W.T @ (x - self.offset)

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.latent_dim:
            raise ValueError(f"latent vector has length {z.size}, expected {self.latent_dim}")
        return self.W @ z + self.offset

    def jvp(self, z, g) -> np.ndarray:
        """Decoder Jacobian times ``g`` (``W g``)."""
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.size != self.latent_dim:
            raise ValueError("tangent length mismatch")
        return self.W @ g

    def vjp(self, z, r) -> np.ndarray:
        """Decoder Jacobian transpose times ``r`` (``W^T r``)."""
        r = np.asarray(r, dtype=float).reshape(-1)
        if r.size != self.dim:
            raise ValueError("cotangent length mismatch")
        return self.W.T @ r


def latent_prior(prior: GaussianPrior, ae: LinearAutoencoder) -> GaussianPrior:
    """Pushforward of a pixel Gaussian prior through ``ae.encode``."""
    W = ae.W
    cov = W.T @ prior.cov @ W
    return GaussianPrior(W.T @ (prior.mean - ae.offset), 0.5 * (cov + cov.T))


def squared_exponential_cov(n: int, length: float, scale: float = 0.5,
                            nugget: float = 1e-4, periodic: bool = True) -> np.ndarray:
    """Stationary squared-exponential covariance on a 1-D grid."""
    i = np.arange(n)
    d = (i[:, None] - i[None, :]).astype(float)
    if periodic:
        # summing over periodic images keeps the kernel positive semidefinite;
        # truncating to the nearest image does not when length is close to n
        reach = int(math.ceil(8.0 * length / n)) + 1
        shifts = np.arange(-reach, reach + 1) * n
        k = np.exp(-0.5 * ((d[None] + shifts[:, None, None]) / length) ** 2).sum(axis=0)
    else:
        k = np.exp(-0.5 * (d / length) ** 2)
    return scale ** 2 * k + nugget * np.eye(n)
