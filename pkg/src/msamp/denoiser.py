"""Bernoulli-Gaussian posterior-mean denoiser and its divergence-free map.

All row-wise functions accept a single row of shape (F,) or a stack of
rows of shape (n, F). Jacobians are Wirtinger Jacobians laid out as
``J[..., i, j] = d out_j / d r_i`` with d/dr = (d/dx - i d/dy) / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._linalg import crandn, herm, logdet_pd, psd_sqrt
from .model import sample_bernoulli_gaussian


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, matrix=None):
        super().__init__(msg)
        self.matrix = matrix


@dataclass(frozen=True, eq=False)
class DenoiserParams:
    """Prior (lambda, Sigma) and effective noise covariance C of one source."""

    lambda_u: float
    Sigma_u: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.lambda_u <= 1.0:
            raise ValueError(f"lambda {self.lambda_u} outside (0, 1]")
        S = herm(np.asarray(self.Sigma_u, dtype=complex))
        C = herm(np.asarray(self.C, dtype=complex))
        try:
            logdet_c = logdet_pd(C)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("effective noise covariance C is not positive definite", C) from None
        SC = S + C
        C_inv = np.linalg.inv(C)
        SC_inv = np.linalg.inv(SC)
        object.__setattr__(self, "Sigma_u", S)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "W", SC_inv @ S)
        object.__setattr__(self, "A", herm(C_inv - SC_inv))
        object.__setattr__(self, "log_kappa", logdet_pd(SC) - logdet_c)

    @property
    def F(self) -> int:
        return self.C.shape[0]


def _rows(r):
    return np.asarray(r, dtype=complex)


def log_likelihood_ratio(r, p: DenoiserParams) -> np.ndarray:
    r = _rows(r)
    quad = np.real(np.einsum("...i,ij,...j->...", r, p.A, r.conj()))
    return p.log_kappa - quad


def likelihood_ratio(r, p: DenoiserParams) -> np.ndarray:
    """Lambda(r; C) = det(Sigma+C)/det(C) * exp(-r (C^-1 - (Sigma+C)^-1) r^H)."""
    return np.exp(log_likelihood_ratio(r, p))


def _weight(r, p: DenoiserParams) -> np.ndarray:
    # w = lam / (lam + (1 - lam) Lambda), evaluated as a logistic in log domain
    if p.lambda_u == 1.0:
        return np.ones(np.shape(r)[:-1])
    z = log_likelihood_ratio(r, p) + np.log1p(-p.lambda_u) - np.log(p.lambda_u)
    return expit(-z)


def eta_posterior_mean(r, p: DenoiserParams) -> np.ndarray:
    """E[x | r = x + phi] for x ~ Bernoulli(lambda) * CN(0, Sigma), phi ~ CN(0, C)."""
    r = _rows(r)
    return _weight(r, p)[..., None] * (r @ p.W)


def eta_jacobian(r, p: DenoiserParams) -> np.ndarray:
    """Closed-form Wirtinger Jacobian of eta_posterior_mean.

    With w(r) the activity weight, J = w W + w (1 - w) (A r^H)(r W).
    """
    r = _rows(r)
    w = _weight(r, p)
    g = r.conj() @ p.A.T
    rW = r @ p.W
    J = w[..., None, None] * p.W + (w * (1.0 - w))[..., None, None] * g[..., :, None] * rW[..., None, :]
    return J


def fd_step(C: np.ndarray) -> float:
    return 1e-4 * float(np.sqrt(np.real(np.trace(C)) / C.shape[0]))


def wirtinger_jacobian_fd(func, r, h: float) -> np.ndarray:
    """Central-difference Wirtinger Jacobian of a row-wise map ``func``."""
    r = _rows(r)
    F = r.shape[-1]
    J = None
    for i in range(F):
        e = np.zeros(F, dtype=complex)
        e[i] = h
        dx = (func(r + e) - func(r - e)) / (2 * h)
        dy = (func(r + 1j * e) - func(r - 1j * e)) / (2 * h)
        col = 0.5 * (dx - 1j * dy)
        if J is None:
            J = np.empty(r.shape[:-1] + (F, col.shape[-1]), dtype=complex)
        J[..., i, :] = col
    return J


@dataclass
class MCEstimate:
    mean: np.ndarray
    se: np.ndarray
    n: int


def mc_mean(samples: np.ndarray) -> MCEstimate:
    """Sample mean over axis 0 with per-entry complex standard errors."""
    n = samples.shape[0]
    m = samples.mean(axis=0)
    if n > 1:
        var = samples.real.var(axis=0, ddof=1) + samples.imag.var(axis=0, ddof=1)
        se = np.sqrt(var / n)
    else:
        se = np.full(m.shape, np.inf)
    return MCEstimate(m, se, n)


def sample_effective_input(p: DenoiserParams, n: int, rng: np.random.Generator):
    """(x, r) with x from the prior and r = x + phi, phi ~ CN(0, C)."""
    x, _ = sample_bernoulli_gaussian(p.lambda_u, p.Sigma_u, n, rng)
    phi = crandn(rng, (n, p.F)) @ psd_sqrt(p.C)
    return x, x + phi


def jacobian_expectation_Q(p: DenoiserParams, mc_samples: int, rng: np.random.Generator,
                           method: str = "fd", return_se: bool = False):
    """Monte-Carlo estimate of Q = E[eta'(x + phi)].

    ``method="fd"`` differentiates eta numerically (step 1e-4 of the RMS
    noise scale); ``method="analytic"`` uses :func:`eta_jacobian`.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    _, r = sample_effective_input(p, mc_samples, rng)
    if method == "fd":
        J = wirtinger_jacobian_fd(lambda v: eta_posterior_mean(v, p), r, fd_step(p.C))
    elif method == "analytic":
        J = eta_jacobian(r, p)
    else:
        raise ValueError(f"unknown method {method!r}")
    est = mc_mean(J)
    return est if return_se else est.mean


def _inv_I_minus(Q: np.ndarray) -> np.ndarray:
    M = np.eye(Q.shape[0]) - Q
    if np.linalg.cond(M) > 1e12:
        raise SingularMatrixError(f"I - Q is singular; Q =\n{Q}", Q)
    return np.linalg.inv(M)


def f_divergence_free(r, p: DenoiserParams, Q: np.ndarray) -> np.ndarray:
    """(eta(r) - r Q)(I - Q)^-1."""
    r = _rows(r)
    return (eta_posterior_mean(r, p) - r @ Q) @ _inv_I_minus(Q)


def f_jacobian(r, p: DenoiserParams, Q: np.ndarray) -> np.ndarray:
    return (eta_jacobian(r, p) - Q) @ _inv_I_minus(Q)
