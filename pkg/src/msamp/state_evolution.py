"""Two-time state evolution and block-Cholesky Gaussian-process sampling.

Iteration indices in the public accessors are 1-based, matching the
recursion t = 1, ..., T; the stored arrays are 0-based.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._linalg import crandn, herm, psd_sqrt
from .denoiser import DenoiserParams, eta_jacobian, eta_posterior_mean, _inv_I_minus
from .model import SystemConfig, sample_bernoulli_gaussian
from .streams import substream


class IndefiniteMatrixError(np.linalg.LinAlgError):
    pass


class BlockCholesky:
    """Incremental block Cholesky with F x F blocks.

    Blocks ``B[t][s]`` (s <= t) satisfy

        B[s][s]^H B[s][s]     = A[s][s] - sum_{k<s} B[s][k]^H B[s][k]
        B[t][s]^H B[s][s]     = A[t][s] - sum_{k<s} B[t][k]^H B[s][k]

    so that a row process phi_t = sum_{s<=t} z_s B[t][s], z_s ~ CN(0, I),
    has E[phi_t^H phi_s] = A[t][s]. Equivalently ``upper()`` is the
    standard upper Cholesky factor R of the assembled matrix, A = R^H R.

    Pivot blocks that are PSD but singular (eigenvalues within ``tol``
    of zero) are factored through their eigendecomposition, with the
    null directions zeroed; negative pivots beyond ``tol`` raise.
    """

    def __init__(self, F: int, tol: float = 1e-10):
        self.F = F
        self.tol = tol
        self.blocks: list[list[np.ndarray]] = []
        self._pinv_h: list[np.ndarray] = []  # pseudo-inverse of B[s][s]^H

    @property
    def t(self) -> int:
        return len(self.blocks)

    def extend(self, row) -> list[np.ndarray]:
        """Append block row A[t][0..t] (A[t][t] last) and return B[t][0..t]."""
        t = self.t
        if len(row) != t + 1:
            raise ValueError(f"expected {t + 1} blocks, got {len(row)}")
        row = [np.asarray(a, dtype=complex) for a in row]
        new = []
        for s in range(t):
            rhs = row[s] - sum((new[k].conj().T @ self.blocks[s][k] for k in range(s)),
                               np.zeros((self.F, self.F), complex))
            new.append(self._pinv_h[s] @ rhs.conj().T)
        piv = row[t] - sum((b.conj().T @ b for b in new), np.zeros((self.F, self.F), complex))
        piv = herm(piv)
        Bss, pinv_h = self._factor_pivot(piv, scale=np.abs(row[t]).max())
        new.append(Bss)
        self.blocks.append(new)
        self._pinv_h.append(pinv_h)
        return new

    def _factor_pivot(self, piv, scale):
        tol = self.tol * max(1.0, float(scale))
        w, v = np.linalg.eigh(piv)
        if w.min() < -tol:
            raise IndefiniteMatrixError(
                f"block {self.t}: pivot eigenvalue {w.min():.3e} below -{tol:.1e}; matrix is not PSD")
        if w.min() > tol:
            L = np.linalg.cholesky(piv)
            B = L.conj().T
            return B, np.linalg.inv(L)
        keep = w > tol
        sw = np.where(keep, np.sqrt(np.clip(w, 0, None)), 0.0)
        B = sw[:, None] * v.conj().T
        inv_sw = np.where(keep, 1.0 / np.where(keep, sw, 1.0), 0.0)
        return B, inv_sw[:, None] * v.conj().T

    def upper(self) -> np.ndarray:
        t, F = self.t, self.F
        R = np.zeros((t * F, t * F), dtype=complex)
        for i in range(t):
            for s in range(i + 1):
                R[s * F:(s + 1) * F, i * F:(i + 1) * F] = self.blocks[i][s]
        return R

    def reconstruct(self) -> np.ndarray:
        R = self.upper()
        return R.conj().T @ R


def assemble(blocks: np.ndarray) -> np.ndarray:
    """(t, t, F, F) block array -> tF x tF matrix."""
    t, _, F, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(t * F, t * F)


def split_blocks(A: np.ndarray, F: int) -> np.ndarray:
    t = A.shape[0] // F
    if A.shape != (t * F, t * F):
        raise ValueError(f"matrix shape {A.shape} is not a multiple of F={F}")
    return A.reshape(t, F, t, F).transpose(0, 2, 1, 3)


def block_cholesky(A: np.ndarray, F: int, tol: float = 1e-10) -> BlockCholesky:
    """Block Cholesky factorization of a Hermitian PSD tF x tF matrix."""
    A = np.asarray(A, dtype=complex)
    if np.abs(A - A.conj().T).max() > 1e-10 * max(1.0, np.abs(A).max()):
        raise ValueError("block_cholesky: matrix is not Hermitian")
    blk = split_blocks(A, F)
    bc = BlockCholesky(F, tol)
    for t in range(blk.shape[0]):
        bc.extend([blk[t, s] for s in range(t + 1)])
    return bc


def sample_gp_trajectory(C_blocks: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Samples of (phi_1, ..., phi_t) with E[phi_i^H phi_j] = C_blocks[i, j].

    Returns an array of shape (n_samples, t, F).
    """
    C_blocks = np.asarray(C_blocks, dtype=complex)
    t, _, F, _ = C_blocks.shape
    R = block_cholesky(assemble(C_blocks), F).upper()
    z = crandn(rng, (n_samples, t * F))
    return (z @ R).reshape(n_samples, t, F)


@dataclass
class TwoTimeCovariance:
    """State-evolution output.

    ``C_psi[u]`` and ``C_phi[u]`` are (T, T, F, F) arrays holding both
    triangles (C[s, t] = C[t, s]^H). ``Q[u]`` is (T + 1, F, F) with
    ``Q[u][t]`` = Q_u^(t) for t = 2..T (entries 0 and 1 are NaN).
    ``batches[u][t]`` keeps per-batch replicates of Q, C_psi and the
    posterior-mean MMSE at iteration t (1-based), for standard errors.
    """

    T: int
    F: int
    alpha: list
    noise_var: float
    C_psi: list
    C_phi: list
    Q: list
    mmse: list = field(default_factory=list)
    batches: list = field(default_factory=list)

    @property
    def U(self) -> int:
        return len(self.C_psi)

    def cpsi(self, u: int, t: int, s: int | None = None) -> np.ndarray:
        return self.C_psi[u][t - 1, (t if s is None else s) - 1]

    def cphi(self, u: int, t: int, s: int | None = None) -> np.ndarray:
        return self.C_phi[u][t - 1, (t if s is None else s) - 1]

    def q(self, u: int, t: int) -> np.ndarray:
        if not 2 <= t <= self.T:
            raise IndexError(f"Q_u^(t) defined for 2 <= t <= T, got t={t}")
        return self.Q[u][t]

    def final_cphi(self) -> list[np.ndarray]:
        return [self.cphi(u, self.T) for u in range(self.U)]

    def assembled(self, u: int, which: str = "phi", t: int | None = None) -> np.ndarray:
        arr = self.C_phi[u] if which == "phi" else self.C_psi[u]
        t = self.T if t is None else t
        return assemble(arr[:t, :t])

    def to_csv(self, fh=None) -> str:
        """One row per (u, t, s, i, j), s <= t, 1-based indices."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "t", "s", "i", "j", "cpsi_re", "cpsi_im", "cphi_re", "cphi_im"])
        for u in range(self.U):
            for t in range(self.T):
                for s in range(t + 1):
                    for i in range(self.F):
                        for j in range(self.F):
                            a = self.C_psi[u][t, s, i, j]
                            b = self.C_phi[u][t, s, i, j]
                            w.writerow([u + 1, t + 1, s + 1, i + 1, j + 1,
                                        repr(float(a.real)), repr(float(a.imag)),
                                        repr(float(b.real)), repr(float(b.imag))])
        return buf.getvalue() if fh is None else ""


def _moment_matched_prior(lam, Sigma, n, rng):
    """Prior samples rescaled so that x^H x / n equals lam * Sigma exactly."""
    x, _ = sample_bernoulli_gaussian(lam, Sigma, n, rng)
    S = herm(x.conj().T @ x / n)
    w, v = np.linalg.eigh(S)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    if not keep.any():
        return x
    inv_sqrt = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].conj().T
    return x @ (inv_sqrt @ psd_sqrt(lam * Sigma))


def run_state_evolution(config: SystemConfig, n_batches: int = 20, seed: int | None = None) -> TwoTimeCovariance:
    """Monte-Carlo two-time state evolution with f_{u,t} divergence-free.

    f_u^(1) = 0. For t = 1..T and every source, C_psi^(t,s) is the
    sample Gram matrix of (x - f^(t), x - f^(s)) over ``mc_samples``
    common prior draws, C_phi follows from the noise variance and the
    other sources, and phi^(t) is extended through the block Cholesky
    factor of C_phi^(1:t). Q^(t+1) is the sample mean of the closed-form
    Jacobian of eta at r = x + phi^(t).
    """
    n, U, F, T = config.mc_samples, config.U, config.F, config.T
    seed = config.seed if seed is None else seed
    if n_batches < 2 or n < 2 * n_batches:
        raise ValueError("need n_batches >= 2 and at least two samples per batch")
    eye = np.eye(F)
    alpha = config.alpha
    x = [_moment_matched_prior(config.lam[u], config.sigma_u[u], n, substream(seed, "se", "x", u))
         for u in range(U)]
    delta = [[x[u]] for u in range(U)]
    chol = [BlockCholesky(F) for _ in range(U)]
    z = [[] for _ in range(U)]
    C_psi = [np.zeros((T, T, F, F), complex) for _ in range(U)]
    C_phi = [np.zeros((T, T, F, F), complex) for _ in range(U)]
    Q = [np.full((T + 1, F, F), np.nan, complex) for _ in range(U)]
    mmse = [np.full((T + 1, F, F), np.nan, complex) for _ in range(U)]
    batches = [dict() for _ in range(U)]
    edges = np.linspace(0, n, n_batches + 1).astype(int)

    for t in range(T):
        for u in range(U):
            for s in range(t + 1):
                c = alpha[u] / n * (delta[u][t].conj().T @ delta[u][s])
                if s == t:
                    c = herm(c)
                C_psi[u][t, s] = c
                C_psi[u][s, t] = c.conj().T
        for u in range(U):
            for s in range(t + 1):
                c = config.noise_var * eye + (alpha[u] - 1.0) / alpha[u] * C_psi[u][t, s]
                c = c + sum((C_psi[v][t, s] for v in range(U) if v != u), np.zeros((F, F), complex))
                if s == t:
                    c = herm(c)
                C_phi[u][t, s] = c
                C_phi[u][s, t] = c.conj().T
            chol[u].extend([C_phi[u][t, s] for s in range(t + 1)])
            z[u].append(crandn(substream(seed, "se", "z", u, t), (n, F)))
            if t == T - 1:
                continue
            phi = sum(z[u][s] @ chol[u].blocks[t][s] for s in range(t + 1))
            r = x[u] + phi
            p = DenoiserParams(config.lam[u], config.sigma_u[u], C_phi[u][t, t])
            eta = eta_posterior_mean(r, p)
            J = eta_jacobian(r, p)
            q = J.mean(axis=0)
            Q[u][t + 2] = q
            err = x[u] - eta
            mmse[u][t + 2] = herm(err.conj().T @ err / n)
            delta[u].append(x[u] - (eta - r @ q) @ _inv_I_minus(q))
            bq, bc, bm = [], [], []
            for b in range(n_batches):
                sl = slice(edges[b], edges[b + 1])
                qb = J[sl].mean(axis=0)
                db = x[u][sl] - (eta[sl] - r[sl] @ qb) @ _inv_I_minus(qb)
                m = sl.stop - sl.start
                bq.append(qb)
                bc.append(alpha[u] * db.conj().T @ db / m)
                bm.append(err[sl].conj().T @ err[sl] / m)
            batches[u][t + 2] = dict(Q=np.array(bq), C_psi=np.array(bc), mmse=np.array(bm))

    se = TwoTimeCovariance(T, F, list(alpha), config.noise_var, C_psi, C_phi, Q, mmse, batches)
    for u in range(U):
        A = se.assembled(u, "phi")
        lo = np.linalg.eigvalsh(herm(A)).min()
        if lo < -1e-8 * np.real(np.trace(A)):
            raise IndefiniteMatrixError(
                f"source {u}: assembled C_phi has eigenvalue {lo:.3e}; increase mc_samples")
    return se


def identity_residual(se: TwoTimeCovariance, u: int, t: int):
    """(I - Q^(t))^-1 - I - C_phi^(t-1,t-1)^-1 C_psi^(t,t) / alpha, with a batch standard error.

    Returns (residual matrix, per-entry standard error).
    """
    C = se.cphi(u, t - 1)
    Cinv = np.linalg.inv(C)
    a = se.alpha[u]
    eye = np.eye(se.F)

    def stat(q, cpsi):
        return np.linalg.inv(eye - q) - eye - Cinv @ cpsi / a

    full = stat(se.q(u, t), se.cpsi(u, t))
    b = se.batches[u][t]
    reps = np.array([stat(q, c) for q, c in zip(b["Q"], b["C_psi"])])
    k = reps.shape[0]
    se_ = np.sqrt((reps.real.var(axis=0, ddof=1) + reps.imag.var(axis=0, ddof=1)) / k)
    return full, se_


def cphi_convergence(se: TwoTimeCovariance, u: int) -> float:
    """||C_phi^(T,T) - C_phi^(T-1,T-1)||_F / ||C_phi^(T,T)||_F."""
    a, b = se.cphi(u, se.T), se.cphi(u, se.T - 1)
    return float(np.linalg.norm(a - b) / np.linalg.norm(a))


def rs_residual(se: TwoTimeCovariance, u: int, t: int | None = None):
    """C_psi^(t,t) / alpha - mmse^(t) (I - Q^(t))^-1 with a batch standard error.

    mmse^(t) is the error covariance of the posterior mean at C_phi^(t-1,t-1);
    the replica-symmetric fixed point requires the residual to vanish.
    Returns (residual matrix, per-entry standard error).
    """
    t = se.T if t is None else t
    a = se.alpha[u]
    eye = np.eye(se.F)

    def stat(q, cpsi, m):
        return cpsi / a - m @ np.linalg.inv(eye - q)

    full = stat(se.q(u, t), se.cpsi(u, t), se.mmse[u][t])
    b = se.batches[u][t]
    reps = np.array([stat(q, c, m) for q, c, m in zip(b["Q"], b["C_psi"], b["mmse"])])
    k = reps.shape[0]
    se_ = np.sqrt((reps.real.var(axis=0, ddof=1) + reps.imag.var(axis=0, ddof=1)) / k)
    return full, se_
