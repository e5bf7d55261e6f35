"""Residual AMP dynamics with explicit Haar matrices and their Householder-dice
equivalent, plus the moment-matching harness comparing the two.

Residuals are Psi_u^(t) = O-side image of T_u^(t) (N_u x F, so that
P_u Psi_u^(t) = Gamma_u^(t) - S_u X_u) and Phi_u^(t) = R_u^(t) - X_u.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._linalg import crandn, herm
from .amp import se_denoiser
from .dictionary import sample_haar_unitary
from .model import SignalRealization, SystemConfig, sample_signals
from .state_evolution import TwoTimeCovariance
from .streams import substream


class GramSchmidtRankError(np.linalg.LinAlgError):
    def __init__(self, msg, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


def inner(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """<A, B> = A^H B / N."""
    return A.conj().T @ B / A.shape[0]


def block_gram_schmidt(B: np.ndarray, basis, rtol: float = 1e-10) -> np.ndarray:
    """sqrt(N) P_perp B Q^-1/2 with Q = B^H P_perp B, P_perp deflating ``basis``.

    The projection is applied twice for numerical orthogonality. Raises
    :class:`GramSchmidtRankError` when Q is singular relative to ||B||^2.
    """
    B = np.asarray(B, dtype=complex)
    N, F = B.shape
    if N < F * (len(basis) + 1):
        raise ValueError(f"N={N} too small for {len(basis) + 1} blocks of width {F}")
    D = B
    for _ in range(2):
        for V in basis:
            D = D - V @ inner(V, D)
    Q = herm(D.conj().T @ D)
    w, v = np.linalg.eigh(Q)
    scale = max(float(np.real(np.trace(B.conj().T @ B))) / F, np.finfo(float).tiny)
    if w.min() <= rtol * scale:
        raise GramSchmidtRankError(
            f"deflated block is rank deficient: eigenvalues {w} (scale {scale:.3g})", w)
    return math.sqrt(N) * D @ ((v / np.sqrt(w)) @ v.conj().T)


def _scatter(Z: np.ndarray, N: int) -> np.ndarray:
    """P^T Z: embed the L rows of Z into the first L of N rows."""
    out = np.zeros((N, Z.shape[1]), dtype=complex)
    out[: Z.shape[0]] = Z
    return out


@dataclass
class ResidualTrajectory:
    """Psi_hat[u][t - 1] and Phi_hat[u][t - 1]."""

    Psi_hat: list
    Phi_hat: list


@dataclass
class DiceState:
    V_basis: list
    V_tilde_basis: list
    T_mats: list = field(default_factory=list)
    T_tilde_mats: list = field(default_factory=list)
    Psi_hat: list = field(default_factory=list)
    Phi_hat: list = field(default_factory=list)


def _check(config, signals, noise, T):
    if noise.shape != (config.L, config.F):
        raise ValueError(f"noise has shape {noise.shape}, expected {(config.L, config.F)}")
    for u, X in enumerate(signals.X):
        if X.shape != (config.N[u], config.F):
            raise ValueError(f"signal {u} has shape {X.shape}")
    if not 1 <= T <= config.T:
        raise ValueError(f"T={T} outside 1..{config.T}")


def run_residual_dynamics(config: SystemConfig, se: TwoTimeCovariance, signals: SignalRealization,
                          noise: np.ndarray, haar_matrices, T: int | None = None,
                          F_init=None) -> ResidualTrajectory:
    """Residual form of AMP driven by explicit N_u x N_u unitaries O_u.

    The dictionary is S_u = sqrt(alpha_u) P_u O_u with P_u keeping the first
    L rows. ``F_init`` defaults to zero, so T_u^(1) = -X_u.
    """
    T = config.T if T is None else T
    _check(config, signals, noise, T)
    U, L = config.U, config.L
    f = se_denoiser(config, se)
    X = signals.X
    Tm = [(np.zeros_like(X[u]) if F_init is None else F_init[u]) - X[u] for u in range(U)]
    out = ResidualTrajectory([[] for _ in range(U)], [[] for _ in range(U)])
    for t in range(1, T + 1):
        psi = [math.sqrt(config.alpha[u]) * haar_matrices[u] @ Tm[u] for u in range(U)]
        Z = noise - sum(p[:L] for p in psi)
        for u in range(U):
            Tt = math.sqrt(config.alpha[u]) * _scatter(Z, config.N[u])
            phi = haar_matrices[u].conj().T @ Tt + Tm[u]
            out.Psi_hat[u].append(psi[u])
            out.Phi_hat[u].append(phi)
            if t < T:
                Tm[u] = f(u, t, X[u] + phi) - X[u]
    return out


def run_householder_dice(config: SystemConfig, se: TwoTimeCovariance, signals: SignalRealization,
                         noise: np.ndarray, gaussian_elements, T: int | None = None,
                         F_init=None) -> DiceState:
    """O-free recursion equal in law to :func:`run_residual_dynamics`.

    ``gaussian_elements[u][t - 1]`` is a pair (G_u^(t), G~_u^(t)) of fresh
    N_u x F matrices with i.i.d. CN(0, 1) entries. Per iteration the
    bases grow by two blocks,

        V^(2t-1) = GS(T^(t) | V^(1:2t-2)),   V~^(2t-1) = GS(G~^(t) | V~^(1:2t-2)),
        Psi = sqrt(alpha) sum_{s<2t} V~^(s) <V^(s), T^(t)>,
        V~^(2t) = GS(T~^(t) | V~^(1:2t-1)),  V^(2t) = GS(G^(t) | V^(1:2t-1)),
        Phi = sum_{s<=2t} V^(s) <V~^(s), T~^(t)> + T^(t),

    so the pair of bases plays the role of O V^(s) = V~^(s).
    """
    T = config.T if T is None else T
    _check(config, signals, noise, T)
    U, L = config.U, config.L
    for u in range(U):
        if config.N[u] <= T * config.F:
            raise ValueError(f"source {u}: need N_u > T F")
    f = se_denoiser(config, se)
    X = signals.X
    st = DiceState([[] for _ in range(U)], [[] for _ in range(U)],
                   [[] for _ in range(U)], [[] for _ in range(U)],
                   [[] for _ in range(U)], [[] for _ in range(U)])
    Tm = [(np.zeros_like(X[u]) if F_init is None else F_init[u]) - X[u] for u in range(U)]
    for t in range(1, T + 1):
        psi = []
        for u in range(U):
            G, Gt = gaussian_elements[u][t - 1]
            V, Vt = st.V_basis[u], st.V_tilde_basis[u]
            try:
                V.append(block_gram_schmidt(Tm[u], V))
                Vt.append(block_gram_schmidt(Gt, Vt))
            except GramSchmidtRankError as exc:
                raise GramSchmidtRankError(f"source {u}, t={t}: {exc}", exc.eigenvalues) from None
            p = sum(vt @ inner(v, Tm[u]) for v, vt in zip(V, Vt))
            psi.append(math.sqrt(config.alpha[u]) * p)
            st.T_mats[u].append(Tm[u])
            st.Psi_hat[u].append(psi[u])
        Z = noise - sum(p[:L] for p in psi)
        for u in range(U):
            G, Gt = gaussian_elements[u][t - 1]
            V, Vt = st.V_basis[u], st.V_tilde_basis[u]
            Tt = math.sqrt(config.alpha[u]) * _scatter(Z, config.N[u])
            try:
                Vt.append(block_gram_schmidt(Tt, Vt))
                V.append(block_gram_schmidt(G, V))
            except GramSchmidtRankError as exc:
                raise GramSchmidtRankError(f"source {u}, t={t}: {exc}", exc.eigenvalues) from None
            phi = sum(v @ inner(vt, Tt) for v, vt in zip(V, Vt)) + Tm[u]
            st.T_tilde_mats[u].append(Tt)
            st.Phi_hat[u].append(phi)
            if t < T:
                Tm[u] = f(u, t, X[u] + phi) - X[u]
    return st


# ---------------------------------------------------------------- moments

def oracle_config(N: int = 48, T: int = 3, lam: float = 0.3, noise_var: float = 0.1,
                  seed: int = 0, mc_samples: int = 100_000) -> SystemConfig:
    """Small U=2, F=2, alpha=1 scenario with LSFC matrix [[1, .5], [.5, 1]]."""
    sig = [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])]
    return SystemConfig(L=N, U=2, F=2, alpha=[1.0, 1.0], lam=[lam, lam], sigma_u=sig,
                        noise_var=noise_var, T=T, seed=seed, mc_samples=mc_samples)


def moment_statistics(traj) -> dict[str, np.ndarray]:
    """Pooled-row first and second moments of the residual sequences.

    For every source: the row mean of each Psi^(t), Phi^(t), and for every
    pair (A, B) of these the covariance <A, B> and the pseudo-covariance
    A^T B / N. Across sources: <Phi_1^(t), Phi_2^(t)> when N_1 = N_2.
    """
    out = {}
    U = len(traj.Phi_hat)
    for u in range(U):
        seq = [(f"psi{t + 1}", m) for t, m in enumerate(traj.Psi_hat[u])]
        seq += [(f"phi{t + 1}", m) for t, m in enumerate(traj.Phi_hat[u])]
        for i, (na, A) in enumerate(seq):
            out[f"u{u + 1}.mean.{na}"] = A.mean(axis=0)
            for nb, B in seq[i:]:
                out[f"u{u + 1}.cov.{na}.{nb}"] = inner(A, B)
                out[f"u{u + 1}.pcov.{na}.{nb}"] = A.T @ B / A.shape[0]
    for a in range(U):
        for b in range(a + 1, U):
            for t, (A, B) in enumerate(zip(traj.Phi_hat[a], traj.Phi_hat[b])):
                if A.shape == B.shape:
                    out[f"u{a + 1}u{b + 1}.cov.phi{t + 1}"] = inner(A, B)
    return out


@dataclass
class MomentComparison:
    name: str
    value_a: float
    value_b: float
    diff: float
    se: float
    max_abs_z: float

    @property
    def passed(self) -> bool:
        # moments fixed by construction (e.g. <Psi^(1), Psi^(1)> = alpha <T^(1), T^(1)>)
        # agree to roundoff in both dynamics, where se is roundoff as well
        floor = 1e-10 * max(1.0, self.value_a, self.value_b)
        return self.diff <= 3.0 * self.se + floor


@dataclass
class OracleReport:
    rows: list
    n_seeds: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["moment", "rom_alg", "rom_mf", "diff", "se", "max_abs_z", "pass"])
        for r in self.rows:
            w.writerow([r.name, repr(r.value_a), repr(r.value_b), repr(r.diff), repr(r.se),
                        repr(r.max_abs_z), "pass" if r.passed else "fail"])
        return buf.getvalue()


def compare_moments(stats_a: list[dict], stats_b: list[dict]) -> list[MomentComparison]:
    """Paired comparison of per-seed statistics.

    For each moment the per-seed difference is averaged over seeds; the
    gate is ||mean difference||_F <= 3 sqrt(sum of squared entrywise
    standard errors). Values reported are Frobenius norms of the means.
    """
    n = len(stats_a)
    if n < 2 or len(stats_b) != n:
        raise ValueError("need at least two paired seeds")
    rows = []
    for name in stats_a[0]:
        a = np.array([s[name] for s in stats_a])
        b = np.array([s[name] for s in stats_b])
        d = a - b
        md = d.mean(axis=0)
        se_ent = np.sqrt((d.real.var(axis=0, ddof=1) + d.imag.var(axis=0, ddof=1)) / n)
        se = float(np.sqrt(np.sum(se_ent ** 2)))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se_ent > 0, np.abs(md) / se_ent, 0.0)
        rows.append(MomentComparison(name, float(np.linalg.norm(a.mean(axis=0))),
                                     float(np.linalg.norm(b.mean(axis=0))),
                                     float(np.linalg.norm(md)), se, float(z.max())))
    return rows


def draw_instance(config: SystemConfig, seed: int, k: int):
    """Signals, noise, Haar unitaries and Gaussian elements of oracle seed k."""
    sig = sample_signals(config, substream(seed, "oracle", k, "signals"))
    noise = math.sqrt(config.noise_var) * crandn(substream(seed, "oracle", k, "noise"), (config.L, config.F))
    haar = [sample_haar_unitary(config.N[u], substream(seed, "oracle", k, "haar", u)) for u in range(config.U)]
    gauss = []
    for u in range(config.U):
        g = substream(seed, "oracle", k, "dice", u)
        gauss.append([(crandn(g, (config.N[u], config.F)), crandn(g, (config.N[u], config.F)))
                      for _ in range(config.T)])
    return sig, noise, haar, gauss


def moment_ensemble(config: SystemConfig, se: TwoTimeCovariance, n_seeds: int, seed: int = 0) -> OracleReport:
    """Run both dynamics on ``n_seeds`` paired instances (shared X and noise)."""
    sa, sb = [], []
    for k in range(n_seeds):
        sig, noise, haar, gauss = draw_instance(config, seed, k)
        sa.append(moment_statistics(run_residual_dynamics(config, se, sig, noise, haar)))
        sb.append(moment_statistics(run_householder_dice(config, se, sig, noise, gauss)))
    return OracleReport(compare_moments(sa, sb), n_seeds)
