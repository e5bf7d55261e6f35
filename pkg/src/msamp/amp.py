"""Multi-source AMP iterations driven by state evolution."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ._linalg import herm
from .denoiser import DenoiserParams, f_divergence_free, jacobian_expectation_Q
from .model import SystemConfig
from .state_evolution import TwoTimeCovariance
from .streams import substream


@dataclass
class AmpTrajectory:
    """Per-iteration AMP matrices; lists are indexed [u][t - 1] (or [t - 1] for Z).

    With ``store_all=False`` each list holds only the last iteration.
    """

    R: list
    Z: list
    Gamma: list
    F_est: list
    cphi_used: list

    def final_R(self) -> list[np.ndarray]:
        return [r[-1] for r in self.R]


def se_denoiser(config: SystemConfig, se: TwoTimeCovariance):
    """The maps f_{u,t} used by AMP, as a callable ``f(u, t, r)`` for 1 <= t < T."""
    params = {}

    def f(u: int, t: int, r):
        key = (u, t)
        if key not in params:
            params[key] = (DenoiserParams(config.lam[u], config.sigma_u[u], se.cphi(u, t)), se.q(u, t + 1))
        p, q = params[key]
        return f_divergence_free(r, p, q)

    return f


def run_amp(Y, dictionaries, config: SystemConfig, se: TwoTimeCovariance,
            store_all: bool = True, empirical_cphi: bool = False) -> AmpTrajectory:
    """Run T iterations of

        Gamma_u = S_u F_u,  Z = Y - sum_u Gamma_u,  R_u = S_u^H Z + F_u,
        F_u <- f_{u,t}(R_u)

    starting from F_u = 0, with f_{u,t} the divergence-free posterior-mean
    map at C_phi^(t,t) and Q^(t+1) taken from ``se``.

    ``empirical_cphi=True`` replaces C_phi^(t,t) by Z^H Z / L - C_psi^(t,t) / alpha_u
    (C_psi from ``se``) and re-estimates Q by Monte Carlo. This mode is not
    covered by the state-evolution analysis.
    """
    Y = np.asarray(Y, dtype=complex)
    U, T = config.U, config.T
    if Y.shape != (config.L, config.F):
        raise ValueError(f"Y has shape {Y.shape}, expected {(config.L, config.F)}")
    if se.T < T or se.U != U:
        raise ValueError("state evolution does not match the configuration")
    for u, D in enumerate(dictionaries):
        if D.shape != (config.L, config.N[u]):
            raise ValueError(f"dictionary {u} has shape {D.shape}")

    f_se = se_denoiser(config, se)
    Fu = [np.zeros((config.N[u], config.F), complex) for u in range(U)]
    R, Z, G, Fs, used = ([[] for _ in range(U)], [], [[] for _ in range(U)],
                         [[] for _ in range(U)], [[] for _ in range(U)])
    keep = (lambda lst, v: lst.append(v)) if store_all else (lambda lst, v: lst.__setitem__(slice(None), [v]))

    for t in range(1, T + 1):
        gam = [D.apply(f) for D, f in zip(dictionaries, Fu)]
        z = Y - sum(gam)
        keep(Z, z)
        for u, D in enumerate(dictionaries):
            r = D.apply_adjoint(z) + Fu[u]
            keep(R[u], r)
            keep(G[u], gam[u])
            keep(Fs[u], Fu[u])
            if empirical_cphi:
                C = herm(z.conj().T @ z / config.L - se.cpsi(u, t) / config.alpha[u])
            else:
                C = se.cphi(u, t)
            keep(used[u], C)
            if t == T:
                continue
            if empirical_cphi:
                p = DenoiserParams(config.lam[u], config.sigma_u[u], C)
                q = jacobian_expectation_Q(p, min(config.mc_samples, 20_000),
                                           substream(config.seed, "amp", "q", u, t), method="analytic")
                Fu[u] = f_divergence_free(r, p, q)
            else:
                Fu[u] = f_se(u, t, r)
    return AmpTrajectory(R, Z, G, Fs, used)


def estimate_theta(traj: AmpTrajectory, se: TwoTimeCovariance, alpha, t: int | None = None) -> list[np.ndarray]:
    """Theta_u = Gamma_u + Z (C_phi + C_psi / alpha_u)^-1 C_psi at iteration t (default: last stored)."""
    out = []
    k = -1 if t is None else t - 1
    t_se = se.T if t is None else t
    z = traj.Z[k]
    for u in range(len(traj.Gamma)):
        cpsi = se.cpsi(u, t_se)
        inner = traj.cphi_used[u][k] + cpsi / alpha[u]
        try:
            corr = np.linalg.solve(inner, cpsi)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"source {u}: singular C_phi + C_psi / alpha") from exc
        out.append(traj.Gamma[u][k] + z @ corr)
    return out


def empirical_error_covariance(R: np.ndarray, X: np.ndarray, R2: np.ndarray | None = None) -> np.ndarray:
    """(1/N) (R - X)^H (R2 - X); R2 defaults to R."""
    a = R - X
    b = a if R2 is None else R2 - X
    return a.conj().T @ b / R.shape[0]


def trajectory_summary_csv(traj: AmpTrajectory, X: list, se: TwoTimeCovariance) -> str:
    """Per (u, t): trace of the empirical error covariance of R against the SE prediction."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "t", "trace_empirical", "trace_se", "rel_fro_error"])
    for u, Rs in enumerate(traj.R):
        T = len(Rs)
        t0 = se.T - T + 1
        for k, r in enumerate(Rs):
            t = t0 + k
            emp = empirical_error_covariance(r, X[u])
            th = se.cphi(u, t)
            w.writerow([u + 1, t, repr(float(np.real(np.trace(emp)))), repr(float(np.real(np.trace(th)))),
                        repr(float(np.linalg.norm(emp - th) / np.linalg.norm(th)))])
    return buf.getvalue()
