"""Message detection, channel estimation and their asymptotic predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._linalg import crandn, psd_sqrt
from .denoiser import DenoiserParams, eta_posterior_mean, log_likelihood_ratio
from .model import SignalRealization, SystemConfig

UNDEFINED = math.nan


@dataclass
class DetectionReport:
    estimated_active: list
    md_rate_emp: float = UNDEFINED
    fa_rate_emp: float = UNDEFINED
    md_rate_inf: float = UNDEFINED
    fa_rate_inf: float = UNDEFINED
    mse_d_emp: float = UNDEFINED
    pow_fa_emp: float = UNDEFINED
    mse_d_inf: float = UNDEFINED
    pow_fa_inf: float = UNDEFINED
    genie_mmse_emp: float = UNDEFINED
    genie_mmse_inf: float = UNDEFINED
    se: dict = field(default_factory=dict)

    FIELDS = ("md_rate_emp", "fa_rate_emp", "md_rate_inf", "fa_rate_inf",
              "mse_d_emp", "pow_fa_emp", "mse_d_inf", "pow_fa_inf",
              "genie_mmse_emp", "genie_mmse_inf")

    def csv_row(self, config_hash: str, grid_point) -> list:
        """[hash, *grid point, metrics..., standard errors sorted by name]."""
        vals = [getattr(self, f) for f in self.FIELDS]
        return [config_hash, *grid_point, *vals, *(self.se[k] for k in sorted(self.se))]


def detect(R_final, params, nu) -> list[np.ndarray]:
    """a_hat = u(nu - Lambda(r)) row-wise, with u(0) = 1."""
    return [log_likelihood_ratio(r, p) <= math.log(v) for r, p, v in zip(R_final, params, nu)]


def empirical_rates(truth: SignalRealization, estimated_active) -> tuple[float, float]:
    """(missed-detection rate, false-alarm rate); NaN when a denominator is empty."""
    a = np.concatenate([np.asarray(x, bool) for x in truth.activity])
    ah = np.concatenate([np.asarray(x, bool) for x in estimated_active])
    n_act, n_inact = int(a.sum()), int((~a).sum())
    md = float((a & ~ah).sum() / n_act) if n_act else UNDEFINED
    fa = float((~a & ah).sum() / n_inact) if n_inact else UNDEFINED
    return md, fa


def estimate_channels(R_final, params) -> list[np.ndarray]:
    return [eta_posterior_mean(r, p) for r, p in zip(R_final, params)]


def empirical_mse_pow(truth: SignalRealization, estimated_active, channel_estimates) -> tuple[float, float]:
    """Mean ||h - h_hat||^2 over detected actives and mean ||h_hat||^2 over false alarms."""
    err, n_d, pw, n_fa = 0.0, 0, 0.0, 0
    for X, a, ah, H in zip(truth.X, truth.activity, estimated_active, channel_estimates):
        d = a & ah
        fa = ~a & ah
        err += float(np.sum(np.abs(X[d] - H[d]) ** 2))
        pw += float(np.sum(np.abs(H[fa]) ** 2))
        n_d += int(d.sum())
        n_fa += int(fa.sum())
    return (err / n_d if n_d else UNDEFINED), (pw / n_fa if n_fa else UNDEFINED)


def _draws(config, u, cphi, mc, rng):
    h = crandn(rng, (mc, config.F)) @ psd_sqrt(config.sigma_u[u])
    phi1 = crandn(rng, (mc, config.F)) @ psd_sqrt(cphi)
    phi0 = crandn(rng, (mc, config.F)) @ psd_sqrt(cphi)
    return h, phi1, phi0


def asymptotic_rates(config: SystemConfig, cphi, mc: int, rng: np.random.Generator, nu=None):
    """Large-system missed-detection and false-alarm rates.

    Returns (md, fa, md_se, fa_se), probabilities estimated with ``mc``
    draws of h_u ~ CN(0, Sigma_u) and phi_u ~ CN(0, C_phi_u) per source.
    """
    nu = config.nu if nu is None else nu
    Zbar = sum(a * l for a, l in zip(config.alpha, config.lam))
    Ztil = sum(a * (1 - l) for a, l in zip(config.alpha, config.lam))
    md = fa = md_var = fa_var = 0.0
    for u in range(config.U):
        p = DenoiserParams(config.lam[u], config.sigma_u[u], cphi[u])
        h, phi1, phi0 = _draws(config, u, cphi[u], mc, rng)
        lnu = math.log(nu[u])
        p_md = float(np.mean(log_likelihood_ratio(h + phi1, p) > lnu))
        p_fa = float(np.mean(log_likelihood_ratio(phi0, p) <= lnu))
        wm = config.alpha[u] * config.lam[u] / Zbar
        wf = config.alpha[u] * (1 - config.lam[u]) / Ztil
        md += wm * p_md
        fa += wf * p_fa
        md_var += wm ** 2 * p_md * (1 - p_md) / mc
        fa_var += wf ** 2 * p_fa * (1 - p_fa) / mc
    return md, fa, math.sqrt(md_var), math.sqrt(fa_var)


def asymptotic_mse_pow(config: SystemConfig, cphi, mc: int, rng: np.random.Generator,
                       nu=None, eta=None, n_batches: int = 20):
    """Large-system detected-channel MSE and false-alarm power.

    Computed as ratios of Monte-Carlo means,
        mse = sum_u a_u l_u E[||h - eta(h + phi)||^2 1{D_u}] / sum_u a_u l_u P(D_u),
        pow = sum_u a_u (1 - l_u) E[||eta(phi)||^2 1{F_u}] / sum_u a_u (1 - l_u) P(F_u),
    with D_u = {Lambda(h + phi) <= nu}, F_u = {Lambda(phi) < nu}, all from
    one stream. ``eta`` optionally overrides the per-source estimator,
    called as ``eta(u, r)``. Returns (mse, pow, mse_se, pow_se); a value
    is NaN when its event never occurred.
    """
    nu = config.nu if nu is None else nu
    edges = np.linspace(0, mc, n_batches + 1).astype(int)
    num_d = np.zeros(n_batches)
    den_d = np.zeros(n_batches)
    num_f = np.zeros(n_batches)
    den_f = np.zeros(n_batches)
    for u in range(config.U):
        p = DenoiserParams(config.lam[u], config.sigma_u[u], cphi[u])
        est = (lambda r: eta_posterior_mean(r, p)) if eta is None else (lambda r: eta(u, r))
        h, phi1, phi0 = _draws(config, u, cphi[u], mc, rng)
        lnu = math.log(nu[u])
        r1 = h + phi1
        in_d = log_likelihood_ratio(r1, p) <= lnu
        in_f = log_likelihood_ratio(phi0, p) < lnu
        e_d = np.sum(np.abs(h - est(r1)) ** 2, axis=1) * in_d
        e_f = np.sum(np.abs(est(phi0)) ** 2, axis=1) * in_f
        wd = config.alpha[u] * config.lam[u]
        wf = config.alpha[u] * (1 - config.lam[u])
        for b in range(n_batches):
            sl = slice(edges[b], edges[b + 1])
            num_d[b] += wd * e_d[sl].sum()
            den_d[b] += wd * in_d[sl].sum()
            num_f[b] += wf * e_f[sl].sum()
            den_f[b] += wf * in_f[sl].sum()

    def ratio(num, den):
        if den.sum() == 0:
            return UNDEFINED, UNDEFINED
        val = num.sum() / den.sum()
        ok = den > 0
        reps = num[ok] / den[ok]
        se = float(np.std(reps, ddof=1) / math.sqrt(ok.sum())) if ok.sum() > 1 else UNDEFINED
        return float(val), se

    mse, mse_se = ratio(num_d, den_d)
    pw, pw_se = ratio(num_f, den_f)
    return mse, pw, mse_se, pw_se


def r_transform_G(x, alpha: float, lam: float):
    """R-transform of the limiting spectrum of S D D^T S^H, x <= 0.

    R(x) = alpha / (2x) ((x - 1) + sqrt((x - 1)^2 + 4 lam x)), evaluated in
    the rationalized form 2 alpha lam / (sqrt(.) + 1 - x), which is exact
    at x = 0. For lam = 1 the spectrum is a point mass at alpha and R = alpha.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise ValueError("r_transform_G is evaluated for x <= 0")
    if lam == 1.0:
        return np.full_like(x, alpha) if x.ndim else float(alpha)
    root = np.sqrt((x - 1.0) ** 2 + 4.0 * lam * x)
    out = 2.0 * alpha * lam / (root + 1.0 - x)
    return out if out.ndim else float(out)


def _diag_taus(config: SystemConfig) -> np.ndarray:
    taus = []
    for u, S in enumerate(config.sigma_u):
        if np.abs(S - np.diag(np.diag(S))).max() > 1e-12:
            raise ValueError(f"Sigma_{u} is not diagonal")
        taus.append(np.real(np.diag(S)))
    return np.array(taus)


class FixedPointError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def genie_fixed_point(config: SystemConfig, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Per-column c*_f solving c = sigma^2 + sum_u tau_uf R_u(-tau_uf / c)."""
    tau = _diag_taus(config)
    out = np.empty(config.F)
    for f in range(config.F):
        def g(c):
            return config.noise_var + sum(
                tau[u, f] * r_transform_G(-tau[u, f] / c, config.alpha[u], config.lam[u])
                for u in range(config.U) if tau[u, f] > 0)
        c = config.noise_var + sum(tau[u, f] * config.alpha[u] * config.lam[u] for u in range(config.U))
        if c <= 0:
            out[f] = 0.0
            continue
        trace = [c]
        damp = 1.0
        for it in range(max_iter):
            c_new = (1 - damp) * c + damp * g(c)
            trace.append(c_new)
            if abs(c_new - c) <= tol * max(1.0, abs(c)):
                c = c_new
                break
            # halve the step once oscillation shows up
            if len(trace) > 3 and (trace[-1] - trace[-2]) * (trace[-2] - trace[-3]) < 0:
                damp = 0.5
            c = c_new
        else:
            raise FixedPointError(f"column {f}: no convergence after {max_iter} iterations", trace)
        out[f] = c
    return out


def genie_mmse_asymptotic(config: SystemConfig) -> float:
    tau = _diag_taus(config)
    c = genie_fixed_point(config)
    Zbar = sum(a * l for a, l in zip(config.alpha, config.lam))
    total = 0.0
    for u in range(config.U):
        for f in range(config.F):
            t = tau[u, f]
            if t == 0:
                continue
            x = -t / c[f]
            total += t * (config.alpha[u] * config.lam[u]
                          - (t / c[f]) * r_transform_G(x, config.alpha[u], config.lam[u]))
    return total / Zbar


def genie_mmse_empirical(Y, dictionaries, truth: SignalRealization, config: SystemConfig) -> float:
    """(1/|A|) ||H - E[H | Y, S, A]||_F^2 for diagonal Sigma_u and white noise.

    Columns decouple; each is a linear-MMSE problem in the K active
    codewords, solved in the K x K form
        h_f = D^1/2 (D^1/2 S^H S D^1/2 + sigma^2 I)^-1 D^1/2 S^H y_f.
    """
    tau = _diag_taus(config)
    cols, taus, H = [], [], []
    for u, (D, X, a) in enumerate(zip(dictionaries, truth.X, truth.activity)):
        idx = np.flatnonzero(a)
        if idx.size:
            cols.append(D.columns(idx))
            taus.append(np.tile(tau[u], (idx.size, 1)))
            H.append(X[idx])
    if not cols:
        return UNDEFINED
    S = np.hstack(cols)
    taus = np.vstack(taus)
    H = np.vstack(H)
    K = S.shape[1]
    gram = S.conj().T @ S
    SY = S.conj().T @ np.asarray(Y)
    err = 0.0
    for f in range(config.F):
        d = np.sqrt(taus[:, f])
        M = d[:, None] * gram * d[None, :] + config.noise_var * np.eye(K)
        h = d * np.linalg.solve(M, d * SY[:, f])
        err += float(np.sum(np.abs(H[:, f] - h) ** 2))
    return err / K
