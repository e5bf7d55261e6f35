"""Scenario configuration, Bernoulli-Gaussian prior sampling and observations.

Config file format
------------------
A flat text file, one ``key = value`` per line, values are JSON literals,
``#`` starts a comment, indented lines continue the previous value. Keys::

    L, U, F, T, seed, mc_samples    integers
    alpha, lambda, nu               lists of length U
    sigma_u                         list of U real F x F matrices (nested lists)
    sigma_u_imag                    optional, imaginary parts of sigma_u
    noise_var                       float
    dict_kind                       "haar" or "fourier"
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._linalg import crandn, herm, psd_sqrt
from .dictionary import DictKind, SemiUnitaryDictionary, build_dictionary


@dataclass
class SystemConfig:
    L: int
    U: int
    F: int
    alpha: list
    lam: list
    sigma_u: list
    noise_var: float
    T: int = 10
    nu: list | None = None
    dict_kind: DictKind = DictKind.DENSE_HAAR
    seed: int = 0
    mc_samples: int = 100_000

    def __post_init__(self):
        self.alpha = [float(a) for a in self.alpha]
        self.lam = [float(v) for v in self.lam]
        self.sigma_u = [herm(np.array(s, dtype=complex).reshape(self.F, self.F)) for s in self.sigma_u]
        self.nu = [1.0] * self.U if self.nu is None else [float(v) for v in self.nu]
        self.dict_kind = DictKind.parse(self.dict_kind)
        self.noise_var = float(self.noise_var)
        self.validate()

    def validate(self) -> None:
        if min(self.L, self.U, self.F, self.T, self.mc_samples) < 1:
            raise ValueError("all dimensions must be >= 1")
        for name in ("alpha", "lam", "sigma_u", "nu"):
            if len(getattr(self, name)) != self.U:
                raise ValueError(f"{name} must have length U={self.U}")
        for u, a in enumerate(self.alpha):
            n = a * self.L
            if a <= 0 or abs(n - round(n)) > 1e-9:
                raise ValueError(f"alpha[{u}] * L = {n} is not a positive integer")
            if round(n) < self.L:
                raise ValueError(f"alpha[{u}] < 1 gives N_u < L")
        for u, v in enumerate(self.lam):
            if not 0.0 < v < 1.0:
                raise ValueError(f"lambda[{u}] = {v} outside (0, 1)")
        for u, s in enumerate(self.sigma_u):
            if np.linalg.eigvalsh(s).min() < -1e-12 * max(1.0, np.abs(s).max()):
                raise ValueError(f"sigma_u[{u}] is not PSD")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if min(self.nu) <= 0:
            raise ValueError("thresholds nu must be positive")

    @property
    def N(self) -> list[int]:
        return [int(round(a * self.L)) for a in self.alpha]

    def replace(self, **changes) -> "SystemConfig":
        d = self.to_dict()
        d.update(changes)
        return SystemConfig(**d)

    def to_dict(self) -> dict:
        return dict(L=self.L, U=self.U, F=self.F, alpha=list(self.alpha), lam=list(self.lam),
                    sigma_u=[np.array(s) for s in self.sigma_u], noise_var=self.noise_var,
                    T=self.T, nu=list(self.nu), dict_kind=self.dict_kind, seed=self.seed,
                    mc_samples=self.mc_samples)

    def to_text(self) -> str:
        sig = [np.real(s).tolist() for s in self.sigma_u]
        lines = [
            "# msamp system configuration",
            f"L = {self.L}",
            f"U = {self.U}",
            f"F = {self.F}",
            f"alpha = {json.dumps(self.alpha)}",
            f"lambda = {json.dumps(self.lam)}",
            f"sigma_u = {json.dumps(sig)}",
        ]
        if any(np.abs(np.imag(s)).max() > 0 for s in self.sigma_u):
            lines.append(f"sigma_u_imag = {json.dumps([np.imag(s).tolist() for s in self.sigma_u])}")
        lines += [
            f"noise_var = {json.dumps(self.noise_var)}",
            f"T = {self.T}",
            f"nu = {json.dumps(self.nu)}",
            f"dict_kind = {json.dumps(self.dict_kind.value)}",
            f"seed = {self.seed}",
            f"mc_samples = {self.mc_samples}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SystemConfig":
        # indented lines continue the previous value
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0]
            if not body.strip():
                continue
            if body[0].isspace() and entries:
                entries[-1][2] += " " + body.strip()
                continue
            if "=" not in body:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, val = (p.strip() for p in body.split("=", 1))
            entries.append([lineno, key, val])
        raw = {}
        for lineno, key, val in entries:
            try:
                raw[key] = json.loads(val)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
        missing = {"L", "U", "F", "alpha", "lambda", "sigma_u", "noise_var"} - set(raw)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        sig = np.array(raw.pop("sigma_u"), dtype=complex)
        if "sigma_u_imag" in raw:
            sig = sig + 1j * np.array(raw.pop("sigma_u_imag"))
        raw["lam"] = raw.pop("lambda")
        known = {"L", "U", "F", "alpha", "lam", "noise_var", "T", "nu", "dict_kind", "seed", "mc_samples"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(sigma_u=list(sig), **raw)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "SystemConfig":
        return cls.from_text(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


@dataclass
class SignalRealization:
    X: list
    activity: list
    active_set: list = field(default_factory=list)

    @property
    def n_active(self) -> int:
        return int(sum(a.sum() for a in self.activity))


def wyner_covariances(B: int = 2, M: int = 2, crosstalk: float = 0.5, gains=None) -> list[np.ndarray]:
    """Sigma_u = diag(g_u1, ..., g_uB) kron I_M from the LSFC matrix [g_ub].

    The default LSFC matrix is [[1, p], [p, 1]] with p the crosstalk
    coefficient; pass ``gains`` (U x B) to override.
    """
    if B < 1 or M < 1:
        raise ValueError("B and M must be >= 1")
    if gains is None:
        if not 0.0 <= crosstalk <= 1.0:
            raise ValueError(f"crosstalk {crosstalk} outside [0, 1]")
        if B != 2:
            raise ValueError("the default LSFC matrix is 2 x 2; pass gains for B != 2")
        gains = [[1.0, crosstalk], [crosstalk, 1.0]]
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 2 or gains.shape[1] != B:
        raise ValueError(f"gains must be U x B with B={B}")
    return [np.kron(np.diag(g), np.eye(M)) for g in gains]


def wyner_config(L: int, lam, noise_var: float, locations: int = 2, alpha: float = 1.0,
                 B: int = 2, M: int = 2, crosstalk: float = 0.5, **kw) -> SystemConfig:
    """The 2- or 4-location toy model; locations 3, 4 repeat the statistics of 1, 2."""
    sig = wyner_covariances(B, M, crosstalk)
    if locations not in (2, 4):
        raise ValueError("locations must be 2 or 4")
    lam = list(lam)
    if len(lam) == 2 and locations == 4:
        lam = lam * 2
    sig = (sig * (locations // 2))[:locations]
    return SystemConfig(L=L, U=locations, F=B * M, alpha=[alpha] * locations, lam=lam,
                        sigma_u=sig, noise_var=noise_var, **kw)


def sample_bernoulli_gaussian(lam: float, Sigma: np.ndarray, n: int, rng: np.random.Generator):
    """n rows a * h with a ~ Bernoulli(lam), h ~ CN(0, Sigma). Returns (X, a)."""
    F = Sigma.shape[0]
    a = rng.random(n) < lam
    X = np.zeros((n, F), dtype=complex)
    k = int(a.sum())
    if k:
        X[a] = crandn(rng, (k, F)) @ psd_sqrt(Sigma)
    return X, a


def sample_signals(config: SystemConfig, rng: np.random.Generator) -> SignalRealization:
    X, act, aset = [], [], []
    for u, child in enumerate(rng.spawn(config.U)):
        x, a = sample_bernoulli_gaussian(config.lam[u], config.sigma_u[u], config.N[u], child)
        X.append(x)
        act.append(a)
        aset.extend((u, int(n)) for n in np.flatnonzero(a))
    return SignalRealization(X, act, aset)


def synthesize_observation(config: SystemConfig, dictionaries, signals: SignalRealization,
                           rng: np.random.Generator):
    """Y = N + sum_u S_u X_u. Returns (Y, N)."""
    if len(dictionaries) != config.U or len(signals.X) != config.U:
        raise ValueError("need one dictionary and one signal per source")
    for u, (D, X) in enumerate(zip(dictionaries, signals.X)):
        if D.shape != (config.L, config.N[u]) or X.shape != (config.N[u], config.F):
            raise ValueError(f"source {u}: shape mismatch")
    noise = np.sqrt(config.noise_var) * crandn(rng, (config.L, config.F))
    Y = noise.copy()
    for D, X in zip(dictionaries, signals.X):
        Y += D.apply(X)
    return Y, noise


def build_dictionaries(config: SystemConfig, rng_for) -> list[SemiUnitaryDictionary]:
    """One dictionary per source; ``rng_for(u)`` supplies the per-source stream."""
    return [build_dictionary(config.dict_kind, config.L, config.N[u], rng_for(u)) for u in range(config.U)]
