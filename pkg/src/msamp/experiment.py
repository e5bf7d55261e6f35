"""Grid-point evaluation shared by the command line and the acceptance suite."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

from . import detection as det
from .amp import run_amp
from .denoiser import DenoiserParams
from .model import SystemConfig, build_dictionaries, sample_signals, synthesize_observation
from .state_evolution import run_state_evolution
from .streams import substream

AXES = ("lambda", "nu", "L")
METRICS = ("rates", "mse", "genie")

COLUMNS = [
    "md_emp", "md_emp_se", "md_inf", "md_inf_se",
    "fa_emp", "fa_emp_se", "fa_inf", "fa_inf_se",
    "mse_emp", "mse_emp_se", "mse_inf", "mse_inf_se",
    "pow_emp", "pow_emp_se", "pow_inf", "pow_inf_se",
    "genie_emp", "genie_emp_se", "genie_inf",
    "n_active", "n_detected",
]


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class ExperimentSpec:
    base: SystemConfig
    axis: str = "lambda"
    grid: list = field(default_factory=lambda: [0.1])
    trials: int = 1
    metrics: tuple = METRICS
    dict_kinds: tuple = ()
    mc: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if not self.grid:
            raise ValueError("empty grid")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ValueError(f"unknown metrics {sorted(bad)}")
        if not self.dict_kinds:
            self.dict_kinds = (self.base.dict_kind.value,)

    def points(self) -> list[tuple[dict, SystemConfig]]:
        """(grid labels, config) for every point, in output order.

        A lambda grid is the product of ``grid`` over the first two sources;
        further sources repeat lambda_{u mod 2}. The nu grid sets a common
        threshold, the L grid the number of observations.
        """
        out = []
        for kind in self.dict_kinds:
            base = self.base.replace(dict_kind=kind)
            if self.axis == "lambda":
                k = min(base.U, 2)
                for combo in itertools.product(self.grid, repeat=k):
                    lam = [combo[u % k] for u in range(base.U)]
                    labels = {"dict": kind, **{f"lambda_{u + 1}": v for u, v in enumerate(combo)}}
                    out.append((labels, base.replace(lam=lam)))
            elif self.axis == "nu":
                for v in self.grid:
                    out.append(({"dict": kind, "nu": v}, base.replace(nu=[v] * base.U)))
            else:
                for v in self.grid:
                    out.append(({"dict": kind, "L": int(v)}, base.replace(L=int(v))))
        return out


@dataclass
class PointResult:
    labels: dict
    values: dict
    report: det.DetectionReport


def _binom_se(p, n):
    return math.sqrt(p * (1 - p) / n) if n and not math.isnan(p) else math.nan


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def _diagonal(config):
    return all(np.abs(S - np.diag(np.diag(S))).max() <= 1e-12 for S in config.sigma_u)


def evaluate_point(config: SystemConfig, trials: int, seed: int, index: int,
                   metrics=METRICS, mc: int | None = None, dict_cache: dict | None = None,
                   labels: dict | None = None) -> PointResult:
    """State evolution, asymptotic predictions and ``trials`` AMP runs at one point.

    Empirical rates and MSEs are pooled over trials (counts summed before
    dividing). Dictionaries depend on the trial index only, so grid points
    sharing L and N_u see common dictionaries; everything else is keyed by
    (index, trial).
    """
    mc = config.mc_samples if mc is None else mc
    se = run_state_evolution(config, seed=seed)
    cphi = se.final_cphi()
    params = [DenoiserParams(config.lam[u], config.sigma_u[u], cphi[u]) for u in range(config.U)]
    v = {c: math.nan for c in COLUMNS}

    if "rates" in metrics:
        v["md_inf"], v["fa_inf"], v["md_inf_se"], v["fa_inf_se"] = det.asymptotic_rates(
            config, cphi, mc, substream(seed, "grid", index, "mc", "rates"))
    if "mse" in metrics:
        v["mse_inf"], v["pow_inf"], v["mse_inf_se"], v["pow_inf_se"] = det.asymptotic_mse_pow(
            config, cphi, mc, substream(seed, "grid", index, "mc", "mse"))
    want_genie = "genie" in metrics and _diagonal(config)
    if want_genie:
        v["genie_inf"] = det.genie_mmse_asymptotic(config)

    n_act = n_miss = n_inact = n_fa = 0
    err_d, pow_f, genie, actives = [], [], [], []
    for k in range(trials):
        key = (config.dict_kind.value, config.L, tuple(config.N), k)
        if dict_cache is not None and key in dict_cache:
            dicts = dict_cache[key]
        else:
            dicts = build_dictionaries(config, lambda u: substream(seed, "dict", u, "trial", k))
            if dict_cache is not None:
                dict_cache[key] = dicts
        truth = sample_signals(config, substream(seed, "grid", index, "trial", k, "signals"))
        Y, _ = synthesize_observation(config, dicts, truth, substream(seed, "grid", index, "trial", k, "noise"))
        traj = run_amp(Y, dicts, config, se, store_all=False)
        R = traj.final_R()
        ah = det.detect(R, params, config.nu)
        H = det.estimate_channels(R, params)
        actives.append(ah)
        for X, a, b, h in zip(truth.X, truth.activity, ah, H):
            n_act += int(a.sum())
            n_inact += int((~a).sum())
            n_miss += int((a & ~b).sum())
            n_fa += int((~a & b).sum())
            err_d.extend(np.sum(np.abs(X[a & b] - h[a & b]) ** 2, axis=1))
            pow_f.extend(np.sum(np.abs(h[~a & b]) ** 2, axis=1))
        if want_genie:
            genie.append(det.genie_mmse_empirical(Y, dicts, truth, config))

    v["md_emp"] = n_miss / n_act if n_act else math.nan
    v["fa_emp"] = n_fa / n_inact if n_inact else math.nan
    v["md_emp_se"] = _binom_se(v["md_emp"], n_act)
    v["fa_emp_se"] = _binom_se(v["fa_emp"], n_inact)
    if "mse" in metrics:
        v["mse_emp"], v["mse_emp_se"] = _mean_se(err_d)
        v["pow_emp"], v["pow_emp_se"] = _mean_se(pow_f)
    if want_genie:
        g = [x for x in genie if not math.isnan(x)]
        v["genie_emp"], v["genie_emp_se"] = _mean_se(g)
    v["n_active"] = n_act
    v["n_detected"] = len(err_d)

    rep = det.DetectionReport(
        estimated_active=actives,
        md_rate_emp=v["md_emp"], fa_rate_emp=v["fa_emp"],
        md_rate_inf=v["md_inf"], fa_rate_inf=v["fa_inf"],
        mse_d_emp=v["mse_emp"], pow_fa_emp=v["pow_emp"],
        mse_d_inf=v["mse_inf"], pow_fa_inf=v["pow_inf"],
        genie_mmse_emp=v["genie_emp"], genie_mmse_inf=v["genie_inf"],
        se={c: v[c] for c in COLUMNS if c.endswith("_se")},
    )
    return PointResult(dict(labels or {}), v, rep)


def _job(args):
    labels, config, trials, seed, index, metrics, mc = args
    return evaluate_point(config, trials, seed, index, metrics, mc, dict_cache=None, labels=labels)


def run_experiment(spec: ExperimentSpec, seed: int, threads: int = 1) -> list[PointResult]:
    """Evaluate every grid point; results come back in grid order whatever ``threads`` is."""
    pts = spec.points()
    jobs = [(lab, cfg.replace(seed=seed), spec.trials, seed, i, tuple(spec.metrics), spec.mc)
            for i, (lab, cfg) in enumerate(pts)]
    if threads <= 1:
        cache: dict = {}
        return [evaluate_point(c, tr, s, i, m, mc, dict_cache=cache, labels=lab)
                for lab, c, tr, s, i, m, mc in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_job, jobs))


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def header_comment(config: SystemConfig, seed: int, extra: str = "") -> str:
    line = f"# msamp {version()} config={config.digest()} seed={seed}"
    return line + (f" {extra}" if extra else "") + "\n"


def results_csv(results: list[PointResult], config: SystemConfig, seed: int, extra: str = "") -> str:
    buf = io.StringIO()
    buf.write(header_comment(config, seed, extra))
    w = csv.writer(buf, lineterminator="\n")
    label_cols = list(results[0].labels) if results else []
    w.writerow(["config_hash"] + label_cols + COLUMNS)
    for r in results:
        w.writerow([config.digest()] + [_fmt(r.labels[c]) for c in label_cols] + [_fmt(r.values[c]) for c in COLUMNS])
    return buf.getvalue()
