"""Command line: ``msamp {run, se, oracle, validate, gen-config}``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .experiment import AXES, METRICS, ExperimentSpec, header_comment, results_csv, run_experiment
from .model import SystemConfig, wyner_config


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_config(args) -> SystemConfig:
    cfg = SystemConfig.load(args.config) if args.config else wyner_config(1024, [0.1, 0.1], 0.1)
    changes = {}
    if getattr(args, "dict", None):
        changes["dict_kind"] = args.dict
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def plot_svg(csv_text: str, path, axis: str) -> None:
    """Empirical against asymptotic rates per grid point, drawn from the CSV."""
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(line for line in io.StringIO(csv_text) if not line.startswith("#")))
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, style in (("md", "o"), ("fa", "s")):
        ax.plot(x, [float(r[f"{key}_inf"]) for r in rows], "-", label=f"{key} asymptotic")
        ax.plot(x, [float(r[f"{key}_emp"]) for r in rows], style, mfc="none", label=f"{key} empirical")
    ax.set_xlabel(f"{axis} grid point")
    ax.set_ylabel("rate")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    grid = {"lambda": args.lambda_grid, "nu": args.nu_grid, "L": args.L_grid}[args.axis]
    if grid is None:
        grid = list(cfg.lam[:1]) if args.axis == "lambda" else ([cfg.nu[0]] if args.axis == "nu" else [cfg.L])
    kinds = tuple(args.compare) if args.compare else (cfg.dict_kind.value,)
    spec = ExperimentSpec(cfg, args.axis, grid, trials=args.trials, metrics=tuple(args.metrics),
                          dict_kinds=kinds, mc=args.mc)
    try:
        res = run_experiment(spec, args.seed, threads=args.threads)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"msamp run: {exc}", file=sys.stderr)
        return 2
    text = results_csv(res, cfg, args.seed, extra=f"axis={args.axis} trials={args.trials}")
    _write(text, args.out)
    if args.plot:
        plot_svg(text, args.plot, args.axis)
    return 0


def cmd_se(args) -> int:
    from .state_evolution import run_state_evolution

    cfg = _load_config(args)
    se = run_state_evolution(cfg)
    _write(header_comment(cfg, cfg.seed) + se.to_csv(), args.out)
    return 0


def cmd_oracle(args) -> int:
    from .oracle import moment_ensemble, oracle_config
    from .state_evolution import run_state_evolution

    cfg = oracle_config(N=args.N, T=args.T, lam=args.lam, seed=args.seed)
    se = run_state_evolution(cfg)
    rep = moment_ensemble(cfg, se, args.seeds, seed=args.seed)
    _write(header_comment(cfg, args.seed, extra=f"seeds={args.seeds}") + rep.to_csv(), args.out)
    return 0 if rep.passed else 1


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(seed=args.seed, quick=args.quick)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return 1 if n_fail else 0


def cmd_gen_config(args) -> int:
    lam = args.lam if len(args.lam) > 1 else args.lam * 2
    cfg = wyner_config(args.L, lam, args.noise_var, locations=args.locations, alpha=args.alpha,
                       crosstalk=args.crosstalk, T=args.T, dict_kind=args.dict or "fourier",
                       seed=args.seed, nu=[args.nu] * args.locations)
    _write(cfg.to_text(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msamp", description="Multi-source AMP simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH", help="config file (default: 2-location model, L=1024)")
            sp.add_argument("--dict", choices=("haar", "fourier"), help="override the dictionary kind")
        sp.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("run", help="sweep a grid and tabulate empirical and asymptotic metrics")
    common(sp)
    sp.add_argument("--axis", choices=AXES, default="lambda")
    sp.add_argument("--lambda-grid", type=_floats, help="values for lambda_1 x lambda_2")
    sp.add_argument("--nu-grid", type=_floats)
    sp.add_argument("--L-grid", type=_floats)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--threads", type=int, default=1, help="worker processes")
    sp.add_argument("--metrics", nargs="+", choices=METRICS, default=list(METRICS))
    sp.add_argument("--compare", nargs="+", choices=("haar", "fourier"), help="run every listed dictionary kind")
    sp.add_argument("--mc", type=int, help="Monte-Carlo samples for asymptotic metrics")
    sp.add_argument("--plot", metavar="SVG", help="also draw the rates to an SVG file")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("se", help="two-time state-evolution covariances as CSV")
    common(sp)
    sp.set_defaults(func=cmd_se)

    sp = sub.add_parser("oracle", help="compare explicit-Haar and Householder-dice residual moments")
    common(sp, config=False)
    sp.add_argument("--N", type=int, default=48)
    sp.add_argument("--T", type=int, default=3)
    sp.add_argument("--lam", type=float, default=0.3)
    sp.add_argument("--seeds", type=int, default=2000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("validate", help="run the acceptance checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quick", action="store_true", help="small sample sizes (smoke run)")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gen-config", help="write a 2- or 4-location config file")
    common(sp, config=False)
    sp.add_argument("--dict", choices=("haar", "fourier"))
    sp.add_argument("--L", type=int, default=4096)
    sp.add_argument("--locations", type=int, choices=(2, 4), default=2)
    sp.add_argument("--lam", type=_floats, default=[0.1])
    sp.add_argument("--noise-var", type=float, default=0.1)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--crosstalk", type=float, default=0.5)
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--T", type=int, default=10)
    sp.set_defaults(func=cmd_gen_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"msamp {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
