"""Command-line interface: estimate, bounds, simulate, pretest.

Config precedence: flags override the optional JSON config file, which
overrides defaults; the resolved configuration, seed and package version are
embedded in every report so runs can be replayed exactly. Errors print to
stderr as ``error[category]: message`` with a category-specific exit code.
"""

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .effects import pretrend_lr_test
from .errors import ConfigError, InputError, OrdCicError
from .estimators import CicBounds, OrderedCicEstimator
from .fitting import FitOptions
from .montecarlo import run_design
from .report import dumps, write_report
from .validation import build_cells

EXIT_CODES = {
    "input": 2,
    "config": 3,
    "domain": 2,
    "convergence": 4,
    "infeasible-alpha": 5,
    "internal": 1,
}

_DEFAULTS = {
    "copula": "frank",
    "rho": None,
    "theta_start": None,
    "alpha": None,
    "smooth_kappa": 1e4,
    "n_boot": 200,
    "level": 0.95,
    "k": 1.0,
    "seed": 0,
    "threads": None,
    "restarts": 4,
    "out": None,
    "counterfactual_copula": "treated-pre",
    "restrict": "consumption",
    "xcols": "",
    "zcols": "",
    "outcome": "outcome",
    "group": "group",
    "time": "time",
    "instrument": "instrument",
    "case": "2a",
    "n": 10000,
    "reps": 200,
}


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="write the structured report to this path")


def _add_data_args(p):
    p.add_argument("--input", required=True, help="comma-delimited file with header")
    p.add_argument("--outcome")
    p.add_argument("--group")
    p.add_argument("--time")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ordcic",
        description=(
            "Changes-in-changes estimation, bounds and simulation for "
            "ordered outcomes with one-sided underreporting"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="four-cell ML fit and treatment effects")
    _add_data_args(est)
    est.add_argument("--xcols", help="comma-separated consumption covariates")
    est.add_argument("--zcols", help="comma-separated reporting covariates")
    est.add_argument("--copula", choices=["frank", "clayton", "independence"])
    est.add_argument("--rho", type=float, help="target Spearman rho for the start")
    est.add_argument("--theta-start", dest="theta_start", type=float)
    est.add_argument("--restarts", type=int)
    est.add_argument(
        "--counterfactual-copula",
        dest="counterfactual_copula",
        choices=["treated-pre", "control-post"],
    )
    _add_common(est)

    bnd = sub.add_parser("bounds", help="nonparametric counterfactual bounds")
    _add_data_args(bnd)
    bnd.add_argument("--instrument")
    bnd.add_argument("--alpha", type=float, help="cap on cumulative underreporting")
    bnd.add_argument("--smooth-kappa", dest="smooth_kappa", type=float)
    bnd.add_argument("--B", dest="n_boot", type=int)
    bnd.add_argument("--level", type=float)
    bnd.add_argument("--k", type=float)
    _add_common(bnd)

    sim = sub.add_parser("simulate", help="replicate a simulation design case")
    sim.add_argument("--case", choices=["0", "1a", "1b", "2a", "2b"])
    sim.add_argument("--family", dest="copula", choices=["frank", "clayton"])
    sim.add_argument("--rho", type=float)
    sim.add_argument("--n", type=int)
    sim.add_argument("--reps", type=int)
    _add_common(sim)

    pre = sub.add_parser("pretest", help="likelihood-ratio pre-trend test")
    _add_data_args(pre)
    pre.add_argument("--xcols")
    pre.add_argument("--zcols")
    pre.add_argument("--copula", choices=["frank", "clayton", "independence"])
    pre.add_argument("--rho", type=float)
    pre.add_argument("--theta-start", dest="theta_start", type=float)
    pre.add_argument("--restarts", type=int)
    pre.add_argument("--restrict", choices=["consumption", "both"])
    _add_common(pre)
    return parser


def resolve_config(args):
    """defaults <- config file <- explicit flags, with the winner echoed."""
    cfg = dict(_DEFAULTS)
    ns = {k: v for k, v in vars(args).items() if v is not None}
    path = ns.pop("config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        unknown = set(file_cfg) - set(_DEFAULTS) - {"input", "command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    cfg.update(ns)
    if cfg.get("threads") is None:
        env = os.environ.get("ORDCIC_THREADS")
        cfg["threads"] = int(env) if env else 1
    return cfg


def _split_cols(spec):
    if not spec:
        return []
    return [c.strip() for c in str(spec).split(",") if c.strip()]


def _read_input(cfg):
    path = cfg["input"]
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}")
    except Exception as exc:  # malformed delimited text
        raise InputError(f"cannot parse {path}: {exc}")
    if cfg["outcome"] not in df.columns:
        raise InputError(f"missing outcome column {cfg['outcome']!r}")
    return df


def _echo_config(cfg):
    clean = {k: v for k, v in cfg.items() if k != "command"}
    return {"version": __version__, "config": clean}


def _print_table(headers, rows, stream):
    widths = [len(h) for h in headers]
    txt_rows = []
    for row in rows:
        txt = [f"{v:.6g}" if isinstance(v, float) else str(v) for v in row]
        widths = [max(w, len(t)) for w, t in zip(widths, txt)]
        txt_rows.append(txt)
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line, file=stream)
    print("-" * len(line), file=stream)
    for txt in txt_rows:
        print("  ".join(t.ljust(w) for t, w in zip(txt, widths)), file=stream)


def _cell_report(fit):
    labels = fit.transform.labels()
    se = fit.se_natural()
    values = np.concatenate(
        [
            fit.params.eta_bar,
            [fit.params.lam],
            fit.params.pi_bar,
            [fit.params.zeta],
            [] if fit.params.theta is None else [fit.params.theta],
        ]
    )
    return {
        "n": fit.n_obs,
        "labels": labels,
        "estimates": values,
        "se": None if se is None else se,
        "nll": fit.nll,
        "converged": fit.converged,
        "iterations": fit.n_iter,
        "restarts_used": fit.restarts_used,
        "gradient_norm": fit.grad_norm,
        "floored_probabilities": fit.floored,
    }


def cmd_estimate(cfg, stream):
    df = _read_input(cfg)
    est = OrderedCicEstimator(
        x_cols=_split_cols(cfg["xcols"]),
        z_cols=_split_cols(cfg["zcols"]),
        group_col=cfg["group"],
        time_col=cfg["time"],
        copula=cfg["copula"],
        theta_start=cfg["theta_start"],
        target_rho=cfg["rho"],
        restarts=cfg["restarts"],
        seed=cfg["seed"],
        counterfactual_copula=cfg["counterfactual_copula"],
        n_jobs=cfg["threads"],
    )
    est.fit(df, df[cfg["outcome"]])

    report = _echo_config(cfg)
    report["cells"] = {
        f"g{tag[0]}t{tag[1]}": _cell_report(fit) for tag, fit in est.cells_.items()
    }
    cf = est.counterfactual_
    report["counterfactual"] = {
        "eta_bar": cf.eta_bar,
        "lambda": cf.lam,
        "pi_bar": cf.pi_bar,
        "zeta": cf.zeta,
        "theta": cf.theta,
    }
    report["tau_consumption"] = {
        "estimate": est.tau_consumption_.tau,
        "se": est.tau_consumption_.se,
    }
    report["tau_reporting"] = {
        "estimate": est.tau_reporting_.tau,
        "se": est.tau_reporting_.se,
    }
    report["decomposition"] = {
        f"level_{j}": {
            "dependence": comps[0],
            "consumption_marginal": comps[1],
            "reporting_marginal": comps[2],
            "total": float(np.sum(comps)),
        }
        for j, comps in est.decomposition_.items()
    }

    print("Per-cell estimates", file=stream)
    for tag, fit in est.cells_.items():
        print(f"\ncell (g={tag[0]}, t={tag[1]}), n={fit.n_obs}", file=stream)
        se = fit.se_natural()
        rows = []
        vals = report["cells"][f"g{tag[0]}t{tag[1]}"]["estimates"]
        for i, lab in enumerate(fit.transform.labels()):
            rows.append((lab, float(vals[i]), float(se[i]) if se is not None else float("nan")))
        _print_table(["param", "estimate", "se"], rows, stream)
    print("\nTreatment effects (marginalized)", file=stream)
    rows = []
    for j in range(3):
        rows.append(
            (
                f"tau_c({j})",
                float(est.tau_consumption_.tau[j]),
                float(est.tau_consumption_.se[j]),
            )
        )
    for j in range(3):
        rows.append(
            (
                f"tau_r({j})",
                float(est.tau_reporting_.tau[j]),
                float(est.tau_reporting_.se[j]),
            )
        )
    _print_table(["effect", "estimate", "se"], rows, stream)
    return report


def cmd_bounds(cfg, stream):
    df = _read_input(cfg)
    if cfg["alpha"] is None:
        raise ConfigError("--alpha is required for the bounds command")
    est = CicBounds(
        alpha=cfg["alpha"],
        instrument_col=cfg["instrument"],
        group_col=cfg["group"],
        time_col=cfg["time"],
        smooth_kappa=cfg["smooth_kappa"],
        n_boot=cfg["n_boot"],
        level=cfg["level"],
        k=cfg["k"],
        seed=cfg["seed"],
    )
    est.fit(df, df[cfg["outcome"]])
    res = est.result_
    report = _echo_config(cfg)
    report["feasibility"] = {
        "ratio": est.feasibility_.ratio,
        "alpha": est.feasibility_.alpha,
        "feasible": est.feasibility_.feasible,
    }
    report["instrument_support"] = est.instrument_support_
    report["cells"] = {
        f"g{tag[0]}t{tag[1]}": {"lower": lw, "upper": up}
        for tag, (lw, up) in est.cell_bounds_.items()
    }
    report["counterfactual"] = {
        "lower": res.lower,
        "upper": res.upper,
        "smooth_lower": res.smooth_lower,
        "smooth_upper": res.smooth_upper,
        "band_lower": res.band_lower,
        "band_upper": res.band_upper,
        "dropped_replicates": res.dropped_replicates,
    }
    print(
        f"feasibility ratio {est.feasibility_.ratio:.6g} "
        f"(alpha = {cfg['alpha']:.6g}, feasible = {est.feasibility_.feasible})",
        file=stream,
    )
    rows = []
    for j in range(3):
        rows.append(
            (
                j,
                float(res.lower[j]),
                float(res.upper[j]),
                float(res.smooth_lower[j]),
                float(res.smooth_upper[j]),
                float(res.band_lower[j]),
                float(res.band_upper[j]),
            )
        )
    _print_table(
        ["level", "L", "U", "smooth L", "smooth U", "band L", "band U"], rows, stream
    )
    return report


def cmd_simulate(cfg, stream):
    result = run_design(
        cfg["case"],
        cfg["copula"],
        cfg["rho"] if cfg["rho"] is not None else -0.5,
        cfg["n"],
        cfg["reps"],
        cfg["seed"],
        n_jobs=cfg["threads"],
    )
    report = _echo_config(cfg)
    report["design"] = {
        "case": result.case,
        "family": result.family,
        "target_rho": result.target_rho,
        "theta_true": result.theta_true,
        "n": result.n,
        "reps": result.reps,
        "failed_fits": result.n_failed,
        "forced_fits": result.n_forced,
    }
    report["parameters"] = result.rows()
    rows = [
        (
            r["param"],
            r["truth"],
            r["mean_bias"],
            r["mc_se"],
            r["rmse"],
            r["robust_rmse"],
        )
        for r in result.rows()
    ]
    _print_table(
        ["param", "truth", "mean bias", "mc se", "rmse", "robust rmse"], rows, stream
    )
    print(
        f"\nfailed fits: {result.n_failed}   forced (budget-exhausted) fits: "
        f"{result.n_forced}",
        file=stream,
    )
    return report


def cmd_pretest(cfg, stream):
    df = _read_input(cfg)
    cells = build_cells(
        df,
        df[cfg["outcome"]],
        _split_cols(cfg["xcols"]),
        _split_cols(cfg["zcols"]),
        cfg["group"],
        cfg["time"],
    )
    options = FitOptions(
        restarts=cfg["restarts"],
        seed=cfg["seed"],
        theta_start=cfg["theta_start"],
        target_rho=cfg["rho"],
    )
    res = pretrend_lr_test(cells, cfg["copula"], options, restrict=cfg["restrict"])
    report = _echo_config(cfg)
    report["pretest"] = {
        "statistic": res.statistic,
        "df": res.df,
        "p_value": res.p_value,
        "restrict": res.restrict,
        "nll_unrestricted": res.nll_unrestricted,
        "nll_restricted": res.nll_restricted,
    }
    print(
        f"LR statistic {res.statistic:.6g} on {res.df} df  ->  "
        f"p-value {res.p_value:.6g} ({res.restrict} restrictions)",
        file=stream,
    )
    return report


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg["command"] = args.command
        handler = {
            "estimate": cmd_estimate,
            "bounds": cmd_bounds,
            "simulate": cmd_simulate,
            "pretest": cmd_pretest,
        }[args.command]
        report = handler(cfg, sys.stdout)
        if cfg.get("out"):
            write_report(cfg["out"], report)
            print(f"report written to {cfg['out']}")
        return 0
    except OrdCicError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
