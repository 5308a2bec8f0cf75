"""Command-line interface: ``scalelaw <command> [options]``.

Every command writes into ``--out`` (created if needed): its tables as CSV
with a ``#`` config echo, and ``run.json`` with the resolved configuration.
Only ``run.json`` carries a timestamp, so reruns reproduce every other file
byte for byte.

Exit codes: 0 success, 1 error, 2 degenerate covariance (``fit`` and
``extrapolate``), 3 unreachable target (``estimate-data``).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .collection import (CollectionError, CollectionPolicy, oracle_from_table, plateau_ranges, plateau_scenarios,
                         required_samples, simulate_collection)
from .curve_data import CurveError, LearningCurve, load_manifest, read_curve, write_dictionary
from .fitting import FitError, LMOptions, fit_family
from .metamodel import (ForestConfig, MetaModelError, brute_force_switch, extract_features, ground_truth_switch,
                        linear_switch, load_model, loo_train_predict, ppl_eval_error, rf_predict, save_model,
                        train_meta)
from .metrics import evaluate, format_e_data, mean_prediction_error
from .predictors import Family, PredictorError, family_score, ppl_is_monotone
from .svgplot import loglog_svg
from .synth import SynthRanges, SynthSpecError, gen_dictionary
from .uncertainty import band, band_csv

log = logging.getLogger("scalelaw")

EXIT_OK, EXIT_ERROR, EXIT_DEGENERATE, EXIT_UNREACHABLE = 0, 1, 2, 3
BAND_POINTS = 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors exit with 1 so that 2 keeps its meaning for degenerate fits
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    inputs: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def echo(self) -> list[str]:
        lines = [f"scalelaw {__version__} {self.command}"]
        lines += [f"input = {p}" for p in self.inputs]
        lines += [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return lines


# ---------------------------------------------------------------- helpers

def parse_switch(text: str):
    """``meta``, ``linear``, ``brute`` or ``fixed:<N>`` (N a positive number)."""
    if text in ("meta", "linear", "brute"):
        return text
    if text.startswith("fixed:"):
        try:
            N = float(text[len("fixed:"):])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad switch value {text!r}") from None
        if not (N > 0 and math.isfinite(N)):
            raise argparse.ArgumentTypeError("fixed switch point must be positive")
        return N
    raise argparse.ArgumentTypeError(f"switch must be meta, linear, brute or fixed:<N>, got {text!r}")


def _unit_interval(text):
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"value must lie in (0, 1), got {text}")
    return x


def _positive_int(text):
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"value must be >= 1, got {text}")
    return x


def _positive_float(text):
    x = float(text)
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"value must be positive, got {text}")
    return x


def lm_options(args) -> LMOptions:
    return LMOptions(max_iter=args.max_iter, gtol=args.gtol, xtol=args.xtol,
                     scale_covariance=not args.unscaled_covariance)


def _warn_monotone(fit, n_lo, n_hi):
    if fit.family is Family.PPL and not ppl_is_monotone(fit.params, fit.N, n_lo, n_hi, warn=False):
        print(f"warning: fitted PPL is not monotone on [{n_lo:g}, {n_hi:g}]", file=sys.stderr)


def resolve_N(args, points, classes):
    family = Family(args.family)
    if family is not Family.PPL:
        return None
    s = args.switch
    if s == "linear":
        return linear_switch(points)
    if s == "brute":
        return brute_force_switch(points)
    if s == "meta":
        if args.meta_model is None:
            raise UsageError("--switch meta needs --meta-model")
        return rf_predict(load_model(args.meta_model), extract_features(points, classes))
    return float(s)


def fit_points_of(curve: LearningCurve, m, required=False):
    if m is None:
        if required:
            raise UsageError("--m is required")
        return curve.points
    if not 1 <= m <= len(curve.points):
        raise UsageError(f"--m must lie in [1, {len(curve.points)}], got {m}")
    return curve.points[:m]


def out_dir(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_manifest(out: Path, config: RunConfig, outputs, extra=None):
    doc = {"tool": "scalelaw", "version": __version__, "command": config.command, "inputs": config.inputs,
           "config": config.values, "outputs": sorted(outputs),
           "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    if extra:
        doc["summary"] = extra
    (out / "run.json").write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _comment(lines):
    return "".join(f"# {c}\n" for c in lines)


def _cfg(args, keys):
    vals = {}
    for k in keys:
        v = getattr(args, k)
        if isinstance(v, Family):
            v = v.value
        elif k == "switch" and isinstance(v, float):
            v = f"fixed:{v!r}"
        vals[k] = v
    return vals


FIT_KEYS = ["family", "switch", "m", "classes", "meta_model", "max_iter", "gtol", "xtol", "unscaled_covariance"]


def _read_input_curve(args):
    if args.classes is None:
        raise UsageError("--classes is required for a single curve")
    return read_curve(args.curve, args.classes)


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    curve = _read_input_curve(args)
    pts = fit_points_of(curve, args.m)
    N = resolve_N(args, pts, curve.classes)
    fit = fit_family(args.family, pts, N=N, options=lm_options(args))
    config = RunConfig("fit", [args.curve], _cfg(args, FIT_KEYS + ["n_cap"]))
    out = out_dir(args)
    echo = config.echo()
    (out / "fit.txt").write_text(_comment(echo) + fit.to_text(), encoding="utf-8")
    n_hi = args.n_cap if args.n_cap is not None else 10.0 * curve.points[-1].n
    grid = np.geomspace(curve.points[0].n, max(n_hi, curve.points[-1].n), BAND_POINTS)
    _warn_monotone(fit, pts[-1].n, grid[-1])
    b = band(fit, grid)
    (out / "band.csv").write_text(band_csv(b, echo), encoding="utf-8")
    lo = np.clip(b.mu_v - 3.0 * b.sigma_v, 0.0, 1.0)
    hi = np.clip(b.mu_v + 3.0 * b.sigma_v, 0.0, 1.0)
    svg = loglog_svg([(p.n, p.v) for p in curve.points], curve=(grid, b.mu_v), band=(grid, lo, hi),
                     title=f"{curve.name}: {Family(args.family).value}", markers=[] if N is None else [N])
    (out / "fit.svg").write_text(svg, encoding="utf-8")
    summary = {"converged": fit.converged, "degenerate": fit.degenerate, "N": N,
               "residual_norm": fit.residual_norm}
    write_manifest(out, config, ["fit.txt", "band.csv", "fit.svg"], summary)
    print(fit.to_text(), end="")
    if fit.degenerate:
        print("warning: singular normal matrix; covariance is a pseudo-inverse", file=sys.stderr)
        return EXIT_DEGENERATE
    if not fit.converged:
        print(f"error: fit did not converge in {args.max_iter} iterations", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    curve = _read_input_curve(args)
    pts = fit_points_of(curve, args.m, required=True)
    rest = curve.points[len(pts):]
    if not rest:
        raise UsageError("no points left beyond the fit points to extrapolate to")
    N = resolve_N(args, pts, curve.classes)
    fit = fit_family(args.family, pts, N=N, options=lm_options(args))
    n_eval = np.array([p.n for p in rest], dtype=float)
    _warn_monotone(fit, pts[-1].n, n_eval[-1])
    b = band(fit, n_eval)
    report = evaluate(rest, family_score(fit.family, fit.params, n_eval, fit.N))
    config = RunConfig("extrapolate", [args.curve], _cfg(args, FIT_KEYS))
    out = out_dir(args)
    lines = [_comment(config.echo()), f"# N = {N!r}\n# e_perf = {report.e_perf!r}\n# rmse = {report.rmse!r}\n",
             "n,v_true,v_pred,mu_v,sigma_v\n"]
    for (n, t, p), mu, sd in zip(report.per_point, b.mu_v, b.sigma_v):
        lines.append(f"{n:g},{t!r},{p!r},{float(mu)!r},{float(sd)!r}\n")
    (out / "extrapolate.csv").write_text("".join(lines), encoding="utf-8")
    summary = {"e_perf": report.e_perf, "rmse": report.rmse, "N": N}
    write_manifest(out, config, ["extrapolate.csv"], summary)
    print(f"fit points: {len(pts)}  evaluated: {len(rest)}  N: {N if N is not None else '-'}")
    print(f"E_perf = {report.e_perf:.4f}  RMSE = {report.rmse:.4f}")
    return EXIT_DEGENERATE if fit.degenerate else EXIT_OK


def _policy(args, classes):
    meta = load_model(args.meta_model) if args.switch == "meta" and args.meta_model else None
    if args.switch == "meta" and meta is None and Family(args.family) is Family.PPL:
        raise UsageError("--switch meta needs --meta-model")
    return CollectionPolicy(family=args.family, switch=args.switch, T=args.max_steps, tau=args.tau,
                            n_cap=args.n_cap, meta_model=meta, classes=classes, options=lm_options(args))


def cmd_estimate_data(args) -> int:
    if args.target is None:
        raise UsageError("--target is required")
    curve = _read_input_curve(args)
    init = fit_points_of(curve, args.m, required=True)
    oracle_curve = read_curve(args.oracle, curve.classes) if args.oracle else curve
    oracle = oracle_from_table(oracle_curve)
    policy = _policy(args, curve.classes)
    config = RunConfig("estimate-data", [args.curve] + ([args.oracle] if args.oracle else []),
                       _cfg(args, FIT_KEYS + ["target", "tau", "max_steps", "n_cap", "seed"]))
    if not math.isfinite(required_samples(oracle, args.target)):
        print(f"target {args.target} is unreachable: the oracle peaks at "
              f"{float(oracle.true_score(oracle.max_n)):.6g} by n={oracle.max_n}", file=sys.stderr)
        return EXIT_UNREACHABLE
    trace = simulate_collection(oracle, init, args.target, policy, seed=args.seed)
    out = out_dir(args)
    (out / "trace.csv").write_text(trace.to_csv(config.echo()), encoding="utf-8")
    summary = {"K": trace.K, "n_final": trace.n_final, "n_star": trace.n_star, "e_data": trace.e_data_label,
               "stop_reason": trace.stop_reason}
    write_manifest(out, config, ["trace.csv"], summary)
    print(f"K = {trace.K}  n_final = {trace.n_final}  n_star = {int(trace.n_star)}  "
          f"e_data = {trace.e_data_label}  stop = {trace.stop_reason}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenarios = plateau_scenarios(args.count, seed=args.seed)
    meta = load_model(args.meta_model) if args.meta_model else None
    if args.switch == "meta" and meta is None and Family(args.family) is Family.PPL:
        raise UsageError("--switch meta needs --meta-model")
    config = RunConfig("simulate", [], _cfg(args, FIT_KEYS[:2] + FIT_KEYS[4:] + ["tau", "max_steps", "n_cap",
                                                                           "seed", "count"]))
    rows = ["name,classes,v_target,n_star,K,n_final,e_data,stop_reason\n"]
    e = []
    for sc in scenarios:
        policy = CollectionPolicy(family=args.family, switch=args.switch, T=args.max_steps, tau=args.tau,
                                  n_cap=args.n_cap, meta_model=meta, classes=sc.classes, options=lm_options(args))
        tr = simulate_collection(sc.oracle, sc.init, sc.v_target, policy, seed=args.seed)
        e.append(tr.e_data)
        rows.append(f"{sc.name},{sc.classes},{sc.v_target!r},{int(tr.n_star)},{tr.K},{tr.n_final},"
                    f"{tr.e_data_label},{tr.stop_reason}\n")
    out = out_dir(args)
    (out / "simulate.csv").write_text(_comment(config.echo()) + "".join(rows), encoding="utf-8")
    e = np.array(e)
    summary = {"runs": len(e), "median_e_data": float(np.median(e)), "within_0.5": float(np.mean(np.abs(e) <= 0.5))}
    write_manifest(out, config, ["simulate.csv"], summary)
    print(f"runs = {len(e)}  median e_data = {np.median(e):.3f}  |e_data| <= 0.5: {np.mean(np.abs(e) <= 0.5):.0%}")
    return EXIT_OK


def _forest(args) -> ForestConfig:
    return ForestConfig(seed=args.seed, n_trees=args.n_trees, min_leaf=args.min_leaf)


def cmd_train_meta(args) -> int:
    d = load_manifest(args.manifest)
    if len(d) < 2:
        raise UsageError("training needs a manifest of at least 2 curves")
    if args.m is not None:
        d = type(d)(tuple(c.with_split(args.m) for c in d), d.task)
    n_stars = [ground_truth_switch(c) for c in d]
    model = train_meta(d, _forest(args), n_stars)
    config = RunConfig("train-meta", [args.manifest], _cfg(args, ["m", "seed", "n_trees", "min_leaf"]))
    out = out_dir(args)
    save_model(model, out / "meta_model.json")
    rows = [f"{c.name},{c.classes},{N!r}\n" for c, N in zip(d, n_stars)]
    (out / "n_star.csv").write_text(_comment(config.echo()) + "name,classes,n_star\n" + "".join(rows),
                                    encoding="utf-8")
    write_manifest(out, config, ["meta_model.json", "n_star.csv"], {"curves": len(d), "trees": len(model.trees)})
    print(f"trained {len(model.trees)} trees on {len(d)} curves -> {out / 'meta_model.json'}")
    return EXIT_OK


def cmd_eval_loo(args) -> int:
    d = load_manifest(args.manifest)
    if len(d) < 2:
        raise UsageError("leave-one-out needs a manifest of at least 2 curves")
    if args.m is not None:
        d = type(d)(tuple(c.with_split(args.m) for c in d), d.task)
    n_stars = [ground_truth_switch(c) for c in d]
    res = loo_train_predict(d, _forest(args), n_stars)
    config = RunConfig("eval-loo", [args.manifest], _cfg(args, ["m", "seed", "n_trees", "min_leaf"]))
    rows = ["name,n_star,n_hat,e_perf_ppl,e_perf_powerlaw3\n"]
    inside, e_ppl, e_pl = [], [], []
    for c in d:
        n_hat, n_star = res[c.name]
        a = ppl_eval_error(c.fit_points, c.eval_points, n_hat)
        try:
            f = fit_family(Family.POWER_LAW3, c.fit_points)
            n_ev = np.array([p.n for p in c.eval_points], dtype=float)
            b = mean_prediction_error(c.eval_points, family_score(f.family, f.params, n_ev))
        except (FitError, PredictorError):
            b = math.nan
        inside.append(n_star / 3.0 <= n_hat <= 3.0 * n_star)
        e_ppl.append(a)
        e_pl.append(b)
        rows.append(f"{c.name},{n_star!r},{n_hat!r},{a!r},{b!r}\n")
    out = out_dir(args)
    (out / "loo.csv").write_text(_comment(config.echo()) + "".join(rows), encoding="utf-8")
    summary = {"curves": len(d), "within_3x": float(np.mean(inside)), "mean_e_perf_ppl": float(np.nanmean(e_ppl)),
               "mean_e_perf_powerlaw3": float(np.nanmean(e_pl))}
    write_manifest(out, config, ["loo.csv"], summary)
    print(f"curves = {len(d)}  N_hat within [N*/3, 3N*]: {np.mean(inside):.0%}")
    print(f"mean E_perf  PPL(N_hat) = {np.nanmean(e_ppl):.3f}  PowerLaw3 = {np.nanmean(e_pl):.3f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ranges = plateau_ranges() if args.ranges == "plateau" else SynthRanges()
    if args.noise_sd is not None:
        ranges = SynthRanges(**{**ranges.__dict__, "noise_sd": args.noise_sd})
    d = gen_dictionary(args.count, ranges, seed=args.seed)
    out = out_dir(args)
    config = RunConfig("synth", [], _cfg(args, ["count", "seed", "ranges", "noise_sd"]))
    write_dictionary(d, out)
    write_manifest(out, config, ["manifest.json"] + [f"{c.name}.csv" for c in d], {"curves": len(d)})
    print(f"wrote {len(d)} curves to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--m", type=_positive_int, default=None, help="number of initial (fit) points")

    fitting = _Parser(add_help=False)
    fitting.add_argument("--family", type=Family, choices=list(Family), default=Family.PPL,
                         metavar="{" + ",".join(f.value for f in Family) + "}")
    fitting.add_argument("--switch", type=parse_switch, default=None,
                         help="switch source for the PPL: meta, linear, brute or fixed:<N> "
                              "(default: meta with --meta-model, else brute)")
    fitting.add_argument("--meta-model", default=None, help="meta-model JSON for --switch meta")
    fitting.add_argument("--max-iter", type=_positive_int, default=LMOptions.max_iter)
    fitting.add_argument("--gtol", type=_positive_float, default=LMOptions.gtol)
    fitting.add_argument("--xtol", type=_positive_float, default=LMOptions.xtol)
    fitting.add_argument("--n-cap", type=_positive_float, default=None)
    fitting.add_argument("--unscaled-covariance", action="store_true",
                         help="use (J^T J)^-1 without the residual-variance factor")

    collect = _Parser(add_help=False)
    collect.add_argument("--target", type=_unit_interval, default=None, help="target score v*")
    collect.add_argument("--tau", type=_unit_interval, default=None, help="confidence threshold")
    collect.add_argument("--max-steps", type=_positive_int, default=1, help="maximum collection steps T")

    forest = _Parser(add_help=False)
    forest.add_argument("--n-trees", type=_positive_int, default=ForestConfig.n_trees)
    forest.add_argument("--min-leaf", type=_positive_int, default=ForestConfig.min_leaf)

    p = _Parser(prog="scalelaw", description="Learning-curve fitting and data-requirement estimation.")
    p.add_argument("--version", action="version", version=f"scalelaw {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in (("fit", "fit a predictor and write its band and plot"),
                           ("extrapolate", "fit on the first m points and score the rest")):
        s = sub.add_parser(name, parents=[common, fitting], help=helptext)
        s.add_argument("curve")
        s.add_argument("--classes", type=_positive_int, default=None)

    s = sub.add_parser("estimate-data", parents=[common, fitting, collect],
                       help="simulate collection against a table oracle")
    s.add_argument("curve")
    s.add_argument("--classes", type=_positive_int, default=None)
    s.add_argument("--oracle", default=None, help="curve CSV used as ground truth (default: the input curve)")

    s = sub.add_parser("simulate", parents=[common, fitting, collect], help="batch of plateau-oracle scenarios")
    s.add_argument("--count", type=_positive_int, default=50)

    for name, helptext in (("train-meta", "train and save a switch-point meta-model"),
                           ("eval-loo", "leave-one-out evaluation of the meta-model")):
        s = sub.add_parser(name, parents=[common, forest], help=helptext)
        s.add_argument("manifest")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic curve dictionary")
    s.add_argument("--count", type=_positive_int, default=40)
    s.add_argument("--ranges", choices=["default", "plateau"], default="default")
    s.add_argument("--noise-sd", type=float, default=None)
    return p


COMMANDS = {"fit": cmd_fit, "extrapolate": cmd_extrapolate, "estimate-data": cmd_estimate_data,
            "simulate": cmd_simulate, "train-meta": cmd_train_meta, "eval-loo": cmd_eval_loo, "synth": cmd_synth}


def configure_logging():
    level = os.environ.get("SCALELAW_LOG", "WARNING").strip().upper()
    if level.isdigit():
        lvl = int(level)
    else:
        lvl = getattr(logging, level, None)
        if not isinstance(lvl, int):
            lvl = logging.WARNING
    logging.basicConfig(level=lvl, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    if hasattr(args, "switch") and args.switch is None:
        args.switch = "meta" if args.meta_model else "brute"
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CurveError, FitError, PredictorError, MetaModelError, CollectionError, SynthSpecError,
            OSError, ValueError) as exc:
        print(f"scalelaw {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
