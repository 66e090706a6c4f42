"""Command-line interface: simulate, fit, tune, diagnose, eval, experiment, verify.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage or validation error.
"""
import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._linalg import RankError
from .data import InvalidDataError, center, read_data, sample_covariance, write_data
from .diagnostics import (OFFDIAG, WITH_DIAG, meinshausen_threshold, population_gamma,
                          theory_constants)
from .evaluate import (EvaluationError, ExperimentConfig, calibrate_rate_constant,
                       crossing_n, family_roc, recovery_probability, rescale_alignment)
from .io import estimate_to_dict, path_to_dict, read_json, write_json, write_path_csv, write_rows_csv
from .losses import NONNEG, REAL_LINE, FamilySpec, build_loss
from .path import UnsupportedPenalty, solve_path
from .penalty import GROUP, L1, default_penalty, lambda_max
from .simulate import (NonNormalizableError, TruthSpec, chain_truth, contaminate, erdos_renyi_graph,
                       hub_lattice_graph, lattice_graph, lattice_truth,
                       normal_conditionals_truth, precision_block_uniform, precision_discrete,
                       precision_peng, sample_mvt, sample_truth, star_truth)
from .tuning import EbicConfig, fit_grid, lambda_grid, select_lambda_ebic


class UsageError(Exception):
    """Invalid arguments or inputs; maps to exit code 2."""


SIM_DESIGNS = ("chain", "lattice", "star", "truncated-blocks", "peng", "hub-lattice",
               "normal-conditionals", "discrete", "mvt", "contaminated")
FAMILIES = ("gaussian", "truncated-gaussian", "location", "normal-conditionals")
DOMAIN_NAMES = {"real": REAL_LINE, "nonnegative": NONNEG}


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SCOREMATCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SCOREMATCH_THREADS must be an integer, got {env!r}") from None
    return 1


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, inputs, outputs, started, extra=None):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _need(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise UsageError(f"design {args.design!r} needs --{name}")


def _simulate_truth(args) -> TruthSpec:
    d = args.design
    if d == "chain":
        _need(args, "m")
        return chain_truth(args.m, 0.3 if args.edge_value is None else args.edge_value)
    if d == "lattice":
        _need(args, "side")
        return lattice_truth(args.side, 0.2 if args.edge_value is None else args.edge_value)
    if d == "star":
        _need(args, "m", "d")
        return star_truth(args.m, args.d)
    if d == "truncated-blocks":
        _need(args, "blocks", "block-size")
        return precision_block_uniform(args.blocks, args.block_size, seed=args.seed)
    if d == "peng":
        _need(args, "m")
        graph = erdos_renyi_graph(args.m, args.p if args.p is not None else 2.0 / args.m, seed=args.seed)
        return precision_peng(graph, seed=args.seed)
    if d == "hub-lattice":
        _need(args, "side")
        graph = hub_lattice_graph(args.components, args.side, args.hubs, args.hub_degree, seed=args.seed)
        return precision_peng(graph, seed=args.seed)
    if d == "normal-conditionals":
        _need(args, "side")
        return normal_conditionals_truth(lattice_graph(args.side))
    if d == "discrete":
        _need(args, "m")
        return precision_discrete(args.m, seed=args.seed)
    if d in ("mvt", "contaminated"):
        _need(args, "m")
        graph = erdos_renyi_graph(args.m, args.p if args.p is not None else 2.0 / args.m, seed=args.seed)
        return precision_peng(graph, seed=args.seed)
    raise UsageError(f"unknown design {d!r}")


def cmd_simulate(args):
    started = time.perf_counter()
    if args.n < 1:
        raise UsageError("--n must be positive")
    truth = _simulate_truth(args)
    if args.design == "mvt":
        X = sample_mvt(truth.Sigma, args.df, args.n, seed=args.seed, stream=1)
    else:
        X = sample_truth(truth, args.n, seed=args.seed, stream=1,
                         **({} if truth.family == "gaussian" else {"burnin": args.burnin, "thin": args.thin}))
        if args.design == "contaminated":
            X = contaminate(X, args.fraction, args.noise_variance, seed=args.seed, stream=2)
    truth.meta.update({"design": args.design, "seed": args.seed})
    out = _outdir(args)
    data_path, truth_path = out / "data.csv", out / "truth.json"
    write_data(data_path, X)
    write_json(truth_path, truth.to_dict())
    _write_manifest(out, args, [], [data_path, truth_path], started)
    return 0


# ---------------------------------------------------------------------------
# fit / tune / verify
# ---------------------------------------------------------------------------


def _load_data(args) -> np.ndarray:
    X = read_data(args.data).values
    if args.center == "center":
        X = center(X)
    elif args.center == "standardize":
        X = center(X, scale=True)
    return X


def _family(args) -> FamilySpec:
    domain = DOMAIN_NAMES[args.domain] if args.domain else None
    try:
        return FamilySpec(args.family, domain)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _loss(args, X):
    fam = _family(args)
    if fam.nonnegative and np.any(X < 0):
        hint = "" if args.domain else " (truncated families are defined on the non-negative orthant)"
        raise UsageError(f"family {args.family!r} with domain {fam.domain!r} requires all "
                         f"observations >= 0, but the data has negative entries{hint}")
    return build_loss(fam, X)


def _lambdas(args, loss, penalty):
    if args.lambdas:
        if any(l < 0 for l in args.lambdas):
            raise UsageError("penalty levels must be non-negative")
        return np.asarray(args.lambdas, dtype=float)
    if args.grid:
        return lambda_grid(lambda_max(loss, penalty), args.grid, args.ratio)
    return None


def endpoint_check(X, tol: float = 1e-8) -> dict:
    """Compare the Gaussian path's value at zero penalty with the inverse second-moment matrix."""
    n, m = X.shape
    loss = build_loss("gaussian", X)
    path = solve_path(loss)
    out = {"n": n, "m": m, "termination": path.termination, "tolerance": tol}
    if path.lambda_min > 0:
        out.update({"passed": False, "reason": f"path stopped at lambda={path.lambda_min:g}"})
        return out
    K = path.estimate_at(0.0).matrix()
    err = float(np.abs(K - np.linalg.inv(sample_covariance(X))).max())
    out.update({"max_abs_error": err, "passed": bool(err <= tol)})
    return out


def cmd_fit(args):
    started = time.perf_counter()
    X = _load_data(args)
    loss = _loss(args, X)
    penalty = default_penalty(loss.layout, args.penalty)
    out = _outdir(args)
    outputs = []
    if args.solver == "path":
        if args.penalty == GROUP:
            raise UsageError("the path solver supports --penalty l1 only; use --solver cd")
        path = solve_path(loss, penalty, lambda_min=args.lambda_min)
        kkt = [path.estimate_at(float(l), loss).kkt_residual for l in path.knots]
        obj = path_to_dict(path, kkt)
        obj["family"] = loss.family
        if args.verify:
            obj["endpoint_check"] = endpoint_check(X)
        write_json(out / "path.json", obj)
        write_path_csv(path, out / "path.csv")
        outputs += [out / "path.json", out / "path.csv"]
    else:
        lams = _lambdas(args, loss, penalty)
        if lams is None:
            raise UsageError("--solver cd needs --lambda or --grid")
        ests = fit_grid(loss, penalty, lams, tol=args.tol)
        obj = {"family": loss.family, "penalty": args.penalty,
               "estimates": [estimate_to_dict(e, group_norms=args.penalty == GROUP) for e in ests]}
        write_json(out / "estimate.json", obj)
        outputs.append(out / "estimate.json")
    _write_manifest(out, args, [args.data], outputs, started)
    return 0


def cmd_tune(args):
    started = time.perf_counter()
    X = _load_data(args)
    loss = _loss(args, X)
    penalty = default_penalty(loss.layout, args.penalty)
    config = EbicConfig(args.gamma, args.refit, not args.unscaled)
    if args.solver == "path":
        if args.penalty == GROUP:
            raise UsageError("the path solver supports --penalty l1 only; use --solver cd")
        candidates = solve_path(loss, penalty)
    else:
        lams = _lambdas(args, loss, penalty)
        if lams is None:
            lams = lambda_grid(lambda_max(loss, penalty), 50, args.ratio)
        candidates = fit_grid(loss, penalty, lams, tol=args.tol)
    sel = select_lambda_ebic(candidates, loss, X.shape[0], config, penalty)
    out = _outdir(args)
    obj = {"lambda": sel.lam, "gamma": config.gamma, "refit": config.refit,
           "scale_loss_by_n": config.scale_loss_by_n, "table": sel.table,
           "estimate": estimate_to_dict(sel.estimate, group_norms=args.penalty == GROUP)}
    write_json(out / "selection.json", obj)
    _write_manifest(out, args, [args.data], [out / "selection.json"], started,
                    {"gamma": config.gamma})
    return 0


def cmd_verify(args):
    X = read_data(args.data).values
    report = endpoint_check(X, args.tol)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = _outdir(args)
        (out / "verify.json").write_text(text + "\n")
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------------
# diagnose / eval
# ---------------------------------------------------------------------------


def _read_truth(path) -> TruthSpec:
    try:
        return TruthSpec.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed truth file {path}: {exc}") from None


def cmd_diagnose(args):
    started = time.perf_counter()
    out = _outdir(args)
    if args.meinshausen:
        obj = {"threshold": meinshausen_threshold(args.convention == WITH_DIAG), "convention": args.convention}
        write_json(out / "report.json", obj)
        _write_manifest(out, args, [], [out / "report.json"], started)
        return 0
    if not args.truth:
        raise UsageError("diagnose needs --truth or --meinshausen")
    truth = _read_truth(args.truth)
    if truth.family == "gaussian":
        gamma = population_gamma("gaussian", truth, args.mc_samples, seed=args.seed)
    elif truth.family == "truncated-gaussian":
        gamma = population_gamma("truncated-gaussian", truth, args.mc_samples or 20000, seed=args.seed)
    else:
        raise UsageError(f"diagnose supports gaussian and truncated-gaussian truths, not {truth.family!r}")
    Sigma = truth.Sigma if truth.family == "gaussian" else None
    report = theory_constants(gamma, truth.K, Sigma=Sigma, convention=args.convention)
    write_json(out / "report.json", report.to_dict())
    _write_manifest(out, args, [args.truth], [out / "report.json"], started)
    return 0


def cmd_eval(args):
    started = time.perf_counter()
    X = read_data(args.data).values
    truth = _read_truth(args.truth)
    if truth.m != X.shape[1]:
        raise UsageError(f"truth has {truth.m} nodes but data has {X.shape[1]} columns")
    out = _outdir(args)
    outputs, aucs = [], {}
    for fam in args.families:
        if fam == "truncated-gaussian" and np.any(X < 0):
            raise UsageError("truncated-gaussian needs non-negative data")
        roc = family_roc(fam, X, truth.graph, args.grid)
        aucs[fam] = roc.auc
        dest = out / f"roc_{fam}.csv"
        write_rows_csv(dest, [{"lambda": l, "fpr": f, "tpr": t}
                              for l, f, t in zip(roc.lambdas, roc.fpr, roc.tpr)], ["lambda", "fpr", "tpr"])
        outputs.append(dest)
    write_json(out / "auc.json", aucs)
    outputs.append(out / "auc.json")
    _write_manifest(out, args, [args.data, args.truth], outputs, started)
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def builtin_configs() -> list:
    return sorted(p.name[:-5] for p in resources.files("scorematch.configs").iterdir()
                  if p.name.endswith(".json"))


def load_experiment_config(ref) -> dict:
    """Read an experiment config from a path or a bundled config name."""
    path = Path(ref)
    if path.exists():
        return json.loads(path.read_text())
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in builtin_configs():
        return json.loads(resources.files("scorematch.configs").joinpath(name + ".json").read_text())
    raise FileNotFoundError(f"no config file {ref!r} (bundled: {', '.join(builtin_configs())})")


def cmd_experiment(args):
    started = time.perf_counter()
    raw = load_experiment_config(args.config)
    try:
        config = ExperimentConfig.from_dict(raw)
    except KeyError as exc:
        raise UsageError(f"experiment config is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment config: {exc}") from None
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = ExperimentConfig(**{**config.to_dict(), **overrides})
    threads = _threads(args)
    calibration = None
    if args.calibrate:
        calibration = calibrate_rate_constant(config, args.calibrate, threads=threads)
        config = ExperimentConfig(**{**config.to_dict(), "c": calibration["c"]})
    rows = recovery_probability(config, threads)
    out = _outdir(args)
    cols = ["value", "m", "n", "rescaled_n", "success", "trials", "c"]
    write_rows_csv(out / "recovery.csv", rows, cols)
    summary = {"config": config.to_dict(),
               "crossing_n50": {str(v): crossing_n(rows, v) for v in config.values}}
    if calibration:
        summary["calibration"] = calibration
    if len(config.values) > 1:
        for key, fn in (("rescaled", lambda n, m, v: n / config.scale(v)), ("raw", lambda n, m, v: n)):
            try:
                summary[f"alignment_{key}"] = rescale_alignment(rows, fn)
            except EvaluationError as exc:
                summary[f"alignment_{key}"] = None
                summary[f"alignment_{key}_error"] = str(exc)
    write_json(out / "alignment.json", summary)
    _write_manifest(out, args, [args.config], [out / "recovery.csv", out / "alignment.json"], started,
                    {"seed": config.seed, "threads": threads})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_fit_options(p):
    p.add_argument("--data", required=True, help="headerless CSV or JSON data file (rows are samples)")
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--domain", choices=sorted(DOMAIN_NAMES),
                   help="support of the data (default: real for gaussian and normal-conditionals, "
                        "nonnegative for truncated families)")
    p.add_argument("--center", choices=("none", "center", "standardize"), default="none",
                   help="column preprocessing before fitting")
    p.add_argument("--solver", choices=("path", "cd"), default="path")
    p.add_argument("--penalty", choices=(L1, GROUP), default=L1)
    p.add_argument("--lambda", dest="lambdas", type=float, nargs="+", help="penalty levels for --solver cd")
    p.add_argument("--grid", type=int, help="number of log-spaced penalty levels from lambda_max")
    p.add_argument("--ratio", type=float, default=1e-3, help="smallest grid level as a fraction of lambda_max")
    p.add_argument("--tol", type=float, default=1e-8, help="coordinate descent tolerance")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorematch",
                                     description="Sparse score-matching estimation of graphical models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a data set from a synthetic design")
    p.add_argument("--design", choices=SIM_DESIGNS, required=True)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--m", type=int, help="number of nodes (chain, star, peng, discrete, mvt, contaminated)")
    p.add_argument("--side", type=int, help="lattice side length (lattice, hub-lattice, normal-conditionals)")
    p.add_argument("--d", type=int, help="hub degree of the star design")
    p.add_argument("--blocks", type=int, help="number of blocks (truncated-blocks)")
    p.add_argument("--block-size", type=int, help="nodes per block (truncated-blocks)")
    p.add_argument("--edge-value", type=float, help="interaction strength (chain, lattice)")
    p.add_argument("--p", type=float, help="edge probability of the random graph (default 2/m)")
    p.add_argument("--components", type=int, default=1, help="hub-lattice components")
    p.add_argument("--hubs", type=int, default=3, help="hubs per hub-lattice component")
    p.add_argument("--hub-degree", type=int, default=20)
    p.add_argument("--df", type=float, default=3.0, help="degrees of freedom (mvt)")
    p.add_argument("--fraction", type=float, default=0.02, help="contaminated row fraction")
    p.add_argument("--noise-variance", type=float, default=0.2)
    p.add_argument("--burnin", type=int, default=100, help="Gibbs burn-in sweeps")
    p.add_argument("--thin", type=int, default=10, help="Gibbs thinning interval")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a solution path or a grid of penalty levels")
    _add_fit_options(p)
    p.add_argument("--lambda-min", type=float, default=0.0, help="lower end of the path")
    p.add_argument("--verify", action="store_true",
                   help="also check the Gaussian zero-penalty endpoint against the inverse second moment")
    p.add_argument("--seed", type=int, default=0, help="recorded only; fitting is deterministic")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="select the penalty level by extended BIC")
    _add_fit_options(p)
    p.add_argument("--gamma", type=float, default=0.5, help="extended BIC gamma")
    p.add_argument("--refit", action="store_true", help="score unpenalised refits on each support")
    p.add_argument("--unscaled", action="store_true", help="do not multiply the loss by n")
    p.add_argument("--seed", type=int, default=0, help="recorded only; tuning is deterministic")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("diagnose", help="incoherence and norm constants of a true model")
    p.add_argument("--truth", help="truth JSON written by simulate")
    p.add_argument("--meinshausen", action="store_true",
                   help="report the sign-change correlation of the four-variable example instead")
    p.add_argument("--convention", choices=(OFFDIAG, WITH_DIAG), default=OFFDIAG,
                   help="whether diagonal coordinates belong to the support")
    p.add_argument("--mc-samples", type=int, help="Monte Carlo draws for non-Gaussian truths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("eval", help="ROC curves and AUC of several estimators against a truth")
    p.add_argument("--data", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--families", nargs="+", default=["gaussian"],
                   choices=("gaussian", "gaussian-centered", "gaussian-shifted-nonneg",
                            "truncated-gaussian", "normal-conditionals"))
    p.add_argument("--grid", type=int, default=60, help="grid size for grid-based estimators")
    p.add_argument("--seed", type=int, default=0, help="recorded only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a sample-size scaling experiment from a config")
    p.add_argument("--config", required=True,
                   help="JSON config path or bundled name (chain_scaling, star_scaling, ...)")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--calibrate", type=float, nargs="+",
                   help="candidate penalty constants; pick one from a pilot run before the main run")
    p.add_argument("--threads", type=int, help="worker threads (default: SCOREMATCH_THREADS or 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="check the Gaussian zero-penalty endpoint on a data set")
    p.add_argument("--data", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", help="optional output directory for verify.json")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return int(args.func(args) or 0)
    except (UsageError, InvalidDataError, UnsupportedPenalty) as exc:
        print(f"scorematch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NonNormalizableError as exc:
        print(f"scorematch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RankError, RuntimeError, EvaluationError, ValueError) as exc:
        print(f"scorematch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
