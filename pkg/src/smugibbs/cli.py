"""Command-line front end: JSON config plus flag overrides, CSV/JSON I/O.

Subcommands: simulate, fit-precision, fit-regression, fit-mcar,
elicit-prior, bench.  Every output JSON embeds the fully resolved config and
a schema version; draws go to flat CSV files.  Exit codes: 0 success,
2 config error, 3 numerical failure, 4 I/O error.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bench as bench_mod
from .errors import (
    ConfigError,
    DomainError,
    InfeasibleStateError,
    InvalidSpecError,
    NotPositiveDefiniteError,
    RhoOutOfRangeError,
    UnderflowRateError,
)
from .gibbs import ConstraintLedger, run_chain
from .mcar import AdjacencyModel, McarSpec, fit_mcar, prior_elicitation_sim
from .priors import prior_from_json, prior_to_json
from .regression import RegressionData, run_regression_chain
from .spd import spd_inverse

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "fit-precision", "fit-regression", "fit-mcar",
            "elicit-prior", "bench")
DEFAULT_SAMPLER = {"iters": 15000, "burnin": 5000, "thin": 1, "seed": 0, "chains": 1}
DEFAULT_PRIOR = {"family": "log", "tau": {"half_cauchy": 1.0}}

_NUMERICAL_ERRORS = (NotPositiveDefiniteError, InfeasibleStateError,
                     UnderflowRateError, RhoOutOfRangeError, DomainError)


@dataclass
class RunConfig:
    command: str
    resolved: dict


def _type_name(v) -> str:
    return type(v).__name__


def _get(obj, pointer, key, typ, default=None, required=False):
    if key not in obj or obj[key] is None:
        if required:
            raise ConfigError(f"{pointer}/{key}", "missing required field")
        return default
    val = obj[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if typ is not None and not isinstance(val, typ):
        raise ConfigError(f"{pointer}/{key}",
                          f"expected {typ.__name__ if hasattr(typ, '__name__') else typ}, "
                          f"got {_type_name(val)}")
    return val


def _existing_path(obj, pointer, key, required=False):
    path = _get(obj, pointer, key, str, required=required)
    if path is not None and not os.path.exists(path):
        raise ConfigError(f"{pointer}/{key}", f"file not found: {path}")
    return path


def load_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def load_vector(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",").ravel()


def save_matrix(path, m) -> None:
    np.savetxt(path, np.atleast_2d(m), delimiter=",", fmt="%.17g")


def _dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_config(command: str, config_path: str | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Merge file config with flag overrides (flags win) and validate."""
    if command not in COMMANDS:
        raise ConfigError("/command", f"unknown command {command!r}")
    raw: dict = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError("/config", f"file not found: {config_path}")
        with open(config_path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("/config", f"invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("/config", "top level must be an object")
    if "command" in raw and raw["command"] != command:
        raise ConfigError("/command",
                          f"config says {raw['command']!r} but {command!r} was invoked")

    sampler = {**DEFAULT_SAMPLER, **raw.get("sampler", {})}
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in DEFAULT_SAMPLER:
            sampler[key] = val
        else:
            raw[key] = val
    for key in ("iters", "burnin", "thin", "seed", "chains"):
        if not isinstance(sampler.get(key), int) or isinstance(sampler.get(key), bool):
            raise ConfigError(f"/sampler/{key}", "must be an integer")
    if sampler["iters"] <= sampler["burnin"]:
        raise ConfigError("/sampler/iters",
                          f"iters ({sampler['iters']}) must exceed burnin ({sampler['burnin']})")
    if sampler["burnin"] < 0 or sampler["thin"] < 1 or sampler["chains"] < 1:
        raise ConfigError("/sampler", "burnin >= 0, thin >= 1, chains >= 1 required")

    io = raw.get("io", {})
    out = _get(raw if "out" in raw else io, "/io", "out", str, default="out")
    inp = io.get("input", raw.get("input", {}))
    if not isinstance(inp, dict):
        raise ConfigError("/io/input", "must be an object")

    resolved = {
        "command": command,
        "sampler": sampler,
        "io": {"input": inp, "out": out},
        "schema_version": SCHEMA_VERSION,
    }

    if command in ("fit-precision", "fit-regression"):
        prior_obj = raw.get("prior", DEFAULT_PRIOR)
        try:
            spec, hyper = prior_from_json(prior_obj)
        except InvalidSpecError as exc:
            raise ConfigError("/prior/family" if "family" in str(exc) else "/prior",
                              str(exc)) from exc
        resolved["prior"] = prior_to_json(spec, hyper)

    validator = {
        "simulate": _validate_simulate,
        "fit-precision": _validate_fit_precision,
        "fit-regression": _validate_fit_regression,
        "fit-mcar": _validate_fit_mcar,
        "elicit-prior": _validate_elicit_prior,
        "bench": _validate_bench,
    }[command]
    validator(raw, inp, resolved)
    return RunConfig(command=command, resolved=resolved)


def _validate_simulate(raw, inp, resolved):
    model = _get(inp, "/io/input", "model", int, required=True)
    if model not in (1, 2, 3, 4):
        raise ConfigError("/io/input/model", f"model must be 1..4, got {model}")
    p = _get(inp, "/io/input", "p", int, required=True)
    n = _get(inp, "/io/input", "n", int, required=True)
    if p < 1 or n < 0:
        raise ConfigError("/io/input", "need p >= 1 and n >= 0")
    resolved["io"]["input"] = {"model": model, "p": p, "n": n,
                               "alpha": _get(inp, "/io/input", "alpha", float)}


def _validate_fit_precision(raw, inp, resolved):
    y_csv = _existing_path(inp, "/io/input", "y_csv")
    s_csv = _existing_path(inp, "/io/input", "s_csv")
    if (y_csv is None) == (s_csv is None):
        raise ConfigError("/io/input", "provide exactly one of y_csv or s_csv")
    n = _get(inp, "/io/input", "n", int)
    if s_csv is not None and n is None:
        raise ConfigError("/io/input/n", "s_csv requires the sample size n")
    ledger = raw.get("ledger", {})
    for key in ("graph_csv", "center_csv", "multiplier_csv"):
        _existing_path(ledger, "/ledger", key)
    boxes = ledger.get("boxes", [])
    if not isinstance(boxes, list):
        raise ConfigError("/ledger/boxes", "must be a list of {i, j, lo, hi}")
    for k, box in enumerate(boxes):
        for fld in ("i", "j"):
            _get(box, f"/ledger/boxes/{k}", fld, int, required=True)
    resolved["ledger"] = ledger


def _validate_fit_regression(raw, inp, resolved):
    _existing_path(inp, "/io/input", "x_csv", required=True)
    _existing_path(inp, "/io/input", "y_csv", required=True)
    _existing_path(inp, "/io/input", "true_beta_csv")
    _existing_path(inp, "/io/input", "sigma_x_csv")


def _validate_fit_mcar(raw, inp, resolved):
    _existing_path(inp, "/io/input", "w_csv", required=True)
    x_csv = _get(inp, "/io/input", "x_csv", list, required=True)
    if not x_csv:
        raise ConfigError("/io/input/x_csv", "need at least one replicate CSV")
    for k, path in enumerate(x_csv):
        if not isinstance(path, str) or not os.path.exists(path):
            raise ConfigError(f"/io/input/x_csv/{k}", f"file not found: {path}")
    variant = _get(inp, "/io/input", "variant", str, default="wp1")
    if variant not in ("gv", "wp1", "wp2"):
        raise ConfigError("/io/input/variant", f"must be gv, wp1 or wp2, got {variant!r}")
    inp["variant"] = variant
    _get(inp, "/io/input", "tau_r", float, default=1.0)
    _get(inp, "/io/input", "rho_fixed", float, default=0.9)


def _validate_elicit_prior(raw, inp, resolved):
    _existing_path(inp, "/io/input", "w_csv", required=True)
    n_draws = _get(inp, "/io/input", "n_draws", int, default=10000)
    if n_draws < 1:
        raise ConfigError("/io/input/n_draws", "must be positive")
    inp["n_draws"] = n_draws
    _get(inp, "/io/input", "tau_r", float, default=1.0)
    _get(inp, "/io/input", "rho_fixed", float, default=0.9)


def _validate_bench(raw, inp, resolved):
    models = _get(inp, "/io/input", "models", list, default=[1, 2, 3, 4])
    for m in models:
        if m not in (1, 2, 3, 4):
            raise ConfigError("/io/input/models", f"model must be 1..4, got {m}")
    priors = _get(inp, "/io/input", "priors", list,
                  default=["ep_q0.2", "gdp", "log"])
    for name in priors:
        if name not in bench_mod.PRIOR_PRESETS:
            raise ConfigError("/io/input/priors",
                              f"unknown prior preset {name!r}; expected one of "
                              f"{', '.join(bench_mod.PRIOR_PRESETS)}")
    inp.update({
        "models": models,
        "priors": priors,
        "n_values": _get(inp, "/io/input", "n_values", list, default=[30, 100]),
        "p": _get(inp, "/io/input", "p", int, default=30),
        "replicates": _get(inp, "/io/input", "replicates", int, default=5),
        "workers": _get(inp, "/io/input", "workers", int, default=1),
    })


# ---------------------------------------------------------------------------
# execution


def _tau_summary(tau_draws) -> dict:
    return {
        "mean": float(np.mean(tau_draws)),
        "median": float(np.median(tau_draws)),
        "sd": float(np.std(tau_draws)),
    }


def _chain_seeds(sampler) -> list[int]:
    return [sampler["seed"] + k for k in range(sampler["chains"])]


def _precision_chain_job(args):
    s, n, ledger, spec, hyper, sampler, seed = args
    return run_chain(s=s, n=n, ledger=ledger, prior=spec, tau_hyper=hyper,
                     iters=sampler["iters"], burnin=sampler["burnin"],
                     thin=sampler["thin"], seed=seed)


def _regression_chain_job(args):
    data, spec, hyper, sampler, seed, true_beta, sigma_x = args
    return run_regression_chain(data, spec, hyper, iters=sampler["iters"],
                                burnin=sampler["burnin"], thin=sampler["thin"],
                                seed=seed, true_beta=true_beta, sigma_x=sigma_x)


def _mcar_chain_job(args):
    xs, adj, spec, sampler, seed = args
    return fit_mcar(xs, adj, spec, iters=sampler["iters"],
                    burnin=sampler["burnin"], thin=sampler["thin"], seed=seed)


def _map_chains(fn, jobs):
    """Dispatch chains concurrently (process-level) when there are several."""
    if len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            return list(pool.map(fn, jobs))
    return [fn(jobs[0])]


def _run_simulate(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    seed = cfg.resolved["sampler"]["seed"]
    sigma, omega = bench_mod.generate_truth(inp["model"], inp["p"], seed=seed,
                                            alpha=inp.get("alpha"))
    y = bench_mod.sample_data(sigma, inp["n"], seed=seed)
    save_matrix(os.path.join(out, "y.csv"), y)
    save_matrix(os.path.join(out, "sigma.csv"), sigma)
    save_matrix(os.path.join(out, "omega.csv"), omega)
    _dump_json(os.path.join(out, "meta.json"),
               {"schema_version": SCHEMA_VERSION, "config": cfg.resolved})


def _build_ledger(cfg: RunConfig, p: int) -> ConstraintLedger:
    led = cfg.resolved.get("ledger", {})
    adjacency = None
    if led.get("graph_csv"):
        adjacency = load_matrix(led["graph_csv"]).astype(bool)
    center = load_matrix(led["center_csv"]) if led.get("center_csv") else None
    multiplier = load_matrix(led["multiplier_csv"]) if led.get("multiplier_csv") else None
    boxes = {}
    for box in led.get("boxes", []):
        lo = box.get("lo", -math.inf)
        hi = box.get("hi", math.inf)
        boxes[(box["i"], box["j"])] = (float(lo) if lo is not None else -math.inf,
                                       float(hi) if hi is not None else math.inf)
    return ConstraintLedger.build(p, center=center, boxes=boxes,
                                  adjacency=adjacency, multiplier=multiplier)


def _run_fit_precision(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    sampler = cfg.resolved["sampler"]
    spec, hyper = prior_from_json(cfg.resolved["prior"])
    if inp.get("y_csv"):
        y = load_matrix(inp["y_csv"])
        s, n = y @ y.T, y.shape[1]
    else:
        s, n = load_matrix(inp["s_csv"]), inp["n"]
    ledger = _build_ledger(cfg, s.shape[0])
    jobs = [(s, n, ledger, spec, hyper, sampler, sd) for sd in _chain_seeds(sampler)]
    results = _map_chains(_precision_chain_job, jobs)

    for k, res in enumerate(results):
        save_matrix(os.path.join(out, f"chain{k:02d}_omega.csv"), res.omega_draws)
    mean_omega = np.mean([r.mean_omega for r in results], axis=0)
    mean_sigma = np.mean([r.mean_sigma for r in results], axis=0)
    tau_all = np.concatenate([r.tau_draws for r in results])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "posterior": {
            "mean_omega": mean_omega.tolist(),
            "mean_sigma": mean_sigma.tolist(),
            "sigma_hat_l1": spd_inverse(mean_omega).tolist(),
            "sigma_hat_l2": mean_sigma.tolist(),
        },
        "tau": _tau_summary(tau_all),
    }
    _dump_json(os.path.join(out, "summary.json"), summary)
    _dump_json(os.path.join(out, "diagnostics.json"),
               {"schema_version": SCHEMA_VERSION, "config": cfg.resolved,
                "chains": [r.diagnostics for r in results]})


def _run_fit_regression(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    sampler = cfg.resolved["sampler"]
    spec, hyper = prior_from_json(cfg.resolved["prior"])
    x = load_matrix(inp["x_csv"])
    y = load_vector(inp["y_csv"])
    data = RegressionData.from_xy(x, y)
    true_beta = load_vector(inp["true_beta_csv"]) if inp.get("true_beta_csv") else None
    sigma_x = load_matrix(inp["sigma_x_csv"]) if inp.get("sigma_x_csv") else None
    jobs = [(data, spec, hyper, sampler, sd, true_beta, sigma_x)
            for sd in _chain_seeds(sampler)]
    results = _map_chains(_regression_chain_job, jobs)
    for k, res in enumerate(results):
        save_matrix(os.path.join(out, f"chain{k:02d}_beta.csv"), res.beta_draws)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "posterior": {
            "mean_beta": np.mean([r.mean_beta for r in results], axis=0).tolist(),
            "mean_sigma2": float(np.mean([r.sigma2_draws.mean() for r in results])),
        },
        "tau": _tau_summary(np.concatenate([r.tau_draws for r in results])),
        "model_error": results[0].model_error if len(results) == 1 else
                       (None if results[0].model_error is None else
                        float(np.mean([r.model_error for r in results]))),
    }
    _dump_json(os.path.join(out, "summary.json"), summary)
    _dump_json(os.path.join(out, "diagnostics.json"),
               {"schema_version": SCHEMA_VERSION, "config": cfg.resolved,
                "chains": [r.diagnostics for r in results]})


def _run_fit_mcar(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    sampler = cfg.resolved["sampler"]
    adj = AdjacencyModel(load_matrix(inp["w_csv"]).astype(int))
    xs = [load_matrix(path) for path in inp["x_csv"]]
    spec = McarSpec(inp["variant"], tau_r=float(inp.get("tau_r", 1.0)),
                    rho_fixed=float(inp.get("rho_fixed", 0.9)))
    jobs = [(xs, adj, spec, sampler, sd) for sd in _chain_seeds(sampler)]
    results = _map_chains(_mcar_chain_job, jobs)
    for k, res in enumerate(results):
        save_matrix(os.path.join(out, f"chain{k:02d}_omega_r.csv"), res.omega_r_draws)
        save_matrix(os.path.join(out, f"chain{k:02d}_omega_c.csv"), res.omega_c_draws)
    rho_post = None
    if results[0].rho_posterior is not None:
        grids = [r.rho_posterior for r in results]
        rho_post = {str(k): float(np.mean([g[k] for g in grids])) for k in grids[0]}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "posterior": {
            "mean_omega_r": np.mean([r.mean_omega_r for r in results], axis=0).tolist(),
            "mean_omega_c": np.mean([r.mean_omega_c for r in results], axis=0).tolist(),
            "rho": rho_post,
        },
        "tau_c": _tau_summary(np.concatenate([r.tau_c_draws for r in results])),
    }
    _dump_json(os.path.join(out, "summary.json"), summary)
    _dump_json(os.path.join(out, "diagnostics.json"),
               {"schema_version": SCHEMA_VERSION, "config": cfg.resolved,
                "chains": [r.diagnostics for r in results]})


def _run_elicit_prior(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    adj = AdjacencyModel(load_matrix(inp["w_csv"]).astype(int))
    spec = McarSpec("wp2", tau_r=float(inp.get("tau_r", 1.0)),
                    rho_fixed=float(inp.get("rho_fixed", 0.9)))
    summaries, _ = prior_elicitation_sim(adj, spec, n_draws=inp["n_draws"],
                                         seed=cfg.resolved["sampler"]["seed"])
    _dump_json(os.path.join(out, "summary.json"), {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.resolved,
        "elements": {f"{i},{j}": v for (i, j), v in summaries.items()},
    })


def _run_bench(cfg: RunConfig) -> None:
    inp = cfg.resolved["io"]["input"]
    out = cfg.resolved["io"]["out"]
    sampler = cfg.resolved["sampler"]
    rows = bench_mod.run_benchmark(
        inp["models"], inp["n_values"], inp["priors"], inp["replicates"],
        p=inp["p"], iters=sampler["iters"], burnin=sampler["burnin"],
        thin=sampler["thin"], seed=sampler["seed"], workers=inp["workers"])
    bench_mod.write_bench_csv(rows, os.path.join(out, "results.csv"))
    _dump_json(os.path.join(out, "meta.json"),
               {"schema_version": SCHEMA_VERSION, "config": cfg.resolved})


_RUNNERS = {
    "simulate": _run_simulate,
    "fit-precision": _run_fit_precision,
    "fit-regression": _run_fit_regression,
    "fit-mcar": _run_fit_mcar,
    "elicit-prior": _run_elicit_prior,
    "bench": _run_bench,
}


def run(cfg: RunConfig) -> int:
    os.makedirs(cfg.resolved["io"]["out"], exist_ok=True)
    _RUNNERS[cfg.command](cfg)
    return 0


def _error_json(kind: str, exc: Exception) -> str:
    payload = {"error": {"type": kind, "message": str(exc)}}
    if isinstance(exc, ConfigError):
        payload["error"]["pointer"] = exc.pointer
    return json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="smugibbs",
                                     description="shrinkage samplers for precision "
                                                 "matrices and regression")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config path")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--iters", type=int, default=None)
        sp.add_argument("--burnin", type=int, default=None)
        sp.add_argument("--thin", type=int, default=None)
        sp.add_argument("--chains", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("seed", "iters", "burnin", "thin", "chains", "out")}
    try:
        cfg = parse_config(args.command, args.config, overrides)
        return run(cfg)
    except (ConfigError, InvalidSpecError) as exc:
        print(_error_json("config", exc), file=sys.stdout)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(_error_json("numerical", exc), file=sys.stdout)
        return 3
    except OSError as exc:
        print(_error_json("io", exc), file=sys.stdout)
        return 4


if __name__ == "__main__":
    sys.exit(main())
