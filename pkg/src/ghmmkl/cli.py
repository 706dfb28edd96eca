"""Batch command-line front end.

One subcommand per run, driven by a JSON config; artifacts land in the
output directory as <cmd>.csv, <cmd>.json, run_meta.json, and for the
sweep/selection reports a rendered <cmd>.png. Exit status: 0 on success,
2 on config validation errors (reported with the offending field path),
3 on numerical failures (reported with the originating error type). All
randomness flows from the single master seed in the config; --seed
overrides it and --threads caps worker pools.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import configio, report
from .errors import ConfigError, GhmmError
from .inference import aic_order_select, aic_state_select
from .info import (
    FisherEstimate,
    crlb_report,
    fisher_hessian_estimate,
    fisher_score_estimate,
    kl_estimate,
    kl_sweep,
    quadratic_check,
)
from .models.base import FiniteGhmm
from .models.lssm import LssmModel
from .montecarlo import simulate
from .sensitivity import hessian as hessian_of
from .sensitivity import score as score_of

__all__ = ["main"]


def _read_y(model, theta, path):
    """Load and shape an observation file for the given model.

    Finite alphabets arrive 1-based and leave as 0-based integer symbols;
    scalar models get a flat series, multivariate ones an (n, m) matrix.
    """
    arr = report.read_observations(path)
    if isinstance(model, FiniteGhmm):
        if arr.shape[1] != 1:
            raise ConfigError(
                "estimator.data",
                f"{path}: expected one symbol column, got {arr.shape[1]}",
            )
        vals = arr[:, 0]
        if np.any(vals != np.round(vals)):
            raise ConfigError(
                "estimator.data", f"{path}: symbols must be integers"
            )
        n_symbols = model.tables(theta)[1].shape[1]
        y = vals.astype(np.int64) - 1
        if np.any(y < 0) or np.any(y >= n_symbols):
            raise ConfigError(
                "estimator.data",
                f"{path}: symbols must lie in 1..{n_symbols}",
            )
        return y
    m = (
        getattr(model.parametrization, "m", 1)
        if isinstance(model, LssmModel)
        else 1
    )
    if m == 1:
        if arr.shape[1] != 1:
            raise ConfigError(
                "estimator.data",
                f"{path}: expected one observation column, got {arr.shape[1]}",
            )
        return arr[:, 0]
    if arr.shape[1] != m:
        raise ConfigError(
            "estimator.data",
            f"{path}: expected {m} observation columns, got {arr.shape[1]}",
        )
    return arr


def _read_symbols(path, n_symbols=None):
    """1-based integer symbol series for the fit commands.

    With an explicit alphabet size the range is enforced; otherwise the
    alphabet is whatever the data spans and only positivity is checked.
    """
    arr = report.read_observations(path)
    if arr.shape[1] != 1:
        raise ConfigError(
            "estimator.data",
            f"{path}: expected one symbol column, got {arr.shape[1]}",
        )
    vals = arr[:, 0]
    if np.any(vals != np.round(vals)):
        raise ConfigError(
            "estimator.data", f"{path}: symbols must be integers"
        )
    y = vals.astype(np.int64) - 1
    if np.any(y < 0):
        raise ConfigError(
            "estimator.data", f"{path}: symbols must be >= 1"
        )
    if n_symbols is not None and np.any(y >= n_symbols):
        raise ConfigError(
            "estimator.data", f"{path}: symbols must lie in 1..{n_symbols}"
        )
    return y


def _fisher_dict(est: FisherEstimate) -> dict:
    return {
        "matrix": est.matrix,
        "se_proxy": est.se_proxy,
        "n": est.n,
        "seed": est.seed,
        "method": est.method,
        "burn_in": est.burn_in,
    }


def _matrix_table(names, mat):
    header = ["name"] + list(names)
    rows = [[names[i]] + list(mat[i]) for i in range(len(names))]
    return header, rows


def _direction(est, q):
    v = est.get("direction")
    if v is None:
        v = np.zeros(q)
        if q:
            v[0] = 1.0
        return v
    return np.asarray(v, dtype=float)


def _aic_artifacts(rep, out, cmd, want_figure):
    header = ["k", "loglik", "penalty", "aic", "p", "converged", "iters"]
    rows = [
        [r.k, r.loglik, r.penalty, r.aic, r.p, r.converged, r.iters]
        for r in rep.rows
    ]
    payload = {
        "selected": rep.selected,
        "rows": [
            {
                "k": r.k,
                "loglik": r.loglik,
                "penalty": r.penalty,
                "aic": r.aic,
                "p": r.p,
                "converged": r.converged,
                "iters": r.iters,
                "grad_norm": r.grad_norm,
            }
            for r in rep.rows
        ],
    }
    artifacts = {f"{cmd}.csv": (header, rows), f"{cmd}.json": payload}
    figure = None
    if want_figure:
        figure = (report.render_aic, (out / f"{cmd}.png", rep.rows, rep.selected))
    return artifacts, figure


def _dispatch(res, out, threads):
    """Run the resolved command; returns (csv/json artifacts, figure job)."""
    cmd = res["command"]
    model = res["model"]
    theta = res["theta"]
    est = res["estimator"]
    want_figure = res["figure"]
    figure = None

    if cmd == "simulate":
        traj = simulate(
            model, theta, est["n"], seed=est["seed"], x0=est.get("x0")
        )
        header, rows = report.trajectory_rows(
            traj,
            keep_hidden=est["keep_hidden"],
            finite=isinstance(model, FiniteGhmm),
        )
        payload = {
            "family": model.family,
            "n": est["n"],
            "seed": est["seed"],
            "x0": est.get("x0"),
            "theta": theta,
            "columns": header,
        }
        return {"simulate.csv": (header, rows), "simulate.json": payload}, None

    if cmd == "loglik":
        y = _read_y(model, theta, est["data"])
        inc = model.loglik_increments(theta, y)
        rows = (
            [t, inc[t], c] for t, c in enumerate(np.cumsum(inc))
        )
        payload = {
            "loglik": float(inc.sum()),
            "n": int(inc.shape[0]),
            "per_obs": float(inc.mean()),
            "family": model.family,
            "theta": theta,
        }
        return {
            "loglik.csv": (["t", "loglik_inc", "cumulative"], rows),
            "loglik.json": payload,
        }, None

    if cmd == "score":
        y = _read_y(model, theta, est["data"])
        g = score_of(model, theta, y)
        names = model.param_names
        rows = [[names[i], g[i]] for i in range(len(names))]
        payload = {"score": g, "names": names, "theta": theta}
        return {
            "score.csv": (["name", "score"], rows),
            "score.json": payload,
        }, None

    if cmd == "hessian":
        y = _read_y(model, theta, est["data"])
        H = hessian_of(model, theta, y)
        names = model.param_names
        header, rows = _matrix_table(names, H)
        payload = {"hessian": H, "names": names, "theta": theta}
        return {
            "hessian.csv": (header, rows),
            "hessian.json": payload,
        }, None

    if cmd == "fisher":
        fn = (
            fisher_hessian_estimate
            if est["method"] == "hessian"
            else fisher_score_estimate
        )
        fe = fn(model, theta, est["n"], est["seed"], burn_in=est.get("burn_in"))
        names = model.param_names
        header, rows = _matrix_table(names, fe.matrix)
        payload = _fisher_dict(fe)
        payload["names"] = names
        payload["theta"] = theta
        return {
            "fisher.csv": (header, rows),
            "fisher.json": payload,
        }, None

    if cmd == "kl":
        ke = kl_estimate(
            model,
            theta,
            np.asarray(est["theta0"], dtype=float),
            est["n"],
            seed=est["seed"],
            burn_in=est.get("burn_in"),
            x0=est.get("x0"),
        )
        row = [
            ke.value, ke.se_proxy, ke.n, ke.seed, ke.burn_in,
            ke.components[0], ke.components[1],
        ]
        header = [
            "K_hat", "se", "n", "seed", "burn_in",
            "component_1", "component_0",
        ]
        payload = {
            "K_hat": ke.value,
            "se": ke.se_proxy,
            "n": ke.n,
            "seed": ke.seed,
            "burn_in": ke.burn_in,
            "components": list(ke.components),
            "tagged_infinite": ke.tagged_infinite,
            "theta1": theta,
            "theta0": est["theta0"],
        }
        return {"kl.csv": (header, [row]), "kl.json": payload}, None

    if cmd == "kl-sweep":
        q = model.param_dim
        base = np.asarray(est.get("theta0", theta), dtype=float)
        v = _direction(est, q)
        grid = est["grid"]
        thetas = [base + g * v for g in grid]
        sweep = kl_sweep(
            model,
            thetas,
            base,
            est["n"],
            seed=est["seed"],
            n_reps=est["n_reps"],
            x0=est.get("x0"),
            burn_in=est.get("burn_in"),
            max_workers=threads,
        )
        header = ["delta", "K_hat", "se", "n", "seed"]
        rows = [
            [grid[i], sweep["mean"][i], sweep["se"][i], est["n"], est["seed"]]
            for i in range(len(grid))
        ]
        payload = {
            "grid": grid,
            "theta0": base,
            "direction": v,
            "mean": sweep["mean"],
            "se": sweep["se"],
            "values": sweep["values"],
            "second_diff": sweep["second_diff"],
            "second_diff_se": sweep["second_diff_se"],
            "second_diff_se_coupled": sweep["second_diff_se_coupled"],
            "n": sweep["n"],
            "seed": sweep["seed"],
            "n_reps": sweep["n_reps"],
        }
        if want_figure:
            figure = (
                report.render_kl_sweep,
                (out / "kl-sweep.png", grid, sweep["mean"], sweep["se"]),
            )
        return {
            "kl-sweep.csv": (header, rows),
            "kl-sweep.json": payload,
        }, figure

    if cmd == "quad-check":
        v = _direction(est, model.param_dim)
        res_q = quadratic_check(
            model, theta, v, est["eps_grid"], est["n"],
            seed=est["seed"], burn_in=est.get("burn_in"),
        )
        header = ["eps", "K_hat", "se", "rho", "abs_rho_minus_1"]
        rows = [
            [r["eps"], r["k_hat"], r["k_se"], r["rho"], r["abs_rho_minus_1"]]
            for r in res_q["rows"]
        ]
        payload = {
            "rows": res_q["rows"],
            "v_I_v": res_q["v_I_v"],
            "fisher": _fisher_dict(res_q["fisher"]),
            "direction": v,
            "n": res_q["n"],
            "seed": res_q["seed"],
        }
        if want_figure:
            figure = (
                report.render_quad_check,
                (out / "quad-check.png", res_q["rows"]),
            )
        return {
            "quad-check.csv": (header, rows),
            "quad-check.json": payload,
        }, figure

    if cmd == "crlb":
        fn = (
            fisher_hessian_estimate
            if est["method"] == "hessian"
            else fisher_score_estimate
        )
        fe = fn(model, theta, est["n"], est["seed"], burn_in=est.get("burn_in"))
        v = _direction(est, model.param_dim)
        sizes = est.get("sample_sizes", [est["n"]])
        rep = crlb_report(fe, v, sizes)
        rows = [
            ["classical", rep["classical"]],
            ["minimax", rep["minimax"]],
            ["condition", rep["condition"]],
        ]
        for k in sorted(rep["per_n"]):
            rows.append([f"classical_n={k}", rep["per_n"][k]])
        payload = {
            "classical": rep["classical"],
            "minimax": rep["minimax"],
            "condition": rep["condition"],
            "per_n": rep["per_n"],
            "direction": v,
            "fisher": _fisher_dict(fe),
        }
        return {
            "crlb.csv": (["name", "value"], rows),
            "crlb.json": payload,
        }, None

    if cmd == "aic-order":
        y = _read_symbols(est["data"], est["l"])
        rep = aic_order_select(
            y,
            est["l"],
            est["k_max"],
            n_symbols=est.get("n_symbols"),
            seed=est["seed"],
            n_restarts=est["n_restarts"],
            max_iter=est["max_iter"],
            tol=est["tol"],
            max_workers=threads,
        )
        return _aic_artifacts(rep, out, "aic-order", want_figure)

    # aic-states
    y = _read_symbols(est["data"], est.get("n_symbols"))
    rep = aic_state_select(
        y,
        est["m"],
        range(est["k_min"], est["k_max"] + 1),
        n_symbols=est.get("n_symbols"),
        seed=est["seed"],
        n_restarts=est["n_restarts"],
        max_iter=est["max_iter"],
        tol=est["tol"],
        max_workers=threads,
    )
    return _aic_artifacts(rep, out, "aic-states", want_figure)


def _run(cmd, args) -> int:
    t_start = time.perf_counter()
    try:
        cfg = configio.load_config(args.config)
        res = configio.resolve(cfg, command=cmd, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except GhmmError as exc:
        # model construction can trip size caps before any computation
        print(
            f"numerical failure ({type(exc).__name__}): {exc}",
            file=sys.stderr,
        )
        return 3
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error at $: cannot create {out}: {exc}", file=sys.stderr)
        return 2

    try:
        t0 = time.perf_counter()
        artifacts, figure = _dispatch(res, out, args.threads)
        t_compute = time.perf_counter() - t0
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except (GhmmError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(
            f"numerical failure ({type(exc).__name__}): {exc}",
            file=sys.stderr,
        )
        return 3

    t0 = time.perf_counter()
    written = []
    for name, content in artifacts.items():
        path = out / name
        if name.endswith(".csv"):
            header, rows = content
            report.write_csv(path, header, rows)
        else:
            report.write_json(path, content)
        written.append(name)
    if figure is not None:
        fn, fargs = figure
        fn(*fargs)
        written.append(fargs[0].name)
    t_write = time.perf_counter() - t0

    report.write_run_meta(
        out / "run_meta.json",
        res["resolved"],
        {
            "compute_s": t_compute,
            "write_s": t_write,
            "total_s": time.perf_counter() - t_start,
        },
        written,
    )
    for name in sorted(written) + ["run_meta.json"]:
        print(f"wrote {out / name}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ghmmkl",
        description=(
            "Reproducible estimators for hidden Markov model information "
            "geometry: simulation, likelihood and derivatives, Fisher/KL "
            "estimation, CRLB reporting, and AIC selection."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in configio.COMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} command")
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--threads", type=int, default=None,
            help="cap on worker threads",
        )
        p.add_argument(
            "--seed", type=int, default=None,
            help="override the config estimator seed",
        )
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("config error at --threads: must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error at --seed: must be a u64", file=sys.stderr)
        return 2
    return _run(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
