"""Run-config loading, schema validation, and model construction.

A run config is a JSON object with a ``command``, a ``model`` block naming
a family plus its parameters, an ``estimator`` block (lengths, seeds,
grids, data paths), and an optional ``output`` block. Validation walks the
object once and reports the first violation with its dotted field path, so
a bad config fails before any computation starts. ``resolve`` returns a
fully materialized copy (defaults filled in, theta expanded) that the
report layer embeds verbatim in every artifact header.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import ConfigError
from .models.discrete import FixedTableHmm, KOrderLogitHmm, LogitHmm, Tilt3
from .models.garch import Garch11
from .models.lssm import Ar1Family, LssmModel, RnnMeanFamily, VarmaFamily
from .models.trbm import TrbmHmm

__all__ = [
    "COMMANDS",
    "build_model",
    "load_config",
    "resolve",
]

COMMANDS = (
    "simulate",
    "loglik",
    "score",
    "hessian",
    "fisher",
    "kl",
    "kl-sweep",
    "quad-check",
    "crlb",
    "aic-order",
    "aic-states",
)

# commands that fit from data instead of evaluating a configured model
_DATA_COMMANDS = ("loglik", "score", "hessian", "aic-order", "aic-states")

_FAMILIES = (
    "tilt3",
    "table",
    "logit",
    "korder",
    "garch11",
    "ar1",
    "rnn-mean",
    "varma",
    "trbm",
)


def load_config(path) -> dict:
    """Parse a JSON config file; malformed JSON is a ConfigError at '$'."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("$", f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"malformed JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("$", "config must be a JSON object")
    return cfg


def _get(block, path, key, kinds, required=True, default=None):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    val = block[key]
    # bool is an int subclass; reject it wherever a number is expected
    if kinds is not None and (
        not isinstance(val, kinds) or isinstance(val, bool)
    ):
        names = {int: "integer", float: "number", str: "string",
                 list: "array", dict: "object"}
        want = "/".join(names.get(k, k.__name__) for k in kinds)
        raise ConfigError(f"{path}.{key}", f"expected {want}")
    return val


def _num(block, path, key, required=True, default=None):
    val = _get(block, path, key, (int, float), required, default)
    if val is not None and not math.isfinite(float(val)):
        raise ConfigError(f"{path}.{key}", "must be finite")
    return None if val is None else float(val)


def _int(block, path, key, required=True, default=None, low=None, high=None):
    val = _get(block, path, key, (int,), required, default)
    if val is None:
        return None
    val = int(val)
    if low is not None and val < low:
        raise ConfigError(f"{path}.{key}", f"must be >= {low}")
    if high is not None and val > high:
        raise ConfigError(f"{path}.{key}", f"must be <= {high}")
    return val


def _vector(block, path, key, length=None, required=True):
    val = _get(block, path, key, (list,), required)
    if val is None:
        return None
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", "must be an array of numbers")
    if arr.ndim != 1:
        raise ConfigError(f"{path}.{key}", "must be a flat array")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}.{key}", "entries must be finite")
    if length is not None and arr.size != length:
        raise ConfigError(
            f"{path}.{key}", f"expected length {length}, got {arr.size}"
        )
    return arr


def _matrix(block, path, key, required=True):
    val = _get(block, path, key, (list,), required)
    if val is None:
        return None
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", "must be a matrix of numbers")
    if arr.ndim != 2:
        raise ConfigError(f"{path}.{key}", "must be a 2-d array")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}.{key}", "entries must be finite")
    return arr


def _unknown_keys(block, path, allowed):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown field")


def build_model(block, path="model"):
    """Construct (model, theta) from a model block, validating field by field.

    Families with named scalar parameters (tilt3, garch11, ar1, rnn-mean)
    read them directly; vector-parametrized families (logit, korder, varma,
    trbm) read a flat ``theta`` defaulting to zeros; ``table`` takes
    explicit stochastic matrices and has no free parameters.
    """
    if not isinstance(block, dict):
        raise ConfigError(path, "model block must be an object")
    family = _get(block, path, "family", (str,))
    if family not in _FAMILIES:
        raise ConfigError(
            f"{path}.family",
            f"unknown family {family!r}; expected one of {', '.join(_FAMILIES)}",
        )

    if family == "tilt3":
        _unknown_keys(block, path, ("family", "delta"))
        delta = _num(block, path, "delta", required=False, default=0.0)
        if not -0.5 < delta < 0.5:
            raise ConfigError(f"{path}.delta", "must lie in (-0.5, 0.5)")
        return Tilt3(), np.array([delta])

    if family == "table":
        _unknown_keys(block, path, ("family", "transition", "emission", "init"))
        P = _matrix(block, path, "transition")
        E = _matrix(block, path, "emission")
        if P.shape[0] != P.shape[1]:
            raise ConfigError(f"{path}.transition", "must be square")
        if E.shape[0] != P.shape[0]:
            raise ConfigError(
                f"{path}.emission",
                f"row count must match transition size {P.shape[0]}",
            )
        for name, M in (("transition", P), ("emission", E)):
            if np.any(M < 0.0):
                raise ConfigError(f"{path}.{name}", "entries must be >= 0")
            if np.any(np.abs(M.sum(axis=1) - 1.0) > 1e-9):
                raise ConfigError(f"{path}.{name}", "rows must sum to 1")
        init = block.get("init", "stationary")
        if init != "stationary":
            init = _vector(block, path, "init", length=P.shape[0])
        return FixedTableHmm(P, E, init), np.zeros(0)

    if family == "logit":
        _unknown_keys(block, path, ("family", "n_states", "n_symbols", "theta"))
        D = _int(block, path, "n_states", low=1)
        A = _int(block, path, "n_symbols", low=2)
        model = LogitHmm(D, A)
        theta = _vector(block, path, "theta", length=model.param_dim,
                        required=False)
        if theta is None:
            theta = np.zeros(model.param_dim)
        return model, theta

    if family == "korder":
        _unknown_keys(block, path, ("family", "l", "k", "n_symbols", "theta"))
        l = _int(block, path, "l", low=1)
        k = _int(block, path, "k", low=1)
        A = _int(block, path, "n_symbols", required=False, default=l, low=2)
        model = KOrderLogitHmm(l, k, A)
        theta = _vector(block, path, "theta", length=model.param_dim,
                        required=False)
        if theta is None:
            theta = np.zeros(model.param_dim)
        return model, theta

    if family == "garch11":
        _unknown_keys(
            block, path, ("family", "delta", "alpha", "beta", "sigma0_sq")
        )
        delta = _num(block, path, "delta")
        alpha = _num(block, path, "alpha")
        beta = _num(block, path, "beta")
        if delta <= 0.0:
            raise ConfigError(f"{path}.delta", "must be > 0")
        if alpha < 0.0:
            raise ConfigError(f"{path}.alpha", "must be >= 0")
        if beta < 0.0:
            raise ConfigError(f"{path}.beta", "must be >= 0")
        if alpha + beta >= 1.0:
            raise ConfigError(f"{path}.beta", "alpha + beta must be < 1")
        sigma0_sq = _num(block, path, "sigma0_sq", required=False)
        if sigma0_sq is not None and sigma0_sq <= 0.0:
            raise ConfigError(f"{path}.sigma0_sq", "must be > 0")
        return Garch11(sigma0_sq=sigma0_sq), np.array([delta, alpha, beta])

    if family == "ar1":
        _unknown_keys(block, path, ("family", "a", "sigma"))
        a = _num(block, path, "a")
        if not -1.0 < a < 1.0:
            raise ConfigError(f"{path}.a", "must lie in (-1, 1)")
        sigma = _num(block, path, "sigma", required=False, default=1.0)
        if sigma <= 0.0:
            raise ConfigError(f"{path}.sigma", "must be > 0")
        return LssmModel(Ar1Family(sigma=sigma)), np.array([a])

    if family == "rnn-mean":
        _unknown_keys(
            block, path, ("family", "delta", "alpha", "beta", "sigma")
        )
        delta = _num(block, path, "delta")
        alpha = _num(block, path, "alpha")
        beta = _num(block, path, "beta")
        if abs(alpha + beta) >= 1.0:
            raise ConfigError(f"{path}.beta", "|alpha + beta| must be < 1")
        sigma = _num(block, path, "sigma", required=False, default=1.0)
        if sigma <= 0.0:
            raise ConfigError(f"{path}.sigma", "must be > 0")
        return (
            LssmModel(RnnMeanFamily(sigma=sigma)),
            np.array([delta, alpha, beta]),
        )

    if family == "varma":
        _unknown_keys(block, path, ("family", "m", "p", "q", "sigma", "theta"))
        m = _int(block, path, "m", low=1)
        p = _int(block, path, "p", low=0)
        q = _int(block, path, "q", low=0)
        if p == 0 and q == 0:
            raise ConfigError(f"{path}.q", "need p + q >= 1")
        sigma = _matrix(block, path, "sigma", required=False)
        try:
            fam = VarmaFamily(m=m, p=p, q=q, sigma=sigma)
        except Exception as exc:
            raise ConfigError(f"{path}.sigma", str(exc)) from exc
        model = LssmModel(fam)
        theta = _vector(block, path, "theta", length=model.param_dim,
                        required=False)
        if theta is None:
            theta = np.zeros(model.param_dim)
        return model, theta

    # trbm
    _unknown_keys(
        block, path,
        ("family", "n_hidden", "n_visible", "theta", "W", "Wp", "b_Y", "b_H"),
    )
    P = _int(block, path, "n_hidden", low=1, high=6)
    D = _int(block, path, "n_visible", low=1, high=6)
    model = TrbmHmm(P, D)
    weight_keys = ("W", "Wp", "b_Y", "b_H")
    given = [k for k in weight_keys if k in block]
    if "theta" in block and given:
        raise ConfigError(
            f"{path}.theta", "give either theta or the weight blocks, not both"
        )
    if given:
        if len(given) < len(weight_keys):
            missing = next(k for k in weight_keys if k not in block)
            raise ConfigError(f"{path}.{missing}", "missing required field")
        parts = {}
        for key in weight_keys:
            val = block[key]
            # each weight is inline JSON or a path to a rows,cols CSV file
            if isinstance(val, str):
                from .report import read_matrix_csv

                arr = read_matrix_csv(val, field=f"{path}.{key}")
            else:
                try:
                    arr = np.asarray(val, dtype=float)
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}.{key}", "must be numeric")
            if key in ("b_Y", "b_H"):
                arr = arr.reshape(-1)
            parts[key] = arr
        from .models.trbm import TrbmSpec

        try:
            spec = TrbmSpec(
                W=parts["W"], Wp=parts["Wp"],
                b_Y=parts["b_Y"], b_H=parts["b_H"],
            )
        except Exception as exc:
            raise ConfigError(f"{path}.W", str(exc)) from exc
        if spec.n_hidden != P or spec.n_visible != D:
            raise ConfigError(
                f"{path}.W",
                f"weights describe ({spec.n_hidden}, {spec.n_visible}) units, "
                f"config says ({P}, {D})",
            )
        return model, spec.pack()
    theta = _vector(block, path, "theta", length=model.param_dim,
                    required=False)
    if theta is None:
        theta = np.zeros(model.param_dim)
    return model, theta


# per-command estimator-block schema: key -> (validator tag, required)
_EST_FIELDS = {
    "simulate": {
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "x0": ("int", False),
        "keep_hidden": ("bool", False),
    },
    "loglik": {"data": ("str", True)},
    "score": {"data": ("str", True)},
    "hessian": {"data": ("str", True)},
    "fisher": {
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "burn_in": ("int0", False),
        "method": ("fisher_method", False),
    },
    "kl": {
        "theta0": ("vector", True),
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "burn_in": ("int0", False),
        "x0": ("int", False),
    },
    "kl-sweep": {
        "grid": ("grid", True),
        "theta0": ("vector", False),
        "direction": ("vector", False),
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "n_reps": ("pos_int", False),
        "burn_in": ("int0", False),
        "x0": ("int", False),
    },
    "quad-check": {
        "eps_grid": ("grid", True),
        "direction": ("vector", False),
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "burn_in": ("int0", False),
    },
    "crlb": {
        "direction": ("vector", False),
        "n": ("pos_int", True),
        "seed": ("seed", True),
        "burn_in": ("int0", False),
        "method": ("fisher_method", False),
        "sample_sizes": ("grid", False),
    },
    "aic-order": {
        "data": ("str", True),
        "l": ("pos_int", True),
        "k_max": ("pos_int", True),
        "n_symbols": ("pos_int", False),
        "seed": ("seed", False),
        "n_restarts": ("pos_int", False),
        "max_iter": ("pos_int", False),
        "tol": ("pos_num", False),
    },
    "aic-states": {
        "data": ("str", True),
        "m": ("pos_int", True),
        "k_min": ("pos_int", False),
        "k_max": ("pos_int", True),
        "n_symbols": ("pos_int", False),
        "seed": ("seed", False),
        "n_restarts": ("pos_int", False),
        "max_iter": ("pos_int", False),
        "tol": ("pos_num", False),
    },
}

_EST_DEFAULTS = {
    "simulate": {"keep_hidden": True},
    "fisher": {"method": "hessian"},
    "kl-sweep": {"n_reps": 10},
    "crlb": {"method": "hessian"},
    "aic-order": {"seed": 0, "n_restarts": 5, "max_iter": 500, "tol": 1e-6},
    "aic-states": {
        "k_min": 1, "seed": 0, "n_restarts": 5, "max_iter": 500, "tol": 1e-6,
    },
}


def _check_field(path, key, tag, val):
    box = {key: val}
    if tag == "pos_int":
        return _int(box, path, key, low=1)
    if tag == "int":
        return _int(box, path, key)
    if tag == "int0":
        return _int(box, path, key, low=0)
    if tag == "seed":
        return _int(box, path, key, low=0, high=2**64 - 1)
    if tag == "pos_num":
        num = _num(box, path, key)
        if num <= 0.0:
            raise ConfigError(f"{path}.{key}", "must be > 0")
        return num
    if tag == "str":
        return _get(box, path, key, (str,))
    if tag == "bool":
        val = box[key]
        if not isinstance(val, bool):
            raise ConfigError(f"{path}.{key}", "expected true/false")
        return val
    if tag == "vector":
        return [float(v) for v in _vector(box, path, key)]
    if tag == "grid":
        vec = _vector(box, path, key)
        if vec.size == 0:
            raise ConfigError(f"{path}.{key}", "must be non-empty")
        return [float(v) for v in vec]
    if tag == "fisher_method":
        val = _get(box, path, key, (str,))
        if val not in ("hessian", "score"):
            raise ConfigError(f"{path}.{key}", "expected 'hessian' or 'score'")
        return val
    raise AssertionError(tag)


def resolve(cfg, command=None, seed_override=None) -> dict:
    """Validate a raw config and return the fully resolved copy.

    ``command`` (from the CLI subcommand) must agree with any ``command``
    field in the file; ``seed_override`` replaces the estimator seed. The
    result carries the constructed model and theta under private keys for
    the dispatcher, plus a plain-JSON ``resolved`` view for artifacts.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("$", "config must be a JSON object")
    _unknown_keys(cfg, "$", ("command", "model", "estimator", "output"))
    file_cmd = cfg.get("command")
    if file_cmd is not None and not isinstance(file_cmd, str):
        raise ConfigError("command", "expected string")
    cmd = command or file_cmd
    if cmd is None:
        raise ConfigError("command", "missing required field")
    if cmd not in COMMANDS:
        raise ConfigError("command", f"unknown command {cmd!r}")
    if file_cmd is not None and command is not None and file_cmd != command:
        raise ConfigError(
            "command",
            f"config says {file_cmd!r} but {command!r} was invoked",
        )

    # aic commands define their candidates in the estimator block; a model
    # block there is allowed (validated) but not required
    if "model" not in cfg:
        if cmd not in ("aic-order", "aic-states"):
            raise ConfigError("model", "missing required field")
        model, theta = None, np.zeros(0)
    else:
        model, theta = build_model(cfg["model"])

    est_block = cfg.get("estimator", {})
    if not isinstance(est_block, dict):
        raise ConfigError("estimator", "estimator block must be an object")
    schema = _EST_FIELDS[cmd]
    _unknown_keys(est_block, "estimator", tuple(schema))
    est = dict(_EST_DEFAULTS.get(cmd, {}))
    for key, (tag, required) in schema.items():
        if key in est_block:
            est[key] = _check_field("estimator", key, tag, est_block[key])
        elif required:
            raise ConfigError(f"estimator.{key}", "missing required field")
    if seed_override is not None:
        est["seed"] = int(seed_override)

    if cmd == "kl":
        t0 = np.asarray(est["theta0"], dtype=float)
        if t0.size != model.param_dim:
            raise ConfigError(
                "estimator.theta0",
                f"expected length {model.param_dim}, got {t0.size}",
            )
    for key in ("direction", "theta0"):
        if cmd in ("kl-sweep", "quad-check", "crlb") and key in est:
            vec = np.asarray(est[key], dtype=float)
            if vec.size != model.param_dim:
                raise ConfigError(
                    f"estimator.{key}",
                    f"expected length {model.param_dim}, got {vec.size}",
                )
    if cmd == "quad-check":
        grid = est["eps_grid"]
        if any(e <= 0.0 for e in grid):
            raise ConfigError("estimator.eps_grid", "entries must be > 0")
        if any(a <= b for a, b in zip(grid, grid[1:])):
            raise ConfigError(
                "estimator.eps_grid", "must be strictly decreasing"
            )
    if cmd == "aic-states" and est["k_min"] > est["k_max"]:
        raise ConfigError("estimator.k_min", "must be <= k_max")
    if cmd == "crlb" and "sample_sizes" in est:
        sizes = est["sample_sizes"]
        if any(s != int(s) or s < 1 for s in sizes):
            raise ConfigError(
                "estimator.sample_sizes", "entries must be positive integers"
            )
        est["sample_sizes"] = [int(s) for s in sizes]

    out_block = cfg.get("output", {})
    if not isinstance(out_block, dict):
        raise ConfigError("output", "output block must be an object")
    _unknown_keys(out_block, "output", ("figure",))
    figure = out_block.get("figure", True)
    if not isinstance(figure, bool):
        raise ConfigError("output.figure", "expected true/false")

    resolved = {
        "command": cmd,
        "estimator": {k: est[k] for k in sorted(est)},
        "output": {"figure": figure},
    }
    if "model" in cfg:
        resolved["model"] = dict(cfg["model"])
        # materialize defaulted thetas, but only where 'theta' is a legal
        # field, so the resolved block is itself a valid config
        if cfg["model"].get("family") in (
            "logit", "korder", "varma", "trbm"
        ) and not any(k in cfg["model"] for k in ("W", "Wp", "b_Y", "b_H")):
            resolved["model"]["theta"] = [float(v) for v in theta]
    return {
        "command": cmd,
        "model": model,
        "theta": theta,
        "estimator": est,
        "figure": figure,
        "resolved": resolved,
    }
