"""Artifact writing: delimited tables, JSON payloads, run metadata, figures.

Every number is serialized with 17 significant digits and a '.' decimal
point regardless of locale, so a value survives a write/read round trip
bit-for-bit and re-running a config reproduces its CSV and JSON artifacts
byte-identically. Figures are rendered through the Agg backend, imported
lazily so headless table-only runs never touch matplotlib.

Finite-alphabet observations are serialized 1-based (symbols 1..A); hidden
state indices stay 0-based. Readers accept both the simulate output layout
(t, y[, x...]) and bare observation files with columns y1..yd: columns
named 'y' or 'y<i>' are taken in suffix order, everything else is ignored.
"""

from __future__ import annotations

import csv
import json
import platform
import re
from importlib import metadata

import numpy as np

from .errors import ConfigError

__all__ = [
    "fmt",
    "read_matrix_csv",
    "read_observations",
    "render_aic",
    "render_kl_sweep",
    "render_quad_check",
    "trajectory_rows",
    "write_csv",
    "write_json",
    "write_run_meta",
]

_Y_COL = re.compile(r"^y(\d*)$")


def fmt(value) -> str:
    """One cell: floats at 17 significant digits, bools as true/false."""
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _plain(obj):
    """Recursively convert numpy containers to JSON-ready builtins."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def write_json(path, payload) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline.

    Infinities pass through as JSON literals (the KL estimator reports
    support mismatches as +inf rather than failing a sweep).
    """
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions() -> dict:
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for pkg in ("numba", "matplotlib", "ghmmkl"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def write_run_meta(path, resolved, timings, artifacts) -> None:
    """Resolved config + library versions + wall-clock timings.

    Timings are wall clock and vary run to run; everything else in the
    file, like the data artifacts themselves, is reproducible.
    """
    write_json(
        path,
        {
            "command": resolved["command"],
            "resolved_config": resolved,
            "versions": _versions(),
            "timings": {k: round(v, 6) for k, v in timings.items()},
            "artifacts": sorted(artifacts),
        },
    )


def read_observations(path, field="estimator.data") -> np.ndarray:
    """Observation matrix (n, d) from a CSV file.

    Selects the y-columns by header name and ignores t/x/anything else,
    so simulate output feeds straight back in. Malformed files are config
    errors attributed to the data field.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigError(field, f"{path}: empty file")
            cols = []
            for j, name in enumerate(header):
                m = _Y_COL.match(name.strip())
                if m:
                    cols.append((int(m.group(1) or 1), j))
            if not cols:
                raise ConfigError(
                    field, f"{path}: no observation columns (y or y1..yd)"
                )
            cols.sort()
            idx = [j for _, j in cols]
            rows = []
            for i, row in enumerate(reader):
                if not row:
                    continue
                try:
                    rows.append([float(row[j]) for j in idx])
                except (ValueError, IndexError):
                    raise ConfigError(
                        field, f"{path}: bad row {i + 2}"
                    )
    except OSError as exc:
        raise ConfigError(field, f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(field, f"{path}: no observation rows")
    arr = np.asarray(rows, dtype=float)
    return arr


def read_matrix_csv(path, field="matrix") -> np.ndarray:
    """Matrix from a CSV file whose header row gives 'rows,cols' counts.

    The first line holds the two shape integers; the remaining lines hold
    the entries in row-major order (split across lines however written).
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                head = next(reader)
            except StopIteration:
                raise ConfigError(field, f"{path}: empty file")
            try:
                r, c = (int(v) for v in head)
            except ValueError:
                raise ConfigError(
                    field, f"{path}: header must be 'rows,cols' integers"
                )
            vals = []
            for row in reader:
                for cell in row:
                    cell = cell.strip()
                    if cell:
                        try:
                            vals.append(float(cell))
                        except ValueError:
                            raise ConfigError(
                                field, f"{path}: bad entry {cell!r}"
                            )
    except OSError as exc:
        raise ConfigError(field, f"cannot read {path}: {exc}") from exc
    if r < 1 or c < 1:
        raise ConfigError(field, f"{path}: shape must be positive")
    if len(vals) != r * c:
        raise ConfigError(
            field, f"{path}: expected {r * c} entries, got {len(vals)}"
        )
    return np.asarray(vals, dtype=float).reshape(r, c)


def trajectory_rows(traj, keep_hidden=True, finite=False):
    """(header, row iterable) for a simulated trajectory.

    Finite-alphabet symbols are shifted to 1-based; multivariate
    observations and state vectors fan out into y1..ym / x1..xs columns.
    """
    y = np.asarray(traj.y)
    x = traj.x if keep_hidden else None
    if y.ndim == 1:
        y2 = y.reshape(-1, 1)
        yn = ["y"]
    else:
        y2 = y
        yn = [f"y{j + 1}" for j in range(y.shape[1])]
    header = ["t"] + yn
    xn = []
    if x is not None:
        x = np.asarray(x)
        x2 = x.reshape(-1, 1) if x.ndim == 1 else x
        xn = ["x"] if x2.shape[1] == 1 else [
            f"x{j + 1}" for j in range(x2.shape[1])
        ]
        header += xn

    def rows():
        for t in range(y2.shape[0]):
            row = [t]
            if finite:
                row += [int(v) + 1 for v in y2[t]]
            else:
                row += list(y2[t])
            if xn:
                row += list(x2[t])
            yield row

    return header, rows()


# ---------------------------------------------------------------------------
# figures (lazy matplotlib, Agg only)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_kl_sweep(path, grid, mean, se) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(grid, mean, yerr=se, marker="o", capsize=3, lw=1.2)
    ax.set_xlabel("sweep coordinate")
    ax.set_ylabel("KL rate estimate")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_quad_check(path, rows) -> None:
    plt = _pyplot()
    eps = [r["eps"] for r in rows]
    rho = [r["rho"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(eps, rho, marker="o", lw=1.2)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("step size")
    ax.set_ylabel("KL / quadratic prediction")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_aic(path, rows, selected) -> None:
    plt = _pyplot()
    ks = [r.k for r in rows]
    aics = [r.aic for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(ks, aics, marker="o", lw=1.2)
    ax.axvline(selected, color="tab:red", lw=0.8, ls="--")
    ax.set_xticks(ks)
    ax.set_xlabel("candidate index")
    ax.set_ylabel("AIC")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
