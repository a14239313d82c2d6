"""CSV and metadata output.

Every run directory gets populations.csv / coherences.csv (wide layout, one
value+stderr column pair per entry), pop_diff.csv (the headline observable:
t, value, stderr), and metadata.json. The metadata echoes the fully resolved
configuration, seed and version, so a run is reproducible from the sidecar
alone; nothing time- or host-dependent goes in it.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleResult, population_difference, steady_difference

FLOAT_FMT = "%.15g"


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def version_string() -> str:
    """Package version, with the git revision appended when available."""
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).parent).stdout.strip()
    except Exception:
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def write_populations_csv(path, result: EnsembleResult) -> None:
    pops = result.populations()
    n = result.n_levels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [c for i in range(n)
                            for c in (f"pop_{i + 1}", f"stderr_{i + 1}")])
        for s, t in enumerate(result.grid):
            row = [_fmt(t)]
            for i in range(n):
                row += [_fmt(pops[s, i]), _fmt(result.stderr[s, i, i])]
            w.writerow(row)


def write_coherences_csv(path, result: EnsembleResult) -> None:
    n = result.n_levels
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["t"]
        for i, j in pairs:
            header += [f"re_{i + 1}{j + 1}", f"im_{i + 1}{j + 1}",
                       f"stderr_{i + 1}{j + 1}"]
        w.writerow(header)
        for s, t in enumerate(result.grid):
            row = [_fmt(t)]
            for i, j in pairs:
                row += [_fmt(result.rho[s, i, j].real),
                        _fmt(result.rho[s, i, j].imag),
                        _fmt(result.stderr[s, i, j])]
            w.writerow(row)


def write_series_csv(path, t, value, stderr) -> None:
    """The per-observable format: columns t, value, stderr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "stderr"])
        for row in zip(t, value, stderr):
            w.writerow([_fmt(x) for x in row])


def read_series_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:3] != ["t", "value", "stderr"]:
            raise ValueError(f"{path}: expected columns t, value, stderr")
        rows = np.array([[float(x) for x in row] for row in r])
    if rows.size == 0:
        raise ValueError(f"{path}: empty series")
    return rows[:, 0], rows[:, 1], rows[:, 2]


def run_metadata(result: EnsembleResult, resolved_config: dict,
                 pair=(0, 1)) -> dict:
    """Reproducibility sidecar for one ensemble run."""
    i, j = pair
    steady_raw = steady_difference(result, i, j, normalized=False)
    steady_norm = steady_difference(result, i, j, normalized=True)
    return {
        "version": version_string(),
        "config": resolved_config,
        "run": dict(result.meta),
        "n_valid": result.n_valid,
        "norm_drift": result.norm_drift_stats,
        "steady": {
            "window_frac": result.steady.window_frac,
            "t_start": result.steady.t_start,
            "populations": [float(p) for p in result.steady.populations],
            "pair": [i + 1, j + 1],
            "difference": {"value": steady_raw[0], "stderr": steady_raw[1]},
            "normalized_difference": {"value": steady_norm[0],
                                      "stderr": steady_norm[1]},
        },
    }


def write_run_outputs(outdir, result: EnsembleResult, resolved_config: dict,
                      pair=(0, 1), prefix: str = "",
                      normalized: bool = False) -> dict:
    """Write the full output set for one run; returns the metadata dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_populations_csv(outdir / f"{prefix}populations.csv", result)
    write_coherences_csv(outdir / f"{prefix}coherences.csv", result)
    series = population_difference(result, *pair, normalized=normalized)
    write_series_csv(outdir / f"{prefix}pop_diff.csv", series.t, series.value,
                     series.stderr)
    meta = run_metadata(result, resolved_config, pair)
    meta["observable"] = {
        "name": f"{prefix}pop_diff",
        "pair": [pair[0] + 1, pair[1] + 1],
        "normalized": normalized,
    }
    with open(outdir / f"{prefix}metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def read_metadata(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
