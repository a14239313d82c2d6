"""Command-line interface: run / compare / diagnose.

``run`` executes a configured scenario (or a custom system) and writes CSVs
plus a metadata sidecar; ``compare`` reads two observable CSVs (or one CSV
and an analytic reference) and reports steady-state deviations in sigma
units; ``diagnose`` runs the bath validation suite. Exit codes: 0 success,
2 configuration/validation error, 3 numerical failure, 1 failed diagnostic.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from pathlib import Path

import click
import jsonschema
import numpy as np
import yaml

from . import _kernels
from .bath import SpectralDensity, SpectralDensityFamily, discretize
from .diagnostics import run_all_checks
from .ehrenfest import StepConfig
from .ensemble import EnsembleConfig, EnsembleError, SCENARIOS, \
    population_difference, run_ensemble, scenario_build
from .io import FLOAT_FMT, read_metadata, read_series_csv, run_metadata, \
    write_run_outputs, write_series_csv
from .redfield import CorrelationSpectrum, assemble_tensor, \
    boltzmann_reference, integrate_rho, two_temperature_reference
from .system import CorrectionKind, SystemSpec
from .units import DEFAULT_UNITS

_BATH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["label", "family", "eta", "omega_c", "temperature"],
    "properties": {
        "label": {"type": "string"},
        "family": {"enum": ["ohmic_exp", "drude_lorentz"]},
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "omega_c": {"type": "number", "exclusiveMinimum": 0},
        "temperature": {"type": "number", "exclusiveMinimum": 0},
        "n_modes": {"type": "integer", "minimum": 1},
        "omega_max_factor": {"type": "number", "exclusiveMinimum": 0},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS) + ["custom"]},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["epsilon_cm1", "couplings"],
            "properties": {
                "epsilon_cm1": {"type": "array", "minItems": 2,
                                "items": {"type": "number"}},
                "j_cm1": {"type": "array"},
                "couplings": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["reservoir", "v"],
                        "properties": {
                            "reservoir": {"type": "string"},
                            "v": {"type": "array"},
                        },
                    },
                },
            },
        },
        "baths": {"type": "array", "minItems": 1, "items": _BATH_SCHEMA},
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_traj": {"type": "integer", "minimum": 1},
                "base_seed": {"type": "integer", "minimum": 0},
                "traj_offset": {"type": "integer", "minimum": 0},
                "t_final": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "n_record": {"type": "integer", "minimum": 2},
            },
        },
        "correction": {"enum": ["none", "paper_literal",
                                "standard_harmonic"]},
        "renormalize": {"type": ["boolean", "null"]},
        "norm_drift_budget": {"type": "number"},
        "sampling": {"enum": ["wigner", "classical"]},
        "initial_state": {"type": "array"},
        "observable": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pair": {"type": "array", "minItems": 2, "maxItems": 2,
                         "items": {"type": "integer", "minimum": 1}},
                "normalized": {"type": "boolean"},
            },
        },
        "with_redfield": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "n_samples_moments": {"type": "integer", "minimum": 100},
                "n_samples_fdt": {"type": "integer", "minimum": 100},
                "n_fdt_times": {"type": "integer", "minimum": 2},
                "n_wick": {"type": "integer", "minimum": 100},
            },
        },
    },
}

_PAPER_BATH_YAML = dict(family="ohmic_exp", eta=10.0, omega_c=10.0,
                        temperature=300.0, n_modes=400, omega_max_factor=5.0)


def _scenario_defaults(name: str) -> dict:
    """Config fragments matching ensemble.scenario_build."""
    ens = dict(n_traj=8000, base_seed=12345, t_final=20.0, dt=1e-3,
               n_record=201)
    common = dict(correction="standard_harmonic", sampling="wigner",
                  norm_drift_budget=math.inf, ensemble=ens,
                  observable={"pair": [1, 2], "normalized": False})
    if name == "two_level_paper":
        sys_ = dict(epsilon_cm1=[0.0, 100.0],
                    couplings=[dict(reservoir="bath",
                                    v=[[0.0, 1.0], [1.0, 0.0]])])
        baths = [dict(label="bath", **_PAPER_BATH_YAML)]
    elif name.startswith("three_level_case"):
        v13, v23 = {"1": (1.0, 1.0), "2": (3.0, 1.0),
                    "3": (1.0, 3.0)}[name[-1]]
        sys_ = dict(epsilon_cm1=[0.0, 100.0, 120.0],
                    couplings=[dict(reservoir="bath",
                                    v=[[0.0, 0.0, v13], [0.0, 0.0, v23],
                                       [v13, v23, 0.0]])])
        baths = [dict(label="bath", **_PAPER_BATH_YAML)]
        common["observable"] = {"pair": [1, 2], "normalized": True}
    elif name == "two_temperature":
        sys_ = dict(epsilon_cm1=[0.0, 100.0, 120.0],
                    couplings=[
                        dict(reservoir="hot",
                             v=[[0.0, 0.0, 1.0], [0.0, 0.0, 0.0],
                                [1.0, 0.0, 0.0]]),
                        dict(reservoir="cold",
                             v=[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                                [0.0, 1.0, 0.0]]),
                    ])
        baths = [dict(label="hot", **{**_PAPER_BATH_YAML,
                                      "temperature": 6000.0}),
                 dict(label="cold", **_PAPER_BATH_YAML)]
        common["observable"] = {"pair": [1, 2], "normalized": True}
    else:
        raise KeyError(name)
    return dict(system=sys_, baths=baths, **common)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    scenario = raw.get("scenario", "custom")
    if scenario != "custom":
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}")
        raw = _merge(_scenario_defaults(scenario), raw)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from None
    if "system" not in raw or "baths" not in raw:
        raise ConfigError("config needs 'system' and 'baths' "
                          "(or a 'scenario' preset)")
    return raw


def build_from_config(cfg: dict):
    system = SystemSpec(
        epsilon_cm1=cfg["system"]["epsilon_cm1"],
        couplings=[(c["reservoir"], c["v"])
                   for c in cfg["system"]["couplings"]],
        j_cm1=cfg["system"].get("j_cm1"))
    baths = []
    for b in cfg["baths"]:
        sd = SpectralDensity(SpectralDensityFamily(b["family"]),
                             eta=b["eta"], omega_c=b["omega_c"])
        baths.append(discretize(
            sd, b.get("n_modes", 400),
            b.get("omega_max_factor", 5.0) * b["omega_c"],
            temperature=b["temperature"], label=b["label"]))
    ens = cfg.get("ensemble", {})
    initial = cfg.get("initial_state")
    if initial is not None:
        initial = tuple(complex(v[0], v[1]) if isinstance(v, list) else
                        complex(v) for v in initial)
    step = StepConfig(
        dt=ens.get("dt", 1e-3),
        correction_kind=CorrectionKind(cfg.get("correction",
                                               "standard_harmonic")),
        renormalize=cfg.get("renormalize"),
        norm_drift_budget=cfg.get("norm_drift_budget", 0.5))
    ecfg = EnsembleConfig(
        n_traj=ens.get("n_traj", 8000), base_seed=ens.get("base_seed", 12345),
        traj_offset=ens.get("traj_offset", 0),
        t_final=ens.get("t_final", 20.0), n_record=ens.get("n_record", 201),
        step=step, sampling=cfg.get("sampling", "wigner"),
        initial_state=initial, scenario=cfg.get("scenario", "custom"))
    return system, baths, ecfg


def _observable_pair(cfg: dict):
    obs = cfg.get("observable", {})
    pair = obs.get("pair", [1, 2])
    return (pair[0] - 1, pair[1] - 1), obs.get("normalized", False)


@click.group()
def main():
    """Trajectory-ensemble simulator with detailed-balance correction."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=None,
              help="Worker processes (default: available parallelism).")
@click.option("--seed", type=int, default=None, help="Override base seed.")
@click.option("--dry-run", is_flag=True,
              help="Validate, print resolved parameters, write nothing.")
def cmd_run(config_path, workers, seed, dry_run):
    """Run the configured scenario and write CSV + metadata outputs."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg.setdefault("ensemble", {})["base_seed"] = seed
        system, baths, ecfg = build_from_config(cfg)
    except (ConfigError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    pair, normalized = _observable_pair(cfg)
    if dry_run:
        _print_resolved(cfg, system, baths, ecfg, pair, normalized)
        return

    outdir = Path(cfg.get("output_dir", "."))
    if workers is None:
        workers = os.cpu_count() or 1
    try:
        result = run_ensemble(system, baths, ecfg, workers=workers)
    except EnsembleError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    meta = write_run_outputs(outdir, result, cfg, pair=pair,
                             normalized=normalized)
    click.echo(f"wrote {outdir}/populations.csv, coherences.csv, "
               f"pop_diff.csv, metadata.json")
    sd = meta["steady"]["normalized_difference" if normalized
                        else "difference"]
    click.echo(f"steady rho_{pair[0] + 1}-rho_{pair[1] + 1}"
               f"{' (normalized)' if normalized else ''} = "
               f"{sd['value']:.5f} +- {sd['stderr']:.5f} "
               f"(window from t = {meta['steady']['t_start']:g} ps)")

    if cfg.get("with_redfield", False):
        try:
            _write_redfield(outdir, cfg, system, baths, ecfg, pair,
                            normalized)
        except (ValueError, RuntimeError) as exc:
            click.echo(f"numerical failure in Redfield reference: {exc}",
                       err=True)
            sys.exit(3)
        click.echo(f"wrote {outdir}/redfield_populations.csv, "
                   f"redfield_pop_diff.csv")


def _write_redfield(outdir, cfg, system, baths, ecfg, pair, normalized):
    spectra = {}
    for b, bc in zip(baths, cfg["baths"]):
        sd = SpectralDensity(SpectralDensityFamily(bc["family"]),
                             eta=bc["eta"], omega_c=bc["omega_c"])
        spectra[b.label] = CorrelationSpectrum(
            sd, b.temperature,
            CorrectionKind(cfg.get("correction", "standard_harmonic")))
    model = assemble_tensor(system, spectra)
    rho0 = np.outer(ecfg.psi0(system.n_levels),
                    ecfg.psi0(system.n_levels).conj())
    grid = ecfg.record_steps() * ecfg.step.dt
    traj = integrate_rho(model, rho0, ecfg.t_final, grid, dt=ecfg.step.dt)
    pops = np.real(np.einsum("sii->si", traj))
    i, j = pair
    diff = pops[:, i] - pops[:, j]
    if normalized:
        diff = diff / (pops[:, i] + pops[:, j])
    outdir = Path(outdir)
    with open(outdir / "redfield_populations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"pop_{k + 1}" for k in range(system.n_levels)])
        for s, t in enumerate(grid):
            w.writerow([FLOAT_FMT % t] + [FLOAT_FMT % p for p in pops[s]])
    write_series_csv(outdir / "redfield_pop_diff.csv", grid, diff,
                     np.zeros_like(diff))


def _print_resolved(cfg, system, baths, ecfg, pair, normalized):
    units = DEFAULT_UNITS
    click.echo(f"scenario: {ecfg.scenario}")
    click.echo(f"levels (cm^-1): {list(system.epsilon_cm1)}")
    for lab in system.reservoir_labels:
        click.echo(f"coupling[{lab}]:\n{system.coupling_matrix(lab)}")
    for b in baths:
        sd_info = b.provenance
        click.echo(
            f"bath '{b.label}': {sd_info['family']} eta={sd_info['eta']:g} "
            f"omega_c={sd_info['omega_c']:g} rad/ps, T={b.temperature:g} K, "
            f"{b.n_modes} modes up to {b.omegas[-1]:g} rad/ps; "
            f"reorganization energy {b.reorganization_from_modes():.4f} "
            f"rad/ps ({units.to_cm1(b.reorganization_from_modes()):.2f} "
            f"cm^-1)")
    click.echo(f"correction: {ecfg.step.correction_kind.value}, "
               f"renormalize: {ecfg.step.renormalize_effective}, "
               f"drift budget: {ecfg.step.norm_drift_budget:g}")
    click.echo(f"ensemble: n_traj={ecfg.n_traj} seed={ecfg.base_seed} "
               f"t_final={ecfg.t_final:g} ps dt={ecfg.step.dt:g} ps "
               f"n_record={ecfg.n_record} sampling={ecfg.sampling}")
    temps = sorted({b.temperature for b in baths})
    if len(temps) == 1:
        ref = boltzmann_reference(system.epsilon, temps[0])
        i, j = pair
        d = ref[i] - ref[j]
        if normalized:
            d = d / (ref[i] + ref[j])
        click.echo(f"Boltzmann reference rho_{i + 1}-rho_{j + 1}"
                   f"{' (normalized)' if normalized else ''}: {d:.5f}")
    click.echo(f"kernel: {_kernels.active_kernel_name()}")
    click.echo("dry run: no output files written")


def _steady_from_csv(path):
    """Window-averaged steady value; exact stderr from the sidecar when
    present, otherwise a conservative (fully-correlated) estimate."""
    t, value, stderr = read_series_csv(path)
    t_start = t[-1] - 0.25 * (t[-1] - t[0])
    win = t >= t_start - 1e-12
    val = float(value[win].mean())
    err = float(stderr[win].mean())
    meta_path = Path(path).parent / (
        Path(path).stem.replace("pop_diff", "metadata") + ".json")
    meta = None
    if meta_path.exists():
        meta = read_metadata(meta_path)
        key = ("normalized_difference"
               if meta.get("observable", {}).get("normalized")
               else "difference")
        steady = meta.get("steady", {}).get(key)
        if steady:
            val, err = float(steady["value"]), float(steady["stderr"])
    return t, value, stderr, val, err, meta


@main.command("compare")
@click.argument("csv_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("csv_b", type=click.Path(exists=True, dir_okay=False),
                required=False)
@click.option("--boltzmann", is_flag=True,
              help="Compare against the single-temperature Boltzmann value.")
@click.option("--two-temp", is_flag=True,
              help="Compare against the two-temperature chain reference.")
@click.option("--interpolate", is_flag=True,
              help="Interpolate B onto A's grid when grids differ.")
def cmd_compare(csv_a, csv_b, boltzmann, two_temp, interpolate):
    """Compare steady states of two observable CSVs, or one CSV against an
    analytic reference (requires the run's metadata sidecar)."""
    if sum(map(bool, (csv_b, boltzmann, two_temp))) != 1:
        click.echo("error: give exactly one of CSV_B, --boltzmann, "
                   "--two-temp", err=True)
        sys.exit(2)
    t_a, v_a, e_a, val_a, err_a, meta_a = _steady_from_csv(csv_a)
    click.echo(f"A: {csv_a}\n   steady = {val_a:.5f} +- {err_a:.5f}")

    if csv_b:
        t_b, v_b, e_b, val_b, err_b, _ = _steady_from_csv(csv_b)
        if t_a.shape != t_b.shape or not np.allclose(t_a, t_b):
            if not interpolate:
                click.echo("error: time grids differ; pass --interpolate",
                           err=True)
                sys.exit(2)
            v_b = np.interp(t_a, t_b, v_b)
        click.echo(f"B: {csv_b}\n   steady = {val_b:.5f} +- {err_b:.5f}")
        comb = math.hypot(err_a, err_b)
        dev = val_a - val_b
        sig = abs(dev) / comb if comb > 0 else (0.0 if dev == 0 else
                                                float("inf"))
        click.echo(f"deviation A-B = {dev:+.5f} ({sig:.2f}σ)")
        rms = float(np.sqrt(np.mean((v_a - v_b) ** 2)))
        click.echo(f"series RMS difference = {rms:.5g}")
        return

    if meta_a is None:
        click.echo("error: analytic references need metadata.json next to "
                   "the CSV", err=True)
        sys.exit(2)
    config = meta_a["config"]
    eps = config["system"]["epsilon_cm1"]
    pair = meta_a["observable"]["pair"]
    normalized = meta_a["observable"]["normalized"]
    i, j = pair[0] - 1, pair[1] - 1
    temps = sorted({b["temperature"] for b in config["baths"]})
    if boltzmann:
        ref_pops = boltzmann_reference(eps, min(temps))
        name = f"Boltzmann (T = {min(temps):g} K)"
    else:
        if len(eps) != 3 or len(temps) != 2:
            click.echo("error: --two-temp needs a three-level, "
                       "two-temperature run", err=True)
            sys.exit(2)
        ref_pops = two_temperature_reference(eps[0], eps[1], eps[2],
                                             max(temps), min(temps))
        name = f"two-temperature chain (T = {max(temps):g}/{min(temps):g} K)"
    ref = ref_pops[i] - ref_pops[j]
    if normalized:
        ref = ref / (ref_pops[i] + ref_pops[j])
    dev = val_a - ref
    sig = abs(dev) / err_a if err_a > 0 else float("inf")
    click.echo(f"reference: {name} -> {ref:.5f}")
    click.echo(f"deviation = {dev:+.5f} ({sig:.2f}σ)")


@main.command("diagnose")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def cmd_diagnose(config_path):
    """Run the bath validation suite and write per-check CSV reports."""
    try:
        cfg = load_config(config_path)
        _, baths, _ = build_from_config(cfg)
    except (ConfigError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    dcfg = cfg.get("diagnostics", {})
    outdir = Path(cfg.get("output_dir", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(dcfg.get("seed", 1234))
    any_failed = False
    for bath in baths:
        checks = run_all_checks(
            bath, rng,
            n_samples_moments=dcfg.get("n_samples_moments", 100_000),
            n_samples_fdt=dcfg.get("n_samples_fdt", 30_000),
            n_fdt_times=dcfg.get("n_fdt_times", 20),
            n_wick=dcfg.get("n_wick", 1_000_000))
        for check in checks:
            status = ("SKIP" if check.skipped
                      else "PASS" if check.passed else "FAIL")
            click.echo(f"[{status}] {bath.label}/{check.name}: "
                       f"{check.detail}")
            any_failed |= not check.passed
            if check.table:
                path = outdir / f"diagnose_{bath.label}_{check.name}.csv"
                cols = list(check.table)
                rows = zip(*(np.atleast_1d(check.table[c]) for c in cols))
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(cols)
                    for row in rows:
                        w.writerow([x if isinstance(x, str) else FLOAT_FMT % x
                                    for x in row])
    sys.exit(1 if any_failed else 0)


if __name__ == "__main__":
    main()
