"""Command-line entry points wiring the modules into reproducible runs.

Every subcommand reads one TOML config, writes its outputs (delimited data
plus rendered figures) into the output directory, and drops a manifest with
the config hash, the effective seed, and the package version so a rerun can
be checked byte for byte.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .constants import get_species  # noqa: E402
from .datafiles import paper_layout, paper_points_csv, shipped_bath  # noqa: E402
from .geometry import LayoutError, load_layout  # noqa: E402
from .heating import (  # noqa: E402
    NoiseDrive,
    ensemble_heating_slope,
    heating_rate_analytic,
    integrate_langevin,
    write_run_manifest,
)
from .noise import (  # noqa: E402
    CLOSED_FORM,
    QUADRATURE,
    ensemble_psd_mu,
    field_psd_numeric,
    field_psd_plane,
    load_bath,
)
from .recool import (  # noqa: E402
    TwoLevelParams,
    calibrate,
    calibration_report_csv,
    calibration_report_text,
    fluorescence_curve,
    heating_protocol,
    write_protocol_manifest,
)
from .survey import (  # noqa: E402
    emit_plot,
    fit_distance_trend,
    read_records_csv,
    save_figure,
)
from .trap import (  # noqa: E402
    NullNotFoundError,
    UnstableConfigurationError,
    mode_report_csv,
    mode_report_text,
    rf_null,
    secular_modes,
)

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as f:
            return _toml.load(f)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def _section(config: dict, name: str) -> dict:
    if name not in config:
        raise ConfigError(f"config is missing the [{name}] section")
    return config[name]


def _write_manifest(out: Path, subcommand: str, config_path: str, seed: int | None,
                    outputs: list[str]) -> None:
    import matplotlib as _mpl
    import scipy as _scipy

    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    doc = {
        "subcommand": subcommand,
        "config_sha256": digest,
        "seed": seed,
        "version": __version__,
        "dependency_versions": {
            "numpy": np.__version__,
            "scipy": _scipy.__version__,
            "matplotlib": _mpl.__version__,
        },
        "outputs": sorted(outputs),
    }
    (out / "run_manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )


def _resolve_layout(name: str):
    if name == "paper":
        return paper_layout()
    return load_layout(name)


def _resolve_bath(name: str):
    if name in ("wide", "paper_a10"):
        return shipped_bath(name)
    return load_bath(name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_trap_analyze(config: dict, out: Path, seed: int | None, fmt: str,
                     config_path: str) -> int:
    cfg = _section(config, "trap_analyze")
    layout = _resolve_layout(cfg.get("layout", "paper"))
    species = get_species(cfg.get("species", "ca40"))
    null = rf_null(layout)
    modes = secular_modes(layout, species, null_point=null)
    report = mode_report_text(modes)
    report += f"rf null: ({null[0]:.6e}, {null[1]:.6e}, {null[2]:.6e}) m\n"
    (out / "modes.txt").write_text(report)
    (out / "modes.csv").write_text(mode_report_csv(modes))
    outputs = ["modes.txt", "modes.csv"]
    if fmt != "csv":
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = np.linspace(null[0] - 4e-4, null[0] + 4e-4, 161)
        ys = np.linspace(0.2 * null[1], 2.5 * null[1], 141)
        from .trap import pseudopotential
        grid = np.array([(x, y, null[2]) for y in ys for x in xs])
        ps = pseudopotential(layout, species, grid).reshape(len(ys), len(xs))
        pcm = ax.contourf(xs * 1e6, ys * 1e6, np.log10(ps + 1e-40), levels=40)
        ax.plot([null[0] * 1e6], [null[1] * 1e6], "r+", ms=12, label="rf null")
        ax.set_xlabel("x (um)")
        ax.set_ylabel("y (um)")
        fig.colorbar(pcm, ax=ax, label="log10 pseudopotential (J)")
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        save_figure(fig, out / "pseudopotential.svg")
        plt.close(fig)
        outputs.append("pseudopotential.svg")
    _write_manifest(out, "trap-analyze", config_path, seed, outputs)
    print(report, end="")
    return EXIT_OK


def cmd_noise_spectrum(config: dict, out: Path, seed: int | None, fmt: str,
                       config_path: str) -> int:
    cfg = _section(config, "noise_spectrum")
    bath = _resolve_bath(cfg.get("preset", "wide"))
    d = float(cfg.get("distance_m", 240e-6))
    f_lo = float(cfg.get("f_min_hz", 1e3))
    f_hi = float(cfg.get("f_max_hz", 1e7))
    n = int(cfg.get("n_points", 41))
    freqs = np.geomspace(f_lo, f_hi, n)
    rows = []
    for f in freqs:
        s_mu_c = ensemble_psd_mu(bath, f, CLOSED_FORM)
        s_mu_q = ensemble_psd_mu(bath, f, QUADRATURE)
        s_e_c = field_psd_plane(bath, d, f, CLOSED_FORM)
        s_e_n = field_psd_numeric(bath, d, f)
        rows.append((f, s_mu_c, s_mu_q, s_e_c, s_e_n))
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f_Hz", "S_mu_CLOSED_FORM_C2m2Hz", "S_mu_QUADRATURE_C2m2Hz",
                    "S_E_CLOSED_FORM_V2m2Hz", "S_E_SURFACE_INTEGRAL_V2m2Hz"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    outputs = ["spectrum.csv"]
    if fmt != "csv":
        arr = np.array(rows)
        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        ax.loglog(arr[:, 0], arr[:, 3], label="field PSD, closed form")
        ax.loglog(arr[:, 0], arr[:, 4], "--", label="field PSD, surface integral")
        ax.set_xlabel("f (Hz)")
        ax.set_ylabel(r"$S_E$ ((V/m)$^2$/Hz)")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        save_figure(fig, out / "spectrum.svg")
        plt.close(fig)
        outputs.append("spectrum.svg")
    _write_manifest(out, "noise-spectrum", config_path, seed, outputs)
    print(f"wrote spectrum for d = {d:.3g} m over {n} frequencies")
    return EXIT_OK


def cmd_simulate_heating(config: dict, out: Path, seed: int | None, fmt: str,
                         config_path: str) -> int:
    cfg = _section(config, "simulate_heating")
    species = get_species(cfg.get("species", "ca40"))
    freqs = [float(v) for v in cfg.get("frequencies_hz", [1.2e6, 1.4e6, 0.4e6])]
    level = float(cfg.get("s_e_level", 1.7e-11))
    duration = float(cfg.get("duration_s", 2e-4))
    members = int(cfg.get("n_members", 64))
    run_seed = int(cfg.get("seed", 0)) if seed is None else seed
    drive = NoiseDrive.white(level)
    analytic = heating_rate_analytic(species, freqs, drive)
    slopes, errs = ensemble_heating_slope(
        species, freqs, drive, duration, n_members=members, seed=run_seed
    )
    trace = integrate_langevin(species, freqs, drive, duration, run_seed)
    trace.write_csv(out / "trace.csv")
    write_run_manifest(
        out / "trace_manifest.json", seed=run_seed,
        dt=1.0 / (max(freqs) * 50), duration=duration, drive=drive,
        extra={"n_members": members},
    )
    per_mode = species.charge ** 2 * np.array(
        [drive(f, ax) for f, ax in zip(freqs, "xyz")]
    ) / (4.0 * species.mass)
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "f_Hz", "analytic_J_per_s", "ensemble_J_per_s",
                    "ensemble_err_J_per_s", "ratio"])
        for i, f in enumerate(freqs):
            w.writerow([i, repr(float(f)), repr(float(per_mode[i])),
                        repr(float(slopes[i])), repr(float(errs[i])),
                        repr(float(slopes[i] / per_mode[i])) if per_mode[i] else ""])
    outputs = ["trace.csv", "rates.csv", "trace_manifest.json"]
    if fmt != "csv":
        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        for i in range(3):
            ax.plot(trace.times * 1e3, trace.mode_energies[i] / 1e-24,
                    label=f"mode {i} ({freqs[i] / 1e6:.2f} MHz)")
        ax.plot(trace.times * 1e3, analytic * trace.times / 3 / 1e-24, "k--",
                lw=1, label="analytic mean per mode")
        ax.set_xlabel("t (ms)")
        ax.set_ylabel("mode energy (yJ)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        save_figure(fig, out / "heating.svg")
        plt.close(fig)
        outputs.append("heating.svg")
    _write_manifest(out, "simulate-heating", config_path, run_seed, outputs)
    ratios = ", ".join(
        f"{s / p:.3f}" if p else "n/a" for s, p in zip(slopes, per_mode))
    print(f"analytic {analytic:.4e} J/s; ensemble per-mode ratios {ratios}")
    return EXIT_OK


def cmd_recool_pipeline(config: dict, out: Path, seed: int | None, fmt: str,
                        config_path: str) -> int:
    from .heating import effective_frequency

    cfg = _section(config, "recool_pipeline")
    species = get_species(cfg.get("species", "ca40"))
    mode_freqs = [float(v) for v in
                  cfg.get("mode_frequencies_hz", [1.2e6, 1.4e6, 0.4e6])]
    levels = [float(v) for v in cfg.get(
        "noise_levels", [1.7e-11, 5e-11, 1.5e-10, 4e-10, 1.0e-9])]
    tau_offs = [float(v) for v in cfg.get(
        "tau_offs_s", [0.2, 0.4, 0.8, 1.2, 1.6])]
    scale_taus = bool(cfg.get("scale_taus_to_level", True))
    bin_width = float(cfg.get("bin_width_s", 5e-5))
    n_averages = int(cfg.get("n_averages", 1000))
    run_seed = int(cfg.get("seed", 0)) if seed is None else seed
    params = TwoLevelParams.ca40_defaults(
        intensity_w_m2=float(cfg.get("intensity_w_m2", 380.0)),
        detuning_hz=float(cfg.get("detuning_hz", -5e6)),
    )
    f_eff = effective_frequency(mode_freqs)

    pairs = []
    for i, level in enumerate(levels):
        drive = NoiseDrive.white(level)
        de_dt = heating_rate_analytic(species, mode_freqs, drive)
        # like the experiment: weaker noise gets longer heating times so the
        # recool curves stay in the same fittable energy window
        taus = np.asarray(tau_offs) * (max(levels) / level if scale_taus else 1.0)
        curves = []
        for j, tau in enumerate(taus):
            curve = fluorescence_curve(
                params, f_eff, species, de_dt * tau, duration=None,
                bin_width=bin_width, n_averages=n_averages,
                poisson_seed=run_seed * 10007 + i * 101 + j,
            )
            curves.append(curve)
            if i == 0 and j == len(taus) - 1:
                curve.write_csv(out / "example_curve.csv")
        slope, _ = heating_protocol(taus, curves, params, f_eff, species)
        pairs.append((slope, de_dt))
    result = calibrate(pairs)
    recovered = [deps / result.slope for deps, _ in pairs]
    (out / "calibration.txt").write_text(
        calibration_report_text(result, pairs)
        + "recovered physical rates (J/s): "
        + ", ".join(f"{r:.4e}" for r in recovered) + "\n"
    )
    (out / "calibration.csv").write_text(calibration_report_csv(result, pairs))
    write_protocol_manifest(
        out / "protocol_manifest.json", tau_offs=tau_offs, params=params,
        seeds=[run_seed], extra={"noise_levels": levels},
    )
    outputs = ["calibration.txt", "calibration.csv", "protocol_manifest.json",
               "example_curve.csv"]
    if fmt != "csv":
        fig, ax = plt.subplots(figsize=(6, 4.5))
        de = [p[1] for p in pairs]
        deps = [p[0] for p in pairs]
        ax.loglog(de, deps, "o", label="protocol output")
        dd = np.geomspace(min(de), max(de), 32)
        ax.loglog(dd, result.slope * dd + result.intercept, "-",
                  label=f"fit slope {result.slope:.3f}")
        ax.set_xlabel("injected dE/dt (J/s)")
        ax.set_ylabel(r"fitted d$\epsilon$/dt (J/s)")
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        save_figure(fig, out / "calibration.svg")
        plt.close(fig)
        outputs.append("calibration.svg")
    _write_manifest(out, "recool-pipeline", config_path, run_seed, outputs)
    print(f"calibration slope {result.slope:.4f} +/- {result.slope_error:.4f}; "
          f"max recovery error "
          f"{max(abs(r / p[1] - 1) for r, p in zip(recovered, pairs)):.2%}")
    return EXIT_OK


def cmd_survey(config: dict, out: Path, seed: int | None, fmt: str,
               config_path: str) -> int:
    cfg = _section(config, "survey")
    src = cfg.get("input_csv", "paper")
    path = paper_points_csv() if src == "paper" else Path(src)
    records = read_records_csv(path)
    fit = None
    if len(records) >= 3:
        d = [r.distance for r in records]
        if max(d) / min(d) >= 3.0:
            fit = fit_distance_trend(records)
    emit_plot(records, fit, out / "survey.csv",
              None if fmt == "csv" else out / "survey.svg")
    outputs = ["survey.csv"] + ([] if fmt == "csv" else ["survey.svg"])
    if fit is not None:
        (out / "trend.txt").write_text(
            f"slope {fit.slope:.4f} +/- {fit.slope_error:.4f} over "
            f"{fit.n_points} points\n"
        )
        outputs.append("trend.txt")
    _write_manifest(out, "survey", config_path, seed, outputs)
    print(f"{len(records)} records -> {out / 'survey.csv'}")
    return EXIT_OK


COMMANDS = {
    "trap-analyze": cmd_trap_analyze,
    "noise-spectrum": cmd_noise_spectrum,
    "simulate-heating": cmd_simulate_heating,
    "recool-pipeline": cmd_recool_pipeline,
    "survey": cmd_survey,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="surftrap",
        description="surface-trap field, noise, heating, and recooling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the seed from the config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("csv", "svg"), default="svg",
                       help="csv: delimited output only; svg: also render figures")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](config, out, args.seed, args.format,
                                      args.config)
    except (ConfigError, LayoutError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NullNotFoundError, UnstableConfigurationError, ValueError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
