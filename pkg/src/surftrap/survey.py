"""Heating-rate survey: regularize records into omega S_E(omega) vs distance.

Heating measurements from different traps and species are only comparable
after converting to field-noise PSD and multiplying by the (angular) mode
frequency, which removes the assumed 1/f dependence.  The module ingests
records, converts them, fits the distance-scaling trend, and emits the
scatter plot plus its delimited data.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "surftrap"  # byte-stable figure ids
import matplotlib.pyplot as plt  # noqa: E402

from .constants import IonSpecies  # noqa: E402
from .heating import effective_frequency, phonon_rate_to_field_psd  # noqa: E402

PHONON_RATE = "PHONON_RATE"
ENERGY_RATE = "ENERGY_RATE"
FIELD_PSD = "FIELD_PSD"
QUANTITIES = (PHONON_RATE, ENERGY_RATE, FIELD_PSD)

SIDEBAND = "SIDEBAND"
RECOOL = "RECOOL"

INPUT_COLUMNS = ["label", "d_m", "f_Hz", "quantity_kind", "value", "mass_kg",
                 "material", "T_K", "method", "fx_Hz", "fy_Hz", "fz_Hz"]


class RecordError(ValueError):
    """Malformed or incomplete heating record."""


@dataclass(frozen=True)
class HeatingRecord:
    """One literature or measured heating point."""

    label: str
    distance: float
    frequency: float
    quantity: str
    value: float
    species_mass: float
    electrode_material: str = ""
    temperature: float = 300.0
    method: str = SIDEBAND
    mode_frequencies: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise RecordError(f"{self.label!r}: quantity must be one of {QUANTITIES}")
        if self.method not in (SIDEBAND, RECOOL):
            raise RecordError(f"{self.label!r}: method must be SIDEBAND or RECOOL")
        for name, v in (("distance", self.distance), ("frequency", self.frequency),
                        ("value", self.value), ("species_mass", self.species_mass)):
            if not v > 0:
                raise RecordError(f"{self.label!r}: {name} must be positive, got {v}")
        if self.method == RECOOL:
            if self.mode_frequencies is None or len(self.mode_frequencies) != 3 \
                    or any(not f > 0 for f in self.mode_frequencies):
                raise RecordError(
                    f"{self.label!r}: RECOOL records need all three mode frequencies"
                )

    @property
    def species(self) -> IonSpecies:
        from .constants import ELEMENTARY_CHARGE
        return IonSpecies(mass=self.species_mass, charge=ELEMENTARY_CHARGE)

    def conversion_frequency(self) -> float:
        """Mode frequency used for unit conversion: the record frequency for
        sideband data, the harmonic-sum effective frequency for recooling."""
        if self.method == RECOOL:
            return effective_frequency(self.mode_frequencies)
        return self.frequency


@dataclass(frozen=True)
class TrendFit:
    """Log-log linear fit of omega S_E against distance."""

    slope: float
    intercept: float
    slope_error: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("a reported trend fit needs at least 3 points")


def to_field_psd(record: HeatingRecord) -> float:
    """Electric-field PSD (V/m)^2/Hz implied by the record."""
    if record.quantity == FIELD_PSD:
        return record.value
    f = record.conversion_frequency()
    if record.quantity == PHONON_RATE:
        return phonon_rate_to_field_psd(record.value, f, record.species)
    # ENERGY_RATE, single mode: S_E = 4 m Edot / q^2
    q = record.species.charge
    return 4.0 * record.species_mass * record.value / q ** 2


def regularize(record: HeatingRecord) -> tuple[float, float]:
    """(distance, omega * S_E) with omega = 2 pi times the conversion frequency."""
    s_e = to_field_psd(record)
    omega = 2.0 * np.pi * record.conversion_frequency()
    return record.distance, omega * s_e


def fit_distance_trend(records) -> TrendFit:
    """Least-squares fit of log10(omega S_E) vs log10(d)."""
    pts = [regularize(r) for r in records]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 records, got {len(pts)}")
    d = np.array([p[0] for p in pts])
    if d.max() / d.min() < 3.0:
        raise ValueError(
            f"distance span {d.max() / d.min():.2f}x is below the 3x minimum"
        )
    y = np.log10([p[1] for p in pts])
    x = np.log10(d)
    coeff, cov = np.polyfit(x, y, 1, cov=True)
    return TrendFit(slope=float(coeff[0]), intercept=float(coeff[1]),
                    slope_error=float(np.sqrt(cov[0, 0])), n_points=len(pts))


# ---------------------------------------------------------------------------
# record I/O and plot emission
# ---------------------------------------------------------------------------

def read_records_csv(path: str | Path) -> list[HeatingRecord]:
    """Read the fixed-schema input CSV (header row defines the units)."""
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(INPUT_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise RecordError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            fx, fy, fz = (row.get("fx_Hz"), row.get("fy_Hz"), row.get("fz_Hz"))
            has_modes = all(v not in (None, "",) for v in (fx, fy, fz))
            records.append(HeatingRecord(
                label=row["label"],
                distance=float(row["d_m"]),
                frequency=float(row["f_Hz"]),
                quantity=row["quantity_kind"],
                value=float(row["value"]),
                species_mass=float(row["mass_kg"]),
                electrode_material=row.get("material", ""),
                temperature=float(row["T_K"] or 300.0),
                method=row.get("method") or SIDEBAND,
                mode_frequencies=(float(fx), float(fy), float(fz)) if has_modes else None,
            ))
    return records


def write_regularized_csv(records, path: str | Path) -> None:
    """omega S_E (and f S_E) per record, one row each, full precision."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", "d_m", "omega_S_E_V2_per_m2", "f_S_E_V2_per_m2",
                    "material", "temperature_K"])
        for r in records:
            d, ose = regularize(r)
            w.writerow([r.label, repr(float(d)), repr(float(ose)),
                        repr(float(ose / (2 * np.pi))),
                        r.electrode_material, repr(float(r.temperature))])


def emit_plot(records, fit: TrendFit | None, out_csv: str | Path,
              out_figure: str | Path | None) -> list[Path]:
    """Write the regularized CSV and the log-log scatter figure.

    The figure carries the fitted trend (when given) and a d^-4 reference
    diagonal; an empty record list still produces a valid figure with axes
    and the diagonal only.  Returns the written paths.
    """
    written = []
    try:
        write_regularized_csv(records, out_csv)
    except OSError as exc:
        raise OSError(f"failed writing {out_csv}: {exc}") from exc
    written.append(Path(out_csv))
    if out_figure is None:
        return written

    pts = [regularize(r) for r in records]
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    d_lo, d_hi = 2e-5, 2e-3
    if pts:
        d_vals = [p[0] for p in pts]
        d_lo = min(d_lo, 0.5 * min(d_vals))
        d_hi = max(d_hi, 2.0 * max(d_vals))
        ax.scatter([p[0] * 1e6 for p in pts], [p[1] for p in pts],
                   s=28, zorder=3, label="records")
        for r, p in zip(records, pts):
            ax.annotate(r.label, (p[0] * 1e6, p[1]), fontsize=6,
                        textcoords="offset points", xytext=(4, 3))
    dd = np.geomspace(d_lo, d_hi, 64)
    anchor = pts[0][1] * pts[0][0] ** 4 if pts else 1e-18
    ax.plot(dd * 1e6, anchor * dd ** -4.0, "k--", lw=1,
            label=r"$d^{-4}$ reference")
    if fit is not None:
        ax.plot(dd * 1e6, 10 ** (fit.intercept + fit.slope * np.log10(dd)),
                "-", lw=1.2, color="C3",
                label=f"fit: slope {fit.slope:.2f} $\\pm$ {fit.slope_error:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"ion-electrode distance $d$ ($\mu$m)")
    ax.set_ylabel(r"$\omega\, S_E(\omega)$ (V$^2$/m$^2$)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    try:
        save_figure(fig, out_figure)
    except OSError as exc:
        raise OSError(f"failed writing {out_figure}: {exc}") from exc
    finally:
        plt.close(fig)
    written.append(Path(out_figure))
    return written


def save_figure(fig, path: str | Path) -> None:
    """savefig wrapper that strips volatile metadata so reruns are byte-equal."""
    path = Path(path)
    if path.suffix == ".svg":
        fig.savefig(path, metadata={"Date": None})
    else:
        fig.savefig(path)
