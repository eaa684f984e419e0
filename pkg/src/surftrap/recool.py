"""Doppler-recooling measurement pipeline.

A hot ion scatters fewer photons than a cold one because its Doppler shift
sweeps it off resonance; as the red-detuned laser recools it, fluorescence
rises back to the steady-state level.  This module generates such curves
from a phase-averaged two-level model on the single effective mode, fits
them back to a scaled energy, runs the heat-then-recool protocol over a set
of heating times, and calibrates the scaled-energy rate against a known
injected heating rate.

The multi-level structure of real ions and micromotion broadening are not
modeled; their combined effect is exactly what the empirical calibration
slope absorbs.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .constants import HBAR, IonSpecies, PLANCK, SPEED_OF_LIGHT

# 397 nm S1/2 <-> P1/2 cooling transition of Ca+ (two-level stand-in)
CA40_LINEWIDTH = 2 * np.pi * 21.57e6     # rad/s
CA40_WAVELENGTH = 396.85e-9              # m


def saturation_intensity(linewidth: float = CA40_LINEWIDTH,
                         wavelength: float = CA40_WAVELENGTH) -> float:
    """I_sat = pi h c Gamma / (3 lambda^3) in W/m^2."""
    return np.pi * PLANCK * SPEED_OF_LIGHT * linewidth / (3.0 * wavelength ** 3)


@dataclass(frozen=True)
class TwoLevelParams:
    """Laser and transition parameters of the recooling model.

    natural_linewidth: Gamma (rad/s); saturation: s = I/I_sat; detuning:
    delta (rad/s, negative = red); wavenumber: k (1/m); projection: cosine
    of the angle between the laser and the cooled mode axis.
    """

    natural_linewidth: float = CA40_LINEWIDTH
    saturation: float = 0.84
    detuning: float = -2 * np.pi * 5e6
    wavenumber: float = 2 * np.pi / CA40_WAVELENGTH
    projection: float = 1.0 / math.sqrt(3.0)

    def __post_init__(self):
        if not self.natural_linewidth > 0:
            raise ValueError("natural linewidth must be positive")
        if not self.saturation > 0:
            raise ValueError("saturation must be positive")
        if not abs(self.projection) <= 1:
            raise ValueError("projection must satisfy |cos| <= 1")

    @classmethod
    def ca40_defaults(cls, intensity_w_m2: float = 380.0,
                      detuning_hz: float = -5e6,
                      projection: float = 1.0 / math.sqrt(3.0)) -> "TwoLevelParams":
        """Experiment-style defaults: intensity in W/m^2 (380 = 38 mW/cm^2),
        detuning in ordinary Hz on the red side when negative."""
        return cls(
            saturation=intensity_w_m2 / saturation_intensity(),
            detuning=2 * np.pi * detuning_hz,
            projection=projection,
        )


@dataclass
class RecoolCurve:
    """Expected (or Poisson-sampled, then averaged) photon counts per bin."""

    bin_width: float
    counts: np.ndarray
    n_averages: int = 1000
    steady_state_rate: float = 50e3

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")
        if not self.steady_state_rate > 0:
            raise ValueError("steady-state rate must be positive")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            f.write("t_s,counts\n")
            for t, c in zip(self.times, self.counts):
                f.write(f"{float(t)!r},{float(c)!r}\n")


@dataclass(frozen=True)
class ScaledEnergyResult:
    """Fit output: scaled energy epsilon (J), residual, convergence flags."""

    epsilon: float
    fit_residual: float
    converged: bool
    flat: bool = False


@dataclass(frozen=True)
class CalibrationResult:
    """Linear calibration of d(epsilon)/dt against the true dE/dt."""

    slope: float
    intercept: float
    slope_error: float

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError(f"calibration slope must be positive, got {self.slope}")


# ---------------------------------------------------------------------------
# forward model
# ---------------------------------------------------------------------------

def scattering_rate(params: TwoLevelParams, v) -> np.ndarray | float:
    """Two-level photon scattering rate at velocity v along the mode axis.

    (Gamma/2) s / (1 + s + (2 (delta - k v cos) / Gamma)^2), photons/s.
    """
    v = np.asarray(v, dtype=float)
    g, s = params.natural_linewidth, params.saturation
    det = params.detuning - params.wavenumber * v * params.projection
    out = 0.5 * g * s / (1.0 + s + (2.0 * det / g) ** 2)
    return float(out) if out.ndim == 0 else out


_PHASE_NODES = np.linspace(0.0, 2.0 * np.pi, 513)[:-1]  # uniform cycle average


def _phase_averages(params: TwoLevelParams, species: IonSpecies,
                    energy) -> tuple[np.ndarray, np.ndarray]:
    """Cycle averages (<R>, <v R>) at oscillation energy E (vectorized)."""
    e = np.atleast_1d(np.asarray(energy, dtype=float))
    v_max = np.sqrt(2.0 * np.clip(e, 0.0, None) / species.mass)
    v = v_max[:, None] * np.sin(_PHASE_NODES)[None, :]
    r = scattering_rate(params, v)
    return r.mean(axis=1), (v * r).mean(axis=1)


def energy_derivative(params: TwoLevelParams, species: IonSpecies, energy,
                      recoil: bool = True) -> np.ndarray | float:
    """dE/dt (W) of the cooled mode at oscillation energy E.

    Cooling term hbar k cos <v R> plus, when recoil is on, the standard
    single-beam recoil heating (hbar k)^2/(2 m) (cos^2 + 1/3) <R> that gives
    the model its Doppler-limit fixed point.
    """
    r_mean, vr_mean = _phase_averages(params, species, energy)
    hk = HBAR * params.wavenumber
    de = hk * params.projection * vr_mean
    if recoil:
        de = de + (hk ** 2 / (2.0 * species.mass)) * (
            params.projection ** 2 + 1.0 / 3.0) * r_mean
    out = de if np.ndim(energy) else float(de[0])
    return out


@functools.lru_cache(maxsize=64)
def doppler_limit_energy(params: TwoLevelParams, species: IonSpecies) -> float:
    """Fixed-point energy where cooling and recoil heating balance (J)."""
    if params.detuning >= 0:
        raise ValueError("Doppler limit defined for red detuning only")
    lo = 1e-30
    hi = 1e-18
    f_lo = energy_derivative(params, species, lo)
    if f_lo <= 0:
        raise RuntimeError("no heating at negligible energy; recoil disabled?")
    return optimize.brentq(
        lambda e: energy_derivative(params, species, e), lo, hi, xtol=1e-32,
        rtol=1e-13,
    )


def estimated_cooling_time(params: TwoLevelParams, species: IonSpecies,
                           e0: float, recoil: bool = True) -> float:
    """Time for the model to recool from e0 to near its steady state (s)."""
    e_floor = doppler_limit_energy(params, species) if (
        recoil and params.detuning < 0) else 0.0
    target = max(1.5 * e_floor, 1e-3 * e0, 1e-28)
    if e0 <= target:
        return 0.0
    horizon = 1e-3

    def hit_target(t, y):
        return y[0] - target

    hit_target.terminal = True
    for _ in range(24):
        sol = integrate.solve_ivp(
            lambda t, y: [energy_derivative(params, species, max(y[0], 0.0), recoil)],
            (0.0, horizon), [e0], method="RK45", rtol=1e-6, atol=1e-30,
            events=hit_target,
        )
        if sol.t_events[0].size:
            return float(sol.t_events[0][0])
        horizon *= 2.0
    raise RuntimeError("recooling did not reach steady state; wrong detuning sign?")


def fluorescence_curve(
    params: TwoLevelParams,
    mode_freq: float,
    species: IonSpecies,
    e0: float,
    duration: float | None = None,
    bin_width: float = 50e-6,
    n_averages: int = 1000,
    steady_state_rate: float = 50e3,
    recoil: bool = True,
    poisson_seed: int | None = None,
) -> RecoolCurve:
    """Forward model: recooling fluorescence curve from initial energy e0.

    Integrates dE/dt of the effective mode across the acquisition window and
    emits expected counts per bin proportional to the cycle-averaged
    scattering rate, normalized so the fully cooled ion detects
    steady_state_rate counts/s.  duration=None sizes the window to 1.4x the
    estimated cooling time (plus tail).  poisson_seed draws shot noise at
    n_averages averaged repetitions.
    """
    if e0 < 0:
        raise ValueError("initial energy must be non-negative")
    if duration is None:
        duration = max(
            1.4 * estimated_cooling_time(params, species, e0, recoil),
            30 * bin_width,
        )
    if not mode_freq > 0:
        raise ValueError("mode frequency must be positive")
    if bin_width * mode_freq < 2.0:
        warnings.warn(
            f"bin width {bin_width:.3g} s spans under two secular periods at "
            f"{mode_freq:.3g} Hz; the cycle average is unreliable", stacklevel=2,
        )
    n_bins = int(round(duration / bin_width))
    if n_bins < 1:
        raise ValueError("duration shorter than one bin")
    # cooling-time sanity: the transient must be resolved by the binning;
    # cheap estimate by summing e / |dE/dt| down a log grid of energies
    e_floor = doppler_limit_energy(params, species) if (
        recoil and params.detuning < 0) else 0.0
    if e0 > max(4.0 * e_floor, 1e-28):
        probes = np.geomspace(max(2.0 * e_floor, 1e-28), e0, 12)
        de = energy_derivative(params, species, probes, recoil)
        if np.all(de < 0):
            tau_est = float(np.sum(probes * math.log(probes[1] / probes[0])
                                   / np.abs(de)))
            if bin_width > 0.5 * tau_est:
                raise ValueError(
                    f"bin width {bin_width:.3g} s far exceeds the estimated "
                    f"cooling time {tau_est:.3g} s"
                )

    sol = integrate.solve_ivp(
        lambda t, y: [energy_derivative(params, species, max(y[0], 0.0), recoil)],
        (0.0, n_bins * bin_width), [e0], method="RK45",
        rtol=1e-7, atol=1e-30, dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"energy integration failed: {sol.message}")
    t_centers = (np.arange(n_bins) + 0.5) * bin_width
    e_of_t = np.clip(sol.sol(t_centers)[0], 0.0, None)
    r_mean, _ = _phase_averages(params, species, e_of_t)
    e_ss = e_floor
    r_ss, _ = _phase_averages(params, species, np.array([e_ss]))
    detected = steady_state_rate * r_mean / r_ss[0]
    expected = detected * bin_width
    if poisson_seed is not None:
        rng = np.random.Generator(
            np.random.Philox(seed=np.random.SeedSequence((poisson_seed, 0xC001)))
        )
        counts = rng.poisson(expected * n_averages, size=n_bins) / n_averages
    else:
        counts = expected
    return RecoolCurve(bin_width=bin_width, counts=counts,
                       n_averages=n_averages, steady_state_rate=steady_state_rate)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def fit_recool(curve: RecoolCurve, params: TwoLevelParams, mode_freq: float,
               species: IonSpecies, recoil: bool = True) -> ScaledEnergyResult:
    """Extract the scaled energy epsilon from one recooling curve.

    Weighted least squares of the forward model over (initial energy,
    amplitude scale); weights are inverse Poisson variances of the averaged
    bins.  A statistically flat curve short-circuits to epsilon = 0.
    """
    n = len(curve.counts)
    if n < 20:
        raise ValueError(f"need at least 20 bins, got {n}")
    tail = curve.counts[int(0.8 * n):]
    tail_mean = tail.mean()
    if tail_mean <= 0:
        raise ValueError("steady-state tail has no counts")
    if np.any(np.abs(tail - tail_mean) > 0.05 * tail_mean + 5.0 * np.sqrt(
            np.maximum(tail_mean, 1e-12) / curve.n_averages)):
        raise ValueError("curve has no steady-state tail in its last 20%")

    # flatness: dip below the tail is indistinguishable from shot noise
    sigma_bin = np.sqrt(np.maximum(curve.counts, 1e-12) / curve.n_averages)
    dip = tail_mean - curve.counts[: n // 2].min()
    if dip < 3.0 * sigma_bin.mean():
        return ScaledEnergyResult(epsilon=0.0, fit_residual=0.0,
                                  converged=True, flat=True)

    duration = n * curve.bin_width
    weights = 1.0 / sigma_bin
    wc = weights * curve.counts

    # weighted least squares over (initial energy, amplitude scale); the
    # scale enters linearly, so it is profiled out in closed form and the
    # search runs in one dimension on log E0
    def profiled(log_e0):
        sim = fluorescence_curve(
            params, mode_freq, species, math.exp(log_e0), duration,
            bin_width=curve.bin_width, steady_state_rate=curve.steady_state_rate,
            recoil=recoil,
        )
        wm = weights * sim.counts
        scale = float(wm @ wc / (wm @ wm))
        return float(np.sum((scale * wm - wc) ** 2)), scale

    # seed from the dip depth: invert <R>(E) crudely via the first-bin
    # suppression, then bracket the optimum on a local grid (the cost
    # landscape has a narrow valley that a cold quasi-Newton start misses)
    e_grid = np.geomspace(1e-27, 1e-18, 40)
    r_grid, _ = _phase_averages(params, species, e_grid)
    r_first = curve.counts[0] / tail_mean
    idx = int(np.argmin(np.abs(r_grid / r_grid[0] - r_first)))
    e_seed = float(e_grid[idx])

    span = np.geomspace(1 / 8, 8, 13)
    for _ in range(3):
        costs = [profiled(math.log(e_seed * s))[0] for s in span]
        k = int(np.argmin(costs))
        e_seed = e_seed * span[k]
        if 0 < k < len(span) - 1:
            break
    lo = math.log(e_seed) + math.log(span[1] / span[2])
    hi = math.log(e_seed) + math.log(span[2] / span[1])
    res = optimize.minimize_scalar(
        lambda L: profiled(L)[0], bounds=(lo, hi), method="bounded",
        options=dict(xatol=1e-6, maxiter=200),
    )
    cost, scale = profiled(res.x)
    eps = math.exp(res.x)
    resid = float(np.sqrt(cost / np.sum(weights ** 2)) / tail_mean)
    converged = bool(res.success) and lo + 1e-5 < res.x < hi - 1e-5
    return ScaledEnergyResult(epsilon=eps, fit_residual=resid, converged=converged)


def heating_protocol(
    tau_offs,
    curves: list[RecoolCurve],
    params: TwoLevelParams,
    mode_freq: float,
    species: IonSpecies,
    recoil: bool = True,
) -> tuple[float, float]:
    """Scaled-energy heating rate from a set of (tau_off, curve) pairs.

    Fits epsilon for each curve, then a line through the origin
    epsilon = r tau_off; returns (r, standard error).  A negative fitted
    slope is flagged as an error.
    """
    taus = np.asarray(tau_offs, dtype=float)
    if len(set(np.round(taus, 15))) < 3:
        raise ValueError("need at least 3 distinct tau_off values")
    if len(taus) != len(curves):
        raise ValueError("tau_offs and curves must pair up")
    eps = np.array([
        fit_recool(c, params, mode_freq, species, recoil).epsilon for c in curves
    ])
    return fit_rate_through_origin(taus, eps)


def fit_rate_through_origin(taus: np.ndarray, eps: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of eps = r * tau through the origin, with stderr."""
    taus = np.asarray(taus, dtype=float)
    eps = np.asarray(eps, dtype=float)
    denom = float(np.sum(taus ** 2))
    if denom == 0:
        raise ValueError("all tau_off are zero")
    slope = float(np.sum(taus * eps) / denom)
    resid = eps - slope * taus
    dof = max(len(taus) - 1, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / denom))
    if slope < 0 and abs(slope) > 2 * stderr:
        raise ValueError(f"fitted heating slope is negative: {slope:.3g} J/s")
    return slope, stderr


def calibrate(pairs) -> CalibrationResult:
    """Fit d(epsilon)/dt = slope * dE/dt + intercept over calibration runs.

    pairs: iterable of (depsilon_dt, de_dt_analytic).  Requires at least two
    pairs spanning a decade in dE/dt.  Physical heating rates are then
    reported as (depsilon/dt) / slope.
    """
    pts = np.asarray(list(pairs), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need >= 2 (depsilon_dt, dE_dt) pairs")
    de = pts[:, 1]
    if de.min() <= 0 or de.max() / de.min() < 10.0:
        raise ValueError("calibration pairs must span at least one decade in dE/dt")
    deps = pts[:, 0]
    if len(pts) == 2:
        coeff = np.polyfit(de, deps, 1)
        return CalibrationResult(slope=float(coeff[0]), intercept=float(coeff[1]),
                                 slope_error=0.0)
    coeff, cov = np.polyfit(de, deps, 1, cov=True)
    return CalibrationResult(slope=float(coeff[0]), intercept=float(coeff[1]),
                             slope_error=float(np.sqrt(cov[0, 0])))


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_protocol_manifest(path: str | Path, *, tau_offs, params: TwoLevelParams,
                            seeds, extra: dict | None = None) -> None:
    doc = {
        "tau_offs_s": list(map(float, tau_offs)),
        "laser": {
            "natural_linewidth_rad_s": params.natural_linewidth,
            "saturation": params.saturation,
            "detuning_rad_s": params.detuning,
            "wavenumber_1_m": params.wavenumber,
            "projection": params.projection,
        },
        "seeds": list(map(int, seeds)),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def calibration_report_text(result: CalibrationResult, pairs) -> str:
    lines = [
        "scaled-energy calibration report",
        f"slope (depsilon/dt per dE/dt): {result.slope:.6g} +/- {result.slope_error:.3g}",
        f"intercept: {result.intercept:.6g} J/s",
        "pairs (depsilon_dt_J_s, dE_dt_J_s):",
    ]
    for deps, de in pairs:
        lines.append(f"  {deps:.6e}  {de:.6e}")
    return "\n".join(lines) + "\n"


def calibration_report_csv(result: CalibrationResult, pairs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depsilon_dt_J_s", "dE_dt_J_s", "slope", "slope_error", "intercept_J_s"])
    for deps, de in pairs:
        w.writerow([repr(float(deps)), repr(float(de)), repr(result.slope),
                    repr(result.slope_error), repr(result.intercept)])
    return buf.getvalue()
