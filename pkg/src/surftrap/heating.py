"""Stochastic heating of a trapped ion by electric-field noise.

The analytic law: each secular mode gains energy at q^2 S_E(omega_i) / (4 m)
per second under field noise of one-sided PSD S_E.  The numerical oracle
integrates three independent noisy harmonic oscillators with a splitting
that is exact for the harmonic part (a phase rotation) plus per-step
Gaussian velocity kicks whose variance matches the one-sided PSD convention
declared in the noise module, so a noiseless trace has no secular energy
drift at all.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .constants import HBAR, IonSpecies

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class NoiseDrive:
    """Field-noise drive: one-sided PSD (V/m)^2/Hz as a function of
    frequency (Hz) and axis, nonzero only inside band_limits.

    flat=True declares the PSD frequency-independent inside the band, which
    lets the integrator use exact per-step white kicks instead of an FFT
    synthesis of the series.
    """

    s_e_at: Callable[[float, str], float]
    band_limits: tuple[float, float] = (0.0, np.inf)
    description: str = "custom"
    flat: bool = False

    def __call__(self, f: float, axis: str) -> float:
        lo, hi = self.band_limits
        if f < lo or f > hi:
            return 0.0
        val = self.s_e_at(f, axis)
        if val < 0:
            raise ValueError(f"drive PSD negative at f={f}, axis={axis}")
        return val

    @classmethod
    def white(cls, level: float, band=(0.0, np.inf)) -> "NoiseDrive":
        """Flat PSD at the given level on all axes (the calibration drive)."""
        return cls(lambda f, axis: level, tuple(band),
                   f"white S_E={level:.6g} (V/m)^2/Hz band={band}", flat=True)

    @classmethod
    def band_limited_white(cls, level: float, f_lo: float, f_hi: float) -> "NoiseDrive":
        return cls(lambda f, axis: level, (f_lo, f_hi),
                   f"white S_E={level:.6g} (V/m)^2/Hz band=({f_lo:.6g}, {f_hi:.6g}) Hz",
                   flat=True)

    @classmethod
    def zero(cls) -> "NoiseDrive":
        return cls(lambda f, axis: 0.0, (0.0, np.inf), "zero", flat=True)


@dataclass
class EnergyTrace:
    """Per-mode energy time series of one stochastic run."""

    times: np.ndarray
    mode_energies: np.ndarray  # shape (3, n)
    seed: int

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mode_energies = np.asarray(self.mode_energies, dtype=float)
        if self.mode_energies.shape != (3, len(self.times)):
            raise ValueError("mode_energies must have shape (3, len(times))")
        if np.any(self.mode_energies < 0):
            raise ValueError("energies must be non-negative")

    @property
    def total(self) -> np.ndarray:
        return self.mode_energies.sum(axis=0)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            f.write("t_s,E_x_J,E_y_J,E_z_J\n")
            for k, t in enumerate(self.times):
                f.write(f"{float(t)!r},{float(self.mode_energies[0, k])!r},"
                        f"{float(self.mode_energies[1, k])!r},"
                        f"{float(self.mode_energies[2, k])!r}\n")


def write_run_manifest(path: str | Path, *, seed: int, dt: float, duration: float,
                       drive: NoiseDrive, extra: dict | None = None) -> None:
    """Persist the reproducibility manifest beside a trace."""
    doc = {"seed": seed, "dt": dt, "duration": duration,
           "drive": drive.description}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# analytic law and rate conversions
# ---------------------------------------------------------------------------

def heating_rate_analytic(species: IonSpecies, frequencies, drive: NoiseDrive) -> float:
    """Total energy gain rate (J/s) summed over the three secular modes.

    Micromotion-sideband contributions at Omega_RF +/- omega_i are excluded;
    see sideband_suppression in the trap module for the diagnostic factor.
    """
    freqs = np.asarray(frequencies, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("secular frequencies must be positive")
    rate = 0.0
    for f, axis in zip(freqs, AXES):
        s = drive(f, axis)
        if s is None or not np.isfinite(s):
            raise ValueError(f"drive undefined at f={f} Hz axis={axis}")
        rate += species.charge ** 2 * s / (4.0 * species.mass)
    return rate


def field_psd_to_phonon_rate(s_e: float, f: float, species: IonSpecies) -> float:
    """Quanta per second from field PSD for a single mode at frequency f."""
    omega = 2.0 * np.pi * f
    return species.charge ** 2 * s_e / (4.0 * species.mass * HBAR * omega)


def phonon_rate_to_field_psd(ndot: float, f: float, species: IonSpecies) -> float:
    """Exact algebraic inverse of field_psd_to_phonon_rate."""
    omega = 2.0 * np.pi * f
    return 4.0 * species.mass * HBAR * omega * ndot / species.charge ** 2


def effective_frequency(frequencies) -> float:
    """Harmonic-sum effective frequency: 1/f_bar = sum_i 1/f_i (Hz in, Hz out)."""
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if np.any(freqs <= 0):
        raise ValueError("frequencies must be positive")
    return float(1.0 / np.sum(1.0 / freqs))


def phonons_normalized(rate_phonons_per_s: float, f_meas: float,
                       f_ref: float = 1e6) -> float:
    """Rescale a phonon rate to the reference frequency assuming S_E ~ 1/f.

    With Ndot = q^2 S_E(omega) / (4 m hbar omega) and S_E ~ 1/f, rates scale
    as 1/f^2, so the normalized rate is rate * (f_meas / f_ref)^2.
    """
    if min(rate_phonons_per_s, f_meas, f_ref) < 0 or f_meas == 0 or f_ref == 0:
        raise ValueError("inputs must be positive")
    return rate_phonons_per_s * (f_meas / f_ref) ** 2


# ---------------------------------------------------------------------------
# Langevin oracle
# ---------------------------------------------------------------------------

_BLOCK = 1 << 15  # streaming block size; fixed so traces are bit-stable


def _member_rng(seed: int, member: int, axis_index: int) -> np.random.Generator:
    # counter-based stream per (seed, member, axis): deterministic regardless
    # of scheduling or how many members run
    return np.random.Generator(
        np.random.Philox(seed=np.random.SeedSequence((seed, member, axis_index)))
    )


def _synth_band_kicks(rng, drive: NoiseDrive, axis: str, n_steps: int,
                      dt: float) -> np.ndarray:
    """Per-step velocity-kick field impulses (V s / m) for a colored drive.

    Synthesizes a Gaussian field series with the requested one-sided PSD on
    the FFT grid and multiplies by dt.
    """
    n_fft = int(2 ** np.ceil(np.log2(max(n_steps, 2))))
    freqs = np.fft.rfftfreq(n_fft, dt)
    psd = np.array([drive(f, axis) for f in freqs])
    amp = np.sqrt(psd * n_fft / (2.0 * dt))
    re = rng.standard_normal(len(freqs))
    im = rng.standard_normal(len(freqs))
    spec = amp * (re + 1j * im) / np.sqrt(2.0)
    spec[0] = amp[0] * re[0]
    spec[-1] = amp[-1] * re[-1] if n_fft % 2 == 0 else spec[-1]
    series = np.fft.irfft(spec, n=n_fft)[:n_steps]
    return series * dt


def integrate_langevin(
    species: IonSpecies,
    frequencies,
    drive: NoiseDrive,
    duration: float,
    seed: int,
    steps_per_period: int = 50,
    n_record: int = 1024,
    member: int = 0,
    initial_energies=(0.0, 0.0, 0.0),
) -> EnergyTrace:
    """Integrate three independent noisy oscillators and record energies.

    Each mode obeys x'' + omega^2 x = (q/m) xi(t) with xi white Gaussian of
    one-sided PSD S_E(omega_i).  The step map is an exact harmonic rotation
    plus a velocity kick of variance (q/m)^2 S_E dt / 2 (flat drives) or a
    kick sampled from an FFT synthesis of the banded PSD (colored drives).
    Identical seeds give bit-identical traces.
    """
    freqs = np.asarray(frequencies, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("secular frequencies must be positive")
    f_max = float(np.max(freqs))
    if steps_per_period < 50:
        raise ValueError("need at least 50 steps per period of the fastest mode")
    if duration < 10.0 / np.min(freqs):
        raise ValueError("duration too short: need >> one period of every mode")
    dt = 1.0 / (f_max * steps_per_period)
    n_steps = int(np.ceil(duration / dt))
    n_record = min(n_record, n_steps)
    record_idx = np.unique(np.linspace(1, n_steps, n_record).astype(np.int64))
    times = record_idx * dt

    q_over_m = species.charge / species.mass
    energies = np.empty((3, len(record_idx)))
    for ax, (f_i, axis) in enumerate(zip(freqs, AXES)):
        rng = _member_rng(seed, member, ax)
        omega = 2.0 * np.pi * f_i
        s_e = drive(f_i, axis)
        if not drive.flat:
            kick_all = q_over_m * _synth_band_kicks(rng, drive, axis, n_steps, dt)
        sigma = q_over_m * np.sqrt(max(s_e, 0.0) * dt / 2.0)

        # z(t) = v + i omega x; s_acc accumulates phase-derotated kicks
        s_acc = complex(np.sqrt(2.0 * initial_energies[ax] / species.mass))
        out = np.empty(len(record_idx))
        done = 0
        rec_pos = 0
        while done < n_steps:
            m_blk = min(_BLOCK, n_steps - done)
            if drive.flat:
                kicks = sigma * rng.standard_normal(m_blk) if sigma > 0 else np.zeros(m_blk)
            else:
                kicks = kick_all[done:done + m_blk]
            steps = np.arange(1, m_blk + 1)
            phases = np.exp(-1j * omega * dt * (done + steps))
            # z(t_k) = e^{i omega t_k} (z_0 + sum_{j<=k} e^{-i omega t_j} dv_j)
            partial = s_acc + np.cumsum(phases * kicks)
            z_k = partial / phases
            while rec_pos < len(record_idx) and record_idx[rec_pos] <= done + m_blk:
                out[rec_pos] = 0.5 * species.mass * abs(
                    z_k[record_idx[rec_pos] - done - 1]) ** 2
                rec_pos += 1
            s_acc = partial[-1]
            done += m_blk
        energies[ax] = out
    return EnergyTrace(times=times, mode_energies=energies, seed=seed)


def ensemble_heating_slope(
    species: IonSpecies,
    frequencies,
    drive: NoiseDrive,
    duration: float,
    n_members: int = 200,
    seed: int = 0,
    steps_per_period: int = 50,
    n_record: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-averaged heating slope d<E>/dt per mode, with standard error.

    Members use independent counter-based streams keyed by (seed, member), so
    the estimate is deterministic for a given seed no matter how the members
    are scheduled.  The slope estimator weights ensemble-mean energy
    increments by their inverse empirical variance, which is what makes a
    ~200-member ensemble resolve the analytic rate at the percent level.
    """
    if n_members < 2:
        raise ValueError("need at least 2 ensemble members")
    traces = [
        integrate_langevin(species, frequencies, drive, duration, seed,
                           steps_per_period=steps_per_period,
                           n_record=n_record, member=m)
        for m in range(n_members)
    ]
    times = traces[0].times
    slopes = np.empty(3)
    errs = np.empty(3)
    for ax in range(3):
        e = np.stack([t.mode_energies[ax] for t in traces])  # (M, K)
        inc = np.diff(np.concatenate([np.zeros((n_members, 1)), e], axis=1), axis=1)
        dt_k = np.diff(np.concatenate([[0.0], times]))
        if np.all(inc == 0):
            slopes[ax] = 0.0
            errs[ax] = 0.0
            continue
        # cross-weighting: each half is weighted by the other half's
        # empirical increment variance, so the weights are independent of
        # the values they weight (removes the small-M downward bias of
        # jointly estimated inverse-variance weights)
        half = [inc[0::2], inc[1::2]]
        part = []
        for own, other in ((0, 1), (1, 0)):
            other_var = half[other].var(axis=0, ddof=1)
            w = 1.0 / np.maximum(other_var, other_var.max() * 1e-12 + 1e-300)
            mean_inc = half[own].mean(axis=0)
            part.append(np.sum(w * dt_k * mean_inc) / np.sum(w * dt_k ** 2))
        slopes[ax] = 0.5 * (part[0] + part[1])
        var_all = inc.var(axis=0, ddof=1) / n_members
        w_all = 1.0 / np.maximum(var_all, var_all.max() * 1e-12 + 1e-300)
        errs[ax] = np.sqrt(1.0 / np.sum(w_all * dt_k ** 2))
    return slopes, errs
