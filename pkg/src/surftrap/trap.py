"""RF null, pseudopotential, secular modes, and Mathieu stability.

The workflow: locate the RF null of a layout, minimize the combined
pseudopotential + DC potential, finite-difference the Hessian there, and
turn curvatures into secular frequencies, principal axes, tilt, and the
dimensionless Mathieu parameters per axis.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .constants import IonSpecies
from .geometry import DC_ONLY, RF_ONLY, TrapLayout, total_gradient, total_potential

# lowest Mathieu stability region boundary at a = 0
MATHIEU_Q_MAX = 0.908


class NullNotFoundError(RuntimeError):
    """No interior RF field minimum inside the search volume."""


class UnstableConfigurationError(RuntimeError):
    """The combined potential has no confining minimum (saddle or maximum)."""


@dataclass(frozen=True)
class ModeSet:
    """Secular mode solution at a trapping site.

    axes[i] is the unit principal vector of mode i; frequencies are in Hz
    and sorted to match.  tilt_deg is the angle, from the vertical (Y), of
    the radial principal axis closest to Y.  mathieu_q/mathieu_a are the
    per-axis RF and DC Mathieu parameters, and rf_dc_misalignment_deg is the
    largest angle between matched principal axes of the RF quadrupole and
    the static quadrupole.
    """

    center: np.ndarray
    frequencies: np.ndarray
    axes: np.ndarray
    tilt_deg: float
    mathieu_q: np.ndarray
    mathieu_a: np.ndarray
    rf_dc_misalignment_deg: float

    def __post_init__(self):
        gram = self.axes @ self.axes.T
        if not np.allclose(gram, np.eye(3), atol=1e-9):
            raise ValueError("mode axes are not orthonormal")
        if np.any(np.abs(self.mathieu_q) >= MATHIEU_Q_MAX):
            warnings.warn(
                f"|q| = {np.max(np.abs(self.mathieu_q)):.3f} exceeds the lowest "
                f"stability region bound {MATHIEU_Q_MAX}", stacklevel=2,
            )


def _rf_scale(layout: TrapLayout) -> float:
    """Narrowest RF rail width; sets the vertical search scale."""
    rails = layout.rf_electrodes
    if not rails:
        raise NullNotFoundError("layout has no RF electrode")
    return min(e.width for e in rails)


def _rf_bbox(layout: TrapLayout):
    rails = layout.rf_electrodes
    x = [v for e in rails for v in e.x_range]
    z = [v for e in rails for v in e.z_range]
    return (min(x), max(x)), (min(z), max(z))


def _fd_jacobian(vec_fun, p: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian of a 3-vector field."""
    J = np.empty((3, 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = h
        J[:, j] = (vec_fun(p + dp) - vec_fun(p - dp)) / (2.0 * h)
    return J


def _newton_vector_root(vec_fun, p0: np.ndarray, h: float,
                        tol: float, y_floor: float, max_iter: int = 12) -> np.ndarray:
    """Newton iteration on vec_fun(p) = 0 with finite-difference Jacobian.

    Never evaluates below y_floor; a root that keeps escaping toward the
    electrode plane is reported as unstable.
    """
    p = np.asarray(p0, dtype=float).copy()
    if p[1] < y_floor + 2 * h:
        raise UnstableConfigurationError(
            "stationary point sits on the electrode plane"
        )
    for _ in range(max_iter):
        g = vec_fun(p)
        J = _fd_jacobian(vec_fun, p, h)
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            break
        if p[1] - step[1] < y_floor + 2 * h:  # never cross the electrode plane
            raise UnstableConfigurationError(
                "stationary point escaped toward the electrode plane"
            )
        p -= step
        if np.linalg.norm(step) < tol:
            break
    return p


def rf_null(layout: TrapLayout, seed_point=None) -> np.ndarray:
    """Point above the trap where the RF field magnitude is minimal.

    Seeds a derivative-based local search from a coarse 3-D grid over the RF
    bounding box, with heights spanning 0.1-3x the narrow rail width, then
    polishes the field zero by Newton iteration.  Raises NullNotFoundError
    when no interior minimum is found or when the returned point fails the
    residual-field check against points displaced by 100 um.
    """
    w = _rf_scale(layout)
    (x1, x2), (z1, z2) = _rf_bbox(layout)

    def fieldsq(p):
        if p[1] <= 0:
            return np.inf
        g = total_gradient(layout, RF_ONLY, p)
        return g @ g

    if seed_point is None:
        xs = np.linspace(x1, x2, 31)
        ys = np.geomspace(0.1 * w, 3.0 * w, 25)
        zc = 0.5 * (z1 + z2)
        zs = np.array([zc]) if (z2 - z1) < 4 * w else np.linspace(
            z1 + 0.2 * (z2 - z1), z2 - 0.2 * (z2 - z1), 9)
        grid = np.array([(x, y, z) for x in xs for y in ys for z in zs])
        g = total_gradient(layout, RF_ONLY, grid)
        vals = np.einsum("ij,ij->i", g, g)
        seed = grid[np.argmin(vals)]
    else:
        seed = np.asarray(seed_point, dtype=float)

    res = optimize.minimize(
        fieldsq, seed, method="Nelder-Mead",
        options=dict(xatol=1e-9 * w, fatol=1e-250, maxiter=4000, maxfev=4000),
    )
    try:
        p = _newton_vector_root(
            lambda q: total_gradient(layout, RF_ONLY, q), res.x,
            h=1e-5 * w, tol=1e-12 * w, y_floor=0.01 * w,
        )
    except UnstableConfigurationError as exc:
        raise NullNotFoundError(str(exc)) from None
    if not (0.05 * w < p[1] < 10 * w) or not (x1 - w < p[0] < x2 + w):
        raise NullNotFoundError(
            f"RF field minimum escaped the search volume "
            f"x in [{x1:.3g}, {x2:.3g}], y in [{0.1 * w:.3g}, {3 * w:.3g}] m"
        )

    # residual check: field here must be <1e-3 of the field 100 um away
    here = np.sqrt(fieldsq(p))
    d = min(1e-4, 0.45 * p[1])
    probes = p + d * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    )
    away = min(np.sqrt(fieldsq(q)) for q in probes)
    if here > 1e-3 * away:
        raise NullNotFoundError(
            f"residual RF field {here:.3g} V/m is not <1e-3 of the field "
            f"{away:.3g} V/m at {d * 1e6:.0f} um displacement"
        )
    return p


def pseudopotential(layout: TrapLayout, species: IonSpecies, point) -> np.ndarray | float:
    """Ponderomotive energy q^2 |grad V_RF|^2 / (4 m Omega^2) in joules."""
    g = np.atleast_2d(total_gradient(layout, RF_ONLY, point))
    val = (species.charge ** 2) * np.einsum("ij,ij->i", g, g) / (
        4.0 * species.mass * layout.rf_omega ** 2
    )
    return float(val[0]) if np.asarray(point).ndim == 1 else val


def _total_energy(layout: TrapLayout, species: IonSpecies, p) -> float:
    return pseudopotential(layout, species, p) + species.charge * total_potential(
        layout, DC_ONLY, p
    )


def _fd_hessian(f, p: np.ndarray, h: float) -> np.ndarray:
    H = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            ei = np.zeros(3)
            ej = np.zeros(3)
            ei[i] = h
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)
            ) / (4.0 * h * h)
    return H


def _principal_angle(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.degrees(np.arccos(min(1.0, abs(float(u @ v))))))


def modes_from_curvatures(
    h_rf: np.ndarray,
    h_dc: np.ndarray,
    species: IonSpecies,
    rf_omega: float,
    center=(0.0, 0.0, 0.0),
) -> ModeSet:
    """Secular modes from curvature tensors (V/m^2) of the RF and DC potentials.

    h_rf is the Hessian of the RF potential at drive amplitude; h_dc of the
    static potential.  This is the analytic back end of secular_modes and can
    be fed ideal quadrupole tensors directly.
    """
    q_ion, m = species.charge, species.mass
    # pseudopotential curvature: q^2/(2 m Omega^2) * H_rf^2 (valid at the null)
    h_ps = (q_ion ** 2) / (2.0 * m * rf_omega ** 2) * (h_rf @ h_rf)
    h_total = h_ps + q_ion * h_dc
    lam, vec = np.linalg.eigh(h_total)
    if np.any(lam <= 0):
        bad = [f"axis {vec[:, i]} (lambda={lam[i]:.3g} J/m^2)"
               for i in range(3) if lam[i] <= 0]
        raise UnstableConfigurationError(
            "no confining minimum; non-positive curvature along: " + "; ".join(bad)
        )
    freqs = np.sqrt(lam / m) / (2.0 * np.pi)
    axes = vec.T  # rows

    # radial axis nearest Y defines the tilt
    radial = np.argsort(np.abs(axes[:, 2]))[:2]  # two axes least along z
    near_y = radial[np.argmax(np.abs(axes[radial, 1]))]
    tilt = _principal_angle(axes[near_y], np.array([0.0, 1.0, 0.0]))

    kappa_rf = np.einsum("ij,jk,ik->i", axes, h_rf, axes)
    kappa_dc = np.einsum("ij,jk,ik->i", axes, h_dc, axes)
    mathieu_q = 2.0 * q_ion * kappa_rf / (m * rf_omega ** 2)
    mathieu_a = 4.0 * q_ion * kappa_dc / (m * rf_omega ** 2)

    # misalignment: pair RF-quadrupole axes with static-quadrupole axes
    _, v_rf = np.linalg.eigh(h_rf)
    _, v_dc = np.linalg.eigh(h_dc)
    if np.allclose(h_dc, 0.0):
        misalign = 0.0
    else:
        misalign = 0.0
        used = set()
        for i in range(3):
            overlaps = [
                (abs(float(v_rf[:, i] @ v_dc[:, j])), j)
                for j in range(3) if j not in used
            ]
            best, j = max(overlaps)
            used.add(j)
            misalign = max(misalign, _principal_angle(v_rf[:, i], v_dc[:, j]))

    return ModeSet(
        center=np.asarray(center, dtype=float),
        frequencies=freqs,
        axes=axes,
        tilt_deg=tilt,
        mathieu_q=mathieu_q,
        mathieu_a=mathieu_a,
        rf_dc_misalignment_deg=misalign,
    )


def _total_energy_gradient(layout: TrapLayout, species: IonSpecies,
                           p: np.ndarray, h: float) -> np.ndarray:
    """grad(pseudopotential + q V_DC): analytic except one FD level for the
    RF field Jacobian."""
    g_rf = total_gradient(layout, RF_ONLY, p)
    j_rf = _fd_jacobian(lambda q: total_gradient(layout, RF_ONLY, q), p, h)
    grad_ps = species.charge ** 2 / (2.0 * species.mass * layout.rf_omega ** 2) * (
        j_rf @ g_rf
    )
    return grad_ps + species.charge * total_gradient(layout, DC_ONLY, p)


def secular_modes(layout: TrapLayout, species: IonSpecies,
                  null_point=None) -> ModeSet:
    """Locate the trapping minimum and solve for the secular mode set.

    The minimum of pseudopotential + q V_DC is found from the RF null seed
    (Nelder-Mead, then Newton on the energy gradient); the 3x3 Hessians of
    the RF and DC potentials are taken by central finite differences with
    step 1e-3 of the null height.
    """
    null = rf_null(layout) if null_point is None else np.asarray(null_point, float)
    w = _rf_scale(layout)

    def energy(p):
        return _total_energy(layout, species, p) if p[1] > 0 else np.inf

    res = optimize.minimize(
        energy, null, method="Nelder-Mead",
        options=dict(xatol=1e-7 * w, fatol=1e-250, maxiter=4000, maxfev=4000),
    )
    if not np.isfinite(res.fun) or res.x[1] <= 0.02 * w:
        raise UnstableConfigurationError(
            "potential minimum collapsed onto the plane"
        )
    p0 = _newton_vector_root(
        lambda q: _total_energy_gradient(layout, species, q, 1e-5 * w),
        res.x, h=1e-4 * w, tol=1e-10 * w, y_floor=0.01 * w,
    )
    h = 1e-3 * null[1]
    h_rf = _fd_hessian(lambda p: total_potential(layout, RF_ONLY, p), p0, h)
    h_dc = _fd_hessian(lambda p: total_potential(layout, DC_ONLY, p), p0, h)
    return modes_from_curvatures(h_rf, h_dc, species, layout.rf_omega, center=p0)


def sideband_suppression(frequencies, rf_omega: float) -> np.ndarray:
    """(omega_i / Omega_RF)^2 per mode: the factor by which heating at the
    micromotion sidebands is weaker than at the secular frequencies."""
    w = 2.0 * np.pi * np.asarray(frequencies, dtype=float)
    return (w / rf_omega) ** 2


def floquet_secular_frequency(a: float, q: float, rf_omega: float) -> float:
    """Secular frequency (Hz) from direct integration of the full RF-driven
    motion (Mathieu equation), the validation mode for the curvature pipeline.

    Integrates u'' + (a - 2 q cos 2 tau) u = 0 over one drive period of the
    cos 2 tau term; the monodromy trace gives the characteristic exponent
    beta and the secular frequency beta Omega / 2.
    """
    from scipy.integrate import solve_ivp

    def rhs(tau, y):
        return [y[1], -(a - 2.0 * q * np.cos(2.0 * tau)) * y[0]]

    cols = []
    for y0 in ([1.0, 0.0], [0.0, 1.0]):
        sol = solve_ivp(rhs, (0.0, np.pi), y0, method="DOP853",
                        rtol=1e-11, atol=1e-13)
        cols.append(sol.y[:, -1])
    half_trace = 0.5 * (cols[0][0] + cols[1][1])
    if abs(half_trace) > 1.0:
        raise UnstableConfigurationError(
            f"Mathieu parameters a={a}, q={q} lie outside the stability region"
        )
    beta = float(np.arccos(half_trace) / np.pi)
    return beta * rf_omega / (4.0 * np.pi)


# ---------------------------------------------------------------------------
# DC voltage search and reports
# ---------------------------------------------------------------------------

def fit_dc_voltages(
    layout: TrapLayout,
    species: IonSpecies,
    target_frequencies_hz,
    target_tilt_deg: float | None = None,
    groups: dict[str, list[str]] | None = None,
    initial: dict[str, float] | None = None,
    fit_rf_amplitude: bool = True,
) -> TrapLayout:
    """Least-squares search for DC voltages (and optionally the RF amplitude)
    reproducing target secular frequencies, with bound constraints from
    layout.dc_bounds.

    groups maps a group name to electrode ids driven by one shared voltage;
    ungrouped DC electrodes stay at their current setting.  Returns a new
    layout with the fitted assignment.
    """
    targets = np.asarray(target_frequencies_hz, dtype=float)
    if groups is None:
        groups = {e.id: [e.id] for e in layout.dc_electrodes}
    names = sorted(groups)
    lo, hi = layout.dc_bounds
    x0 = np.array([(initial or {}).get(n, 0.0) for n in names])
    bounds_lo = np.full(len(names), lo)
    bounds_hi = np.full(len(names), hi)
    if fit_rf_amplitude:
        x0 = np.append(x0, layout.rf_amplitude)
        bounds_lo = np.append(bounds_lo, 0.2 * layout.rf_amplitude)
        bounds_hi = np.append(bounds_hi, 3.0 * layout.rf_amplitude)

    def build(x) -> TrapLayout:
        volts = dict(layout.dc_voltages)
        for n, v in zip(names, x[: len(names)]):
            for eid in groups[n]:
                volts[eid] = float(np.clip(v, lo, hi))
        amp = float(x[-1]) if fit_rf_amplitude else layout.rf_amplitude
        return TrapLayout(layout.electrodes, amp, layout.rf_omega, volts,
                          layout.dc_bounds)

    null = rf_null(layout)  # independent of DC settings and RF amplitude

    def residuals(x):
        try:
            ms = secular_modes(build(x), species, null_point=null)
        except (UnstableConfigurationError, NullNotFoundError):
            return np.full(4 if target_tilt_deg is not None else 3, 1e3)
        # match modes to targets by axis ordering: sort targets and
        # frequencies consistently (axial = smallest here by convention)
        r = list(np.sort(ms.frequencies) / np.sort(targets) - 1.0)
        if target_tilt_deg is not None:
            r.append((ms.tilt_deg - target_tilt_deg) / 90.0)
        return np.asarray(r)

    res = optimize.least_squares(
        residuals, x0, bounds=(bounds_lo, bounds_hi),
        diff_step=1e-3, xtol=1e-10, ftol=1e-12,
    )
    return build(res.x)


def mode_report_text(modes: ModeSet) -> str:
    lines = [
        "secular mode report",
        f"trap center: ({modes.center[0]:.6e}, {modes.center[1]:.6e}, "
        f"{modes.center[2]:.6e}) m",
        f"tilt of radial axis nearest Y: {modes.tilt_deg:.2f} deg",
        f"rf/dc principal-axis misalignment: {modes.rf_dc_misalignment_deg:.2f} deg",
    ]
    for i in range(3):
        a = modes.axes[i]
        lines.append(
            f"mode {i}: f = {modes.frequencies[i] / 1e6:.4f} MHz  "
            f"axis = ({a[0]:+.4f}, {a[1]:+.4f}, {a[2]:+.4f})  "
            f"q = {modes.mathieu_q[i]:+.4f}  a = {modes.mathieu_a[i]:+.6f}"
        )
    return "\n".join(lines) + "\n"


def mode_report_csv(modes: ModeSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "f_MHz", "axis_x", "axis_y", "axis_z",
                "mathieu_q", "mathieu_a", "tilt_deg", "rf_dc_misalignment_deg"])
    for i in range(3):
        a = modes.axes[i]
        w.writerow([
            i, repr(float(modes.frequencies[i]) / 1e6),
            repr(float(a[0])), repr(float(a[1])), repr(float(a[2])),
            repr(float(modes.mathieu_q[i])), repr(float(modes.mathieu_a[i])),
            repr(float(modes.tilt_deg)), repr(float(modes.rf_dc_misalignment_deg)),
        ])
    return buf.getvalue()
