"""Analytic electrostatics of rectangular electrodes in a grounded plane.

Model: every electrode is a rectangle in the plane y = 0, the rest of the
plane is grounded conductor, and the half-space y > 0 is vacuum.  The
potential of a rectangle held at unit voltage is the fraction of the solid
angle it subtends at the field point,

    phi(p) = Omega(p) / (2 pi),

which is the exact Dirichlet solution for this boundary condition.  Both the
potential and its gradient are evaluated in closed form from the four
corner terms, so no field solver is required.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

ROLES = ("RF", "DC", "GROUND")

RF_ONLY = "RF_ONLY"
DC_ONLY = "DC_ONLY"


class LayoutError(ValueError):
    """Invalid electrode geometry or voltage assignment."""


@dataclass(frozen=True)
class Electrode:
    """A rectangular electrode [x1, x2] x [z1, z2] in the plane y = 0."""

    id: str
    role: str
    x_range: tuple[float, float]
    z_range: tuple[float, float]

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(f"electrode {self.id!r}: role must be one of {ROLES}")
        for name, (lo, hi) in (("x_range", self.x_range), ("z_range", self.z_range)):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise LayoutError(f"electrode {self.id!r}: {name} must be finite")
            if not lo < hi:
                raise LayoutError(
                    f"electrode {self.id!r}: {name} must be a non-degenerate "
                    f"interval, got ({lo}, {hi})"
                )
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "z_range", (float(self.z_range[0]), float(self.z_range[1])))

    @property
    def width(self) -> float:
        return self.x_range[1] - self.x_range[0]

    @property
    def length(self) -> float:
        return self.z_range[1] - self.z_range[0]

    def overlaps(self, other: "Electrode") -> bool:
        def _open_overlap(a, b):
            return min(a[1], b[1]) - max(a[0], b[0]) > 0
        return _open_overlap(self.x_range, other.x_range) and _open_overlap(
            self.z_range, other.z_range
        )


@dataclass
class TrapLayout:
    """Electrode set plus RF drive and DC voltage assignment.

    rf_amplitude is the zero-to-peak drive voltage applied to every RF
    electrode; rf_omega is the drive angular frequency.  dc_voltages maps DC
    electrode ids to volts; unlisted DC electrodes sit at 0 V.
    """

    electrodes: list[Electrode]
    rf_amplitude: float
    rf_omega: float
    dc_voltages: dict[str, float] = field(default_factory=dict)
    dc_bounds: tuple[float, float] = (-10.0, 15.0)

    def __post_init__(self):
        if not self.rf_omega > 0:
            raise LayoutError(f"rf_omega must be positive, got {self.rf_omega}")
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise LayoutError(f"duplicate electrode ids: {dup}")
        for i, a in enumerate(self.electrodes):
            for b in self.electrodes[i + 1:]:
                if a.overlaps(b):
                    raise LayoutError(f"electrodes {a.id!r} and {b.id!r} overlap")
        by_id = {e.id: e for e in self.electrodes}
        lo, hi = self.dc_bounds
        for eid, v in self.dc_voltages.items():
            if eid not in by_id:
                raise LayoutError(f"dc_voltages references unknown electrode {eid!r}")
            if by_id[eid].role != "DC":
                raise LayoutError(
                    f"dc_voltages references {eid!r} which has role {by_id[eid].role}"
                )
            if not lo <= v <= hi:
                raise LayoutError(
                    f"DC voltage {v} V on {eid!r} outside bounds [{lo}, {hi}] V"
                )
        self._by_id = by_id

    def electrode(self, eid: str) -> Electrode:
        try:
            return self._by_id[eid]
        except KeyError:
            raise LayoutError(f"unknown electrode id {eid!r}") from None

    @property
    def rf_electrodes(self) -> list[Electrode]:
        return [e for e in self.electrodes if e.role == "RF"]

    @property
    def dc_electrodes(self) -> list[Electrode]:
        return [e for e in self.electrodes if e.role == "DC"]

    def voltage_of(self, electrode: Electrode, phase: str) -> float:
        if phase == RF_ONLY:
            return self.rf_amplitude if electrode.role == "RF" else 0.0
        if phase == DC_ONLY:
            if electrode.role == "DC":
                return self.dc_voltages.get(electrode.id, 0.0)
            return 0.0
        raise ValueError(f"phase must be {RF_ONLY!r} or {DC_ONLY!r}, got {phase!r}")

    def translated(self, dx: float, dz: float) -> "TrapLayout":
        """A copy with every electrode rigidly shifted in the plane."""
        moved = [
            Electrode(
                e.id, e.role,
                (e.x_range[0] + dx, e.x_range[1] + dx),
                (e.z_range[0] + dz, e.z_range[1] + dz),
            )
            for e in self.electrodes
        ]
        return TrapLayout(moved, self.rf_amplitude, self.rf_omega,
                          dict(self.dc_voltages), self.dc_bounds)

    def scaled(self, k: float) -> "TrapLayout":
        """A copy with every electrode dimension scaled by k > 0."""
        if not k > 0:
            raise LayoutError("scale factor must be positive")
        moved = [
            Electrode(
                e.id, e.role,
                (e.x_range[0] * k, e.x_range[1] * k),
                (e.z_range[0] * k, e.z_range[1] * k),
            )
            for e in self.electrodes
        ]
        return TrapLayout(moved, self.rf_amplitude, self.rf_omega,
                          dict(self.dc_voltages), self.dc_bounds)


def _check_points(point) -> tuple[np.ndarray, bool]:
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {p.shape}")
    if np.any(p[:, 1] <= 0):
        raise ValueError("potential is defined only above the plane (y > 0)")
    return p, scalar


def patch_potential(electrode: Electrode, point) -> np.ndarray | float:
    """Unit-voltage potential of one rectangle at a point (or points) y > 0.

    Returns phi/V in [0, 1]: the solid angle of the rectangle seen from the
    point divided by 2 pi.
    """
    p, scalar = _check_points(point)
    x1, x2 = electrode.x_range
    z1, z2 = electrode.z_range
    out = _rect_potential(x1, x2, z1, z2, p)
    return float(out[0]) if scalar else out


def patch_gradient(electrode: Electrode, point) -> np.ndarray:
    """Gradient of patch_potential, shape (..., 3), units 1/m."""
    p, scalar = _check_points(point)
    x1, x2 = electrode.x_range
    z1, z2 = electrode.z_range
    out = _rect_gradient(x1, x2, z1, z2, p)
    return out[0] if scalar else out


def _corner_iter(x1, x2, z1, z2):
    # inclusion-exclusion signs over the four corners
    yield x2, z2, 1.0
    yield x1, z2, -1.0
    yield x2, z1, -1.0
    yield x1, z1, 1.0


def _rect_potential(x1, x2, z1, z2, p: np.ndarray) -> np.ndarray:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    tot = np.zeros(len(p))
    for xc, zc, s in _corner_iter(x1, x2, z1, z2):
        X = xc - x
        Z = zc - z
        R = np.sqrt(X * X + y * y + Z * Z)
        tot += s * np.arctan2(X * Z, y * R)
    return tot / (2.0 * np.pi)


def _rect_gradient(x1, x2, z1, z2, p: np.ndarray) -> np.ndarray:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    g = np.zeros((len(p), 3))
    for xc, zc, s in _corner_iter(x1, x2, z1, z2):
        X = xc - x
        Z = zc - z
        y2 = y * y
        R = np.sqrt(X * X + y2 + Z * Z)
        ax = X * X + y2
        az = Z * Z + y2
        g[:, 0] += s * (-y * Z / (R * ax))
        g[:, 1] += s * (-X * Z * (R * R + y2) / (R * ax * az))
        g[:, 2] += s * (-y * X / (R * az))
    return g / (2.0 * np.pi)


def total_potential(layout: TrapLayout, phase: str, point) -> np.ndarray | float:
    """Superposition of electrode voltages in volts at y > 0.

    phase RF_ONLY applies rf_amplitude to RF electrodes and 0 elsewhere;
    DC_ONLY applies dc_voltages and 0 on RF electrodes.
    """
    p, scalar = _check_points(point)
    tot = np.zeros(len(p))
    for e in layout.electrodes:
        v = layout.voltage_of(e, phase)
        if v != 0.0:
            tot += v * _rect_potential(*e.x_range, *e.z_range, p)
    return float(tot[0]) if scalar else tot


def total_gradient(layout: TrapLayout, phase: str, point) -> np.ndarray:
    """Gradient of total_potential, V/m, shape (..., 3)."""
    p, scalar = _check_points(point)
    g = np.zeros((len(p), 3))
    for e in layout.electrodes:
        v = layout.voltage_of(e, phase)
        if v != 0.0:
            g += v * _rect_gradient(*e.x_range, *e.z_range, p)
    return g[0] if scalar else g


def field_per_volt(layout: TrapLayout, electrode_id: str, point) -> np.ndarray:
    """Electric field at the point per volt applied to one electrode.

    Units (V/m)/V; this is -grad(patch_potential) of that electrode alone.
    Used to convert voltage noise on an electrode into field noise at the ion.
    """
    e = layout.electrode(electrode_id)
    return -patch_gradient(e, point)


# ---------------------------------------------------------------------------
# Layout files: TOML with a [units] header and an [[electrodes]] table list.
# ---------------------------------------------------------------------------

_EXPECTED_UNITS = {"length": "m", "voltage": "V", "rf_omega": "rad/s"}


def load_layout(path: str | Path) -> TrapLayout:
    """Read a trap layout file (TOML)."""
    with open(path, "rb") as f:
        doc = _toml.load(f)
    units = doc.get("units", {})
    for key, expected in _EXPECTED_UNITS.items():
        got = units.get(key, expected)
        if got != expected:
            raise LayoutError(
                f"{path}: unsupported unit {key} = {got!r} (expected {expected!r})"
            )
    try:
        electrodes = [
            Electrode(
                id=t["id"], role=t["role"],
                x_range=tuple(t["x_range"]), z_range=tuple(t["z_range"]),
            )
            for t in doc["electrodes"]
        ]
        drive = doc["drive"]
        layout = TrapLayout(
            electrodes=electrodes,
            rf_amplitude=float(drive["rf_amplitude"]),
            rf_omega=float(drive["rf_omega"]),
            dc_voltages={k: float(v) for k, v in doc.get("dc_voltages", {}).items()},
            dc_bounds=tuple(doc.get("dc_bounds", (-10.0, 15.0))),
        )
    except KeyError as exc:
        raise LayoutError(f"{path}: missing required field {exc}") from None
    return layout


def save_layout(layout: TrapLayout, path: str | Path, comment: str = "") -> None:
    """Write a trap layout file readable by load_layout."""
    lines = []
    if comment:
        for ln in comment.splitlines():
            lines.append(f"# {ln}")
    lines += [
        "",
        "dc_bounds = [{!r}, {!r}]".format(*layout.dc_bounds),
        "",
        "[units]",
        'length = "m"',
        'voltage = "V"',
        'rf_omega = "rad/s"',
        "",
        "[drive]",
        f"rf_amplitude = {layout.rf_amplitude!r}",
        f"rf_omega = {layout.rf_omega!r}",
        "",
        "[dc_voltages]",
    ]
    for eid in sorted(layout.dc_voltages):
        lines.append(f"{eid} = {layout.dc_voltages[eid]!r}")
    for e in layout.electrodes:
        lines += [
            "",
            "[[electrodes]]",
            f'id = "{e.id}"',
            f'role = "{e.role}"',
            "x_range = [{!r}, {!r}]".format(*e.x_range),
            "z_range = [{!r}, {!r}]".format(*e.z_range),
        ]
    Path(path).write_text("\n".join(lines) + "\n")
