import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mp_laplacian_and_hessian_norm, quad_patch_potential
from surftrap import (
    DC_ONLY,
    RF_ONLY,
    Electrode,
    LayoutError,
    TrapLayout,
    field_per_volt,
    load_layout,
    patch_gradient,
    patch_potential,
    save_layout,
    total_gradient,
    total_potential,
)

UM = 1e-6


def rect(x1, x2, z1, z2, role="DC", eid="e"):
    return Electrode(eid, role, (x1, x2), (z1, z2))


class TestPatchPotential:
    def test_half_space_limit(self):
        big = rect(-10.0, 10.0, -10.0, 10.0)
        assert patch_potential(big, [0.0, 1e-6, 0.0]) == pytest.approx(1.0, abs=1e-6)

    def test_far_field_dipole_decay(self):
        e = rect(-0.5, 0.5, -0.5, 0.5)
        area = 1.0
        for y in (1e3, 1e4, 1e6):
            val = patch_potential(e, [0.0, y, 0.0])
            assert val == pytest.approx(area * y / (2 * np.pi * y ** 3), rel=1e-5)

    def test_mirror_symmetry(self):
        e = rect(-3e-4, 3e-4, -2e-3, 2e-3)
        pts = [(1.1e-4, 2.4e-4, 7e-4), (2e-4, 5e-5, -1e-3)]
        for x, y, z in pts:
            v = patch_potential(e, [x, y, z])
            assert patch_potential(e, [-x, y, z]) == pytest.approx(v, rel=1e-14)
            assert patch_potential(e, [x, y, -z]) == pytest.approx(v, rel=1e-14)

    def test_matches_quadrature_oracle(self):
        cases = [
            ((-3e-4, 5e-4, -2e-3, 1e-3), (1e-4, 2.4e-4, 3e-4)),
            ((-1e-4, 1e-4, -1e-4, 1e-4), (0.0, 5e-5, 0.0)),
            ((2e-4, 9e-4, -5e-4, -1e-4), (-1e-4, 3e-4, 2e-4)),
        ]
        for (x1, x2, z1, z2), p in cases:
            ours = patch_potential(rect(x1, x2, z1, z2), list(p))
            oracle = quad_patch_potential(x1, x2, z1, z2, p)
            assert ours == pytest.approx(oracle, rel=1e-6)

    def test_gradient_matches_finite_differences(self):
        e = rect(-3e-4, 5e-4, -2e-3, 1e-3)
        p = np.array([1.2e-4, 2.1e-4, -3e-4])
        g = patch_gradient(e, p)
        h = 1e-10
        for i in range(3):
            dp = np.zeros(3)
            dp[i] = h
            fd = (patch_potential(e, p + dp) - patch_potential(e, p - dp)) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=2e-5, abs=1e-4)

    def test_laplace_property_high_precision(self):
        # numerical Laplacian at step 1e-7 y vanishes relative to the
        # Hessian norm; evaluated in mpmath because float64 roundoff at that
        # step would swamp the comparison
        e = (-3e-4, 5e-4, -2e-3, 1e-3)
        rng = np.random.default_rng(7)
        for _ in range(4):
            p = (rng.uniform(-5e-4, 8e-4), rng.uniform(5e-5, 8e-4),
                 rng.uniform(-2e-3, 2e-3))
            lap, hnorm = mp_laplacian_and_hessian_norm(*e, p, step_rel=1e-7)
            assert abs(lap) < 1e-4 * hnorm

    def test_boundary_values(self):
        w = 6e-4
        e = rect(-w / 2, w / 2, -w / 2, w / 2)
        y = 1e-4 * w
        assert patch_potential(e, [0.0, y, 0.0]) > 1 - 1e-3
        assert patch_potential(e, [3 * w, y, 0.0]) < 1e-3

    def test_range_and_plane_rejection(self):
        e = rect(-1e-4, 1e-4, -1e-4, 1e-4)
        vals = patch_potential(e, np.array([[0, 1e-5, 0], [5e-4, 2e-3, 1e-4]]))
        assert np.all((0 <= vals) & (vals <= 1))
        with pytest.raises(ValueError, match="y > 0"):
            patch_potential(e, [0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="y > 0"):
            patch_potential(e, [0.0, -1e-6, 0.0])

    @settings(max_examples=25, deadline=None)
    @given(
        x=st.floats(-1e-3, 1e-3), y=st.floats(1e-6, 5e-3),
        z=st.floats(-1e-3, 1e-3),
    )
    def test_bounded_everywhere(self, x, y, z):
        e = rect(-4e-4, 2e-4, -9e-4, 9e-4)
        v = patch_potential(e, [x, y, z])
        assert 0.0 <= v <= 1.0


class TestSuperposition:
    def layout(self, va=0.0, vb=0.0):
        return TrapLayout(
            [rect(-4e-4, -1e-4, -1e-3, 1e-3, "DC", "a"),
             rect(1e-4, 4e-4, -1e-3, 1e-3, "DC", "b"),
             rect(-0.9e-4, 0.9e-4, -1e-3, 1e-3, "RF", "r")],
            rf_amplitude=5.0, rf_omega=1e8,
            dc_voltages={"a": va, "b": vb}, dc_bounds=(-100.0, 100.0),
        )

    def test_all_zero(self):
        lay = self.layout()
        assert total_potential(lay, DC_ONLY, [0, 2e-4, 0]) == 0.0

    def test_single_electrode_reduces_to_patch(self):
        lay = self.layout(va=3.7)
        p = [1e-5, 3e-4, 2e-4]
        expect = 3.7 * patch_potential(lay.electrode("a"), p)
        assert total_potential(lay, DC_ONLY, p) == pytest.approx(expect, rel=1e-14)

    def test_linearity_in_voltages(self):
        rng = np.random.default_rng(3)
        p = [5e-5, 2.4e-4, -1e-4]
        for _ in range(6):
            va, vb = rng.uniform(-10, 10, 2)
            v1 = total_potential(self.layout(va, vb), DC_ONLY, p)
            v2 = total_potential(self.layout(2 * va, 2 * vb), DC_ONLY, p)
            vs = (total_potential(self.layout(va, 0), DC_ONLY, p)
                  + total_potential(self.layout(0, vb), DC_ONLY, p))
            assert v2 == pytest.approx(2 * v1, rel=1e-12, abs=1e-15)
            assert vs == pytest.approx(v1, rel=1e-12, abs=1e-15)

    def test_rf_phase_selects_rf_voltage(self):
        lay = self.layout(va=3.0, vb=-2.0)
        p = [0, 2e-4, 0]
        rf = total_potential(lay, RF_ONLY, p)
        assert rf == pytest.approx(5.0 * patch_potential(lay.electrode("r"), p),
                                   rel=1e-14)

    def test_unknown_phase(self):
        with pytest.raises(ValueError, match="phase"):
            total_potential(self.layout(), "AC", [0, 1e-4, 0])


class TestFieldPerVolt:
    def test_is_negative_patch_gradient(self):
        lay = TestSuperposition().layout(va=1.0)
        p = [2e-5, 3e-4, 1e-4]
        np.testing.assert_allclose(
            field_per_volt(lay, "a", p), -patch_gradient(lay.electrode("a"), p),
            rtol=0, atol=0,
        )

    def test_unknown_electrode(self):
        lay = TestSuperposition().layout()
        with pytest.raises(LayoutError, match="unknown electrode"):
            field_per_volt(lay, "nope", [0, 1e-4, 0])

    def test_geometry_scaling(self):
        lay = TestSuperposition().layout(va=1.0)
        p = np.array([2e-5, 3e-4, 1e-4])
        k = 3.0
        f1 = field_per_volt(lay, "a", p)
        f2 = field_per_volt(lay.scaled(k), "a", k * p)
        np.testing.assert_allclose(f2, f1 / k, rtol=1e-12)

    @staticmethod
    def _tiled_plane(half, n=5):
        tiles = []
        width = 2 * half / n
        for i in range(n):
            for j in range(n):
                tiles.append(rect(-half + i * width, -half + (i + 1) * width,
                                  -half + j * width, -half + (j + 1) * width,
                                  "DC", f"t{i}_{j}"))
        return TrapLayout(tiles, rf_amplitude=0.0, rf_omega=1.0,
                          dc_voltages={e.id: 1.0 for e in tiles})

    def test_covered_plane_has_zero_field(self):
        # a plane fully tiled with electrodes at 1 V has uniform potential 1
        # above it and therefore zero field; the finite tiling leaves only a
        # truncation field ~ 4/(pi L) that dies off as the tiling grows
        p = np.array([0.13, 2e-3, -0.21])
        residuals = []
        for half in (12.5, 125.0):
            lay = self._tiled_plane(half)
            assert total_potential(lay, DC_ONLY, p) == pytest.approx(
                1.0, abs=2.0 * p[1] / half)
            total = sum(field_per_volt(lay, e.id, p) for e in lay.electrodes)
            # superposition: the sum IS the gradient of the 1 V composite
            np.testing.assert_allclose(
                total, -total_gradient(lay, DC_ONLY, p), rtol=0, atol=1e-9)
            residuals.append(np.linalg.norm(total))
            assert residuals[-1] < 2.0 * 4.0 / (np.pi * half)
        assert residuals[1] < 0.15 * residuals[0]

    def test_calibration_range_consistency(self, paper_trap, paper_null):
        # the two ends of the documented voltage-to-field noise calibration
        # imply the same |field per volt|^2 within a few percent, and that
        # coupling falls inside the range this layout's electrodes span
        lo = 1.7e-11 / 4.4e-16
        hi = 1.0e-9 / 2.5e-14
        assert hi == pytest.approx(lo, rel=0.05)
        couplings = [
            np.linalg.norm(field_per_volt(paper_trap, e.id, paper_null)) ** 2
            for e in paper_trap.dc_electrodes
        ]
        assert min(couplings) < lo < max(couplings)


class TestLayoutValidation:
    def test_overlap_rejected(self):
        with pytest.raises(LayoutError, match="overlap"):
            TrapLayout([rect(0, 2, 0, 2, "DC", "a"), rect(1, 3, 1, 3, "DC", "b")],
                       rf_amplitude=1.0, rf_omega=1.0)

    def test_touching_edges_allowed(self):
        TrapLayout([rect(0, 1, 0, 1, "DC", "a"), rect(1, 2, 0, 1, "DC", "b")],
                   rf_amplitude=1.0, rf_omega=1.0)

    def test_duplicate_ids(self):
        with pytest.raises(LayoutError, match="duplicate"):
            TrapLayout([rect(0, 1, 0, 1, "DC", "a"), rect(2, 3, 0, 1, "DC", "a")],
                       rf_amplitude=1.0, rf_omega=1.0)

    def test_degenerate_interval(self):
        with pytest.raises(LayoutError, match="non-degenerate"):
            rect(1.0, 1.0, 0, 1)

    def test_infinite_extent(self):
        with pytest.raises(LayoutError, match="finite"):
            rect(0.0, np.inf, 0, 1)

    def test_bad_role(self):
        with pytest.raises(LayoutError, match="role"):
            rect(0, 1, 0, 1, role="AC")

    def test_dc_voltage_bounds(self):
        with pytest.raises(LayoutError, match="outside bounds"):
            TrapLayout([rect(0, 1, 0, 1, "DC", "a")], rf_amplitude=1.0,
                       rf_omega=1.0, dc_voltages={"a": 99.0})

    def test_dc_voltage_unknown_id(self):
        with pytest.raises(LayoutError, match="unknown electrode"):
            TrapLayout([rect(0, 1, 0, 1, "DC", "a")], rf_amplitude=1.0,
                       rf_omega=1.0, dc_voltages={"b": 1.0})

    def test_dc_voltage_on_rf_electrode(self):
        with pytest.raises(LayoutError, match="role RF"):
            TrapLayout([rect(0, 1, 0, 1, "RF", "a")], rf_amplitude=1.0,
                       rf_omega=1.0, dc_voltages={"a": 1.0})

    def test_nonpositive_rf_omega(self):
        with pytest.raises(LayoutError, match="rf_omega"):
            TrapLayout([rect(0, 1, 0, 1, "RF", "a")], rf_amplitude=1.0,
                       rf_omega=0.0)


class TestLayoutFiles:
    def test_round_trip(self, tmp_path, paper_trap):
        path = tmp_path / "trap.layout"
        save_layout(paper_trap, path, comment="round trip")
        back = load_layout(path)
        assert back.rf_amplitude == paper_trap.rf_amplitude
        assert back.rf_omega == paper_trap.rf_omega
        assert back.dc_voltages == paper_trap.dc_voltages
        assert back.dc_bounds == paper_trap.dc_bounds
        assert [e.id for e in back.electrodes] == [e.id for e in paper_trap.electrodes]
        for a, b in zip(back.electrodes, paper_trap.electrodes):
            assert a == b

    def test_missing_field(self, tmp_path):
        path = tmp_path / "bad.layout"
        path.write_text('[units]\nlength = "m"\n')
        with pytest.raises(LayoutError, match="missing required field"):
            load_layout(path)

    def test_wrong_units(self, tmp_path):
        path = tmp_path / "bad.layout"
        path.write_text('[units]\nlength = "cm"\n[drive]\nrf_amplitude = 1.0\n'
                        'rf_omega = 1.0\n')
        with pytest.raises(LayoutError, match="unsupported unit"):
            load_layout(path)
