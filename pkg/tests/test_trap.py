import numpy as np
import pytest

from oracles import mathieu_secular_frequency
from surftrap import CA40, Electrode, TrapLayout
from surftrap.geometry import RF_ONLY, total_gradient
from surftrap.trap import (
    MATHIEU_Q_MAX,
    ModeSet,
    NullNotFoundError,
    UnstableConfigurationError,
    fit_dc_voltages,
    mode_report_csv,
    mode_report_text,
    modes_from_curvatures,
    pseudopotential,
    rf_null,
    secular_modes,
)

UM = 1e-6
OMEGA = 2 * np.pi * 15e6


class TestRfNull:
    def test_paper_height(self, paper_null):
        # quoted trapping height ~240 um, tolerance 15%
        assert 204e-6 < paper_null[1] < 276e-6

    def test_residual_field_ratio(self, paper_trap, paper_null):
        g0 = np.linalg.norm(total_gradient(paper_trap, RF_ONLY, paper_null))
        probes = paper_null + 1e-4 * np.array(
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
        away = min(np.linalg.norm(total_gradient(paper_trap, RF_ONLY, q))
                   for q in probes)
        assert g0 < 1e-3 * away

    def test_symmetric_five_wire_on_symmetry_plane(self, five_wire_symmetric):
        null = rf_null(five_wire_symmetric)
        assert abs(null[0]) < 1e-12  # symmetry plane is x = 0
        assert null[1] > 0

    def test_scale_invariance(self, five_wire_symmetric):
        null1 = rf_null(five_wire_symmetric)
        for k in (0.5, 3.0):
            nullk = rf_null(five_wire_symmetric.scaled(k))
            assert nullk[1] == pytest.approx(k * null1[1], rel=1e-9)

    def test_no_rf_electrode(self):
        lay = TrapLayout([Electrode("a", "DC", (0, 1e-4), (0, 1e-4))],
                         rf_amplitude=1.0, rf_omega=OMEGA)
        with pytest.raises(NullNotFoundError, match="no RF electrode"):
            rf_null(lay)

    def test_single_rail_has_no_null(self):
        lay = TrapLayout(
            [Electrode("r", "RF", (-2e-4, 2e-4), (-2e-3, 2e-3))],
            rf_amplitude=100.0, rf_omega=OMEGA,
        )
        with pytest.raises(NullNotFoundError):
            rf_null(lay)


class TestPseudopotential:
    def test_zero_at_null(self, paper_trap, paper_null):
        at_null = pseudopotential(paper_trap, CA40, paper_null)
        nearby = pseudopotential(paper_trap, CA40, paper_null + [0, 20e-6, 0])
        assert at_null < 1e-12 * nearby

    def test_quadratic_in_amplitude(self, five_wire_symmetric):
        lay = five_wire_symmetric
        doubled = TrapLayout(lay.electrodes, 2 * lay.rf_amplitude, lay.rf_omega)
        p = [40e-6, 210e-6, 10e-6]
        assert pseudopotential(doubled, CA40, p) == pytest.approx(
            4 * pseudopotential(lay, CA40, p), rel=1e-12)

    def test_inverse_square_in_drive_frequency(self, five_wire_symmetric):
        lay = five_wire_symmetric
        faster = TrapLayout(lay.electrodes, lay.rf_amplitude, 2 * lay.rf_omega)
        p = [40e-6, 210e-6, 10e-6]
        assert pseudopotential(faster, CA40, p) == pytest.approx(
            pseudopotential(lay, CA40, p) / 4, rel=1e-12)

    def test_nonnegative(self, paper_trap):
        pts = np.array([[x, y, 0.0] for x in np.linspace(-4e-4, 4e-4, 7)
                        for y in (1e-4, 3e-4)])
        assert np.all(pseudopotential(paper_trap, CA40, pts) >= 0)


class TestSecularModes:
    def test_paper_operating_point(self, paper_modes):
        freqs = np.sort(paper_modes.frequencies)
        targets = np.array([0.4e6, 1.2e6, 1.4e6])
        np.testing.assert_allclose(freqs, targets, rtol=0.20)
        assert paper_modes.tilt_deg == pytest.approx(25.0, abs=5.0)

    def test_axes_orthonormal(self, paper_modes):
        gram = paper_modes.axes @ paper_modes.axes.T
        assert np.max(np.abs(gram - np.eye(3))) < 1e-9
        assert np.max(np.abs(np.linalg.norm(paper_modes.axes, axis=1) - 1)) < 1e-12

    def test_mathieu_parameters_sane(self, paper_modes):
        assert np.all(np.abs(paper_modes.mathieu_q) < MATHIEU_Q_MAX)
        # radial q for this drive strength; axial q near zero
        q_sorted = np.sort(np.abs(paper_modes.mathieu_q))
        assert q_sorted[0] < 0.01
        assert 0.1 < q_sorted[2] < 0.3

    def test_translation_invariance(self, paper_trap, paper_modes):
        moved = paper_trap.translated(170e-6, -230e-6)
        modes2 = secular_modes(moved, CA40)
        np.testing.assert_allclose(
            np.sort(modes2.frequencies), np.sort(paper_modes.frequencies),
            rtol=1e-6)
        assert modes2.tilt_deg == pytest.approx(paper_modes.tilt_deg, abs=1e-3)

    def test_unstable_configuration_reported(self, five_wire_symmetric):
        lay = five_wire_symmetric
        # a strong DC saddle on the center rail overwhelms the weak RF there
        weak = TrapLayout(lay.electrodes, 1.0, lay.rf_omega,
                          dc_voltages={"c": -10.0})
        with pytest.raises(UnstableConfigurationError):
            secular_modes(weak, CA40)


class TestCurvatureBackend:
    """Injected analytic quadrupoles: the Mathieu/pseudopotential identities."""

    @staticmethod
    def tensors(q, a, rf_omega=OMEGA, species=CA40):
        # curvatures producing exactly the requested (q, a) along x, with a
        # DC axial well (z) and the Laplace balance taken out of y
        kappa_rf = q * species.mass * rf_omega ** 2 / (2 * species.charge)
        kappa_dc = a * species.mass * rf_omega ** 2 / (4 * species.charge)
        h_rf = np.diag([kappa_rf, -kappa_rf, 0.0])
        h_dc = np.diag([kappa_dc, -2 * kappa_dc, kappa_dc])
        return h_rf, h_dc

    def test_pseudopotential_frequency_identity(self):
        q = 0.2
        a = 0.004
        h_rf, h_dc = self.tensors(q, a)
        ms = modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)
        f_x = (OMEGA / 2) * np.sqrt(a + q ** 2 / 2) / (2 * np.pi)
        got = ms.frequencies[np.argmax(np.abs(ms.axes[:, 0]))]
        assert got == pytest.approx(f_x, rel=1e-12)

    # the lowest-order secular formula drifts from the exact Floquet
    # exponent as ~q^2: 0.8% at q = 0.2, 1.8% at q = 0.3
    @pytest.mark.parametrize("q,rel", [(0.05, 0.01), (0.1, 0.01), (0.2, 0.01),
                                       (0.3, 0.02)])
    def test_matches_floquet_oracle(self, q, rel):
        a = 4e-4  # small enough that q^2/2 > 2a keeps every axis confined
        h_rf, h_dc = self.tensors(q, a)
        ms = modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)
        got = ms.frequencies[np.argmax(np.abs(ms.axes[:, 0]))]
        oracle = mathieu_secular_frequency(a, q, OMEGA)
        assert got == pytest.approx(oracle, rel=rel)

    def test_hessian_pipeline_mathieu_consistency(self):
        # for a = 0 and q < 0.3 the curvature pipeline reproduces
        # (Omega/2) sqrt(q^2/2) to 2 percent against the Floquet exponent
        for q in (0.1, 0.25):
            h_rf, _ = self.tensors(q, 0.0)
            # small stabilizing axial term so all eigenvalues are positive
            h_dc = np.diag([-1e-4, -1e-4, 2e-4])
            ms = modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)
            got = ms.frequencies[np.argmax(np.abs(ms.axes[:, 0]))]
            assert got == pytest.approx(
                (OMEGA / 2) * np.sqrt(q ** 2 / 2) / (2 * np.pi), rel=0.02)
            assert got == pytest.approx(
                mathieu_secular_frequency(0.0, q, OMEGA), rel=0.02)

    def test_saddle_raises_with_axis(self):
        h_rf = np.diag([1e8, -1e8, 0.0])
        h_dc = np.diag([1.0, 1.0, -2.0]) * 1e3  # axial anti-confinement wins
        with pytest.raises(UnstableConfigurationError, match="axis"):
            modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)

    def test_q_above_stability_bound_warns(self):
        h_rf, h_dc = self.tensors(1.0, 0.0)
        with pytest.warns(UserWarning, match="stability"):
            modes_from_curvatures(h_rf, h_dc + np.diag([1e-5, 1e-5, 1e-4]),
                                  CA40, OMEGA)

    def test_misalignment_zero_for_aligned_quadrupoles(self):
        h_rf, h_dc = self.tensors(0.2, 0.004)
        ms = modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)
        assert ms.rf_dc_misalignment_deg < 1e-6

    def test_misalignment_detects_rotation(self):
        h_rf, h_dc = self.tensors(0.2, 0.004)
        th = np.radians(20.0)
        rot = np.array([[np.cos(th), np.sin(th), 0],
                        [-np.sin(th), np.cos(th), 0], [0, 0, 1.0]])
        ms = modes_from_curvatures(h_rf, rot @ h_dc @ rot.T, CA40, OMEGA)
        assert ms.rf_dc_misalignment_deg == pytest.approx(20.0, abs=0.5)


class TestReports:
    def test_text_report_lists_modes(self, paper_modes):
        txt = mode_report_text(paper_modes)
        assert "tilt of radial axis" in txt
        assert sum(ln.startswith("mode ") for ln in txt.splitlines()) == 3

    def test_csv_report_round_trips_numbers(self, paper_modes):
        lines = mode_report_csv(paper_modes).strip().splitlines()
        assert lines[0].startswith("mode,f_MHz,")
        assert len(lines) == 4
        f_back = [float(ln.split(",")[1]) * 1e6 for ln in lines[1:]]
        np.testing.assert_allclose(f_back, paper_modes.frequencies, rtol=0)


class TestModeSetValidation:
    def test_rejects_non_orthonormal_axes(self):
        with pytest.raises(ValueError, match="orthonormal"):
            ModeSet(
                center=np.zeros(3), frequencies=np.ones(3) * 1e6,
                axes=np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 0, 1.0]]),
                tilt_deg=0.0, mathieu_q=np.zeros(3), mathieu_a=np.zeros(3),
                rf_dc_misalignment_deg=0.0,
            )


@pytest.mark.slow
def test_fit_dc_voltages_recovers_known_operating_point(five_wire_symmetric):
    # forward-generate a reachable operating point, then recover its
    # frequencies by search from a cold start
    L = 2000 * UM
    electrodes = list(five_wire_symmetric.electrodes) + [
        Electrode("e1", "DC", (450 * UM, 1400 * UM), (-L, -100 * UM)),
        Electrode("e2", "DC", (450 * UM, 1400 * UM), (100 * UM, L)),
        Electrode("e3", "DC", (-1400 * UM, -450 * UM), (-L, -100 * UM)),
        Electrode("e4", "DC", (-1400 * UM, -450 * UM), (100 * UM, L)),
    ]
    truth = TrapLayout(electrodes, 90.0, OMEGA,
                       dc_voltages={"e1": 2.0, "e2": 2.0, "e3": 2.0, "e4": 2.0,
                                    "c": -0.5})
    targets = np.sort(secular_modes(truth, CA40).frequencies)
    lay = TrapLayout(electrodes, 70.0, OMEGA)
    fitted = fit_dc_voltages(
        lay, CA40, target_frequencies_hz=targets,
        groups={"ends": ["e1", "e2", "e3", "e4"], "center": ["c"]},
        initial={"ends": 1.0, "center": 0.0},
    )
    ms = secular_modes(fitted, CA40)
    np.testing.assert_allclose(np.sort(ms.frequencies), targets, rtol=0.02)


class TestFloquetValidationMode:
    def test_matches_independent_oracle(self):
        from surftrap.trap import floquet_secular_frequency
        got = floquet_secular_frequency(4e-4, 0.2, OMEGA)
        assert got == pytest.approx(mathieu_secular_frequency(4e-4, 0.2, OMEGA),
                                    rel=1e-9)

    def test_validates_curvature_pipeline(self):
        from surftrap.trap import floquet_secular_frequency
        q = 0.15
        h_rf, h_dc = TestCurvatureBackend.tensors(q, 4e-4)
        ms = modes_from_curvatures(h_rf, h_dc, CA40, OMEGA)
        f_pipeline = ms.frequencies[np.argmax(np.abs(ms.axes[:, 0]))]
        assert f_pipeline == pytest.approx(
            floquet_secular_frequency(4e-4, q, OMEGA), rel=0.01)

    def test_rejects_unstable_parameters(self):
        from surftrap.trap import floquet_secular_frequency
        with pytest.raises(UnstableConfigurationError, match="stability"):
            floquet_secular_frequency(0.0, 1.2, OMEGA)
