"""surftrap: surface-electrode ion trap fields, noise, heating, and recooling."""

__version__ = "0.1.0"

from .constants import CA40, DEBYE, IonSpecies, get_species
from .geometry import (
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
from .heating import (
    EnergyTrace,
    NoiseDrive,
    effective_frequency,
    ensemble_heating_slope,
    field_psd_to_phonon_rate,
    heating_rate_analytic,
    integrate_langevin,
    phonon_rate_to_field_psd,
    phonons_normalized,
)
from .noise import (
    DipoleBath,
    NoiseSpectrum,
    RelaxingDipole,
    adsorbate_coverage,
    bath_preset,
    dipole_autocorr,
    dipole_psd,
    ensemble_psd_mu,
    field_psd_numeric,
    field_psd_plane,
    invert_surface_density,
    monte_carlo_field_psd,
    numeric_to_closed_ratio,
    tls_layer_thickness,
)
from .recool import (
    CalibrationResult,
    RecoolCurve,
    ScaledEnergyResult,
    TwoLevelParams,
    calibrate,
    fit_recool,
    fluorescence_curve,
    heating_protocol,
    scattering_rate,
)
from .survey import (
    HeatingRecord,
    TrendFit,
    emit_plot,
    fit_distance_trend,
    read_records_csv,
    regularize,
    to_field_psd,
)
from .trap import (
    ModeSet,
    NullNotFoundError,
    UnstableConfigurationError,
    modes_from_curvatures,
    pseudopotential,
    rf_null,
    secular_modes,
    sideband_suppression,
)
