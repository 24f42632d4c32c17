import math

import numpy as np
import pytest

from errors import ConfigurationError, ContractError, PropagationError
from oracle import (
    Grid,
    ModulatedBarrier,
    MomentumSpectrum,
    OracleConfig,
    Wavepacket,
    build_incident_packet,
    extract_populations,
    momentum_spectrum,
    plan_layout,
    propagate,
    refinement_ratio,
    run_oracle,
    step,
)


@pytest.fixture
def grid():
    return Grid(-2.0, 40.0, 4096)


@pytest.fixture
def packet(grid):
    return build_incident_packet(grid, 20.0, 2.0, 25.0)


def test_grid_requires_power_of_two():
    with pytest.raises(ConfigurationError, match="power of two"):
        Grid(0.0, 1.0, 1000)
    with pytest.raises(ConfigurationError, match="must exceed"):
        Grid(1.0, 1.0, 1024)


def test_grid_axes(grid):
    assert grid.dz == pytest.approx(42.0 / 4096)
    assert grid.z[0] == -2.0
    assert grid.nyquist == pytest.approx(math.pi / grid.dz)
    assert grid.refined().n_points == 8192


def test_grid_resolution_check(grid):
    grid.check_resolution(20.0, 30.0)
    with pytest.raises(ConfigurationError, match="Nyquist"):
        Grid(-2.0, 40.0, 256).check_resolution(20.0, 30.0)


def test_incident_packet_is_normalised(packet):
    assert packet.norm == pytest.approx(1.0, abs=1e-12)


def test_packet_inside_the_field_is_rejected(grid):
    barrier = ModulatedBarrier(barrier_height=800.0, mod_depth=0.062, omega=20.0, cap=2000.0)
    with pytest.raises(ConfigurationError, match="inside the mirror field"):
        build_incident_packet(grid, 20.0, 1.0, 3.0, potential=barrier, energy=200.0)


def test_packet_leaving_the_grid_is_rejected(grid):
    with pytest.raises(ConfigurationError, match="leaves the grid"):
        build_incident_packet(grid, 20.0, 2.0, 38.0)


def test_broad_spread_cannot_resolve_sidebands(grid):
    with pytest.raises(ConfigurationError, match="unresolvable"):
        build_incident_packet(grid, 20.0, 0.5, 25.0, sideband_spacing=1.0)


def test_incident_packet_moves_toward_the_mirror(packet):
    spectrum = momentum_spectrum(packet)
    assert spectrum.integral() == pytest.approx(1.0, abs=1e-9)
    assert spectrum.mean() == pytest.approx(-20.0, abs=1e-6)
    assert spectrum.std() == pytest.approx(0.25, rel=1e-3)


def test_norm_conserved_by_static_mirror(packet):
    barrier = ModulatedBarrier(barrier_height=800.0, cap=2000.0)
    final = propagate(packet, barrier, 2e-4, 200)
    assert final.norm == pytest.approx(1.0, abs=1e-10)
    assert final.time == pytest.approx(0.04)


def test_time_step_phase_contract(packet):
    barrier = ModulatedBarrier(barrier_height=800.0, cap=2000.0)
    with pytest.raises(ConfigurationError, match="too large"):
        step(packet, barrier, 1e-2)


def test_backward_step_undoes_forward_step(packet):
    barrier = ModulatedBarrier(barrier_height=800.0, mod_depth=0.1, omega=20.0, cap=2000.0)
    forward = step(packet, barrier, 1e-4, k_band=30.0)
    back = step(forward, barrier, -1e-4, k_band=30.0)
    assert back.time == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(back.amplitudes, packet.amplitudes, atol=1e-10)


def test_non_finite_amplitudes_raise_with_step(grid, packet):
    amplitudes = packet.amplitudes.copy()
    amplitudes[100] = np.nan
    broken = Wavepacket(grid=grid, amplitudes=amplitudes)
    with pytest.raises(PropagationError) as excinfo:
        propagate(broken, ModulatedBarrier(barrier_height=800.0, cap=2000.0), 1e-4, 5, k_band=30.0)
    assert excinfo.value.step == 0


def test_unseparated_packet_is_rejected(grid):
    barrier = ModulatedBarrier(barrier_height=800.0, cap=2000.0)
    near = build_incident_packet(grid, 20.0, 0.5, 4.0)
    with pytest.raises(ContractError, match="not separated"):
        momentum_spectrum(near, potential=barrier, energy=200.0)


def _synthetic_spectrum(weights, k, omega, width):
    wavenumbers = np.linspace(0.0, 40.0, 40001)
    density = np.zeros_like(wavenumbers)
    for n, w in weights.items():
        k_n = math.sqrt(k * k + 2.0 * n * omega)
        density += w * np.exp(-0.5 * ((wavenumbers - k_n) / width) ** 2) / (width * math.sqrt(2 * math.pi))
    return MomentumSpectrum(
        wavenumbers=wavenumbers,
        density=density,
        amplitudes=np.sqrt(density).astype(complex),
        dk=wavenumbers[1] - wavenumbers[0],
    )


def test_populations_from_resolved_peaks():
    weights = {-1: 0.25, 0: 0.5, 1: 0.25}
    measured = extract_populations(_synthetic_spectrum(weights, 20.0, 20.0, 0.05), 20.0, 20.0, 1.0, 3)
    assert measured.source == "oracle"
    assert measured.order_numbers == [-3, -2, -1, 0, 1, 2, 3]
    for n, w in weights.items():
        assert measured.weight(n) == pytest.approx(w, abs=1e-6)
    assert measured.total() == pytest.approx(1.0, abs=1e-6)


def test_unresolved_peaks_are_a_contract_error():
    weights = {-1: 0.25, 0: 0.5, 1: 0.25}
    with pytest.raises(ContractError, match="not resolved"):
        extract_populations(_synthetic_spectrum(weights, 20.0, 20.0, 0.2), 20.0, 20.0, 1.0, 3)


def test_oracle_config_validation():
    with pytest.raises(ConfigurationError) as excinfo:
        OracleConfig(k_over_kappa=5.0, points_per_wavelength=4.0)
    assert "k/kappa" in str(excinfo.value)
    assert "points_per_wavelength" in str(excinfo.value)


def test_oracle_config_derived_quantities():
    config = OracleConfig()
    assert config.omega == pytest.approx(20.0)
    assert config.energy == pytest.approx(200.0)
    assert config.envelope_width == pytest.approx(6.0)
    assert config.mirror_velocity_ratio == pytest.approx(0.031)
    model = config.model_spectrum()
    assert model.modulation_index == pytest.approx(0.846, abs=1e-3)
    assert model.weight(0) == pytest.approx(0.687, abs=2e-3)
    assert model.weight(1) == pytest.approx(0.149, abs=2e-3)


def test_oracle_config_from_experiment(preset_a):
    config = OracleConfig.from_experiment(preset_a, check_convergence=False)
    assert config.dimensionless is False
    assert config.q == pytest.approx(1.0993, abs=1e-3)
    assert config.k_over_kappa == pytest.approx(33.82, abs=0.05)
    assert config.model_spectrum().modulation_index == pytest.approx(1.328, abs=2e-3)


def test_layout_for_benchmark():
    layout = plan_layout(OracleConfig())
    n = layout.grid.n_points
    assert n & (n - 1) == 0
    assert layout.populated_order == 4
    assert layout.k_populated > math.sqrt(400.0 + 160.0)
    assert layout.z_turn == pytest.approx(math.log(4.0) / 2)

    fine = layout.refined()
    assert fine.grid.n_points == 2 * n
    assert fine.time_step == pytest.approx(layout.time_step / 2)
    assert fine.total_time == pytest.approx(layout.total_time)


@pytest.mark.slow
def test_benchmark_agrees_with_closed_form():
    report = run_oracle(OracleConfig(), workers=2)
    assert report.converged is True
    assert report.agreement is True
    assert "non_converged" not in report.flags
    for n in (-1, 0, 1):
        row = report.row(n)
        assert row.relative_error <= 0.10
    data = report.to_dict()
    assert data["approximations"]
    assert data["layout"]["n_points"] == report.layout.grid.n_points


@pytest.mark.slow
def test_refinement_ladder_is_second_order():
    ladder = refinement_ratio(OracleConfig(), levels=3)
    assert len(ladder.n_points) == 3
    assert 2.5 < ladder.ratio < 6.0


def _position_variance(packet):
    density = np.abs(packet.amplitudes) ** 2
    density /= density.sum()
    z = packet.grid.z
    mean = np.sum(z * density)
    return float(np.sum((z - mean) ** 2 * density))


@pytest.mark.slow
def test_free_packet_spreads_as_a_gaussian(grid):
    sigma0 = 2.0
    packet = build_incident_packet(grid, 3.0, sigma0, 25.0)
    free = ModulatedBarrier(barrier_height=0.0)
    dt, n_steps = 0.01, 300
    final = propagate(packet, free, dt, n_steps)
    t = dt * n_steps
    assert _position_variance(packet) == pytest.approx(sigma0**2, rel=1e-6)
    assert _position_variance(final) == pytest.approx(sigma0**2 + (t / (2.0 * sigma0)) ** 2, rel=5e-3)


@pytest.mark.slow
def test_static_barrier_reflects_everything(packet):
    energy = 200.0
    barrier = ModulatedBarrier(barrier_height=4.0 * energy, cap=10.0 * energy)
    final = propagate(packet, barrier, 2e-4, 10_000, k_band=30.0)
    spectrum = momentum_spectrum(final, potential=barrier, energy=energy)
    assert spectrum.integral(0.0) == pytest.approx(1.0, abs=1e-6)
    assert spectrum.mean(0.0) == pytest.approx(20.0, rel=5e-3)


@pytest.mark.slow
def test_unmodulated_mirror_keeps_only_the_carrier():
    report = run_oracle(OracleConfig(mod_depth=0.0, check_convergence=False), workers=1)
    assert report.measured.weight(0) == pytest.approx(1.0, abs=1e-3)
    for n, w in report.measured.orders:
        if n != 0:
            assert w < 1e-4


@pytest.mark.slow
def test_fast_modulation_suppresses_sidebands():
    report = run_oracle(OracleConfig(q=3.0, check_convergence=False), workers=1)
    carrier = report.measured.weight(0)
    for n in (-1, 1):
        assert report.measured.weight(n) / carrier < 0.05


@pytest.mark.slow
def test_start_distance_does_not_change_the_weights():
    near = run_oracle(OracleConfig(check_convergence=False), workers=1).measured
    far = run_oracle(OracleConfig(check_convergence=False, z_offset=5.0), workers=1).measured
    assert near.order_numbers == far.order_numbers
    for n, w in near.orders:
        assert far.weight(n) == pytest.approx(w, abs=1e-3)


@pytest.mark.slow
def test_reflected_peaks_sit_on_the_linearised_wavenumbers():
    config = OracleConfig(check_convergence=False)
    report = run_oracle(config, workers=1)
    spectrum = report.spectrum
    spacing = config.omega / config.k
    for n in (-1, 0, 1):
        centre = config.k + n * spacing
        window = (spectrum.wavenumbers > centre - 0.5 * spacing) & (spectrum.wavenumbers < centre + 0.5 * spacing)
        peak = spectrum.wavenumbers[window][np.argmax(spectrum.density[window])]
        assert peak == pytest.approx(centre, rel=0.02)
