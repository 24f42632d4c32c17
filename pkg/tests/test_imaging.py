import math

import numpy as np
import pytest

from core import recoil_velocity
from diffraction import SidebandSpectrum, experiment_weights
from errors import ContractError, DomainError
from imaging import (
    CameraGeometry,
    ImagingSettings,
    annular_profile,
    extract_weights,
    ring_apex_heights,
    ring_centers,
    ring_response,
    round_trip,
    sample_ensemble,
    scattering_origin,
    synthesize_image,
)
from kinematics import detection_positions, impact_state, sideband_velocity

SIGMA_V = 6.6 * recoil_velocity()


@pytest.fixture
def spectrum_a(preset_a):
    return experiment_weights(preset_a).significant(1e-4)


@pytest.fixture
def camera_a(preset_a):
    return CameraGeometry.for_experiment(preset_a, ImagingSettings())


def test_camera_needs_whole_pixels():
    with pytest.raises(DomainError, match="whole number"):
        CameraGeometry(width=1.005e-3, height=1e-3, pitch=1e-5, x_left=0.0)


def test_camera_rows_run_top_down(camera_a):
    assert camera_a.shape == (440, 550)
    xs, zs = camera_a.pixel_centers()
    assert zs[0, 0] > zs[-1, 0]
    assert xs[0, 0] < xs[0, -1]
    assert zs[-1, 0] == pytest.approx(5e-6)


def test_ring_radius_is_sideband_speed_times_flight(preset_a):
    origin = scattering_origin(preset_a)
    impact = impact_state(preset_a.drop_height)
    for n, (x, z) in ring_centers(preset_a, [-2, 0, 2]).items():
        v_n = sideband_velocity(impact, n, preset_a.omega)
        radius = math.hypot(x - origin[0], z - origin[1])
        assert radius == pytest.approx(v_n * preset_a.bounce_time, rel=1e-12)


def test_sampled_atoms_stay_on_the_elastic_sphere(spectrum_a, preset_a):
    ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 5000, 7, partitions=4)
    impact = impact_state(preset_a.drop_height)
    speeds = np.linalg.norm(ensemble.velocities, axis=1)
    expected = np.array([sideband_velocity(impact, int(n), preset_a.omega) for n in ensemble.orders])
    assert np.allclose(speeds, expected, rtol=1e-12)
    assert len(ensemble) == 5000
    assert ensemble.partition_sizes == (1250, 1250, 1250, 1250)


def test_sampling_independent_of_worker_count(spectrum_a, preset_a):
    one = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 4000, 11, partitions=4, workers=1)
    many = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 4000, 11, partitions=4, workers=3)
    assert np.array_equal(one.orders, many.orders)
    assert np.array_equal(one.velocities, many.velocities)


def test_unnormalised_weights_are_rejected(preset_a):
    bad = SidebandSpectrum(orders=((0, 0.5), (1, 0.4)), cutoff=1)
    with pytest.raises(ContractError, match="normalised"):
        sample_ensemble(bad, preset_a, SIGMA_V, 100, 1)


def test_huge_velocity_spread_aborts(spectrum_a, preset_a):
    with pytest.raises(DomainError, match="elastic sphere"):
        sample_ensemble(spectrum_a, preset_a, 1.0, 1000, 1)


def test_image_counts_every_atom(spectrum_a, preset_a, camera_a):
    ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 20000, 3, partitions=4)
    image = synthesize_image(ensemble, preset_a, camera_a, sigma_v=SIGMA_V)
    assert image.raster.shape == camera_a.shape
    assert image.total + image.out_of_field == 20000


def test_same_seed_same_image(spectrum_a, preset_a, camera_a):
    def render(seed, workers):
        ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 10000, seed, partitions=4, workers=workers)
        return synthesize_image(ensemble, preset_a, camera_a, sigma_v=SIGMA_V, workers=workers).raster

    assert np.array_equal(render(5, 1), render(5, 4))
    assert not np.array_equal(render(5, 1), render(6, 1))


def test_bands_tile_the_field(spectrum_a, preset_a, camera_a):
    ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 20000, 3, partitions=2)
    image = synthesize_image(ensemble, preset_a, camera_a, sigma_v=SIGMA_V)
    profiles = annular_profile(image, ring_centers(preset_a, spectrum_a.order_numbers))
    assert profiles.total == pytest.approx(image.total)
    assert profiles.bands[-3][0] == 0.0
    assert math.isinf(profiles.bands[3][1])


def test_centres_outside_the_field_are_rejected(spectrum_a, preset_a, camera_a):
    ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, 1000, 3)
    image = synthesize_image(ensemble, preset_a, camera_a, sigma_v=SIGMA_V)
    with pytest.raises(DomainError, match="outside the camera field"):
        annular_profile(image, {0: (1.0, 1.0)})


def test_zero_spread_needs_no_unfolding(spectrum_a, preset_a, camera_a):
    ensemble = sample_ensemble(spectrum_a, preset_a, 0.0, 20000, 9)
    image = synthesize_image(ensemble, preset_a, camera_a, sigma_v=0.0)
    profiles = annular_profile(image, ring_centers(preset_a, spectrum_a.order_numbers))
    assert np.array_equal(ring_response(profiles, 0.0, preset_a.bounce_time), np.eye(7))
    recovered = extract_weights(profiles)
    assert recovered.source == "image"
    assert recovered.total() == pytest.approx(1.0)
    for n, w in spectrum_a.orders:
        assert recovered.weight(n) == pytest.approx(w, abs=0.02)


def test_round_trip_recovers_weights(preset_a):
    trip = round_trip(experiment_weights(preset_a), preset_a, ImagingSettings(atoms=100_000, seed=1234))
    assert trip.max_error < 0.03

    heights = ring_apex_heights(trip.profiles)
    expected = {row.order: row.rel_position for row in detection_positions(preset_a, [-2, -1, 1, 2])}
    for n, offset in expected.items():
        assert heights[n] - heights[0] == pytest.approx(offset, abs=20e-6)


def test_order_frequencies_follow_the_weights(spectrum_a, preset_a):
    count = 100_000
    ensemble = sample_ensemble(spectrum_a, preset_a, SIGMA_V, count, 21, partitions=8)
    total = spectrum_a.total()
    for n, w in spectrum_a.orders:
        p = w / total
        observed = int(np.count_nonzero(ensemble.orders == n))
        assert abs(observed - count * p) <= 3.0 * math.sqrt(count * p * (1.0 - p))


@pytest.mark.slow
@pytest.mark.parametrize("preset_fixture", ["preset_b", "preset_c"])
def test_round_trip_for_the_other_presets(preset_fixture, request):
    params = request.getfixturevalue(preset_fixture)
    trip = round_trip(experiment_weights(params), params, ImagingSettings(atoms=100_000, seed=1234))
    assert trip.max_error < 0.03


@pytest.mark.slow
def test_round_trip_error_shrinks_with_more_atoms(preset_a):
    spectrum = experiment_weights(preset_a)

    def bias(atoms):
        errors = []
        for seed in range(24):
            trip = round_trip(spectrum, preset_a, ImagingSettings(atoms=atoms, seed=seed, partitions=2))
            errors.extend(trip.errors.values())
        return float(np.mean(errors))

    assert bias(10_000) <= bias(5_000)
