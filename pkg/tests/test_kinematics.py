from dataclasses import replace

import pytest

from core import recoil_velocity
from errors import DomainError
from kinematics import (
    REFERENCE_EXPECTED_POSITIONS,
    detection_positions,
    impact_state,
    sideband_velocity,
    sideband_wavenumber,
    sideband_wavenumber_linearized,
    validity_checks,
)


def test_impact_state_at_3_6_mm():
    impact = impact_state(3.6e-3)
    assert impact.speed == pytest.approx(0.2657668, rel=1e-6)
    assert impact.wavenumber == pytest.approx(3.637e8, rel=1e-3)
    assert impact.de_broglie * 1e9 == pytest.approx(17.28, abs=0.05)


def test_de_broglie_at_2_05_mm():
    assert impact_state(2.05e-3).de_broglie * 1e9 == pytest.approx(22.89, abs=0.05)


def test_impact_state_rejects_non_positive_height():
    with pytest.raises(DomainError):
        impact_state(-1e-3)


def test_carrier_keeps_incident_speed(preset_a):
    impact = impact_state(preset_a.drop_height)
    assert sideband_velocity(impact, 0, preset_a.omega) == impact.speed


def test_first_sideband_splitting_in_recoil_units(preset_a):
    impact = impact_state(preset_a.drop_height)
    dv = sideband_velocity(impact, 1, preset_a.omega) - impact.speed
    assert dv / recoil_velocity() == pytest.approx(1.4447, abs=2e-3)


def test_forbidden_order(preset_a):
    impact = impact_state(preset_a.drop_height)
    with pytest.raises(DomainError, match="forbidden"):
        sideband_velocity(impact, -20, preset_a.omega)


def test_linearised_wavenumber_tracks_exact_law(preset_a):
    impact = impact_state(preset_a.drop_height)
    exact = sideband_wavenumber(impact, 1, preset_a.omega)
    linear = sideband_wavenumber_linearized(impact, 1, preset_a.omega)
    shift = exact - impact.wavenumber
    # second-order term of the square root
    assert linear == pytest.approx(exact, abs=0.05 * shift)


def test_linearised_wavenumber_validity_limit(preset_a):
    impact = impact_state(preset_a.drop_height)
    sideband_wavenumber_linearized(impact, 7, preset_a.omega)
    with pytest.raises(DomainError, match="linearised"):
        sideband_wavenumber_linearized(impact, 8, preset_a.omega)


@pytest.mark.parametrize("preset_fixture", ["preset_a", "preset_c"])
def test_detection_positions_match_reference_rows(preset_fixture, request):
    params = request.getfixturevalue(preset_fixture)
    expected = REFERENCE_EXPECTED_POSITIONS[params.name]
    rows = detection_positions(params, expected)
    assert [row.order for row in rows] == sorted(expected)
    for row in rows:
        assert row.rel_position * 1e6 == pytest.approx(expected[row.order], abs=4.0)


def test_detection_positions_exact_values(preset_a):
    rows = {row.order: row.rel_position * 1e6 for row in detection_positions(preset_a, [-2, -1, 0, 1, 2])}
    assert rows[0] == 0.0
    assert rows[-1] == pytest.approx(-237.1, abs=0.3)
    assert rows[1] == pytest.approx(229.55, abs=0.3)
    assert rows[2] == pytest.approx(452.2, abs=0.3)


def test_validity_checks(preset_a, preset_c):
    a = validity_checks(preset_a)
    assert a["de_broglie_nm"] == pytest.approx(17.28, abs=0.05)
    assert a["two_pi_decay_length_nm"] == pytest.approx(584.3, abs=0.1)
    assert a["vib_amplitude_nm"] == pytest.approx(2.879, abs=5e-3)
    assert a["energy_transfer_ratio"] < 0.1
    assert a["mirror_velocity_ratio"] < 0.2
    assert validity_checks(preset_c)["de_broglie_nm"] == pytest.approx(22.89, abs=0.05)


def test_slower_orders_land_further_from_the_carrier(preset_a):
    rows = {row.order: row.rel_position for row in detection_positions(preset_a, [-3, -2, -1, 0, 1, 2, 3])}
    for n in (1, 2, 3):
        assert rows[-n] < 0 < rows[n]
        assert abs(rows[-n]) > abs(rows[n])
    offsets = [rows[n] for n in sorted(rows)]
    assert offsets == sorted(offsets)


def test_positions_scale_linearly_with_flight_time(preset_a):
    orders = [-2, -1, 1, 2]
    base = detection_positions(preset_a, orders)
    for factor in (0.5, 2.0, 3.0):
        longer = detection_positions(replace(preset_a, bounce_time=factor * preset_a.bounce_time), orders)
        for a, b in zip(base, longer):
            assert b.rel_position == pytest.approx(factor * a.rel_position, rel=1e-12)


def test_static_mirror_leaves_all_orders_on_the_carrier(preset_a):
    still = replace(preset_a, mirror=replace(preset_a.mirror, omega=0.0))
    assert all(row.rel_position == 0.0 for row in detection_positions(still, [-2, -1, 0, 1, 2]))


def test_small_transfer_limit(preset_a):
    slow = replace(preset_a, mirror=replace(preset_a.mirror, omega=preset_a.omega / 10))
    impact = impact_state(slow.drop_height)
    c = slow.constants
    for row in detection_positions(slow, [-2, -1, 1, 2]):
        transfer = row.order * c.hbar * slow.omega
        assert abs(transfer) / impact.kinetic_energy < 0.02
        expected = transfer / (c.atom_mass * impact.speed) * slow.bounce_time
        assert row.rel_position == pytest.approx(expected, rel=0.01)
