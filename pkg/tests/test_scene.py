import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasloc import scene
from fasloc.scene import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    Box,
    Scenario,
    aod_bounds,
    compute_aod,
    compute_delay,
    delay_bounds,
    delay_inner_rate,
    delay_partial,
    delay_vector,
    load_scenario,
    los_gain,
    los_path,
    nlos_gain,
    nlos_path,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    steering_partials,
    steering_vector,
    synthesize_received,
    table1_scenario,
)

RNG = np.random.default_rng(99)


@pytest.fixture(scope="module")
def scn():
    return table1_scenario()


def test_table1_values(scn):
    assert scn.num_subcarriers == 500
    np.testing.assert_allclose(scn.wavelength, 9.99308e-3, rtol=1e-5)
    np.testing.assert_allclose(scn.noise_psd, 4.1159e-21, rtol=1e-4)
    assert scn.array.size == 25


def test_scenario_invariants():
    bad_rot = np.eye(3)
    bad_rot[0, 0] = 1.0 + 1e-6
    scn = table1_scenario()
    with pytest.raises(ValueError, match="orthonormal"):
        Scenario(
            bs_position=scn.bs_position,
            bs_rotation=bad_rot,
            ue_position=scn.ue_position,
            uncertainty_region=scn.uncertainty_region,
            carrier_frequency=scn.carrier_frequency,
            subcarrier_spacing=scn.subcarrier_spacing,
            bandwidth=scn.bandwidth,
            num_subcarriers=scn.num_subcarriers,
            noise_psd=scn.noise_psd,
            transmit_power=scn.transmit_power,
            array=scn.array,
        )
    with pytest.raises(ValueError, match="num_subcarriers"):
        scene.Scenario(
            bs_position=scn.bs_position,
            bs_rotation=scn.bs_rotation,
            ue_position=scn.ue_position,
            uncertainty_region=scn.uncertainty_region,
            carrier_frequency=scn.carrier_frequency,
            subcarrier_spacing=scn.subcarrier_spacing,
            bandwidth=scn.bandwidth,
            num_subcarriers=777,
            noise_psd=scn.noise_psd,
            transmit_power=scn.transmit_power,
            array=scn.array,
        )


def test_compute_aod_table1(scn):
    el, az = compute_aod(scn.ue_position, scn)
    np.testing.assert_allclose(np.rad2deg(el), 93.7905, atol=5e-3)
    np.testing.assert_allclose(np.rad2deg(az), 6.3402, atol=5e-3)


def test_compute_aod_axes(scn):
    # broadside along +x
    el, az = compute_aod(scn.bs_position + np.array([7.0, 0.0, 0.0]), scn)
    np.testing.assert_allclose([el, az], [np.pi / 2, 0.0], atol=1e-14)
    # boresight of +z
    el, _ = compute_aod(scn.bs_position + np.array([0.0, 0.0, 3.0]), scn)
    np.testing.assert_allclose(el, 0.0, atol=1e-14)


def test_compute_aod_batch_and_rotation(scn):
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    rotated = scene.Scenario(
        bs_position=scn.bs_position,
        bs_rotation=rot,
        ue_position=scn.ue_position,
        uncertainty_region=scn.uncertainty_region,
        carrier_frequency=scn.carrier_frequency,
        subcarrier_spacing=scn.subcarrier_spacing,
        bandwidth=scn.bandwidth,
        num_subcarriers=scn.num_subcarriers,
        noise_psd=scn.noise_psd,
        transmit_power=scn.transmit_power,
        array=scn.array,
    )
    pts = RNG.uniform(-5, 5, size=(6, 3)) + np.array([20.0, 0.0, 0.0])
    el, az = compute_aod(pts, rotated)
    assert el.shape == (6,)
    for k in range(6):
        el1, az1 = compute_aod(pts[k], rotated)
        np.testing.assert_allclose([el[k], az[k]], [el1, az1], rtol=1e-14)
    with pytest.raises(ValueError):
        compute_aod(scn.bs_position, scn)


def test_compute_delay(scn):
    tau = compute_delay(scn)
    np.testing.assert_allclose(tau, np.sqrt(2059.0) / SPEED_OF_LIGHT, rtol=1e-14)
    np.testing.assert_allclose(tau, 151.36e-9, atol=0.05e-9)
    # scatterer on the segment gives the direct-path delay
    mid = 0.5 * (scn.bs_position + scn.ue_position)
    np.testing.assert_allclose(compute_delay(scn, scatterer=mid), tau, rtol=1e-14)


@given(st.floats(0.5, 50.0), st.floats(-20.0, 20.0), st.floats(-20.0, 20.0))
@settings(max_examples=30, deadline=None)
def test_delay_homogeneity(x, y, z):
    scn = table1_scenario()
    p = scn.bs_position + np.array([x, y, z])
    if np.linalg.norm(p - scn.bs_position) < 1e-6:
        return
    tau1 = compute_delay(scn, target=p)
    doubled = scn.bs_position + 2 * (p - scn.bs_position)
    np.testing.assert_allclose(compute_delay(scn, target=doubled), 2 * tau1, rtol=1e-12)


def test_path_gains(scn):
    rho = los_gain(scn)
    np.testing.assert_allclose(rho, scn.wavelength / (4 * np.pi * np.sqrt(2059.0)), rtol=1e-14)
    np.testing.assert_allclose(rho, 1.7524e-5, rtol=1e-3)
    # doubling distance halves the gain
    far = scn.bs_position + 2 * (scn.ue_position - scn.bs_position)
    np.testing.assert_allclose(los_gain(scn, far), rho / 2, rtol=1e-12)
    # zero cross-section kills the bounce
    assert nlos_gain(scn, [20.0, 3.0, 2.0], 0.0) == 0.0
    with pytest.raises(ValueError):
        los_gain(scn, scn.bs_position)


def test_steering_vector_broadside(scn):
    a = steering_vector(np.pi / 2, 0.0, scn.array)
    np.testing.assert_allclose(a, np.ones(25), atol=1e-14)


def test_steering_norm_is_element_count(scn):
    for _ in range(10):
        el = RNG.uniform(0, np.pi)
        az = RNG.uniform(-np.pi, np.pi)
        a = steering_vector(el, az, scn.array)
        np.testing.assert_allclose(np.linalg.norm(a) ** 2, 25.0, rtol=1e-12)


def test_steering_azimuth_partial_closed_form(scn):
    # at broadside the azimuth partial is -j 2 pi (d/lambda) * horizontal index * a
    arr = scn.array
    a = steering_vector(np.pi / 2, 0.0, arr)
    _, d_az = steering_partials(np.pi / 2, 0.0, arr)
    idx_h = np.repeat(np.arange(arr.num_h), arr.num_v)
    expected = -2j * np.pi * (arr.spacing / arr.wavelength) * idx_h * a
    np.testing.assert_allclose(d_az, expected, atol=1e-12)


def test_steering_partials_match_finite_differences(scn):
    h = 1e-6
    for _ in range(20):
        el = RNG.uniform(np.deg2rad(5), np.deg2rad(175))
        az = RNG.uniform(-np.pi + 0.1, np.pi - 0.1)
        d_el, d_az = steering_partials(el, az, scn.array)
        fd_el = (
            steering_vector(el + h, az, scn.array) - steering_vector(el - h, az, scn.array)
        ) / (2 * h)
        fd_az = (
            steering_vector(el, az + h, scn.array) - steering_vector(el, az - h, scn.array)
        ) / (2 * h)
        for got, want in ((d_el, fd_el), (d_az, fd_az)):
            scale = np.maximum(np.abs(want), 1e-2)
            assert np.max(np.abs(got - want) / scale) < 1e-5


def test_delay_vector_properties(scn):
    n_s, df = scn.num_subcarriers, scn.subcarrier_spacing
    np.testing.assert_array_equal(delay_vector(0.0, n_s, df), np.ones(n_s))
    for tau in (0.0, 37e-9, 151e-9):
        d = delay_vector(tau, n_s, df)
        np.testing.assert_allclose(np.vdot(d, d), n_s, rtol=1e-12)
    rate = delay_inner_rate(n_s, df)
    np.testing.assert_allclose(rate / (-2j * np.pi * df), n_s * (n_s - 1) / 2, rtol=1e-14)
    # consistency with the explicit vectors at several delays
    for tau in (0.0, 80e-9):
        d = delay_vector(tau, n_s, df)
        dd = delay_partial(tau, n_s, df)
        np.testing.assert_allclose(np.vdot(d, dd), rate, rtol=1e-12)


def test_region_bounds(scn):
    el_min, el_max, az_min, az_max = aod_bounds(scn)
    np.testing.assert_allclose(np.rad2deg(el_min), 80.53, atol=0.05)
    np.testing.assert_allclose(np.rad2deg(el_max), 99.46, atol=0.05)
    np.testing.assert_allclose(np.rad2deg(az_min), -18.43, atol=0.05)
    np.testing.assert_allclose(np.rad2deg(az_max), 18.43, atol=0.05)
    tau_min, tau_max = delay_bounds(scn)
    np.testing.assert_allclose(tau_min, 30.0 / SPEED_OF_LIGHT, rtol=1e-12)
    np.testing.assert_allclose(tau_max, np.sqrt(2625.0) / SPEED_OF_LIGHT, rtol=1e-12)


def test_box_helpers():
    box = Box(lo=np.zeros(3), hi=np.array([2.0, 4.0, 6.0]))
    assert box.contains([1, 1, 1])
    assert not box.contains([3, 1, 1])
    np.testing.assert_array_equal(box.clamp([3, -1, 2]), [2, 0, 2])
    assert box.corners().shape == (8, 3)
    lattice = box.lattice((3, 1, 2))
    assert lattice.shape == (6, 3)
    assert np.all(lattice[:, 1] == 2.0)  # single-count axis at center


def test_scenario_json_round_trip(tmp_path, scn):
    text = scenario_to_json(scn)
    back = scenario_from_json(text)
    np.testing.assert_array_equal(back.ue_position, scn.ue_position)
    assert back.num_subcarriers == scn.num_subcarriers
    path = tmp_path / "scenario.json"
    save_scenario(scn, path)
    again = load_scenario(path)
    np.testing.assert_array_equal(again.bs_rotation, scn.bs_rotation)
    np.testing.assert_allclose(again.noise_psd, scn.noise_psd, rtol=0)


def test_snr_power_round_trip(scn):
    p = scn.power_for_snr(10.0)
    scn2 = scn.with_power(p)
    np.testing.assert_allclose(10 * np.log10(scn2.snr_at()), 10.0, atol=1e-12)
