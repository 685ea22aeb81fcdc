"""Geometry oracles: directions, rotations, delays, and the eta layout.

Expected values are derived independently in-test (literal matrices,
hand algebra on the default scene coordinates) rather than snapshotted
from the implementation.
"""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from snaploc import (
    GeometryError,
    Scene,
    SphericalAngles,
    angles_from_direction,
    arrival_direction,
    axis_angle_rotation,
    channel_params,
    channel_params_from_pose,
    departure_direction,
    direction_from_angles,
    euler_zyx_to_rotation,
    random_rotation,
    rotation_x,
    rotation_y,
    rotation_z,
    skew,
    split_eta,
    toa,
)

from sceneutil import CLOCK_BIAS, P_BS, P_IP1, P_IP2, P_UE, SPEED, default_scene

# literal elementary rotations used as independent references
R_UE_LITERAL = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
R_BS_LITERAL = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestDirections:
    def test_axis_cases(self):
        np.testing.assert_allclose(
            direction_from_angles(SphericalAngles(0.0, np.pi / 2)), [1, 0, 0], atol=1e-15
        )
        np.testing.assert_allclose(
            direction_from_angles(SphericalAngles(np.pi / 2, np.pi / 2)),
            [0, 1, 0],
            atol=1e-15,
        )

    def test_hand_evaluated_direction(self):
        # [sin el cos az, sin el sin az, cos el] at az=pi/4, el=pi/3
        d = direction_from_angles(SphericalAngles(np.pi / 4, np.pi / 3))
        expected = [
            np.sin(np.pi / 3) * np.cos(np.pi / 4),
            np.sin(np.pi / 3) * np.sin(np.pi / 4),
            np.cos(np.pi / 3),
        ]
        np.testing.assert_allclose(d, expected, atol=1e-15)
        np.testing.assert_allclose(d, [0.6124, 0.6124, 0.5], atol=5e-5)

    def test_angles_from_direction_axis_cases(self):
        a = angles_from_direction([0.0, 0.0, 1.0])
        assert a.azimuth == 0.0 and a.elevation == 0.0
        a = angles_from_direction([1.0, 0.0, 0.0])
        assert a.azimuth == pytest.approx(0.0, abs=1e-12)
        assert a.elevation == pytest.approx(np.pi / 2, abs=1e-12)
        a = angles_from_direction([-1.0, 0.0, 0.0])
        assert a.azimuth == pytest.approx(np.pi, abs=1e-12)
        assert a.elevation == pytest.approx(np.pi / 2, abs=1e-12)

    def test_non_unit_rejected(self):
        with pytest.raises(Exception):
            angles_from_direction([1.0, 1.0, 1.0])

    @given(
        az=st.floats(0.0, 2 * np.pi, exclude_max=True),
        el=st.floats(1e-6, np.pi - 1e-6),
    )
    @settings(deadline=None)
    def test_round_trip(self, az, el):
        d = direction_from_angles(SphericalAngles(az, el))
        assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)
        back = angles_from_direction(d)
        d2 = direction_from_angles(back)
        np.testing.assert_allclose(d2, d, atol=1e-10)


class TestRotations:
    def test_elementary_literals(self):
        np.testing.assert_allclose(rotation_x(np.pi / 2), R_UE_LITERAL, atol=1e-15)
        np.testing.assert_allclose(rotation_x(-np.pi / 2), R_BS_LITERAL, atol=1e-15)
        np.testing.assert_allclose(
            rotation_z(np.pi / 2), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15
        )

    def test_euler_identity(self):
        np.testing.assert_allclose(euler_zyx_to_rotation(0, 0, 0), np.eye(3), atol=1e-15)

    def test_euler_matches_explicit_product(self):
        alpha, beta, gamma = np.pi / 6, -np.pi / 4, -np.pi / 36
        expected = rotation_z(alpha) @ rotation_y(beta) @ rotation_x(gamma)
        np.testing.assert_allclose(
            euler_zyx_to_rotation(alpha, beta, gamma), expected, atol=1e-14
        )
        # cross-check against an established implementation
        ref = ScipyRotation.from_euler("ZYX", [alpha, beta, gamma]).as_matrix()
        np.testing.assert_allclose(expected, ref, atol=1e-13)

    def test_skew_literal_and_identities(self):
        np.testing.assert_allclose(
            skew([1.0, 0.0, 0.0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]], atol=0
        )
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = rng.normal(size=3)
            v = rng.normal(size=3)
            np.testing.assert_allclose(skew(d) @ v, np.cross(d, v), atol=1e-12)
            np.testing.assert_allclose(skew(d) @ d, 0.0, atol=1e-12)
            np.testing.assert_allclose(skew(d).T, -skew(d), atol=0)

    def test_axis_angle_against_rotvec(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            u = unit(rng.normal(size=3))
            psi = rng.uniform(0, 2 * np.pi)
            got = axis_angle_rotation(u, psi)
            ref = ScipyRotation.from_rotvec(psi * u).as_matrix()
            np.testing.assert_allclose(got, ref, atol=1e-12)
            np.testing.assert_allclose(got @ u, u, atol=1e-12)

    def test_axis_angle_group_property(self):
        u = unit([1.0, -2.0, 0.5])
        a, b = 0.7, 1.9
        np.testing.assert_allclose(
            axis_angle_rotation(u, a) @ axis_angle_rotation(u, b),
            axis_angle_rotation(u, a + b),
            atol=1e-12,
        )

    def test_axis_angle_zero_is_identity(self):
        np.testing.assert_allclose(
            axis_angle_rotation([0.0, 0.0, 1.0], 0.0), np.eye(3), atol=0
        )
        np.testing.assert_allclose(
            axis_angle_rotation([0.0, 0.0, 1.0], np.pi / 2),
            rotation_z(np.pi / 2),
            atol=1e-15,
        )

    def test_random_rotation_properties(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            r = random_rotation(rng)
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-10)
        r1 = random_rotation(np.random.default_rng(5))
        r2 = random_rotation(np.random.default_rng(5))
        np.testing.assert_array_equal(r1, r2)


class TestSceneGeometry:
    def test_arrival_los_hand_derived(self, scene):
        expected = R_UE_LITERAL.T @ unit(P_BS - P_UE)
        np.testing.assert_allclose(arrival_direction(scene, 0), expected, atol=1e-14)
        # numeric value worked out from the literal coordinates
        np.testing.assert_allclose(
            expected,
            np.array([-1.0, 3.0, 4.0]) / np.sqrt(26.0),
            atol=1e-14,
        )

    def test_arrival_simple_offset(self):
        s = Scene(
            p_bs=np.array([0.0, 0.0, 5.0]),
            r_bs=np.eye(3),
            p_ue=np.zeros(3),
            r_ue=np.eye(3),
            ips=np.array([[1.0, 1.0, 1.0]]),
            clock_bias=0.0,
            reflection_coeffs=np.array([0.5]),
        )
        np.testing.assert_allclose(arrival_direction(s, 0), [0, 0, 1], atol=1e-15)

    def test_departure_nlos_hand_derived(self, scene):
        expected = R_BS_LITERAL.T @ (np.array([4.0, 2.0, -3.0]) / np.sqrt(29.0))
        np.testing.assert_allclose(departure_direction(scene, 1), expected, atol=1e-14)

    def test_departure_simple_offset(self):
        s = Scene(
            p_bs=np.zeros(3),
            r_bs=np.eye(3),
            p_ue=np.array([3.0, 0.0, 4.0]),
            r_ue=np.eye(3),
            ips=np.array([[1.0, 1.0, 1.0]]),
            clock_bias=0.0,
            reflection_coeffs=np.array([0.5]),
        )
        np.testing.assert_allclose(departure_direction(s, 0), [0.6, 0.0, 0.8], atol=1e-15)

    def test_los_direction_identity(self, scene):
        lhs = scene.r_bs @ departure_direction(scene, 0)
        rhs = -scene.r_ue @ arrival_direction(scene, 0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_directions_unit_norm_under_rotation(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            s = dataclasses.replace(default_scene(), r_ue=random_rotation(rng))
            for m in range(3):
                assert np.linalg.norm(arrival_direction(s, m)) == pytest.approx(1.0, abs=1e-12)

    def test_toa_hand_values(self, scene):
        tau0 = np.sqrt(26.0) / SPEED + CLOCK_BIAS
        assert toa(scene, 0) == pytest.approx(tau0, rel=1e-14)
        assert toa(scene, 0) == pytest.approx(1.1699673171197594e-07, rel=1e-12)
        tau1 = (np.linalg.norm(P_IP1 - P_BS) + np.linalg.norm(P_UE - P_IP1)) / SPEED + CLOCK_BIAS
        assert toa(scene, 1) == pytest.approx(tau1, rel=1e-14)
        tau2 = (np.linalg.norm(P_IP2 - P_BS) + np.linalg.norm(P_UE - P_IP2)) / SPEED + CLOCK_BIAS
        assert toa(scene, 2) == pytest.approx(tau2, rel=1e-14)

    def test_toa_unit_distance(self):
        s = Scene(
            p_bs=np.zeros(3),
            r_bs=np.eye(3),
            p_ue=np.array([SPEED, 0.0, 0.0]),
            r_ue=np.eye(3),
            ips=np.array([[1.0, 1.0, 1.0]]),
            clock_bias=0.0,
            reflection_coeffs=np.array([0.5]),
        )
        assert toa(s, 0) == pytest.approx(1.0, rel=1e-12)

    def test_reflected_delay_dominates_los(self, scene):
        t0 = toa(scene, 0)
        for m in (1, 2):
            assert toa(scene, m) >= t0


class TestChannelParams:
    def test_eta_layout(self, scene):
        cp = channel_params(scene)
        eta = cp.eta
        assert eta.shape == (15,)
        m_plus_1 = 3
        # AoAs (az, el interleaved), AoDs, then ToAs
        np.testing.assert_array_equal(eta[: 2 * m_plus_1], cp.aoa.reshape(-1))
        np.testing.assert_array_equal(eta[2 * m_plus_1 : 4 * m_plus_1], cp.aod.reshape(-1))
        np.testing.assert_array_equal(eta[4 * m_plus_1 :], cp.toa)
        aoa, aod, tau = split_eta(eta, num_paths=3)
        np.testing.assert_array_equal(aoa, cp.aoa)
        np.testing.assert_array_equal(aod, cp.aod)
        np.testing.assert_array_equal(tau, cp.toa)

    def test_angles_match_direction_oracle(self, scene):
        cp = channel_params(scene)
        d0 = R_UE_LITERAL.T @ unit(P_BS - P_UE)
        assert cp.aoa[0, 0] == pytest.approx(np.arctan2(d0[1], d0[0]) % (2 * np.pi), abs=1e-12)
        assert cp.aoa[0, 1] == pytest.approx(np.arccos(d0[2]), abs=1e-12)
        d1 = R_BS_LITERAL.T @ unit(P_IP1 - P_BS)
        assert cp.aod[1, 0] == pytest.approx(np.arctan2(d1[1], d1[0]) % (2 * np.pi), abs=1e-12)
        assert cp.aod[1, 1] == pytest.approx(np.arccos(d1[2]), abs=1e-12)

    def test_from_pose_matches_scene(self, scene):
        cp = channel_params(scene)
        cp2 = channel_params_from_pose(
            scene.r_ue, scene.p_ue, scene.ips, scene.p_bs, scene.r_bs, scene.clock_bias
        )
        np.testing.assert_allclose(cp2.eta, cp.eta, atol=1e-15)

    def test_ip_permutation_permutes_blocks(self, scene):
        swapped = dataclasses.replace(
            scene,
            ips=scene.ips[::-1].copy(),
            reflection_coeffs=scene.reflection_coeffs[::-1].copy(),
        )
        cp = channel_params(scene)
        cps = channel_params(swapped)
        np.testing.assert_array_equal(cps.aoa[0], cp.aoa[0])
        np.testing.assert_array_equal(cps.aoa[1], cp.aoa[2])
        np.testing.assert_array_equal(cps.aoa[2], cp.aoa[1])
        np.testing.assert_array_equal(cps.toa[1:], cp.toa[1:][::-1])


class TestSceneValidation:
    def test_requires_at_least_one_ip(self):
        with pytest.raises(GeometryError):
            Scene(
                p_bs=P_BS,
                r_bs=np.eye(3),
                p_ue=P_UE,
                r_ue=np.eye(3),
                ips=np.zeros((0, 3)),
                clock_bias=0.0,
                reflection_coeffs=np.zeros(0),
            )

    def test_rejects_coincident_points(self):
        with pytest.raises(GeometryError):
            Scene(
                p_bs=P_BS,
                r_bs=np.eye(3),
                p_ue=P_BS.copy(),
                r_ue=np.eye(3),
                ips=np.array([[1.0, 1.0, 1.0]]),
                clock_bias=0.0,
                reflection_coeffs=np.array([0.5]),
            )

    def test_rejects_non_rotation(self):
        with pytest.raises(GeometryError):
            Scene(
                p_bs=P_BS,
                r_bs=np.eye(3) * 2.0,
                p_ue=P_UE,
                r_ue=np.eye(3),
                ips=np.array([[1.0, 1.0, 1.0]]),
                clock_bias=0.0,
                reflection_coeffs=np.array([0.5]),
            )

    def test_coefficient_count_must_match(self):
        with pytest.raises(GeometryError):
            Scene(
                p_bs=P_BS,
                r_bs=np.eye(3),
                p_ue=P_UE,
                r_ue=np.eye(3),
                ips=np.array([[1.0, 1.0, 1.0]]),
                clock_bias=0.0,
                reflection_coeffs=np.array([0.5, 0.6]),
            )
