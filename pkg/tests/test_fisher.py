"""Information-matrix oracles.

The analytic FIM and pose Jacobian are checked against central finite
differences built on an independent observation assembly; constraint
and bound identities are checked against their defining algebra.
"""

import dataclasses

import numpy as np
import pytest
from scipy.special import i0e, i1e

from snaploc import (
    NonIdentifiableError,
    SphericalAngles,
    array_response,
    arrays_for_config,
    bounds_for_scene,
    bounds_from_ccrb,
    ccrb,
    channel_params,
    channel_params_from_pose,
    constraint_gradient,
    constraint_nullspace,
    constraint_values,
    decorrelate,
    efim_channel,
    fim_channel,
    fim_localization,
    identifiability_margin,
    jacobian_upsilon,
    kappa_from_variance,
    likelihood_params,
    path_gains,
    random_rotation,
)

from sceneutil import SPEED, TX_POWER, default_config, default_scene


def observations_from_eta(aoa, aod, tau, gains, config):
    """Independent pilot-grid assembly driven directly by channel params."""
    ue_array, bs_array = arrays_for_config(config)
    num_paths = len(tau)
    k_count = config.num_symbols
    n_idx = np.arange(config.num_subcarriers)
    pilot = np.sqrt(config.symbol_energy)
    out = np.zeros((k_count, config.num_subcarriers), dtype=complex)
    for m in range(num_paths):
        a_ue = array_response(ue_array, SphericalAngles(aoa[m, 0], aoa[m, 1]), config.wavelength)
        a_bs = array_response(bs_array, SphericalAngles(aod[m, 0], aod[m, 1]), config.wavelength)
        coupling = (config.combiners.conj() @ a_ue) * (config.precoders @ a_bs)
        ramp = np.exp(-2j * np.pi * n_idx * config.subcarrier_spacing * tau[m])
        out += gains[m] * pilot * coupling[:, None] * ramp[None, :]
    return out


def fim_by_finite_differences(scene, gains, config):
    """Slepian-Bangs FIM from central differences of the mean observations."""
    cp = channel_params(scene)
    num_paths = cp.num_paths
    gains = np.asarray(gains, dtype=complex)

    def mu(aoa, aod, tau, g):
        return observations_from_eta(aoa, aod, tau, g, config).ravel()

    columns = []

    def fd(apply, h):
        hi = mu(*apply(+h))
        lo = mu(*apply(-h))
        return (hi - lo) / (2 * h)

    for m in range(num_paths):
        for col in range(2):
            def bump_aoa(h, m=m, col=col):
                a = cp.aoa.copy()
                a[m, col] += h
                return a, cp.aod, cp.toa, gains
            columns.append(fd(bump_aoa, 1e-6))
    for m in range(num_paths):
        for col in range(2):
            def bump_aod(h, m=m, col=col):
                a = cp.aod.copy()
                a[m, col] += h
                return cp.aoa, a, cp.toa, gains
            columns.append(fd(bump_aod, 1e-6))
    for m in range(num_paths):
        def bump_tau(h, m=m):
            t = cp.toa.copy()
            t[m] += h
            return cp.aoa, cp.aod, t, gains
        columns.append(fd(bump_tau, 1e-13))
    for part in (1.0, 1.0j):
        for m in range(num_paths):
            def bump_gain(h, m=m, part=part):
                g = gains.copy()
                g[m] += part * h
                return cp.aoa, cp.aod, cp.toa, g
            columns.append(fd(bump_gain, 1e-9))

    D = np.column_stack(columns)
    return (2.0 / config.noise_variance) * np.real(D.conj().T @ D)


def wrapped_eta_difference(hi, lo, num_paths):
    """eta difference with angle rows taken mod 2pi (azimuths may wrap)."""
    diff = hi - lo
    n_angles = 4 * num_paths
    diff[:n_angles] = np.mod(diff[:n_angles] + np.pi, 2 * np.pi) - np.pi
    return diff


def upsilon_by_finite_differences(scene):
    """Pose Jacobian from central differences of the channel parameters."""
    def eta_of(r, p_ue, ips, b):
        return channel_params_from_pose(
            r, p_ue, ips, scene.p_bs, scene.r_bs, b, scene.propagation_speed
        ).eta

    r0 = scene.r_ue
    base_args = [r0.copy(), scene.p_ue.copy(), scene.ips.copy(), scene.clock_bias]
    num_cols = 9 + 3 + 3 * scene.num_ips + 1
    cols = []
    for j in range(num_cols):
        if j < 9:
            h = 1e-7

            def apply(s, j=j):
                r = r0.copy()
                r[j % 3, j // 3] += s  # column-stacked entry order
                return eta_of(r, base_args[1], base_args[2], base_args[3])
        elif j < 12:
            h = 1e-7

            def apply(s, j=j):
                p = base_args[1].copy()
                p[j - 9] += s
                return eta_of(r0, p, base_args[2], base_args[3])
        elif j < num_cols - 1:
            h = 1e-7

            def apply(s, j=j):
                ips = base_args[2].copy()
                ips[(j - 12) // 3, (j - 12) % 3] += s
                return eta_of(r0, base_args[1], ips, base_args[3])
        else:
            h = 1e-9

            def apply(s):
                return eta_of(r0, base_args[1], base_args[2], base_args[3] + s)

        cols.append(wrapped_eta_difference(apply(h), apply(-h), 3) / (2 * h))
    return np.column_stack(cols)


def rel_frobenius(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestFimChannel:
    def test_matches_finite_differences(self, scene):
        cfg = default_config(num_subcarriers=64, num_symbols=4, seed=10)
        gains = path_gains(scene, cfg.wavelength, np.random.default_rng(10))
        J = fim_channel(scene, gains, cfg)
        J_fd = fim_by_finite_differences(scene, gains, cfg)
        assert rel_frobenius(J, J_fd) < 1e-6

    def test_gain_block_structure(self, scene):
        cfg = default_config(num_subcarriers=32, num_symbols=4, seed=2)
        gains = path_gains(scene, cfg.wavelength, np.random.default_rng(2))
        J = fim_channel(scene, gains, cfg)
        num_paths = 3
        re0 = 5 * num_paths
        im0 = 6 * num_paths
        for m in range(num_paths):
            assert J[re0 + m, re0 + m] == pytest.approx(J[im0 + m, im0 + m], rel=1e-12)
            assert J[re0 + m, im0 + m] == pytest.approx(0.0, abs=1e-9 * J[re0 + m, re0 + m])

    def test_linear_in_transmit_power(self, scene):
        cfg = default_config(num_subcarriers=32, num_symbols=4, seed=3)
        boosted = dataclasses.replace(cfg, transmit_power=10.0 * cfg.transmit_power)
        gains = path_gains(scene, cfg.wavelength, np.random.default_rng(3))
        J1 = fim_channel(scene, gains, cfg)
        J10 = fim_channel(scene, gains, boosted)
        np.testing.assert_allclose(J10, 10.0 * J1, rtol=1e-12)

    def test_symmetric_psd(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(4))
        J = fim_channel(scene, gains, small_config)
        np.testing.assert_allclose(J, J.T, atol=1e-9 * np.abs(J).max())
        w = np.linalg.eigvalsh((J + J.T) / 2)
        assert w.min() >= -1e-9 * w.max()


class TestEfim:
    def test_schur_equals_inverse_block(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(5))
        J = fim_channel(scene, gains, small_config)
        efim = efim_channel(J)
        k = 15
        direct = np.linalg.inv(np.linalg.inv(J)[:k, :k])
        np.testing.assert_allclose(efim, direct, rtol=1e-8)

    def test_block_diagonal_passthrough(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(10, 10))
        eta_block = a @ a.T + 10 * np.eye(10)
        b = rng.normal(size=(4, 4))
        gain_block = b @ b.T + np.eye(4)
        J = np.zeros((14, 14))
        J[:10, :10] = eta_block
        J[10:, 10:] = gain_block
        np.testing.assert_allclose(efim_channel(J), eta_block, rtol=1e-12)

    def test_information_loss_ordering(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(7))
        J = fim_channel(scene, gains, small_config)
        efim = efim_channel(J)
        diff = J[:15, :15] - efim
        w = np.linalg.eigvalsh((diff + diff.T) / 2)
        assert w.min() >= -1e-6 * max(1.0, w.max())

    def test_singular_input_raises_with_diagnostics(self):
        J = np.zeros((14, 14))
        J[:10, :10] = np.eye(10)
        with pytest.raises(NonIdentifiableError) as exc:
            efim_channel(J)
        assert exc.value.eigenvalues is not None


class TestJacobianUpsilon:
    def test_matches_finite_differences(self, scene):
        ups = jacobian_upsilon(scene)
        ups_fd = upsilon_by_finite_differences(scene)
        assert rel_frobenius(ups, ups_fd) < 1e-6

    def test_matches_tangent_direction_differences(self, scene):
        ups = jacobian_upsilon(scene)
        basis = constraint_nullspace(scene.r_ue, scene.num_ips)[:9, :3]
        h = 1e-7
        for col in range(3):
            v = basis[:, col]
            hi = channel_params_from_pose(
                scene.r_ue + h * v.reshape(3, 3, order="F"),
                scene.p_ue, scene.ips, scene.p_bs, scene.r_bs, scene.clock_bias,
            ).eta
            lo = channel_params_from_pose(
                scene.r_ue - h * v.reshape(3, 3, order="F"),
                scene.p_ue, scene.ips, scene.p_bs, scene.r_bs, scene.clock_bias,
            ).eta
            fd = wrapped_eta_difference(hi, lo, 3) / (2 * h)
            np.testing.assert_allclose(ups[:, :9] @ v, fd, atol=1e-6 * (1 + np.abs(fd).max()))

    def test_clock_bias_column(self, scene):
        ups = jacobian_upsilon(scene)
        num_paths = 3
        toa_rows = ups[4 * num_paths :, :]
        np.testing.assert_allclose(toa_rows[:, -1], 1.0, atol=1e-14)
        angle_rows = ups[: 4 * num_paths, :]
        np.testing.assert_allclose(angle_rows[:, -1], 0.0, atol=1e-14)

    def test_toa_independent_of_rotation(self, scene):
        ups = jacobian_upsilon(scene)
        np.testing.assert_allclose(ups[12:, :9], 0.0, atol=1e-14)

    def test_los_toa_position_gradient(self, scene):
        ups = jacobian_upsilon(scene)
        expected = (scene.p_ue - scene.p_bs) / (
            SPEED * np.linalg.norm(scene.p_ue - scene.p_bs)
        )
        np.testing.assert_allclose(ups[12, 9:12], expected, rtol=1e-12)


class TestConstraints:
    def test_values_zero_on_rotations(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            h = constraint_values(random_rotation(rng))
            assert h.shape == (6,)
            np.testing.assert_allclose(h, 0.0, atol=1e-12)
        assert np.abs(constraint_values(np.eye(3) * 1.1)).max() > 0.01

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        r = random_rotation(rng)
        num_ips = 2
        G = constraint_gradient(r, num_ips)
        assert G.shape == (6, 9 + 3 * (num_ips + 1) + 1)
        h = 1e-7
        for j in range(9):
            rp = r.copy().reshape(9, order="F")
            rm = rp.copy()
            rp[j] += h
            rm[j] -= h
            fd = (
                constraint_values(rp.reshape(3, 3, order="F"))
                - constraint_values(rm.reshape(3, 3, order="F"))
            ) / (2 * h)
            np.testing.assert_allclose(G[:, j], fd, atol=1e-7)
        np.testing.assert_allclose(G[:, 9:], 0.0, atol=0)

    def test_nullspace_annihilated_by_gradient(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            r = random_rotation(rng)
            M = constraint_nullspace(r, 1)
            G = constraint_gradient(r, 1)
            assert np.abs(G @ M).max() <= 1e-10

    def test_nullspace_orthonormal_and_sized(self):
        rng = np.random.default_rng(11)
        for num_ips in (1, 2, 3):
            r = random_rotation(rng)
            M = constraint_nullspace(r, num_ips)
            cols = 3 * (num_ips + 1) + 4
            assert M.shape == (9 + 3 * (num_ips + 1) + 1, cols)
            np.testing.assert_allclose(M.T @ M, np.eye(cols), atol=1e-12)

    def test_identity_rotation_block_literal(self):
        M = constraint_nullspace(np.eye(3), 1)
        e1, e2, e3 = np.eye(3)
        c1 = np.concatenate([-e3, np.zeros(3), e1]) / np.sqrt(2)
        c2 = np.concatenate([np.zeros(3), -e3, e2]) / np.sqrt(2)
        c3 = np.concatenate([e2, -e1, np.zeros(3)]) / np.sqrt(2)
        np.testing.assert_allclose(M[:9, 0], c1, atol=1e-14)
        np.testing.assert_allclose(M[:9, 1], c2, atol=1e-14)
        np.testing.assert_allclose(M[:9, 2], c3, atol=1e-14)
        np.testing.assert_allclose(M[9:, 3:], np.eye(7), atol=0)
        np.testing.assert_allclose(M[:9, 3:], 0.0, atol=0)


class TestCcrb:
    def test_identity_fim_gives_projector(self):
        M = constraint_nullspace(np.eye(3), 1)
        C = ccrb(np.eye(M.shape[0]), M)
        np.testing.assert_allclose(C, M @ M.T, atol=1e-12)

    def test_constrained_never_exceeds_unconstrained(self):
        rng = np.random.default_rng(12)
        r = random_rotation(rng)
        M = constraint_nullspace(r, 1)
        n = M.shape[0]
        a = rng.normal(size=(n, n))
        J = a @ a.T + n * np.eye(n)
        C = ccrb(J, M)
        diff = np.linalg.inv(J) - C
        w = np.linalg.eigvalsh((diff + diff.T) / 2)
        assert w.min() >= -1e-10 * w.max()

    def test_psd_and_symmetric(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(13))
        report = bounds_for_scene(scene, gains, small_config)
        C = report.ccrb
        np.testing.assert_allclose(C, C.T, atol=1e-9 * np.abs(C).max())
        w = np.linalg.eigvalsh(C)
        assert w.min() >= -1e-10 * w.max()
        assert np.diag(C).min() >= -1e-16

    def test_singular_reduced_fim_raises(self):
        M = constraint_nullspace(np.eye(3), 1)
        with pytest.raises(NonIdentifiableError) as exc:
            ccrb(np.zeros((M.shape[0], M.shape[0])), M)
        assert exc.value.eigenvalues is not None


class TestBoundsFromCcrb:
    def test_crafted_diagonal_blocks(self):
        num_ips = 1
        n = 9 + 3 * (num_ips + 1) + 1
        diag = np.zeros(n)
        diag[:9] = 0.01          # rotation entries
        diag[9:12] = 0.04        # p_ue
        diag[12:15] = 0.25       # ip
        diag[15] = 4e-18         # bias
        rep = bounds_from_ccrb(np.diag(diag), num_ips)
        assert rep.oeb == pytest.approx(0.3, rel=1e-12)
        assert rep.peb == pytest.approx(np.sqrt(0.12), rel=1e-12)
        assert rep.ipeb == pytest.approx(np.sqrt(0.75), rel=1e-12)
        assert rep.seb == pytest.approx(2e-9, rel=1e-12)

    def test_ipeb_averages_over_ips(self):
        num_ips = 2
        n = 9 + 3 * (num_ips + 1) + 1
        diag = np.ones(n)
        diag[12:15] = 0.09
        diag[15:18] = 0.25
        rep = bounds_from_ccrb(np.diag(diag), num_ips)
        assert rep.ipeb == pytest.approx(np.sqrt((0.27 + 0.75) / 2), rel=1e-12)

    def test_power_scaling(self, scene):
        cfg = default_config(num_subcarriers=64, num_symbols=4, seed=14)
        boosted = dataclasses.replace(cfg, transmit_power=10.0 * cfg.transmit_power)
        gains = path_gains(scene, cfg.wavelength, np.random.default_rng(14))
        r1 = bounds_for_scene(scene, gains, cfg)
        r10 = bounds_for_scene(scene, gains, boosted)
        for name in ("oeb", "peb", "ipeb", "seb"):
            ratio = getattr(r10, name) / getattr(r1, name)
            assert ratio == pytest.approx(1.0 / np.sqrt(10.0), rel=1e-9)


class TestLikelihoodParams:
    def test_kappa_root_equation(self):
        # root-solved regime; below 1/500 the closed-form high-SNR limit applies
        variances = np.logspace(np.log10(2.1e-3), 1, 25)
        kappas = kappa_from_variance(variances)
        ratio = kappas * i1e(kappas) / i0e(kappas)
        np.testing.assert_allclose(ratio, 1.0 / variances, rtol=1e-8)

    def test_kappa_reference_value(self):
        assert kappa_from_variance(1.0) == pytest.approx(1.6082794717268794, rel=1e-10)

    def test_high_concentration_fallback(self):
        v = 1e-4
        assert kappa_from_variance(v) == pytest.approx(1.0 / v, rel=1e-10)

    def test_kappa_monotone_in_variance(self):
        v = np.logspace(-3, 1, 12)
        k = kappa_from_variance(v)
        assert np.all(np.diff(k) < 0)

    def test_params_from_efim(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(15))
        efim = efim_channel(fim_channel(scene, gains, small_config))
        lp = likelihood_params(efim)
        cov = np.linalg.inv(efim)
        np.testing.assert_allclose(lp.toa_var, np.diag(cov)[12:], rtol=1e-10)
        np.testing.assert_allclose(lp.sigma_tau, np.diag(np.diag(cov)[12:]), rtol=1e-10)
        angle_vars = np.diag(cov)[:12]
        ratio = lp.kappa_a * i1e(lp.kappa_a) / i0e(lp.kappa_a)
        np.testing.assert_allclose(ratio, 1.0 / angle_vars[:6], rtol=1e-7)
        ratio_d = lp.kappa_d * i1e(lp.kappa_d) / i0e(lp.kappa_d)
        np.testing.assert_allclose(ratio_d, 1.0 / angle_vars[6:], rtol=1e-7)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(Exception):
            likelihood_params(np.zeros((15, 15)))


class TestDecorrelate:
    def test_inverse_marginal_variances(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(16))
        efim = efim_channel(fim_channel(scene, gains, small_config))
        D = decorrelate(efim)
        np.testing.assert_allclose(D, np.diag(np.diag(D)), atol=1e-16)
        np.testing.assert_allclose(
            np.diag(D), 1.0 / np.diag(np.linalg.inv(efim)), rtol=1e-10
        )
        assert np.all(np.diag(D) <= np.diag(efim) * (1 + 1e-12))

    def test_diagonal_passthrough(self):
        J = np.diag([4.0, 9.0, 16.0])
        np.testing.assert_allclose(decorrelate(J), J, rtol=1e-12)


class TestIdentifiability:
    def test_margin_scale_invariant(self):
        assert identifiability_margin(np.eye(4)) == pytest.approx(1.0)
        # wildly different diagonal scales are normalized away
        assert identifiability_margin(np.diag([1e-18, 1.0, 1e18])) == pytest.approx(1.0)

    def test_margin_detects_near_singularity(self):
        J = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
        assert identifiability_margin(J) < 1e-12

    def test_default_scene_bounds_finite_single_ip(self, scene_m1):
        cfg = default_config(num_subcarriers=64, num_symbols=4, seed=17)
        gains = path_gains(scene_m1, cfg.wavelength, np.random.default_rng(17))
        rep = bounds_for_scene(scene_m1, gains, cfg)
        for name in ("oeb", "peb", "ipeb", "seb"):
            assert np.isfinite(getattr(rep, name))

    def test_decorrelated_flag_changes_bounds(self, scene, small_config):
        gains = path_gains(scene, small_config.wavelength, np.random.default_rng(18))
        full = bounds_for_scene(scene, gains, small_config)
        ind = bounds_for_scene(scene, gains, small_config, decorrelated=True)
        assert np.isfinite(ind.peb)
        assert ind.peb != pytest.approx(full.peb, rel=1e-6)
