"""Signal model: steering vectors, synthesis, pilots, scenario sampling."""

import numpy as np
import pytest
from scipy.special import i0e, i1e

from chanest.model import (
    DegeneratePilotsError,
    PathParams,
    PhysicalGrid,
    ScenarioConfig,
    check_isotropy,
    generate_isotropic_pilots,
    omega_to_physical,
    phi_to_psi,
    physical_to_omega,
    sample_channels,
    sample_scenario,
    steering,
    synthesize_mean,
    synthesize_received,
    theta_to_chi,
    wrap_phase,
)


def small_config(**kw):
    base = dict(K=1, L=(1,), Nc=6, Ns=4, Nr=3, Nt=2, N0=1e-6,
                tx_powers=(-40.0,), seed=0)
    base.update(kw)
    return ScenarioConfig(**base)


def naive_mean(channels, pilots, config):
    """Five-nested-loop synthesis oracle, element by element."""
    out = np.zeros((config.Nc, config.Ns, config.Nr), dtype=complex)
    for k in range(config.K):
        for p in channels[k]:
            for n in range(config.Nc):
                for t in range(config.Ns):
                    s = 0j
                    for v in range(config.Nt):
                        s += np.exp(-1j * np.pi * v * np.sin(p.theta)) \
                            * pilots[k][n, t, v]
                    for u in range(config.Nr):
                        out[n, t, u] += (
                            p.b
                            * np.exp(1j * p.omega1 * n)
                            * np.exp(1j * p.omega2 * t)
                            * np.exp(-1j * np.pi * u * np.sin(p.phi))
                            * s
                        )
    return out


class TestSteering:
    def test_zero_angle(self):
        assert np.allclose(steering(0.0, 4), np.ones(4))

    def test_broadside(self):
        assert np.allclose(steering(np.pi / 2, 2), [1, -1])

    def test_thirty_degrees(self):
        assert np.allclose(steering(np.pi / 6, 3), [1, -1j, -1])

    def test_unit_modulus_any_angle(self):
        rng = np.random.default_rng(0)
        for angle in rng.uniform(-np.pi / 2, np.pi / 2, 20):
            a = steering(angle, 7)
            assert a[0] == 1.0
            assert np.allclose(np.abs(a), 1.0)


class TestSynthesizeMean:
    def test_all_ones(self):
        cfg = small_config(Nt=3)
        pilots = [np.zeros((cfg.Nc, cfg.Ns, cfg.Nt), dtype=complex)]
        pilots[0][:, :, 0] = 1.0
        p = PathParams(b=1.0, omega1=0.0, omega2=0.0, phi=0.0, theta=0.0)
        mean = synthesize_mean([[p]], pilots, cfg)
        assert np.allclose(mean, 1.0, atol=1e-14)

    def test_linearity_in_gain(self):
        cfg = small_config(Nt=3)
        pilots = [np.zeros((cfg.Nc, cfg.Ns, cfg.Nt), dtype=complex)]
        pilots[0][:, :, 0] = 1.0
        p1 = PathParams(b=1.0, omega1=0.0, omega2=0.0, phi=0.0, theta=0.0)
        p2 = PathParams(b=2.0, omega1=0.0, omega2=0.0, phi=0.0, theta=0.0)
        m1 = synthesize_mean([[p1]], pilots, cfg)
        m2 = synthesize_mean([[p2]], pilots, cfg)
        assert np.allclose(m2, 2.0 * m1, atol=1e-14)

    def test_matches_naive_loop_oracle(self):
        cfg = ScenarioConfig(K=2, L=(3, 3), Nc=5, Ns=4, Nr=3, Nt=2,
                             N0=1e-6, tx_powers=(-40.0, -42.0), seed=5)
        sc = sample_scenario(cfg, noiseless=True)
        expected = naive_mean(sc.channels, sc.pilots, cfg)
        got = synthesize_mean(sc.channels, sc.pilots, cfg)
        assert np.max(np.abs(got - expected)) < 1e-12

    def test_additive_over_paths(self):
        cfg = ScenarioConfig(K=1, L=(4,), Nc=6, Ns=4, Nr=3, Nt=2,
                             N0=1e-6, tx_powers=(-40.0,), seed=9)
        sc = sample_scenario(cfg, noiseless=True)
        a, b = sc.channels[0][:2], sc.channels[0][2:]
        total = synthesize_mean([a + b], sc.pilots, cfg)
        split = synthesize_mean([a], sc.pilots, cfg) \
            + synthesize_mean([b], sc.pilots, cfg)
        assert np.max(np.abs(total - split)) < 1e-12


class TestSynthesizeReceived:
    def test_noiseless_limit(self):
        cfg = small_config()
        sc = sample_scenario(cfg, noiseless=True)
        mean = synthesize_mean(sc.channels, sc.pilots, cfg)
        got = synthesize_received(sc.channels, sc.pilots, cfg, 1, noise_var=0.0)
        assert np.array_equal(got, mean)

    def test_same_seed_identical(self):
        cfg = small_config()
        sc = sample_scenario(cfg)
        a = synthesize_received(sc.channels, sc.pilots, cfg, 42)
        b = synthesize_received(sc.channels, sc.pilots, cfg, 42)
        assert np.array_equal(a, b)

    def test_noise_variance(self):
        cfg = ScenarioConfig(K=1, L=(1,), Nc=30, Ns=15, Nr=32, Nt=4,
                             N0=3e-7, tx_powers=(-40.0,), seed=3)
        sc = sample_scenario(cfg, noiseless=True)
        mean = synthesize_mean(sc.channels, sc.pilots, cfg)
        noisy = synthesize_received(sc.channels, sc.pilots, cfg, 7)
        w = noisy - mean
        var = np.mean(np.abs(w) ** 2)
        assert abs(var - cfg.N0) / cfg.N0 < 0.05


class TestPilots:
    def test_single_antenna(self):
        cfg = small_config(Nt=1, tx_powers=(0.0,))
        x = generate_isotropic_pilots(cfg, 0)[0]
        assert np.allclose(np.abs(x[:, :, 0]), 1.0)

    @pytest.mark.parametrize("Nt", [1, 2, 4, 8])
    def test_isotropy_by_construction(self, Nt):
        cfg = ScenarioConfig(K=1, L=(1,), Nc=12, Ns=6, Nr=4, Nt=Nt,
                             N0=1e-6, tx_powers=(-40.0,), seed=1)
        x = generate_isotropic_pilots(cfg, 3)[0]
        assert check_isotropy(x) <= 1e-10

    def test_power_scaling(self):
        cfg = small_config(Nt=4, tx_powers=(-40.0,))
        x = generate_isotropic_pilots(cfg, 0)[0]
        mags = np.abs(x[np.abs(x) > 0])
        assert np.allclose(mags, 1e-2)
        assert mags.size == cfg.Nc * cfg.Ns  # exactly one active antenna per RE

    def test_deterministic(self):
        cfg = small_config(Nt=4)
        a = generate_isotropic_pilots(cfg, 11)[0]
        b = generate_isotropic_pilots(cfg, 11)[0]
        assert np.array_equal(a, b)


class TestCheckIsotropy:
    def test_hopping_pilots_pass(self):
        cfg = small_config(Nt=4)
        x = generate_isotropic_pilots(cfg, 2)[0]
        assert check_isotropy(x) <= 1e-10

    def test_all_antennas_equal_fails(self):
        # S(theta) = Nc*Ns*|sum_v e^{-j pi v sin}|^2: strongly angle-dependent
        Nc, Ns, Nt = 6, 4, 4
        x = np.ones((Nc, Ns, Nt), dtype=complex)
        grid = np.linspace(-np.pi / 2, np.pi / 2, 181)
        analytic = Nc * Ns * np.abs(
            np.exp(-1j * np.pi * np.sin(grid)[:, None] * np.arange(Nt)).sum(axis=1)
        ) ** 2
        expected = np.max(np.abs(analytic - analytic.mean())) / analytic.mean()
        got = check_isotropy(x, grid)
        assert got > 0.1
        assert np.isclose(got, expected, rtol=1e-12)

    def test_single_tx_antenna_zero(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 4, 1)) + 1j * rng.normal(size=(5, 4, 1))
        assert check_isotropy(x) == 0.0

    def test_zero_power_rejected(self):
        with pytest.raises(DegeneratePilotsError):
            check_isotropy(np.zeros((5, 4, 2), dtype=complex))

    def test_small_grid_rejected(self):
        x = np.ones((5, 4, 1), dtype=complex)
        with pytest.raises(ValueError):
            check_isotropy(x, np.linspace(-1.5, 1.5, 8))


def rice_mean(nu, sigma):
    """Analytic Rice mean via scaled Bessel functions (oracle)."""
    x = -nu**2 / (2 * sigma**2)
    # L_{1/2}(x) = e^{x/2}((1-x) I0(-x/2) - x I1(-x/2)); use exponentially
    # scaled Bessels for stability
    laguerre = (1 - x) * i0e(-x / 2) - x * i1e(-x / 2)
    return sigma * np.sqrt(np.pi / 2) * laguerre


class TestSampleScenario:
    def test_same_seed_identical_truth(self):
        cfg = ScenarioConfig(seed=123)
        a = sample_scenario(cfg)
        b = sample_scenario(cfg)
        assert a.channels == b.channels
        assert np.array_equal(a.received, b.received)

    def test_rice_mean_matches_formula(self):
        nu, sigma = 1e-2, 5e-3
        cfg = ScenarioConfig(K=1, L=(10000,), Nc=2, Ns=2, Nr=2, Nt=1,
                             N0=1e-6, tx_powers=(-40.0,), los_boost=1.0, seed=77)
        rng = np.random.default_rng(cfg.seed)
        mags = np.array([abs(p.b) for p in sample_channels(cfg, rng)[0]])
        mean = rice_mean(nu, sigma)
        var = nu**2 + 2 * sigma**2 - mean**2
        tol = 3 * np.sqrt(var / len(mags))
        assert abs(mags.mean() - mean) < tol

    def test_los_boost_applied_once(self):
        cfg = ScenarioConfig(K=2, L=(5, 5), seed=3)
        plain = sample_channels(ScenarioConfig(K=2, L=(5, 5), seed=3,
                                               los_boost=1.0),
                                np.random.default_rng(3))
        boosted = sample_channels(cfg, np.random.default_rng(3))
        for k in range(2):
            m_plain = np.array([abs(p.b) for p in plain[k]])
            m_boost = np.array([abs(p.b) for p in boosted[k]])
            i = np.argmax(m_plain)
            assert np.isclose(m_boost[i], 1.5 * m_plain[i])
            mask = np.arange(len(m_plain)) != i
            assert np.allclose(m_boost[mask], m_plain[mask])

    def test_parameters_strictly_inside_domains(self):
        cfg = ScenarioConfig(K=2, L=(20, 20), seed=5)
        for paths in sample_scenario(cfg).channels:
            for p in paths:
                assert -np.pi < p.omega1 < np.pi
                assert -np.pi < p.omega2 < np.pi
                assert -np.pi / 2 < p.phi < np.pi / 2
                assert -np.pi / 2 < p.theta < np.pi / 2
                assert abs(p.b) > 0


class TestOmegaPhysical:
    def test_zero(self):
        grid = PhysicalGrid(f_scs=15e3, Ts=1e-4)
        assert omega_to_physical(0.0, 0.0, grid) == (0.0, 0.0)

    def test_known_delay(self):
        grid = PhysicalGrid(f_scs=15e3, Ts=1e-4)
        delay, _ = omega_to_physical(-2 * np.pi * 15e3 * 1e-6, 0.0, grid)
        assert np.isclose(delay, 1e-6)

    def test_round_trip(self):
        grid = PhysicalGrid(f_scs=120e3, Ts=8.9e-6)
        rng = np.random.default_rng(1)
        for _ in range(10):
            d, f = rng.uniform(-1e-6, 1e-6), rng.uniform(-5e3, 5e3)
            w1, w2 = physical_to_omega(d, f, grid)
            d2, f2 = omega_to_physical(w1, w2, grid)
            assert abs(d - d2) < 1e-12 * max(1, abs(d))
            assert abs(f - f2) < 1e-12 * max(1, abs(f))


class TestWrapPhase:
    def test_identity_inside(self):
        assert wrap_phase(1.0) == 1.0
        assert wrap_phase(-3.0) == -3.0

    def test_boundary_convention(self):
        assert wrap_phase(np.pi) == np.pi
        assert wrap_phase(-np.pi) == np.pi

    def test_multiple_turns(self):
        assert np.isclose(wrap_phase(3 * np.pi + 0.1), -np.pi + 0.1)
        x = np.array([0.0, 2 * np.pi, -2 * np.pi + 0.5])
        assert np.allclose(wrap_phase(x), [0.0, 0.0, 0.5])

    def test_phase_domain_conversions(self):
        rng = np.random.default_rng(4)
        for phi in rng.uniform(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6, 20):
            from chanest.model import chi_to_theta, psi_to_phi

            assert abs(psi_to_phi(phi_to_psi(phi)) - phi) < 1e-12
            assert abs(chi_to_theta(theta_to_chi(phi)) - phi) < 1e-12


class TestConfigValidation:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            ScenarioConfig(K=0, L=(), tx_powers=())
        with pytest.raises(ValueError):
            ScenarioConfig(Nc=0)
        with pytest.raises(ValueError):
            ScenarioConfig(N0=0.0)
        with pytest.raises(ValueError):
            ScenarioConfig(L=(3,))  # length mismatch with K=2

    def test_path_params_domain(self):
        with pytest.raises(ValueError):
            PathParams(b=1.0, omega1=4.0, omega2=0.0, phi=0.0, theta=0.0)
        with pytest.raises(ValueError):
            PathParams(b=1.0, omega1=0.0, omega2=0.0, phi=np.pi / 2, theta=0.0)
        with pytest.raises(ValueError):
            PathParams(b=np.nan, omega1=0.0, omega2=0.0, phi=0.0, theta=0.0)
