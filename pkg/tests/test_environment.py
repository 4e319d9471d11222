import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwre_lab import _fast, _rng
from rwre_lab.environment import (EnvironmentField, check_ld,
                                  ellipticity_kappa, make_perturbation_law,
                                  omega_window, p_epsilon, site_omega,
                                  two_atom_drift_law, zero_law)
from rwre_lab.kernels import TransitionKernel, symmetric_kernel


@pytest.fixture
def field():
    return EnvironmentField(symmetric_kernel(2), 0.1, two_atom_drift_law(),
                            master_seed=1234)


class TestLaw:
    def test_two_atom_moments(self):
        law = two_atom_drift_law()
        assert np.allclose(law.mean, [0.75, -0.75, 0.0, 0.0])
        assert law.covariance[2, 2] == pytest.approx(0.25)
        assert law.covariance[3, 3] == pytest.approx(0.25)
        assert law.covariance[2, 3] == pytest.approx(-0.25)
        assert np.allclose(law.covariance[0, :], 0.0)

    def test_degenerate_zero_law(self):
        law = zero_law(2)
        assert np.allclose(law.mean, 0.0)
        assert np.allclose(law.covariance, 0.0)

    def test_rejects_nonzero_row_sum(self):
        atoms = np.array([[0.05, 0.05, 0.0, 0.0]])
        with pytest.raises(ValueError, match="sum to 0"):
            make_perturbation_law(atoms, [1.0])

    def test_rejects_out_of_range_entries(self):
        atoms = np.array([[1.5, -1.5, 0.0, 0.0]])
        with pytest.raises(ValueError, match=r"\[-1, 1\]"):
            make_perturbation_law(atoms, [1.0])

    def test_rejects_bad_weights(self):
        atoms = np.zeros((2, 4))
        with pytest.raises(ValueError):
            make_perturbation_law(atoms, [0.7, 0.7])
        with pytest.raises(ValueError):
            make_perturbation_law(atoms, [1.2, -0.2])

    def test_json_round_trip(self, tmp_path):
        law = two_atom_drift_law()
        path = tmp_path / "law.json"
        law.to_json(path)
        from rwre_lab.environment import PerturbationLaw
        law2 = PerturbationLaw.from_json(path)
        assert np.array_equal(law.atoms, law2.atoms)
        assert np.array_equal(law.weights, law2.weights)


class TestField:
    def test_kappa(self, field):
        assert ellipticity_kappa(field) == pytest.approx(0.15)

    def test_epsilon_at_min_prob_rejected(self):
        with pytest.raises(ValueError, match="disorder too large"):
            EnvironmentField(symmetric_kernel(2), 0.25, two_atom_drift_law(),
                             1)

    def test_kappa_limit_small_epsilon(self):
        f = EnvironmentField(symmetric_kernel(2), 1e-9, two_atom_drift_law(),
                             1)
        assert ellipticity_kappa(f) == pytest.approx(0.25, abs=1e-8)

    def test_p_epsilon_two_atom(self, field):
        pe = p_epsilon(field)
        assert np.allclose(pe.probs, [0.325, 0.175, 0.25, 0.25])
        assert pe.probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_p_epsilon_zero_mean_law(self):
        atoms = np.array([[0.5, -0.5, 0.0, 0.0], [-0.5, 0.5, 0.0, 0.0]])
        law = make_perturbation_law(atoms, [0.5, 0.5])
        f = EnvironmentField(symmetric_kernel(2), 0.1, law, 1)
        assert np.allclose(p_epsilon(f).probs, 0.25)

    def test_check_ld_examples(self, field):
        ok, margin = check_ld(field)
        assert ok and margin == pytest.approx(0.05)
        # zero-mean law with symmetric backbone fails
        atoms = np.array([[0.5, -0.5, 0.0, 0.0], [-0.5, 0.5, 0.0, 0.0]])
        f2 = EnvironmentField(symmetric_kernel(2), 0.1,
                              make_perturbation_law(atoms, [0.5, 0.5]), 1)
        ok2, margin2 = check_ld(f2)
        assert not ok2 and margin2 == pytest.approx(-0.1)
        # backbone drift 0.2 with eps 0.1 passes
        p0 = TransitionKernel(np.array([0.35, 0.15, 0.25, 0.25]))
        f3 = EnvironmentField(p0, 0.1,
                              make_perturbation_law(atoms, [0.5, 0.5]), 1)
        ok3, margin3 = check_ld(f3)
        assert ok3 and margin3 == pytest.approx(0.1)

    def test_check_ld_ignores_zero_weight_atoms(self, field):
        law = field.law
        atoms = np.vstack([law.atoms, [[0.3, -0.3, 0.0, 0.0]]])
        law2 = make_perturbation_law(atoms, np.append(law.weights, 0.0))
        f2 = EnvironmentField(field.p0, field.epsilon, law2,
                              field.master_seed)
        assert check_ld(f2) == check_ld(field)

    def test_site_lookup_deterministic(self, field):
        a = site_omega(field, (17, -4))
        b = site_omega(field, (17, -4))
        assert np.array_equal(a.omega, b.omega)
        assert a.atom_index == b.atom_index

    def test_single_atom_law_everywhere(self):
        f = EnvironmentField(symmetric_kernel(2), 0.1, zero_law(2), 9)
        for x in [(0, 0), (5, 3), (-100, 42)]:
            sc = site_omega(f, x)
            assert sc.atom_index == 0
            assert np.allclose(sc.omega, 0.25)

    def test_site_config_consistency(self, field):
        sc = site_omega(field, (2, 3))
        assert sc.omega.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(sc.omega >= field.kappa)
        assert np.allclose(sc.xi_bar, sc.xi - field.law.mean)
        drift = sc.local_drift()
        assert drift[0] == pytest.approx(
            sc.omega[0] - sc.omega[1], abs=1e-15)

    def test_translation_consistency(self, field):
        for shift in [(3, -2), (-7, 11)]:
            shifted = field.shifted(shift)
            for probe in [(0, 0), (1, 5)]:
                a = site_omega(field, tuple(np.add(shift, probe)))
                b = site_omega(shifted, probe)
                assert np.array_equal(a.omega, b.omega)

    def test_empirical_atom_frequencies(self, field):
        # multinomial 4-sigma band over 10^6 sites
        n = 1_000_000
        idx = field.atom_window((0, 0), (999, 999))
        counts = np.bincount(idx.reshape(-1), minlength=2)
        for a, w in enumerate(field.law.weights):
            se = np.sqrt(n * w * (1 - w))
            assert abs(counts[a] - n * w) <= 4 * se

    def test_empirical_mean_of_xi(self, field):
        # mean of xi(e2) over N sites within 4 sigma of the law mean
        n = 250_000
        idx = field.atom_window((0, 0), (499, 499)).reshape(-1)
        xi_e2 = field.law.atoms[idx, 2]
        se = np.sqrt(field.law.covariance[2, 2] / n)
        assert abs(xi_e2.mean() - field.law.mean[2]) <= 4 * se


class TestWindow:
    def test_window_matches_site_lookup(self, field):
        w = omega_window(field, (-3, -2), (4, 5))
        for x in [(-3, -2), (0, 0), (4, 5), (2, -1)]:
            assert np.allclose(w.row(x), site_omega(field, x).omega)

    def test_window_outside_raises(self, field):
        w = omega_window(field, (-1, -1), (1, 1))
        with pytest.raises(KeyError):
            w.row((2, 0))

    def test_rows_validate(self, field):
        w = omega_window(field, (-2, -2), (2, 2))
        w.validate_rows()
        w.probs[0, 0, 0] += 0.5
        with pytest.raises(ValueError):
            w.validate_rows()


class TestHashAgreement:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 62), st.integers(-10 ** 6, 10 ** 6),
           st.integers(-10 ** 6, 10 ** 6))
    def test_python_numpy_numba_agree(self, seed, x1, x2):
        a = _rng.counter_u01(seed, x1, x2)
        b = _rng.site_u01_array(seed, np.array([[x1, x2]]))[0]
        c = _fast._site_u01_2d(seed, x1, x2)
        assert a == b == c

    def test_uniformity_chi_square(self):
        # 16-bin chi-square over 100k hashed sites; 4-sigma band on the stat
        u = _rng.site_u01_array(
            7, np.stack(np.meshgrid(np.arange(400), np.arange(250),
                                    indexing="ij"), axis=-1))
        counts, _ = np.histogram(u.reshape(-1), bins=16, range=(0, 1))
        n = u.size
        expected = n / 16
        chi2 = ((counts - expected) ** 2 / expected).sum()
        # chi-square(15): mean 15, sd sqrt(30)
        assert chi2 <= 15 + 4 * np.sqrt(30)
