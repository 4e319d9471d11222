import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwre_lab.kernels import (Direction, TransitionKernel, directions,
                              nstep_probability, phi_eps,
                              potential_kernel_2d_ssrw,
                              potential_kernel_fourier,
                              potential_kernel_table_2d_ssrw,
                              potential_kernel_table_fourier,
                              potential_kernel_table_truncated,
                              potential_kernel_truncated, reverse_kernel,
                              symmetric_kernel)

SSRW_REFS = {
    (0, 0): 0.0,
    (0, 1): -1.0, (0, -1): -1.0, (1, 0): -1.0, (-1, 0): -1.0,
    (1, 1): -4 / math.pi, (1, -1): -4 / math.pi,
    (-1, 1): -4 / math.pi, (-1, -1): -4 / math.pi,
    (0, 2): 8 / math.pi - 4, (0, -2): 8 / math.pi - 4,
    (2, 0): 8 / math.pi - 4, (-2, 0): 8 / math.pi - 4,
}


def random_kernel(rng, d):
    p = rng.uniform(0.05, 1.0, size=2 * d)
    return TransitionKernel(p / p.sum())


class TestDirections:
    def test_count_and_involution(self):
        for d in (1, 2, 3):
            ds = directions(d)
            assert len(ds) == 2 * d
            assert len({e.index for e in ds}) == 2 * d
            for e in ds:
                assert -(-e) == e

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            Direction(0, 2)


class TestTransitionKernel:
    def test_validation(self):
        with pytest.raises(ValueError):
            TransitionKernel(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            TransitionKernel(np.array([-0.1, 1.1]))
        with pytest.raises(ValueError):
            TransitionKernel(np.array([0.5, 0.25, 0.25]))

    def test_symmetric_reverse_fixed_point(self):
        p = symmetric_kernel(2)
        assert np.array_equal(reverse_kernel(p).probs, p.probs)

    def test_reverse_1d(self):
        p = TransitionKernel(np.array([0.7, 0.3]))
        q = reverse_kernel(p)
        assert q.probs[0] == pytest.approx(0.3)
        assert q.probs[1] == pytest.approx(0.7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
    def test_reverse_involution(self, d, seed):
        p = random_kernel(np.random.default_rng(seed), d)
        assert np.allclose(reverse_kernel(reverse_kernel(p)).probs, p.probs)

    def test_drift(self):
        p = TransitionKernel(np.array([0.4, 0.1, 0.25, 0.25]))
        assert np.allclose(p.drift(), [0.3, 0.0])


class TestNStep:
    def test_zero_steps_is_indicator(self):
        t = nstep_probability(symmetric_kernel(2), 0)
        assert t.prob((0, 0)) == 1.0
        assert t.total() == 1.0

    def test_two_step_return_matches_path_enumeration(self):
        # oracle: enumerate all 16 two-step paths of the symmetric 2d walk
        vecs = [e.vector(2) for e in directions(2)]
        count = sum(1 for a, b in itertools.product(vecs, vecs)
                    if np.array_equal(a + b, (0, 0)))
        expected = count / 16.0
        t = nstep_probability(symmetric_kernel(2), 2)
        assert t.prob((0, 0)) == pytest.approx(expected, abs=1e-15)
        assert expected == 0.25

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_row_sums_one(self, n):
        rng = np.random.default_rng(n)
        for d in (1, 2, 3):
            t = nstep_probability(random_kernel(rng, d), n)
            assert t.total() == pytest.approx(1.0, abs=1e-12)
            assert np.all(t.values >= 0)

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError):
            nstep_probability(symmetric_kernel(2), -1)


class TestTruncated:
    def test_origin_is_zero(self):
        for n_max in (1, 10, 200):
            v, _ = potential_kernel_truncated(symmetric_kernel(2), (0, 0),
                                              n_max)
            assert v == 0.0

    def test_axis_value(self):
        v, tail = potential_kernel_truncated(symmetric_kernel(2), (0, 1),
                                             4000)
        assert abs(v - (-1.0)) <= max(tail, 5e-4)

    def test_diagonal_value(self):
        v, tail = potential_kernel_truncated(symmetric_kernel(2), (1, 1),
                                             4000)
        assert abs(v - (-4 / math.pi)) <= max(tail, 1e-3)

    def test_tail_estimate_covers_true_error(self):
        tbl = potential_kernel_table_truncated(symmetric_kernel(2), 2, 3000)
        for x, ref in SSRW_REFS.items():
            if max(abs(c) for c in x) <= 2:
                err = abs(tbl(x) - ref)
                idx = (x[0] + 2, x[1] + 2)
                assert err <= tbl.entry_tolerance[idx]

    def test_rejects_non_elliptic(self):
        p = TransitionKernel(np.array([0.5, 0.5, 0.0, 0.0]))
        with pytest.raises(ValueError):
            potential_kernel_truncated(p, (0, 1), 100)


class TestFourier:
    def test_reference_values(self):
        p = symmetric_kernel(2)
        for x, ref in SSRW_REFS.items():
            v, tol = potential_kernel_fourier(p, x)
            assert abs(v - ref) <= 1e-4, (x, v, ref)

    def test_prefactor_vanishes_for_symmetric(self):
        # the first inversion integral carries a zero prefactor, so the
        # value must be even in x for the symmetric kernel
        p = symmetric_kernel(2)
        a, _ = potential_kernel_fourier(p, (2, 1))
        b, _ = potential_kernel_fourier(p, (-2, -1))
        assert a == pytest.approx(b, abs=1e-12)

    def test_rejects_d1_and_non_elliptic(self):
        with pytest.raises(ValueError):
            potential_kernel_fourier(TransitionKernel(np.array([0.5, 0.5])),
                                     (1,))
        with pytest.raises(ValueError):
            potential_kernel_fourier(
                TransitionKernel(np.array([0.5, 0.5, 0.0, 0.0])), (1, 0))

    def test_d3_against_truncated_oracle(self):
        p = symmetric_kernel(3)
        v, tol = potential_kernel_fourier(p, (1, 0, 0), grid=48)
        o, otail = potential_kernel_truncated(p, (1, 0, 0), 120,
                                              window_radius=122)
        assert abs(v - o) <= tol + otail

    def test_drifted_kernel_reversal_consistency(self):
        # J of the reversed kernel at x equals J of the kernel at -x
        p = TransitionKernel(np.array([0.325, 0.175, 0.25, 0.25]))
        a, ta = potential_kernel_fourier(p, (1, 0))
        b, tb = potential_kernel_fourier(reverse_kernel(p), (-1, 0))
        assert abs(a - b) <= ta + tb + 1e-10


class TestRecursion2d:
    def test_reference_values_exact(self):
        tbl = potential_kernel_table_2d_ssrw(4)
        for x, ref in SSRW_REFS.items():
            assert abs(tbl(x) - ref) <= 1e-12

    def test_classical_interior_values(self):
        tbl = potential_kernel_table_2d_ssrw(3)
        assert tbl((2, 1)) == pytest.approx(-(8 / math.pi - 1), abs=1e-12)
        assert tbl((2, 2)) == pytest.approx(-16 / (3 * math.pi), abs=1e-12)
        assert tbl((3, 0)) == pytest.approx(-(17 - 48 / math.pi), abs=1e-12)

    def test_agrees_with_fourier_radius_3(self):
        tbl = potential_kernel_table_2d_ssrw(3)
        fou = potential_kernel_table_fourier(symmetric_kernel(2), 3)
        assert np.abs(tbl.values - fou.values).max() <= 1e-4

    def test_point_outside_radius_rejected(self):
        with pytest.raises(KeyError):
            potential_kernel_2d_ssrw((3, 0), radius=2)
        tbl = potential_kernel_table_2d_ssrw(2)
        with pytest.raises(KeyError):
            tbl((0, 3))

    def test_scalar_entry(self):
        assert potential_kernel_2d_ssrw((0, 0)) == 0.0
        assert potential_kernel_2d_ssrw((-1, 0)) == -1.0
        assert potential_kernel_2d_ssrw((2, 0)) == pytest.approx(
            8 / math.pi - 4, abs=1e-12)


class TestPhiEps:
    def test_symmetric_is_one(self):
        p = symmetric_kernel(3)
        for v in [(0, 0, 0), (1, 2, -3), (5, 0, 1)]:
            assert phi_eps(p, v) == pytest.approx(1.0, abs=1e-14)

    def test_zero_point_is_one(self):
        p = TransitionKernel(np.array([0.36, 0.16, 0.24, 0.24]))
        assert phi_eps(p, (0, 0)) == 1.0

    def test_axis_example(self):
        p = TransitionKernel(np.array([0.36, 0.16, 0.24, 0.24]))
        assert phi_eps(p, (2, 0)) == pytest.approx(4.0 / 9.0, abs=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1),
           st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
           st.tuples(st.integers(-3, 3), st.integers(-3, 3)))
    def test_multiplicative(self, seed, u, v):
        p = random_kernel(np.random.default_rng(seed), 2)
        uv = tuple(np.add(u, v))
        assert phi_eps(p, uv) == pytest.approx(
            phi_eps(p, u) * phi_eps(p, v), rel=1e-12)


class TestTables:
    def test_zero_at_origin_every_method(self):
        assert potential_kernel_table_2d_ssrw(2)((0, 0)) == 0.0
        assert potential_kernel_table_fourier(
            symmetric_kernel(2), 1)((0, 0)) == pytest.approx(0.0, abs=1e-12)
        assert potential_kernel_table_truncated(
            symmetric_kernel(2), 1, 500)((0, 0)) == 0.0

    def test_csv_json_export(self, tmp_path):
        tbl = potential_kernel_table_2d_ssrw(1)
        csv_path = tmp_path / "j.csv"
        json_path = tmp_path / "j.json"
        tbl.to_csv(csv_path)
        tbl.to_json(json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "x1,x2,J,method,tol"
        assert len(lines) == 10
        import json
        doc = json.loads(json_path.read_text())
        assert doc["method"] == "recursion-2d"
        assert len(doc["values"]) == 9
