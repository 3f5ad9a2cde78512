import numpy as np
import pytest

from ebinflow import (
    DegenerateMetric,
    SymMat,
    dir_deriv_trace,
    pack_triangle,
    spd_guard,
    symmetrize,
    times,
    trace_chain,
    traceless_part,
    tri_size,
    unpack_triangle,
)
from conftest import random_spd, random_sym

I3 = np.eye(3)


def spd(mat):
    return spd_guard(SymMat(np.asarray(mat, dtype=float)))


class TestSymMat:
    def test_exact_symmetry_required(self):
        with pytest.raises(ValueError, match="not exactly symmetric"):
            SymMat(np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]]))

    def test_from_matrix_symmetrizes(self):
        m = np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])
        s = SymMat.from_matrix(m)
        assert np.array_equal(s.mat, s.mat.T)

    def test_from_matrix_rejects_large_residual(self):
        with pytest.raises(AssertionError, match="antisymmetric residual"):
            SymMat.from_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            SymMat(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_triangle_round_trip(self, rng):
        h = random_sym(rng, 4)
        assert tri_size(4) == 10
        assert np.array_equal(unpack_triangle(pack_triangle(h.mat), 4), h.mat)

    def test_batched(self, rng):
        mats = np.stack([random_sym(rng).mat for _ in range(5)])
        s = SymMat(mats)
        assert s.batch_shape == (5,)
        assert s.dim == 3
        assert s.tri.shape == (5, 6)

    def test_readonly(self):
        s = SymMat(np.eye(3))
        with pytest.raises(ValueError):
            s.mat[0, 0] = 2.0


class TestSpdGuard:
    def test_identity(self):
        g = spd(I3)
        assert g.det == pytest.approx(1.0)
        assert g.sqrt_det == pytest.approx(1.0)

    def test_singular_rejected(self):
        with pytest.raises(DegenerateMetric) as err:
            spd(np.diag([1.0, 1.0, 0.0]))
        assert err.value.min_eigenvalue <= 1e-12

    def test_indefinite_rejected(self):
        with pytest.raises(DegenerateMetric):
            spd(np.diag([1.0, -1.0, 1.0]))

    def test_det_and_sqrt(self):
        g = spd(np.diag([4.0, 1.0, 1.0]))
        assert g.det == pytest.approx(4.0)
        assert abs(g.sqrt_det - np.sqrt(g.det)) <= 1e-14 * g.sqrt_det

    def test_inverse_identity_residual(self, rng):
        for _ in range(50):
            g = random_spd(rng)
            resid = g.inv @ g.mat - I3
            assert np.max(np.abs(resid)) < 1e-12

    def test_inverse_exactly_symmetric(self, rng):
        g = random_spd(rng)
        assert np.array_equal(g.inv, g.inv.T)

    def test_floor_honored(self):
        m = SymMat(np.diag([1.0, 1.0, 1e-6]))
        spd_guard(m, floor=1e-7)
        with pytest.raises(DegenerateMetric):
            spd_guard(m, floor=1e-5)

    def test_large_dimension_uses_factorization(self, rng):
        n = 5
        raw = rng.standard_normal((n, n))
        g = spd_guard(SymMat(np.eye(n) + 0.2 * 0.5 * (raw + raw.T)))
        assert np.max(np.abs(g.inv @ g.mat - np.eye(n))) < 1e-12


class TestTimes:
    def test_identity_case(self):
        assert np.array_equal(times(spd(I3), SymMat(I3), SymMat(I3)), I3)

    def test_diagonal_product(self):
        out = times(spd(I3), SymMat(np.diag([1.0, 2.0, 3.0])), SymMat(np.diag([1.0, 1.0, 2.0])))
        assert np.allclose(out, np.diag([1.0, 2.0, 6.0]))

    def test_nonsymmetric_output(self):
        h = np.zeros((3, 3))
        h[0, 1] = h[1, 0] = 1.0
        out = times(spd(I3), SymMat(h), SymMat(np.diag([1.0, 0.0, 0.0])))
        expected = np.zeros((3, 3))
        expected[1, 0] = 1.0
        assert np.array_equal(out, expected)
        assert not np.array_equal(out, out.T)

    def test_h_ginv_h_symmetric(self, rng):
        for _ in range(20):
            g, h = random_spd(rng), random_sym(rng)
            out = times(g, h, h)
            assert np.max(np.abs(out - out.T)) <= 1e-14 * (1.0 + np.max(np.abs(out)))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension mismatch"):
            times(spd(I3), random_sym(rng, 2), random_sym(rng, 3))


class TestTraceChain:
    def test_trace_of_metric_is_dim(self):
        assert trace_chain(spd(I3), [SymMat(I3)]) == pytest.approx(3.0)

    def test_plain_trace(self):
        out = trace_chain(spd(I3), [SymMat(np.diag([1.0, 2.0, 3.0])), SymMat(I3)])
        assert out == pytest.approx(6.0)

    def test_scaled_metric(self):
        out = trace_chain(spd(2.0 * I3), [SymMat(I3), SymMat(I3)])
        assert out == pytest.approx(0.75)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            trace_chain(spd(I3), [])

    def test_cyclic_invariance(self, rng):
        g = random_spd(rng)
        hs = [random_sym(rng) for _ in range(4)]
        a = trace_chain(g, hs)
        b = trace_chain(g, hs[1:] + hs[:1])
        assert abs(a - b) <= 1e-12 * (1.0 + abs(a))

    def test_scaling_law(self, rng):
        for _ in range(20):
            g = random_spd(rng)
            h = random_sym(rng)
            c = float(rng.uniform(0.5, 3.0))
            scaled = spd_guard(SymMat(c * g.mat))
            a = trace_chain(scaled, [h])
            b = trace_chain(g, [h]) / c
            assert abs(a - b) <= 1e-12 * (1.0 + abs(b))


class TestTracelessPart:
    def test_metric_is_pure_trace(self):
        g = spd(I3)
        out = traceless_part(g, SymMat(I3))
        assert np.allclose(out.mat, 0.0, atol=1e-15)

    def test_hand_example(self):
        out = traceless_part(spd(I3), SymMat(np.diag([1.0, 2.0, 3.0])))
        assert np.allclose(out.mat, np.diag([-1.0, 0.0, 1.0]))

    def test_already_traceless_unchanged(self):
        h = SymMat(np.diag([1.0, -1.0, 0.0]))
        out = traceless_part(spd(I3), h)
        assert np.array_equal(out.mat, h.mat)

    def test_result_is_traceless(self, rng):
        for _ in range(20):
            g, h = random_spd(rng), random_sym(rng)
            out = traceless_part(g, h)
            assert abs(trace_chain(g, [out])) < 1e-12

    def test_projection_idempotent(self, rng):
        for _ in range(20):
            g, h = random_spd(rng), random_sym(rng)
            once = traceless_part(g, h)
            twice = traceless_part(g, once)
            assert np.max(np.abs(twice.mat - once.mat)) <= 1e-12 * (1.0 + np.max(np.abs(once.mat)))


class TestDirDerivTrace:
    def test_identity_inputs(self):
        assert dir_deriv_trace(spd(I3), SymMat(I3), SymMat(I3)) == pytest.approx(-3.0)

    def test_zero_direction(self, rng):
        g, h = random_spd(rng), random_sym(rng)
        assert dir_deriv_trace(g, h, SymMat(np.zeros((3, 3)))) == 0.0

    def test_hand_example(self):
        out = dir_deriv_trace(spd(I3), SymMat(np.diag([1.0, 2.0, 3.0])), SymMat(np.diag([1.0, 0.0, 0.0])))
        assert out == pytest.approx(-1.0)

    def test_matches_finite_differences(self, rng):
        eps = 1e-6
        for _ in range(100):
            g, h, a = random_spd(rng), random_sym(rng), random_sym(rng)
            analytic = dir_deriv_trace(g, h, a)
            plus = trace_chain(spd_guard(SymMat(g.mat + eps * a.mat)), [h])
            minus = trace_chain(spd_guard(SymMat(g.mat - eps * a.mat)), [h])
            fd = (plus - minus) / (2.0 * eps)
            assert abs(analytic - fd) <= 1e-6 * (1.0 + abs(fd))


class TestSymmetrize:
    def test_average(self):
        m = np.array([[1.0, 2.0], [2.0 + 1e-12, 3.0]])
        out = symmetrize(m)
        assert np.array_equal(out, out.T)

    def test_residual_guard(self):
        with pytest.raises(AssertionError):
            symmetrize(np.array([[0.0, 1e-3], [-1e-3, 0.0]]))

    def test_no_guard_when_disabled(self):
        out = symmetrize(np.array([[0.0, 1.0], [-1.0, 0.0]]), tol=None)
        assert np.allclose(out, 0.0)
