import numpy as np
import pytest
import scipy.sparse.linalg
from hypothesis import given, settings, strategies as st

from randkrylov.errors import ShapeError, WhiteningBreakdown
from randkrylov.leastsq import lsmr, sketch_precondition_lsq
from randkrylov.sketch import SketchOperator, make_sketch


class TestLSMR:
    def test_square_system(self, rng):
        B = rng.standard_normal((30, 30)) + 10 * np.eye(30)
        x = rng.standard_normal(30)
        rep = lsmr(B, B @ x)
        assert rep.converged
        np.testing.assert_allclose(rep.solution, x, rtol=1e-9)

    def test_overdetermined_matches_lstsq(self, rng):
        B = rng.standard_normal((80, 12))
        c = rng.standard_normal(80)
        rep = lsmr(B, c)
        ref = np.linalg.lstsq(B, c, rcond=None)[0]
        np.testing.assert_allclose(rep.solution, ref, rtol=1e-9, atol=1e-12)
        assert rep.residual_norm == pytest.approx(np.linalg.norm(B @ ref - c), rel=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), cols=st.integers(1, 15))
    def test_normal_equations(self, seed, cols):
        r = np.random.default_rng(seed)
        B = r.standard_normal((40, cols))
        c = r.standard_normal(40)
        rep = lsmr(B, c)
        resid = c - B @ rep.solution
        assert np.linalg.norm(B.T @ resid) <= 1e-9 * np.linalg.norm(B) * np.linalg.norm(resid)

    def test_orthonormal_columns(self, rng):
        B, _ = np.linalg.qr(rng.standard_normal((200, 15)))
        c = rng.standard_normal(200)
        rep = lsmr(B, c)
        assert rep.iterations <= 15
        np.testing.assert_allclose(rep.solution, B.T @ c, rtol=1e-10)

    def test_consistent_system(self, rng):
        B = rng.standard_normal((100, 10))
        c = B @ rng.standard_normal(10)
        assert lsmr(B, c).residual_norm <= 1e-10 * np.linalg.norm(c)

    def test_normal_equations_oracle(self, rng):
        B = rng.standard_normal((500, 50))
        c = rng.standard_normal(500)
        ref = np.linalg.solve(B.T @ B, B.T @ c)
        x = lsmr(B, c).solution
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_zero_rhs(self):
        rep = lsmr(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(rep.solution, 0.0)
        assert rep.converged

    def test_history_monotone(self, rng):
        B = rng.standard_normal((60, 20)) @ np.diag(np.geomspace(1, 1e3, 20))
        rep = lsmr(B, rng.standard_normal(60), record_history=True, max_iter=20)
        h = np.array(rep.history)
        assert len(h) >= 2
        assert np.all(np.diff(h) <= 1e-12 * h[0])

    def test_iteration_cap_reported(self, rng):
        B = rng.standard_normal((60, 20)) @ np.diag(np.geomspace(1, 1e6, 20))
        rep = lsmr(B, rng.standard_normal(60), max_iter=2)
        assert rep.iterations == 2
        assert not rep.converged

    def test_linear_operator_input(self, rng):
        B = rng.standard_normal((25, 6))
        c = rng.standard_normal(25)
        rep = lsmr(scipy.sparse.linalg.aslinearoperator(B), c)
        np.testing.assert_allclose(rep.solution, np.linalg.lstsq(B, c, rcond=None)[0], rtol=1e-9)

    def test_shape_check(self):
        with pytest.raises(ShapeError):
            lsmr(np.eye(3), np.ones(4))


class TestSketchPrecondition:
    def test_ill_conditioned_basis(self, rng):
        n, m = 2000, 30
        W = rng.standard_normal((n, m)) @ np.diag(np.geomspace(1, 1e8, m))
        w = rng.standard_normal(n)
        S = make_sketch(4 * m, n, 4, seed=2)
        rep = sketch_precondition_lsq(W, w, S)
        ref = np.linalg.lstsq(W, w, rcond=None)[0]
        r_ref = w - W @ ref
        assert rep.residual_norm <= np.linalg.norm(r_ref) * (1 + 1e-10)
        assert rep.iterations <= 4 * m

    def test_exact_in_range(self, rng):
        W = rng.standard_normal((500, 10))
        y = rng.standard_normal(10)
        rep = sketch_precondition_lsq(W, W @ y, make_sketch(40, 500, 4, seed=0))
        np.testing.assert_allclose(rep.solution, y, rtol=1e-10)

    def test_orthonormal_basis(self, rng):
        W, _ = np.linalg.qr(rng.standard_normal((400, 12)))
        w = rng.standard_normal(400)
        # an exact sketch (S = I, zero distortion) makes the warm start exact
        S = SketchOperator(400, 400, np.arange(400)[:, None], np.ones((400, 1)), 1.0)
        rep = sketch_precondition_lsq(W, w, S)
        assert rep.iterations <= 2
        np.testing.assert_allclose(rep.solution, W.T @ w, rtol=1e-10, atol=1e-12)

    def test_agrees_with_plain_lsmr(self, rng):
        W = rng.standard_normal((600, 20)) @ np.diag(np.linspace(1, 3, 20))
        assert np.linalg.cond(W) <= 10
        w = rng.standard_normal(600)
        a = sketch_precondition_lsq(W, w, make_sketch(80, 600, 4, seed=2)).solution
        b = lsmr(W, w).solution
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)

    def test_incomplete_basis_against_pinv(self, small_conv_diff):
        from randkrylov.basis import incomplete_arnoldi
        prob = small_conv_diff
        dec = incomplete_arnoldi(prob.L, prob.b, 40, k_trunc=2)
        assert np.linalg.cond(dec.Wm) >= 1e5
        ref = np.linalg.pinv(dec.Wm) @ dec.w_next
        rep = sketch_precondition_lsq(dec.Wm, dec.w_next, make_sketch(160, prob.n, 4, seed=0))
        assert np.linalg.norm(rep.solution - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_rank_deficient_raises(self, rng):
        W = rng.standard_normal((300, 5))
        W[:, 4] = W[:, 0]
        with pytest.raises(WhiteningBreakdown):
            sketch_precondition_lsq(W, rng.standard_normal(300), make_sketch(24, 300, 4, seed=0))

    def test_small_sketch_rejected(self, rng):
        with pytest.raises(ShapeError):
            sketch_precondition_lsq(rng.standard_normal((100, 10)), rng.standard_normal(100),
                                    make_sketch(10, 100, 4, seed=0))
