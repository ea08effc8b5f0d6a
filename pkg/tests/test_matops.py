import numpy as np
import pytest

from robustpi import matops
from robustpi.errors import AsymmetricInput, BadLength, NotHurwitz

SQRT2 = np.sqrt(2.0)


def stable_matrix(rng, n, shift=3.0):
    while True:
        F = rng.standard_normal((n, n)) - shift * np.eye(n)
        if matops.is_hurwitz(F, guard=0.0):
            return F


class TestVectorizations:
    def test_vec_column_stacking(self):
        assert np.array_equal(matops.vec([[1, 2], [3, 4]]), [1, 3, 2, 4])

    def test_vec_identity(self):
        assert np.array_equal(matops.vec(np.eye(2)), [1, 0, 0, 1])

    def test_vec_zero(self):
        assert np.array_equal(matops.vec(np.zeros((3, 2))), np.zeros(6))

    def test_svec_weights(self):
        out = matops.svec([[1.0, 2.0], [2.0, 3.0]])
        assert np.allclose(out, [1.0, 2.0 * SQRT2, 3.0], rtol=0, atol=0)

    def test_svec_identity3(self):
        assert np.array_equal(matops.svec(np.eye(3)), [1, 0, 0, 1, 0, 1])

    def test_svec_length(self):
        P = np.diag(np.arange(1.0, 7.0))
        assert matops.svec(P).size == 21

    def test_svec_rejects_asymmetric(self):
        with pytest.raises(AsymmetricInput):
            matops.svec([[0.0, 1.0], [0.0, 0.0]])

    def test_smat_round_trip_values(self):
        P = matops.smat([1.0, 2.0 * SQRT2, 3.0])
        assert np.allclose(P, [[1.0, 2.0], [2.0, 3.0]], rtol=0, atol=0)

    def test_smat_scalar(self):
        assert np.array_equal(matops.smat([5.0]), [[5.0]])

    def test_smat_bad_length(self):
        with pytest.raises(BadLength):
            matops.smat([1.0, 2.0, 3.0, 4.0])

    def test_vecv_ordering(self):
        assert np.array_equal(matops.vecv([1.0, 2.0]), [1.0, 2.0, 4.0])

    def test_vecv_zero(self):
        assert np.array_equal(matops.vecv(np.zeros(3)), np.zeros(6))

    def test_vecv_ones(self):
        assert np.array_equal(matops.vecv(np.ones(3)), np.ones(6))

    def test_vecv_pairs_with_weighted_svec(self):
        # w * vecv(x) must equal svec(x x'), the form the regression uses
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.standard_normal(4)
            lhs = matops.vecv_weights(4) * matops.vecv(x)
            assert np.allclose(lhs, matops.svec(np.outer(x, x)), atol=1e-14)

    def test_round_trip_exact_on_representable(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            # power-of-two entries survive the sqrt2 weighting bit-for-bit
            P = np.ldexp(1.0, rng.integers(-8, 9, (n, n)))
            P = np.triu(P)
            P = P + np.triu(P, 1).T
            assert np.array_equal(matops.smat(matops.svec(P)), P)

    def test_round_trip_idempotent(self):
        # after one trip the representation is stable bit-for-bit
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            P1 = matops.smat(rng.standard_normal(n * (n + 1) // 2))
            assert np.array_equal(matops.smat(matops.svec(P1)), P1)

    def test_vec_unvec_bit_exact(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((4, 3))
        assert np.array_equal(matops.unvec(matops.vec(M), 4, 3), M)


class TestKron:
    def test_identity(self):
        assert np.array_equal(matops.kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_scalar_factor(self):
        B = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(matops.kron([[1.0]], B), B)

    def test_vec_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            A, B, X = (rng.standard_normal((3, 3)) for _ in range(3))
            lhs = matops.kron(A, B) @ matops.vec(X)
            rhs = matops.vec(B @ X @ A.T)
            assert np.abs(lhs - rhs).max() < 1e-12


class TestHurwitz:
    def test_diagonal_stable(self):
        assert matops.is_hurwitz(np.diag([-1.0, -3.0]))

    def test_imaginary_axis(self):
        assert not matops.is_hurwitz([[0.0, 1.0], [-1.0, 0.0]])

    def test_unstable_scalar(self):
        assert not matops.is_hurwitz([[1.0]])

    def test_margin(self):
        assert matops.is_hurwitz([[-1.0]], margin=0.5)
        assert not matops.is_hurwitz([[-1.0]], margin=1.5)

    def test_spectrum_fields(self):
        s = matops.Spectrum([[0.0, 1.0], [-2.0, -3.0]])
        assert len(s.eigenvalues) == 2
        assert s.abscissa == pytest.approx(s.eigenvalues.real.max())


class TestLyapunov:
    def test_scalar(self):
        P = matops.solve_lyapunov([[-1.0]], [[2.0]])
        assert P[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_decoupled_diagonal(self):
        P = matops.solve_lyapunov(np.diag([-1.0, -3.0]), np.diag([2.0, 6.0]))
        assert np.allclose(P, np.eye(2), atol=1e-12)

    def test_matches_kron_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            F = stable_matrix(rng, 4)
            Q = rng.standard_normal((4, 4))
            Q = Q @ Q.T
            P = matops.solve_lyapunov(F, Q)
            P_kron = matops.lyapunov_kron_solve(F, Q)
            assert np.abs(P - P_kron).max() < 1e-10 * (1 + np.abs(P).max())

    def test_rejects_unstable(self):
        with pytest.raises(NotHurwitz):
            matops.solve_lyapunov([[1.0]], [[1.0]])

    def test_residual_bound(self):
        rng = np.random.default_rng(6)
        F = stable_matrix(rng, 5, 4.0)
        Q = rng.standard_normal((5, 5))
        Q = Q @ Q.T
        P = matops.solve_lyapunov(F, Q)
        resid = np.linalg.norm(F.T @ P + P @ F + Q, "fro")
        assert resid <= 1e-10 * (1 + np.linalg.norm(Q, "fro"))

    def test_psd_when_q_psd(self):
        rng = np.random.default_rng(7)
        F = stable_matrix(rng, 4)
        C = rng.standard_normal((2, 4))
        P = matops.solve_lyapunov(F, C.T @ C)
        assert matops.psd_floor(P) > -1e-10


class TestQuadratureOracle:
    def test_scalar_analytic(self):
        # int_0^inf 2 e^{-2t} dt = 1
        P = matops.lyapunov_quadrature_oracle([[-1.0]], [[2.0]],
                                              horizon=40.0, steps=40000)
        assert P[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_zero_rhs(self):
        P = matops.lyapunov_quadrature_oracle(np.diag([-1.0, -2.0]),
                                              np.zeros((2, 2)))
        assert np.array_equal(P, np.zeros((2, 2)))

    def test_cross_solver(self):
        rng = np.random.default_rng(8)
        F = stable_matrix(rng, 3, 2.5)
        Q = rng.standard_normal((3, 3))
        Q = Q @ Q.T
        P_quad = matops.lyapunov_quadrature_oracle(F, Q, horizon=60.0,
                                                   steps=150000)
        P = matops.solve_lyapunov(F, Q)
        assert np.abs(P_quad - P).max() < 1e-6 * (1 + np.abs(P).max())

    def test_rejects_unstable(self):
        with pytest.raises(NotHurwitz):
            matops.lyapunov_quadrature_oracle([[0.1]], [[1.0]])


class TestMatrixInequalities:
    def test_trace_norm_bounds(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            G = rng.standard_normal((n, n))
            P = G @ G.T
            fro = np.linalg.norm(P, "fro")
            spec = np.linalg.norm(P, 2)
            tr = np.trace(P)
            assert fro <= tr + 1e-12 * tr
            assert tr <= np.sqrt(n) * fro * (1 + 1e-12)
            assert spec <= tr + 1e-12 * tr
            assert tr <= n * spec * (1 + 1e-12)

    def test_lyapunov_ordering(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            F = stable_matrix(rng, 4)
            G = rng.standard_normal((4, 4))
            Q = G @ G.T
            H = rng.standard_normal((4, 2))
            Qp = Q - H @ H.T  # Q' <= Q
            Qp = 0.5 * (Qp + Qp.T)
            P = matops.solve_lyapunov(F, Q)
            Pp = matops.solve_lyapunov(F, Qp)
            assert matops.psd_floor(P - Pp) >= -1e-9

    def test_inverse_lyapunov(self):
        # any A solving A'P + PA + Q = 0 with P, Q > 0 must be Hurwitz
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            G = rng.standard_normal((n, n))
            P = G @ G.T + 0.1 * np.eye(n)
            H = rng.standard_normal((n, n))
            Q = H @ H.T + 0.1 * np.eye(n)
            W = rng.standard_normal((n, n))
            W = 0.5 * (W - W.T)
            A = np.linalg.solve(P, -0.5 * Q + W)
            resid = A.T @ P + P @ A + Q
            assert np.abs(resid).max() < 1e-9 * np.abs(Q).max() * 10
            assert matops.is_hurwitz(A, guard=0.0)
