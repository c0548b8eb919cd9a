import math

import numpy as np
import pytest

from opiniondyn.errors import DimensionError, SingularOperatorError
from opiniondyn.linalg import kron, lyapunov_solve, matexp, spectrum


def expm_taylor_reference(a, t=1.0):
    """Extended-precision Taylor series with scaling; independent of matexp."""
    x = np.asarray(a, dtype=np.longdouble) * np.longdouble(t)
    norm = float(np.abs(x).sum(axis=0).max())
    s = max(0, int(math.ceil(math.log2(max(norm, 1e-30)))) + 1)
    xs = x / np.longdouble(2.0) ** s
    term = np.eye(x.shape[0], dtype=np.longdouble)
    acc = term.copy()
    for k in range(1, 40):
        term = term @ xs / np.longdouble(k)
        acc = acc + term
    for _ in range(s):
        acc = acc @ acc
    return acc.astype(float)


def match_eigenvalue_sets(computed, expected, tol):
    """Greedy nearest-neighbour matching of two eigenvalue multisets."""
    remaining = list(expected)
    for lam in computed:
        dists = [abs(lam - mu) for mu in remaining]
        j = int(np.argmin(dists))
        assert dists[j] <= tol, f"eigenvalue {lam} has no match within {tol}"
        remaining.pop(j)
    assert not remaining


class TestMatexp:
    def test_zero_matrix(self):
        assert np.allclose(matexp(np.zeros((2, 2)), 5.0), np.eye(2), atol=1e-15)

    def test_diagonal(self):
        out = matexp(np.diag([1.0, 2.0]), 1.0)
        assert np.allclose(out, np.diag([math.e, math.e ** 2]), rtol=1e-14)

    def test_rotation_quarter_turn(self):
        # skew-symmetric generator: exp is a rotation, eigenvalues +/- j
        gen = np.array([[0.0, 1.0], [-1.0, 0.0]])
        out = matexp(gen, math.pi / 2)
        assert np.allclose(out, gen, atol=1e-14)

    @pytest.mark.parametrize("n,scale", [(2, 1.0), (4, 3.0), (7, 0.01), (5, 20.0)])
    def test_against_taylor_reference(self, n, scale):
        rng = np.random.default_rng(42 + n)
        a = rng.standard_normal((n, n)) * scale
        ref = expm_taylor_reference(a)
        out = matexp(a)
        rel = np.linalg.norm(out - ref, "fro") / np.linalg.norm(ref, "fro")
        assert rel <= 1e-12

    def test_semigroup_property(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(1, 6)
            a = rng.standard_normal((n, n))
            s, t = rng.uniform(-2, 2, size=2)
            lhs = matexp(a, s) @ matexp(a, t)
            rhs = matexp(a, s + t)
            assert np.linalg.norm(lhs - rhs, "fro") <= 1e-10 * max(1.0, np.linalg.norm(rhs, "fro"))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            matexp(np.zeros((2, 3)))


class TestSpectrum:
    def test_identity(self):
        spec = spectrum(np.eye(3))
        assert np.allclose(spec.eigenvalues, [1, 1, 1])
        assert spec.min_real_part == pytest.approx(1.0)

    def test_pure_rotation_pair(self):
        spec = spectrum(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        match_eigenvalue_sets(spec.eigenvalues, [1j, -1j], 1e-14)
        assert spec.min_real_part == pytest.approx(0.0, abs=1e-15)

    def test_two_community_block_system_closed_form(self):
        # M=4 personality masses, two hostile communities: the block system
        # matrix has eigenvalues {a+ab*(z1-z2)/2 (x M-2), a, a-ab*z2}
        m_count, alpha, z1, z2 = 4, 0.01, 1.0, 0.1
        albar = 1.0 - alpha
        ztab = np.kron(np.array([[z1, -z2], [-z2, z1]]), np.ones((m_count // 2, m_count // 2)))
        psi = (alpha + albar * (z1 - z2) / 2) * np.eye(m_count) - (albar / m_count) * ztab
        expected = [alpha + albar * (z1 - z2) / 2] * (m_count - 2) + [alpha, alpha - albar * z2]
        spec = spectrum(psi)
        match_eigenvalue_sets(spec.eigenvalues, expected, 1e-12)

    def test_companion_matrix_known_roots(self):
        roots = np.array([3.0, -2.0, 0.5, -0.25])
        coeffs = np.poly(roots)  # monic characteristic polynomial
        n = len(roots)
        comp = np.zeros((n, n))
        comp[0, :] = -coeffs[1:]
        comp[1:, :-1] = np.eye(n - 1)
        spec = spectrum(comp)
        match_eigenvalue_sets(spec.eigenvalues, roots.astype(complex), 1e-10)

    @pytest.mark.parametrize("n", [3, 5, 8, 20])
    def test_characteristic_polynomial_residual(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(5):
            a = rng.standard_normal((n, n))
            spec = spectrum(a)
            assert len(spec) == n
            norm = np.linalg.norm(a, "fro")
            for lam in spec.eigenvalues:
                charpoly = np.linalg.det(a - lam * np.eye(n))
                assert abs(charpoly) <= 1e-8 * norm ** n

    def test_matches_lapack_on_moderate_dimension(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((120, 120))
        spec = spectrum(a)
        match_eigenvalue_sets(spec.eigenvalues, np.linalg.eigvals(a), 1e-9)

    def test_defective_jordan_block(self):
        a = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 1.0], [0.0, 0.0, 2.0]])
        spec = spectrum(a)
        # defective eigenvalues are only accurate to eps^(1/3); stay generous
        match_eigenvalue_sets(spec.eigenvalues, [2.0, 2.0, 2.0], 1e-4)

    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            spectrum(np.zeros((3, 2)))


def kronecker_lyapunov_oracle(a, q):
    """Solve (a (x) I + I (x) a) vec(W) = -vec(q) directly."""
    n = a.shape[0]
    op = np.kron(a, np.eye(n)) + np.kron(np.eye(n), a)
    return np.linalg.solve(op, -q.reshape(-1)).reshape(n, n)


class TestLyapunov:
    def test_minus_identity(self):
        q = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert np.allclose(lyapunov_solve(-np.eye(2), q), q / 2, atol=1e-14)

    def test_scalar_case(self):
        w, sigma2 = 0.7, 0.03
        out = lyapunov_solve(np.array([[-w]]), np.array([[sigma2]]))
        assert out[0, 0] == pytest.approx(sigma2 / (2 * w), rel=1e-13)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_against_kronecker_oracle(self, n):
        rng = np.random.default_rng(200 + n)
        for _ in range(5):
            raw = rng.standard_normal((n, n))
            shift = max(lam.real for lam in np.linalg.eigvals(raw)) + 0.5
            a = raw - shift * np.eye(n)
            q = np.eye(n) if n == 2 else rng.standard_normal((n, n))
            q = q @ q.T + 0.1 * np.eye(n)
            w = lyapunov_solve(a, q)
            assert np.allclose(w, kronecker_lyapunov_oracle(a, q), atol=1e-11, rtol=1e-9)

    def test_residual_and_symmetry(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            raw = rng.standard_normal((4, 4))
            a = raw - (max(lam.real for lam in np.linalg.eigvals(raw)) + 0.3) * np.eye(4)
            q = rng.standard_normal((4, 4))
            q = q @ q.T
            w = lyapunov_solve(a, q)
            resid = np.linalg.norm(a @ w + w @ a.T + q, "fro")
            assert resid <= 1e-10 * np.linalg.norm(q, "fro")
            assert np.abs(w - w.T).max() <= 1e-12

    def test_rejects_non_hurwitz(self):
        with pytest.raises(SingularOperatorError):
            lyapunov_solve(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))
        with pytest.raises(SingularOperatorError):
            lyapunov_solve(np.eye(2), np.eye(2))


class TestKron:
    def test_identity_block_diagonal(self):
        c = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = kron(np.eye(2), c)
        expected = np.zeros((4, 4))
        expected[:2, :2] = c
        expected[2:, 2:] = c
        assert np.array_equal(out, expected)

    def test_scalar_factor(self):
        b = np.array([[1.0, -1.0], [0.5, 2.0]])
        assert np.array_equal(kron(np.array([[2.0]]), b), 2 * b)

    def test_two_community_interaction_matrix(self):
        # Z = {zeta(p_i, p_j)} (x) C expanded entry by entry
        z1, z2 = 1.0, 0.3
        ztab = np.array([[z1, -z2], [-z2, z1]])
        c = np.array([[1.0, 1.0], [1e-10, 1.0]])
        out = kron(ztab, c)
        expected = np.empty((4, 4))
        for i in range(2):
            for j in range(2):
                expected[2 * i:2 * i + 2, 2 * j:2 * j + 2] = ztab[i, j] * c
        assert np.array_equal(out, expected)

    def test_eigenvalues_are_pairwise_products(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a = rng.standard_normal((2, 2))
            b = rng.standard_normal((2, 2))
            products = [la * lb
                        for la in spectrum(a).eigenvalues
                        for lb in spectrum(b).eigenvalues]
            match_eigenvalue_sets(spectrum(kron(a, b)).eigenvalues, products, 1e-9)

    def test_rejects_non_matrix(self):
        with pytest.raises(DimensionError):
            kron(np.zeros(3), np.eye(2))
