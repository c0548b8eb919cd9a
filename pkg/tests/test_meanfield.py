import numpy as np
import pytest

from opiniondyn.errors import SingularOperatorError, UnstableSystemError, ValidationError
from opiniondyn.linalg import kron, matexp
from opiniondyn.meanfield import (
    GridSpec,
    assemble,
    covariance_at,
    density_grid,
    gamma_trajectory,
    grid_mass,
    mean_at,
    means_at,
    mixture_at,
    steady_density_grid,
    steady_state,
)
from opiniondyn.scenario import InitialLaw, build_preset, with_initial
from dataclasses import replace


def xi_blockdiag(sys):
    mn = sys.m_count * sys.n_subjects
    out = np.zeros((mn, mn))
    for i in range(sys.m_count):
        out[sys.block(i), sys.block(i)] = sys.xi[i]
    return out


class TestAssemble:
    def test_two_community_scalar_drift(self):
        # each per-personality drift is the scalar a + (1-a)(z1-z2)/2
        alpha, z1, z2 = 0.01, 1.0, 0.3
        scn = build_preset("community-scalar", M=4, alpha=alpha, zeta1=z1, zeta2=z2)
        sys = assemble(scn)
        expected = alpha + (1 - alpha) * (z1 - z2) / 2
        assert np.allclose(sys.xi, expected, atol=1e-15)

    def test_zero_kernel_decouples(self):
        scn = build_preset("community", M=2, zeta1=0.0, zeta2=0.0)
        sys = assemble(scn)
        assert np.allclose(sys.xi, 0.01 * scn.coupling[None], atol=1e-16)
        expected_psi = np.zeros((4, 4))
        expected_psi[:2, :2] = expected_psi[2:, 2:] = 0.01 * scn.coupling
        assert np.allclose(sys.psi, expected_psi, atol=1e-16)

    def test_block_matrix_matches_kronecker_factorization(self):
        # constant stubbornness: psi = a I (x) C + (1-a) Theta (x) C
        scn = build_preset("community", M=4, zeta1=1.0, zeta2=0.1)
        sys = assemble(scn)
        k, r = sys.kernel, sys.r
        theta = -k * r[:, None]
        np.fill_diagonal(theta, k @ r - np.diag(k) * r)
        alpha = 0.01
        expected = alpha * kron(np.eye(4), sys.coupling) + (1 - alpha) * kron(theta, sys.coupling)
        assert np.allclose(sys.psi, expected, atol=1e-14)

    def test_structural_invariants(self):
        scn = build_preset("community", M=4, zeta2=0.05)
        sys = assemble(scn)
        assert np.abs(sys.psi - (xi_blockdiag(sys) - sys.p2 @ sys.zbar)).max() <= 1e-14
        assert np.array_equal(sys.zbar, kron(sys.kernel, sys.coupling))
        d_expected = scn.noise_variance * scn.coupling @ scn.coupling.T
        assert np.allclose(sys.d, d_expected, atol=1e-18)
        assert np.abs(sys.d - sys.d.T).max() == 0.0


class TestGammaTrajectory:
    def test_zero_time_from_origin(self):
        sys = assemble(build_preset("community"))
        assert np.allclose(gamma_trajectory(sys, 0.0), 0.0, atol=1e-16)

    def test_zero_time_equals_weighted_start(self):
        scn = build_preset("community")
        scn = with_initial(scn, [InitialLaw.dirac([0.3, -0.2]), InitialLaw.dirac([0.1, 0.5])])
        sys = assemble(scn)
        assert np.allclose(gamma_trajectory(sys, 0.0), sys.zbar @ sys.p0 @ sys.x0_stack, atol=1e-15)

    def test_long_time_limit_matches_linear_solve(self):
        sys = assemble(build_preset("community", zeta2=0.004))
        ctil = kron(np.eye(sys.m_count), sys.coupling)
        expected = sys.zbar @ np.linalg.solve(sys.psi, sys.p1 @ ctil @ sys.u_stack)
        t = 50.0 / sys.psi_spectrum.min_real_part
        assert np.allclose(gamma_trajectory(sys, t), expected, atol=1e-9)

    def test_singular_system_matrix_directs_to_volterra(self):
        alpha = 0.01
        sys = assemble(build_preset("community-scalar", alpha=alpha, zeta2=alpha / (1 - alpha)))
        with pytest.raises(SingularOperatorError, match="Volterra"):
            gamma_trajectory(sys, 1.0)

    def test_rejects_negative_time(self):
        sys = assemble(build_preset("community"))
        with pytest.raises(ValidationError):
            gamma_trajectory(sys, -1.0)


class TestMeans:
    def test_time_zero_returns_start(self):
        scn = build_preset("community")
        scn = with_initial(scn, [InitialLaw.dirac([0.7, -0.1]), InitialLaw.dirac([-0.4, 0.2])])
        sys = assemble(scn)
        assert np.allclose(means_at(sys, 0.0), [[0.7, -0.1], [-0.4, 0.2]], atol=1e-16)

    def test_asymptotic_factor_with_repulsion(self):
        # stationary mean is alpha / (alpha - (1-alpha) zeta2) times the prejudice
        alpha, zeta2 = 0.01, 0.004
        scn = build_preset("community", zeta2=zeta2)
        sys = assemble(scn)
        factor = alpha / (alpha - (1 - alpha) * zeta2)
        t = 50.0 / sys.psi_spectrum.min_real_part
        for i in range(2):
            expected = factor * scn.prejudice[i]
            assert np.abs(mean_at(sys, i, t) - expected).max() <= 1e-6

    def test_asymptotic_mean_reduces_to_prejudice(self):
        scn = build_preset("community", zeta2=0.0)
        sys = assemble(scn)
        t = 50.0 / sys.psi_spectrum.min_real_part
        assert np.abs(means_at(sys, t) - scn.prejudice).max() <= 1e-6


class TestCovariance:
    def test_time_zero(self):
        sys = assemble(build_preset("community"))
        assert np.array_equal(covariance_at(sys, 0, 0.0), np.zeros((2, 2)))

    def test_scalar_closed_form(self):
        scn = build_preset("community-scalar", zeta1=0.0, zeta2=0.0, alpha=0.5, sigma2=0.1)
        sys = assemble(scn)
        xi = 0.5
        for t in (0.3, 2.0, 10.0):
            expected = 0.1 * (1 - np.exp(-2 * xi * t)) / (2 * xi)
            assert covariance_at(sys, 0, t)[0, 0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("t", [1.0, 10.0, 80.0])
    def test_rotational_coupling_grows_linearly(self, t):
        # skew coupling makes the Kronecker-sum operator singular: RK4 path
        sys = assemble(build_preset("rotational"))
        for i in range(2):
            sigma = covariance_at(sys, i, t)
            assert np.linalg.norm(sigma - 1e-3 * t * np.eye(2), "fro") <= 1e-8


class TestDensity:
    def test_mass_conservation_per_personality(self):
        sys = assemble(build_preset("community", zeta2=0.004))
        grid = GridSpec(axes=((-0.6, 0.6, 241), (-0.8, 0.8, 241)))
        out = density_grid(sys, 0.5, grid)
        for i in range(sys.m_count):
            assert grid_mass(out.per_personality[i], grid) == pytest.approx(sys.r[i], abs=1e-3)
        assert grid_mass(out.aggregated, grid) == pytest.approx(1.0, abs=2e-3)

    def test_dirac_start_regularized_at_time_zero(self):
        sys = assemble(build_preset("community"))
        grid = GridSpec(axes=((-0.1, 0.1, 41), (-0.1, 0.1, 41)))
        out = density_grid(sys, 0.0, grid)
        # near-delta spike at the origin start
        assert out.aggregated.max() == out.aggregated[20, 20]

    def test_mirror_symmetric_scenario_gives_mirror_density(self):
        sys = assemble(build_preset("community", zeta2=0.004))
        grid = GridSpec(axes=((-2.0, 2.0, 81), (-2.0, 2.0, 81)))
        scn = build_preset("community", zeta2=0.004)
        steady = steady_state(sys, scn)
        out = steady_density_grid(sys, steady, grid)
        flipped = out.aggregated[::-1, ::-1]
        assert np.abs(out.aggregated - flipped).max() <= 1e-10 * out.aggregated.max()

    def test_grid_must_match_dimension(self):
        sys = assemble(build_preset("community"))
        with pytest.raises(ValidationError):
            density_grid(sys, 1.0, GridSpec(axes=((-1.0, 1.0, 11),)))

    def test_gaussian_initial_law_widens_mixture(self):
        scn = build_preset("community")
        cov0 = 0.04 * np.eye(2)
        scn = with_initial(scn, [InitialLaw.gaussian([0.0, 0.0], cov0)] * 2)
        sys = assemble(scn)
        state = mixture_at(sys, 0.5)
        bare = mixture_at(assemble(build_preset("community")), 0.5)
        extra = state.covariances[0] - bare.covariances[0]
        propagator = matexp(sys.xi[0], -0.5)
        assert np.allclose(extra, propagator @ cov0 @ propagator.T, atol=1e-12)


class TestSteadyState:
    def test_zero_repulsion_pins_to_prejudice(self):
        scn = build_preset("community", zeta2=0.0)
        sys = assemble(scn)
        steady = steady_state(sys, scn)
        assert np.abs(steady.f - scn.prejudice).max() <= 1e-12
        # W solves the Lyapunov equation for -w C within the kron-solve oracle
        n = sys.n_subjects
        for i in range(sys.m_count):
            a = -steady.w[i] * sys.coupling
            op = np.kron(a, np.eye(n)) + np.kron(np.eye(n), a)
            w_oracle = np.linalg.solve(op, -sys.d.reshape(-1)).reshape(n, n)
            assert np.allclose(steady.w_matrices[i], w_oracle, atol=1e-13)

    def test_repulsion_scales_prejudice(self):
        alpha, zeta2 = 0.01, 0.004
        scn = build_preset("community", zeta2=zeta2)
        steady = steady_state(assemble(scn), scn)
        factor = alpha / (alpha - (1 - alpha) * zeta2)
        assert np.abs(steady.f - factor * scn.prejudice).max() <= 1e-10

    def test_width_scales_linearly_with_noise(self):
        base = build_preset("noise-sweep", n=10, sigma2=1e-3)
        wide = build_preset("noise-sweep", n=10, sigma2=5e-3)
        s1 = steady_state(assemble(base), base)
        s5 = steady_state(assemble(wide), wide)
        assert np.allclose(s5.w_matrices, 5.0 * s1.w_matrices, rtol=1e-9)
        assert np.allclose(s5.f, s1.f, atol=1e-12)

    def test_gamma_infinity_two_paths_agree(self):
        scn = build_preset("community", M=4, zeta2=0.004)
        sys = assemble(scn)
        steady = steady_state(sys, scn)
        xi_bd = xi_blockdiag(sys)
        lhs = np.eye(sys.m_count * sys.n_subjects) - sys.zbar @ np.linalg.solve(xi_bd, sys.p2)
        ctil = kron(np.eye(sys.m_count), sys.coupling)
        rhs = sys.zbar @ np.linalg.solve(xi_bd, sys.p1 @ ctil @ sys.u_stack)
        gamma_inf_final_value = np.linalg.solve(lhs, rhs)
        assert np.abs(steady.gamma_inf - gamma_inf_final_value).max() <= 1e-9

    def test_refuses_unstable_with_report(self):
        scn = build_preset("community", zeta2=0.1)
        sys = assemble(scn)
        with pytest.raises(UnstableSystemError) as err:
            steady_state(sys, scn)
        assert err.value.report.classification.value == "TypeII"

    def test_symmetric_coupling_gibbs_cross_check(self):
        scn = build_preset("community", zeta2=0.0)
        scn = replace(scn, coupling=np.array([[1.0, 0.3], [0.3, 1.0]]))
        sys = assemble(scn)
        steady = steady_state(sys, scn)
        assert steady.gibbs_checked
        for i in range(sys.m_count):
            closed = sys.sigma2 * sys.coupling / (2 * steady.w[i])
            assert np.allclose(steady.w_matrices[i], closed, atol=1e-12)


class TestSelfConsistency:
    @pytest.mark.parametrize("maker", [
        lambda: build_preset("community", zeta2=0.004),
        lambda: build_preset("noise-sweep", n=10),
    ])
    def test_transient_mean_converges_to_steady_state(self, maker):
        scn = maker()
        sys = assemble(scn)
        steady = steady_state(sys, scn)
        t = 50.0 / sys.psi_spectrum.min_real_part
        assert np.abs(means_at(sys, t) - steady.f).max() <= 1e-6


class TestGridSpec:
    def test_point_ordering_outer_axis_last(self):
        grid = GridSpec(axes=((0.0, 1.0, 2), (10.0, 20.0, 2)))
        expected = np.array([[0.0, 10.0], [1.0, 10.0], [0.0, 20.0], [1.0, 20.0]])
        assert np.array_equal(grid.points(), expected)
        assert grid.shape == (2, 2)

    def test_grid_mass_of_gaussian(self):
        grid = GridSpec(axes=((-6.5, 6.5, 261), (-6.5, 6.5, 261)))
        pts = grid.points()
        vals = np.exp(-0.5 * (pts ** 2).sum(axis=1)) / (2 * np.pi)
        assert grid_mass(vals.reshape(grid.shape), grid) == pytest.approx(1.0, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValidationError):
            GridSpec(axes=((1.0, 0.0, 10),))
        with pytest.raises(ValidationError):
            GridSpec(axes=((0.0, 1.0, 1),))
