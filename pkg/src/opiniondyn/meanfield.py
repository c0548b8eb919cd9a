"""Discrete-personality mean-field dynamics.

:func:`assemble` turns a :class:`~opiniondyn.scenario.Scenario` into the
block system matrices that drive everything else. The transient opinion
density is an M-component Gaussian mixture whose means follow the coupled
linear dynamics of the stacked system matrix and whose covariances follow
per-personality matrix Ornstein-Uhlenbeck integrals. The steady state is
available in closed form whenever the system is stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, NumericalError, SingularOperatorError, UnstableSystemError, ValidationError
from .linalg import Spectrum, kron, lyapunov_solve, matexp, spectrum
from .scenario import Scenario


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled block matrices for M personality masses and N subjects.

    ``psi`` is the MN x MN matrix governing the coupled means, equal to
    blockdiag(xi) - p2 @ zbar by construction; ``d`` is the diffusion matrix
    sigma^2 C C^T.
    """

    m_count: int
    n_subjects: int
    p: np.ndarray                # (M,)
    r: np.ndarray                # (M,)
    alpha: np.ndarray            # (M,)
    kernel: np.ndarray           # (M, M) interaction table
    coupling: np.ndarray         # (N, N)
    xi: np.ndarray               # (M, N, N) per-personality drift matrices
    zbar: np.ndarray             # (MN, MN)
    p0: np.ndarray               # (MN, MN) diagonal
    p1: np.ndarray               # (MN, MN) diagonal
    p2: np.ndarray               # (MN, MN) diagonal
    psi: np.ndarray              # (MN, MN)
    u_stack: np.ndarray          # (MN,)
    x0_stack: np.ndarray         # (MN,)
    d: np.ndarray                # (N, N)
    sigma2: float
    initial_covs: np.ndarray | None   # (M, N, N) for Gaussian starts, else None

    def block(self, i: int) -> slice:
        """Slice selecting personality i inside stacked MN vectors."""
        n = self.n_subjects
        return slice(i * n, (i + 1) * n)

    @cached_property
    def xi_spectra(self) -> tuple[Spectrum, ...]:
        return tuple(spectrum(self.xi[i]) for i in range(self.m_count))

    @cached_property
    def psi_spectrum(self) -> Spectrum:
        return spectrum(self.psi)

    @cached_property
    def _gamma_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """(v0, w_inf) with gamma(t) = zbar @ (exp(-psi t) v0 + w_inf)."""
        eigs = self.psi_spectrum.eigenvalues
        scale = max(1.0, float(np.abs(eigs).max()))
        if float(np.abs(eigs).min()) <= 1e-12 * scale:
            raise SingularOperatorError(
                "the block system matrix is singular; the closed-form mean trajectory "
                "is unavailable, use the time-domain Volterra solver instead")
        ctil_u = _apply_blockwise(self.coupling, self.u_stack, self.n_subjects)
        w_inf = np.linalg.solve(self.psi, self.p1 @ ctil_u)
        v0 = self.p0 @ self.x0_stack - w_inf
        return v0, w_inf


def _apply_blockwise(mat: np.ndarray, stacked: np.ndarray, n: int) -> np.ndarray:
    """Apply one N x N matrix to every length-N block of a stacked vector."""
    return (stacked.reshape(-1, n) @ mat.T).reshape(-1)


def assemble(scn: Scenario) -> DiscreteSystem:
    """Assemble the discrete block system for a validated scenario."""
    m, n = scn.personality_count, scn.subjects
    table = scn.kernel_table()
    c = np.asarray(scn.coupling, dtype=float)
    alpha = scn.stubbornness
    albar = 1.0 - alpha
    eta = table @ scn.masses
    xi = albar[:, None, None] * eta[:, None, None] * c + alpha[:, None, None] * c
    zbar = kron(table, c)
    eye_n = np.eye(n)
    p0 = kron(np.diag(scn.masses), eye_n)
    p1 = kron(np.diag(scn.masses * alpha), eye_n)
    p2 = kron(np.diag(scn.masses * albar), eye_n)
    xi_block = np.zeros((m * n, m * n))
    for i in range(m):
        xi_block[i * n:(i + 1) * n, i * n:(i + 1) * n] = xi[i]
    psi = xi_block - p2 @ zbar
    d = scn.noise_variance * (c @ c.T)
    d = 0.5 * (d + d.T)
    gaussians = [law.variant == "gaussian" for law in scn.initial]
    initial_covs = None
    if any(gaussians):
        initial_covs = np.array([law.cov if law.variant == "gaussian" else np.zeros((n, n))
                                 for law in scn.initial])
    return DiscreteSystem(
        m_count=m,
        n_subjects=n,
        p=scn.personalities,
        r=scn.masses,
        alpha=alpha,
        kernel=table,
        coupling=c,
        xi=xi,
        zbar=zbar,
        p0=p0,
        p1=p1,
        p2=p2,
        psi=psi,
        u_stack=scn.prejudice.reshape(-1),
        x0_stack=np.concatenate([law.mean for law in scn.initial]),
        d=d,
        sigma2=float(scn.noise_variance),
        initial_covs=initial_covs,
    )


# ---------------------------------------------------------------------------
# transient means
# ---------------------------------------------------------------------------

def gamma_trajectory(sys: DiscreteSystem, t: float) -> np.ndarray:
    """Stacked interaction field gamma(t), closed form via exp(-psi t)."""
    if t < 0:
        raise ValidationError(f"time must be >= 0, got {t}")
    v0, w_inf = sys._gamma_parts
    return sys.zbar @ (matexp(sys.psi, -t) @ v0 + w_inf)


def _simpson_pass(sys: DiscreteSystem, t: float, intervals: int,
                  v0: np.ndarray, w_inf: np.ndarray, chunk: int = 64) -> np.ndarray:
    """One composite-Simpson evaluation of int_0^t exp(-xi (t-tau)) gamma(tau) dtau.

    Nodes are processed in chunks against precomputed powers of the one-step
    propagators, so the work is a handful of einsum calls per chunk. The
    running value obeys acc <- F^c acc + sum_j F^(c-1-j) w_j gamma_j, which
    telescopes to the full weighted sum.
    """
    m_count, n = sys.m_count, sys.n_subjects
    mn = m_count * n
    h = t / intervals
    e_psi = matexp(sys.psi, -h)
    f_step = np.array([matexp(sys.xi[i], -h) for i in range(m_count)])
    e_pows = np.empty((chunk + 1, mn, mn))
    e_pows[0] = np.eye(mn)
    f_pows = np.empty((chunk + 1, m_count, n, n))
    f_pows[0] = np.eye(n)
    for j in range(chunk):
        e_pows[j + 1] = e_psi @ e_pows[j]
        f_pows[j + 1] = np.einsum("mij,mjk->mik", f_step, f_pows[j])
    weights = np.full(intervals + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    v = v0.copy()
    acc = np.zeros((m_count, n))
    for k0 in range(0, intervals + 1, chunk):
        c = min(chunk, intervals + 1 - k0)
        nodes_v = np.einsum("kij,j->ki", e_pows[:c], v)
        gammas = (nodes_v + w_inf) @ sys.zbar.T
        weighted = (weights[k0:k0 + c, None] * gammas).reshape(c, m_count, n)
        chunk_term = np.einsum("kmij,kmj->mi", f_pows[c - 1::-1], weighted)
        acc = np.einsum("mij,mj->mi", f_pows[c], acc) + chunk_term
        v = e_pows[c] @ v
    return acc.reshape(mn)


def _gamma_integral(sys: DiscreteSystem, t: float, tol: float = 1e-8,
                    max_intervals: int = 1 << 20) -> np.ndarray:
    """Composite-Simpson value of int_0^t exp(-xi (t-tau)) gamma(tau) dtau.

    The node count doubles until two successive results agree within ``tol``
    in the sup norm.
    """
    if t == 0.0:
        return np.zeros(sys.m_count * sys.n_subjects)
    v0, w_inf = sys._gamma_parts
    rate = max(float(np.abs(spec.eigenvalues).max()) for spec in sys.xi_spectra)
    rate = max(rate, float(np.abs(sys.psi_spectrum.eigenvalues).max()))
    intervals = 512
    while intervals < min(t * rate, float(max_intervals)):
        intervals *= 2
    previous = None
    while intervals <= max_intervals:
        acc = _simpson_pass(sys, t, intervals, v0, w_inf)
        if previous is not None and float(np.abs(acc - previous).max()) < tol:
            return acc
        previous = acc
        intervals *= 2
    raise ConvergenceError("Simpson quadrature of the interaction-field integral did not settle",
                           int(np.log2(max_intervals) - 9))


def means_at(sys: DiscreteSystem, t: float) -> np.ndarray:
    """Mixture means for every personality at time t, shape (M, N)."""
    if t < 0:
        raise ValidationError(f"time must be >= 0, got {t}")
    m, n = sys.m_count, sys.n_subjects
    if t == 0.0:
        return sys.x0_stack.reshape(m, n).copy()
    integral = _gamma_integral(sys, t).reshape(m, n)
    out = np.empty((m, n))
    for i in range(m):
        # exp of the augmented block [[-xi, I], [0, 0]] yields both the
        # propagator and int_0^t exp(-xi s) ds, valid for singular xi too
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = -sys.xi[i]
        aug[:n, n:] = np.eye(n)
        eaug = matexp(aug, t)
        propagator = eaug[:n, :n]
        j_int = eaug[:n, n:]
        x0 = sys.x0_stack[sys.block(i)]
        u = sys.u_stack[sys.block(i)]
        out[i] = (propagator @ x0
                  + sys.alpha[i] * (j_int @ (sys.coupling @ u))
                  + (1.0 - sys.alpha[i]) * integral[i])
    return out


def mean_at(sys: DiscreteSystem, i: int, t: float) -> np.ndarray:
    """Mean opinion vector of personality i at time t."""
    return means_at(sys, t)[i]


# ---------------------------------------------------------------------------
# transient covariances
# ---------------------------------------------------------------------------

def covariance_at(sys: DiscreteSystem, i: int, t: float) -> np.ndarray:
    """Process covariance of personality i at time t.

    Closed form through the Kronecker-sum operator when it is invertible;
    otherwise (e.g. a skew coupling matrix) fixed-step RK4 integration of
    dS/dt = D - xi S - S xi^T.
    """
    if t < 0:
        raise ValidationError(f"time must be >= 0, got {t}")
    n = sys.n_subjects
    if t == 0.0:
        return np.zeros((n, n))
    xi = sys.xi[i]
    eigs = sys.xi_spectra[i].eigenvalues
    sums = eigs[:, None] + eigs[None, :]
    scale = max(1.0, float(np.abs(eigs).max()))
    if float(np.abs(sums).min()) > 1e-12 * scale:
        ksum = kron(xi, np.eye(n)) + kron(np.eye(n), xi)
        rhs = (np.eye(n * n) - matexp(ksum, -t)) @ sys.d.reshape(-1)
        sigma = np.linalg.solve(ksum, rhs).reshape(n, n)
    else:
        sigma = _covariance_rk4(xi, sys.d, t, steps=2048)
    return 0.5 * (sigma + sigma.T)


def _covariance_rk4(xi: np.ndarray, d: np.ndarray, t: float, steps: int) -> np.ndarray:
    def rate(s):
        return d - xi @ s - s @ xi.T

    h = t / steps
    sigma = np.zeros_like(d)
    for _ in range(steps):
        k1 = rate(sigma)
        k2 = rate(sigma + 0.5 * h * k1)
        k3 = rate(sigma + 0.5 * h * k2)
        k4 = rate(sigma + h * k3)
        sigma = sigma + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return sigma


# ---------------------------------------------------------------------------
# mixture state and density grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianMixtureState:
    """Gaussian-mixture snapshot of the opinion density at one time."""

    t: float
    weights: np.ndarray        # (M,)
    means: np.ndarray          # (M, N)
    covariances: np.ndarray    # (M, N, N)


def mixture_at(sys: DiscreteSystem, t: float) -> GaussianMixtureState:
    """Mixture representation of the opinion density at time t.

    A Gaussian initial law adds its propagated covariance to the process
    covariance; a Dirac start contributes nothing.
    """
    means = means_at(sys, t)
    covs = np.array([covariance_at(sys, i, t) for i in range(sys.m_count)])
    if sys.initial_covs is not None:
        for i in range(sys.m_count):
            propagator = matexp(sys.xi[i], -t)
            covs[i] += propagator @ sys.initial_covs[i] @ propagator.T
    return GaussianMixtureState(t=float(t), weights=sys.r.copy(), means=means, covariances=covs)


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Rectangular evaluation grid: one (lo, hi, count) triple per axis."""

    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        for lo, hi, count in self.axes:
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValidationError(f"grid axis ({lo}, {hi}) is not an increasing finite range")
            if count < 2:
                raise ValidationError(f"grid axis needs at least 2 points, got {count}")

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(lo, hi, count) for lo, hi, count in self.axes)

    def points(self) -> np.ndarray:
        """Flattened evaluation points, shape (prod(counts), ndim).

        Row-major with the last axis fastest: for two axes the x2 axis is the
        outer loop and x1 the inner one.
        """
        coords = self.coordinates()
        if len(coords) == 1:
            return coords[0][:, None]
        mesh = np.meshgrid(*coords[::-1], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh[::-1]], axis=1)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(count for _, _, count in self.axes[::-1])


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Per-personality and aggregated density values on a rectangular grid."""

    t: float
    grid: GridSpec
    per_personality: np.ndarray   # (M, *grid.shape), each integrates to r_i
    aggregated: np.ndarray        # (*grid.shape,)


def _gaussian_values(mean: np.ndarray, cov: np.ndarray, points: np.ndarray) -> np.ndarray:
    n = mean.size
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cov + 1e-12 * np.eye(n))
        except np.linalg.LinAlgError:
            raise NumericalError(
                "degenerate mixture covariance; evaluate at a larger time or add noise "
                "(sigma^2 > 0)") from None
    diff = points - mean
    solved = np.linalg.solve(chol, diff.T)
    lognorm = 0.5 * n * np.log(2.0 * np.pi) + float(np.log(np.diag(chol)).sum())
    return np.exp(-0.5 * np.sum(solved * solved, axis=0) - lognorm)


def mixture_density_grid(state: GaussianMixtureState, grid: GridSpec) -> DensityGrid:
    """Evaluate a Gaussian mixture on a grid (1- or 2-dimensional)."""
    ndim = state.means.shape[1]
    if len(grid.axes) != ndim:
        raise ValidationError(f"grid has {len(grid.axes)} axes for a {ndim}-subject scenario")
    if ndim not in (1, 2):
        raise ValidationError("density grids support 1 or 2 subjects")
    points = grid.points()
    per = np.empty((state.weights.size,) + grid.shape)
    for i, weight in enumerate(state.weights):
        vals = _gaussian_values(state.means[i], state.covariances[i], points)
        per[i] = weight * vals.reshape(grid.shape)
    return DensityGrid(t=state.t, grid=grid, per_personality=per, aggregated=per.sum(axis=0))


def density_grid(sys: DiscreteSystem, t: float, grid: GridSpec) -> DensityGrid:
    """Opinion density at time t on a rectangular grid."""
    return mixture_density_grid(mixture_at(sys, t), grid)


def grid_mass(values: np.ndarray, grid: GridSpec) -> float:
    """Trapezoidal integral of grid values over the grid domain."""
    acc = values
    # the last array axis is the first grid axis; peel axes inside out
    for coords in grid.coordinates():
        acc = np.trapezoid(acc, coords, axis=-1)
    return float(acc)


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SteadyState:
    """Stationary mixture: peak locations f, covariances W, and gamma(inf)."""

    f: np.ndarray                 # (M, N)
    w_matrices: np.ndarray        # (M, N, N)
    gamma_inf: np.ndarray         # (MN,)
    eta: np.ndarray               # (M,)
    w: np.ndarray                 # (M,) relaxation weights
    gibbs_checked: bool

    def mixture(self, weights: np.ndarray) -> GaussianMixtureState:
        return GaussianMixtureState(t=float("inf"), weights=weights,
                                    means=self.f, covariances=self.w_matrices)


def steady_state(sys: DiscreteSystem, scn: Scenario) -> SteadyState:
    """Stationary solution; refuses (with the report attached) if unstable."""
    from .stability import Classification, classify

    report = classify(sys)
    if report.classification is not Classification.STABLE:
        raise UnstableSystemError(
            f"steady state undefined: system classified {report.classification.value}", report)
    eta = sys.kernel @ sys.r
    albar = 1.0 - sys.alpha
    w = albar * eta + sys.alpha
    coupling_min_real = spectrum(sys.coupling).min_real_part
    if np.any(w * coupling_min_real <= 0.0):
        raise UnstableSystemError(
            "steady state undefined: relaxation weight w(p) * min Re eig(C) <= 0", report)
    _, w_inf = sys._gamma_parts
    gamma_inf = sys.zbar @ w_inf
    m, n = sys.m_count, sys.n_subjects
    f = np.empty((m, n))
    w_mats = np.empty((m, n, n))
    for i in range(m):
        beta = np.linalg.solve(sys.coupling, gamma_inf[sys.block(i)])
        u = sys.u_stack[sys.block(i)]
        f[i] = (albar[i] * beta + sys.alpha[i] * u) / w[i]
        w_mats[i] = lyapunov_solve(-w[i] * sys.coupling, sys.d)
    gibbs_checked = False
    if np.abs(sys.coupling - sys.coupling.T).max() <= 1e-12:
        # reversible case: the Gibbs stationary form pins W to sigma^2 C / (2 w)
        for i in range(m):
            closed = sys.sigma2 * sys.coupling / (2.0 * w[i])
            if np.abs(w_mats[i] - closed).max() > 1e-8 * max(1.0, float(np.abs(closed).max())):
                raise NumericalError(
                    "stationary covariance disagrees with the symmetric-coupling Gibbs form")
        gibbs_checked = True
    return SteadyState(f=f, w_matrices=w_mats, gamma_inf=gamma_inf, eta=eta, w=w,
                       gibbs_checked=gibbs_checked)


def steady_density_grid(sys: DiscreteSystem, steady: SteadyState, grid: GridSpec) -> DensityGrid:
    """Stationary opinion density on a rectangular grid."""
    return mixture_density_grid(steady.mixture(sys.r.copy()), grid)
