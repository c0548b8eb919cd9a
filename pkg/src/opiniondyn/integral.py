"""Integral-equation solvers independent of the closed-form machinery.

``volterra_solve`` time-steps the self-consistency equation for the
interaction field with the trapezoidal rule; it serves as the oracle for
the closed-form trajectory (global error O(dt^2)).

``fredholm_solve`` computes the steady-state field by Nystrom discretization
of the personality domain and Neumann (fixed-point) iteration, giving a
route to the stationary peaks that never touches the block system matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractionError, ConvergenceError, SingularOperatorError, ValidationError
from .linalg import matexp
from .meanfield import DiscreteSystem
from .scenario import ContinuousModel, Scenario, discretize_personality


# ---------------------------------------------------------------------------
# time domain: Volterra equation of the second kind
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolterraTrajectory:
    times: np.ndarray    # (K,)
    gamma: np.ndarray    # (K, MN)


def _block_apply(blocks: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """Apply per-personality (M, N, N) blocks to a stacked MN vector."""
    m, n, _ = blocks.shape
    return np.einsum("mij,mj->mi", blocks, stacked.reshape(m, n)).reshape(-1)


def _propagator_pair(xi: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(exp(-xi dt), int_0^dt exp(-xi s) ds) for every personality block."""
    m, n, _ = xi.shape
    steps = np.empty((m, n, n))
    integrals = np.empty((m, n, n))
    for i in range(m):
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = -xi[i]
        aug[:n, n:] = np.eye(n)
        eaug = matexp(aug, dt)
        steps[i] = eaug[:n, :n]
        integrals[i] = eaug[:n, n:]
    return steps, integrals


def volterra_solve(sys: DiscreteSystem, horizon: float, dt: float) -> VolterraTrajectory:
    """Trapezoidal time-stepping of the interaction-field fixed point.

    The source terms enter in closed form; only the memory convolution is
    quadrature. The one-step propagator turns the trapezoidal sum into an
    O(steps) recursion without changing its values.
    """
    if dt <= 0.0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if horizon < dt:
        raise ValidationError(f"horizon {horizon} is shorter than one step {dt}")
    steps = int(round(horizon / dt))
    m, n = sys.m_count, sys.n_subjects
    mn = m * n
    e_dt, j_dt = _propagator_pair(sys.xi, dt)
    p0x = sys.p0 @ sys.x0_stack
    p1cu = sys.p1 @ _blockwise_coupling(sys) @ sys.u_stack
    p2_diag = sys.p2.diagonal().copy()
    lhs = np.eye(mn) - 0.5 * dt * sys.zbar * p2_diag[None, :]
    lhs_inv = np.linalg.inv(lhs)

    times = np.arange(steps + 1) * dt
    gamma = np.empty((steps + 1, mn))
    e_acc = np.tile(np.eye(n), (m, 1, 1))      # exp(-xi t_k), blockwise
    j_acc = np.zeros((m, n, n))                # int_0^{t_k} exp(-xi s) ds
    gamma[0] = sys.zbar @ p0x
    conv = np.zeros(mn)
    for k in range(1, steps + 1):
        j_acc = j_acc + np.einsum("mij,mjk->mik", e_acc, j_dt)
        e_acc = np.einsum("mij,mjk->mik", e_acc, e_dt)
        source = sys.zbar @ (_block_apply(e_acc, p0x) + _block_apply(j_acc, p1cu))
        carry = _block_apply(e_dt, conv + 0.5 * dt * p2_diag * gamma[k - 1])
        gamma[k] = lhs_inv @ (source + sys.zbar @ carry)
        conv = carry + 0.5 * dt * p2_diag * gamma[k]
    return VolterraTrajectory(times=times, gamma=gamma)


def _blockwise_coupling(sys: DiscreteSystem) -> np.ndarray:
    mn = sys.m_count * sys.n_subjects
    out = np.zeros((mn, mn))
    for i in range(sys.m_count):
        out[sys.block(i), sys.block(i)] = sys.coupling
    return out


# ---------------------------------------------------------------------------
# personality domain: Fredholm equation of the second kind
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FredholmSolution:
    """Nystrom solution of the stationary field equation on a personality mesh."""

    mesh: np.ndarray          # (M,) personality samples
    masses: np.ndarray        # (M,)
    alpha: np.ndarray         # (M,)
    eta: np.ndarray           # (M,) kernel averages
    w: np.ndarray             # (M,) relaxation weights
    prejudice: np.ndarray     # (M, N)
    phi: np.ndarray           # (M, N)
    beta: np.ndarray          # (M, N)
    f: np.ndarray             # (M, N) stationary peak locations
    iterations: int
    kappa: float
    residual: float
    change_history: tuple[float, ...]


def _kappa_from(alpha: np.ndarray, eta: np.ndarray) -> float:
    return float(np.max((1.0 - alpha) * eta / ((1.0 - alpha) * eta + alpha)))


def contraction_bound(spec: Scenario | ContinuousModel, *, nodes: int = 1025) -> float:
    """Fixed-point contraction factor sup_q (1-a) eta / ((1-a) eta + a).

    For a continuous model the kernel average eta is evaluated by composite
    Simpson quadrature on the personality domain.
    """
    if isinstance(spec, Scenario):
        eta = spec.kernel_table() @ spec.masses
        return _kappa_from(spec.stubbornness, eta)
    if nodes % 2 == 0:
        raise ValidationError("Simpson quadrature needs an odd node count")
    lo, hi = spec.domain
    q = np.linspace(lo, hi, nodes)
    h = (hi - lo) / (nodes - 1)
    weights = np.full(nodes, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    rho = np.array([spec.density(x) for x in q])
    eta = np.array([float(np.dot(weights, np.array([spec.kernel(p, x) for x in q]) * rho))
                    for p in q])
    alpha = np.array([spec.stubbornness(p) for p in q])
    return _kappa_from(alpha, eta)


def fredholm_solve(spec: Scenario | ContinuousModel, n: int | None = None,
                   tol: float = 1e-10, *, max_iter: int = 10000) -> FredholmSolution:
    """Neumann iteration for the stationary field on the Nystrom mesh.

    Solves phi = h + A[phi] component-wise over the subject dimensions, then
    reports beta = eta * phi and the peak locations f. Falls back to a dense
    linear solve if the iteration cap is hit before the tolerance.
    """
    if isinstance(spec, ContinuousModel):
        if n is None:
            raise ValidationError("a continuous model needs an explicit mesh count n")
        scn = discretize_personality(spec, n)
    else:
        scn = spec
        if n is not None and n != scn.personality_count:
            raise ValidationError(
                f"mesh count {n} does not match the {scn.personality_count} personality masses")
    table = scn.kernel_table()
    r = scn.masses
    alpha = scn.stubbornness
    albar = 1.0 - alpha
    eta = table @ r
    w = albar * eta + alpha
    scale = max(1.0, float(np.abs(w).max()))
    if float(np.abs(w).min()) <= 1e-12 * scale:
        raise SingularOperatorError("relaxation weight w(p) vanishes on the mesh")
    if float(np.abs(eta).min()) <= 1e-14 * max(1.0, float(np.abs(table).max())):
        raise SingularOperatorError("kernel average eta(p) vanishes on the mesh; "
                                    "the field change of variable is undefined")
    kappa = _kappa_from(alpha, eta)
    if kappa >= 1.0:
        raise ContractionError("fixed-point iteration is not a contraction", kappa)
    u = scn.prejudice
    h = (table * (alpha * r / w)[None, :]) @ u / eta[:, None]
    operator = table * (albar * eta * r / w)[None, :] / eta[:, None]
    phi = h.copy()
    changes: list[float] = []
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        nxt = h + operator @ phi
        change = float(np.abs(nxt - phi).max())
        changes.append(change)
        phi = nxt
        if change < tol:
            converged = True
            break
    if not converged:
        try:
            phi = np.linalg.solve(np.eye(scn.personality_count) - operator, h)
        except np.linalg.LinAlgError:
            raise ConvergenceError("Neumann iteration hit its cap and the dense "
                                   "solve is singular", iterations) from None
    residual = float(np.abs(phi - h - operator @ phi).max())
    beta = eta[:, None] * phi
    f = (albar[:, None] * beta + alpha[:, None] * u) / w[:, None]
    return FredholmSolution(
        mesh=scn.personalities,
        masses=r,
        alpha=alpha,
        eta=eta,
        w=w,
        prejudice=u,
        phi=phi,
        beta=beta,
        f=f,
        iterations=iterations,
        kappa=kappa,
        residual=residual,
        change_history=tuple(changes),
    )


def nystrom_extend(sol: FredholmSolution, model: ContinuousModel, p_targets) -> np.ndarray:
    """Evaluate the Nystrom solution at arbitrary personality values.

    Uses the natural extension phi(p) = h(p) + sum_j Phi(p, q_j) phi_j r_j
    with all mesh quantities taken from the solved mesh.
    """
    targets = np.atleast_1d(np.asarray(p_targets, dtype=float))
    albar = 1.0 - sol.alpha
    out = np.empty((targets.size, sol.phi.shape[1]))
    for k, p in enumerate(targets):
        zeta = np.array([model.kernel(float(p), float(q)) for q in sol.mesh])
        eta_p = float(np.dot(zeta, sol.masses))
        if abs(eta_p) <= 1e-14:
            raise SingularOperatorError(f"kernel average vanishes at p = {p}")
        h_p = (zeta * (sol.alpha * sol.masses / sol.w)) @ sol.prejudice / eta_p
        weights = zeta * (albar * sol.eta * sol.masses / sol.w) / eta_p
        out[k] = h_p + weights @ sol.phi
    return out


def mesh_refinement_study(model: ContinuousModel, mesh_counts,
                          tol: float = 1e-12) -> list[tuple[int, float]]:
    """Table of sup-norm gaps between the mesh-n and mesh-2n solutions.

    The coarse solution is extended to the finer mesh points before
    comparing, so the gap measures genuine refinement error.
    """
    counts = [int(n) for n in mesh_counts]
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValidationError("mesh counts must be strictly increasing")
    cache: dict[int, FredholmSolution] = {}

    def solve(n: int) -> FredholmSolution:
        if n not in cache:
            cache[n] = fredholm_solve(model, n, tol)
        return cache[n]

    rows = []
    for n in counts:
        coarse, fine = solve(n), solve(2 * n)
        extended = nystrom_extend(coarse, model, fine.mesh)
        rows.append((n, float(np.abs(extended - fine.phi).max())))
    return rows
