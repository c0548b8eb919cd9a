"""Stability classification of the assembled mean-field system.

The spectral tests are decisive: covariances stay bounded iff every
per-personality drift matrix is Hurwitz-positive (all eigenvalue real
parts > 0 for the relaxation convention used here), and the coupled means
stay bounded iff the block system matrix is too. Losing the first property
is type-I instability (opinions scatter), losing only the second is type-II
(communities radicalize: means diverge, spreads stay finite).

The sufficient conditions (nonnegative kernels, and the dominance condition
for kernels with repulsion) are evaluated as advisory tri-states; they never
override the spectral classification.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import Spectrum, spectrum
from .meanfield import DiscreteSystem
from .scenario import ContinuousModel, Scenario


class Classification(enum.Enum):
    STABLE = "Stable"
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


class TriState(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True, eq=False)
class StabilityReport:
    classification: Classification
    min_real_xi: float
    min_real_psi: float
    xi_spectra: tuple[Spectrum, ...]
    psi_spectrum: Spectrum
    theta_spectrum: Spectrum | None
    sufficient_checks: dict[str, TriState]


def _theta_matrix(kernel: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """M x M matrix whose Kronecker product with C reproduces the coupling
    part of the block system matrix (constant-stubbornness factorization)."""
    theta = -kernel * masses[:, None]
    np.fill_diagonal(theta, kernel @ masses - np.diag(kernel) * masses)
    return theta


def _prop1(kernel: np.ndarray, n_subjects: int) -> TriState:
    if n_subjects != 1:
        return TriState.NOT_APPLICABLE
    return TriState.HOLDS if np.all(kernel >= 0.0) else TriState.FAILS


def _prop2(kernel: np.ndarray, masses: np.ndarray, alpha: np.ndarray, n_subjects: int) -> TriState:
    if n_subjects != 1:
        return TriState.NOT_APPLICABLE
    if np.ptp(alpha) != 0.0:
        return TriState.NOT_APPLICABLE
    if kernel.min() >= 0.0:
        return TriState.NOT_APPLICABLE
    a = float(alpha[0])
    if a == 1.0:
        return TriState.HOLDS
    threshold = -a / (1.0 - a)
    off = kernel.copy()
    np.fill_diagonal(off, 0.0)
    sums = off @ masses - np.abs(off).sum(axis=1) * masses
    return TriState.HOLDS if np.all(sums > threshold) else TriState.FAILS


def classify(sys: DiscreteSystem, *, marginal_tol: float = 1e-12) -> StabilityReport:
    """Spectral stability classification of an assembled system.

    Eigenvalues with real part within ``marginal_tol`` of zero count as
    unstable (the boundary itself is not stable).
    """
    xi_spectra = sys.xi_spectra
    min_real_xi = min(spec.min_real_part for spec in xi_spectra)
    psi_spectrum = sys.psi_spectrum
    min_real_psi = psi_spectrum.min_real_part
    if min_real_xi <= marginal_tol:
        classification = Classification.TYPE_I
    elif min_real_psi <= marginal_tol:
        classification = Classification.TYPE_II
    else:
        classification = Classification.STABLE
    theta_spectrum = None
    if np.ptp(sys.alpha) == 0.0:
        theta_spectrum = spectrum(_theta_matrix(sys.kernel, sys.r))
    checks = {
        "prop1": _prop1(sys.kernel, sys.n_subjects),
        "prop2": _prop2(sys.kernel, sys.r, sys.alpha, sys.n_subjects),
        "continuous": TriState.NOT_APPLICABLE,
    }
    return StabilityReport(
        classification=classification,
        min_real_xi=float(min_real_xi),
        min_real_psi=float(min_real_psi),
        xi_spectra=xi_spectra,
        psi_spectrum=psi_spectrum,
        theta_spectrum=theta_spectrum,
        sufficient_checks=checks,
    )


def prop1_check(scn: Scenario) -> TriState:
    """Nonnegative-kernel sufficient condition (single-subject case only)."""
    return _prop1(scn.kernel_table(), scn.subjects)


def prop2_check(scn: Scenario) -> TriState:
    """Dominance sufficient condition for kernels with repulsive entries.

    Applies to single-subject scenarios with constant stubbornness and at
    least one negative kernel entry; holds when for every personality
    sum_{j != i} (zeta_ij r_j - |zeta_ij| r_i) > -alpha / (1 - alpha).
    """
    return _prop2(scn.kernel_table(), scn.masses, scn.stubbornness, scn.subjects)


def _simpson(values: np.ndarray, h: float) -> float:
    weights = np.full(values.size, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return float(np.dot(weights, values)) * h / 3.0


def continuous_condition(model: ContinuousModel, p_samples, *, nodes: int = 1025) -> list[TriState]:
    """Continuous-personality stability condition, checked per sample point.

    At each sample p the two kernel integrals are evaluated by composite
    Simpson quadrature and compared against -alpha(p) / (1 - alpha(p)).
    """
    if nodes % 2 == 0:
        raise ValidationError("Simpson quadrature needs an odd node count")
    lo, hi = model.domain
    q = np.linspace(lo, hi, nodes)
    h = (hi - lo) / (nodes - 1)
    rho = np.array([model.density(x) for x in q])
    results = []
    for p in np.atleast_1d(np.asarray(p_samples, dtype=float)):
        zeta = np.array([model.kernel(p, x) for x in q])
        attract = _simpson(zeta * rho, h)
        churn = _simpson(np.abs(zeta), h) * model.density(float(p))
        a = model.stubbornness(float(p))
        threshold = -np.inf if a == 1.0 else -a / (1.0 - a)
        results.append(TriState.HOLDS if attract - churn > threshold else TriState.FAILS)
    return results


@dataclass(frozen=True, eq=False)
class Example1Result:
    """Closed-form spectrum and thresholds for the two-community scalar case."""

    psi_eigenvalues: np.ndarray
    classification: Classification
    type1_threshold: float   # repulsion at or above this: opinions scatter
    type2_threshold: float   # repulsion at or above this: means diverge


def example1_oracle(m_count: int, alpha: float, zeta1: float, zeta2: float) -> Example1Result:
    """Closed-form stability result for M equal masses in two sign communities
    (single subject, constant stubbornness).

    The block system matrix has eigenvalues
    {alpha + (1-alpha)(zeta1-zeta2)/2 (x M-2), alpha, alpha - (1-alpha) zeta2}.
    """
    if m_count < 2 or m_count % 2:
        raise ValidationError(f"M must be even and >= 2, got {m_count}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    albar = 1.0 - alpha
    bulk = alpha + albar * (zeta1 - zeta2) / 2.0
    eigenvalues = np.array([bulk] * (m_count - 2) + [alpha, alpha - albar * zeta2])
    type1 = zeta1 + 2.0 * alpha / albar
    type2 = alpha / albar
    if zeta2 >= type1:
        classification = Classification.TYPE_I
    elif zeta2 >= type2:
        classification = Classification.TYPE_II
    else:
        classification = Classification.STABLE
    return Example1Result(
        psi_eigenvalues=eigenvalues,
        classification=classification,
        type1_threshold=type1,
        type2_threshold=type2,
    )
