"""Dense real-matrix primitives: matrix exponential, eigenvalues, Lyapunov.

Everything here works on plain ``numpy.ndarray`` values and is pure: inputs
are never modified. The algorithms are implemented in-repo (only dense
solves and array arithmetic are delegated to numpy):

* ``matexp``       scaling-and-squaring with diagonal Pade approximants
                   (orders 3/5/7/9/13, Higham-style order selection),
* ``spectrum``     Householder reduction to Hessenberg form followed by the
                   Francis double-shift QR iteration with deflation,
* ``lyapunov_solve`` matrix sign-function Newton iteration with determinant
                   scaling,
* ``kron``         the Kronecker product.

Dimensions stay moderate (at most a few hundred), so dense O(n^3) methods
are the right trade-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalError, SingularOperatorError, ValidationError

_EPS = float(np.finfo(np.float64).eps)


def _as_square(a, op: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{op} requires a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{op} requires finite entries")
    return a


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a real square matrix, ordered by descending real part."""

    eigenvalues: np.ndarray
    min_real_part: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=complex)
        order = np.lexsort((-vals.imag, -vals.real))
        vals = vals[order]
        vals.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "min_real_part", float(vals.real.min()) if vals.size else 0.0)

    def __len__(self) -> int:
        return self.eigenvalues.size


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}

# largest 1-norm for which the order-m approximant keeps backward error < eps
_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade(a: np.ndarray, m: int) -> np.ndarray:
    b = _PADE_COEFFS[m]
    n = a.shape[0]
    ident = np.eye(n)
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    else:
        u = b[1] * ident
        v = b[0] * ident
        p = ident
        for k in range(1, m // 2 + 1):
            p = p @ a2
            u = u + b[2 * k + 1] * p
            v = v + b[2 * k] * p
        u = a @ u
    return np.linalg.solve(v - u, v + u)


def matexp(a, t: float = 1.0) -> np.ndarray:
    """Return exp(a*t) for a real square matrix ``a``.

    Relative error is at the rounding level (<= 1e-12) for well-conditioned
    inputs of moderate norm.
    """
    a = _as_square(a, "matexp")
    if not math.isfinite(t):
        raise ValidationError("matexp requires a finite time t")
    x = a * float(t)
    norm1 = float(np.abs(x).sum(axis=0).max()) if x.size else 0.0
    for m in (3, 5, 7, 9):
        if norm1 <= _PADE_THETA[m]:
            return _pade(x, m)
    squarings = max(0, int(math.ceil(math.log2(norm1 / _PADE_THETA[13]))))
    result = _pade(x / (2.0 ** squarings), 13)
    for _ in range(squarings):
        result = result @ result
    return result


# ---------------------------------------------------------------------------
# eigenvalues
# ---------------------------------------------------------------------------

def _eig2(a: float, b: float, c: float, d: float) -> tuple[complex, complex]:
    """Eigenvalues of [[a, b], [c, d]] via the stable quadratic formula.

    The discriminant is formed as ((a-d)/2)^2 + bc, which stays accurate for
    clustered eigenvalues where m^2 - det would cancel catastrophically.
    """
    m = 0.5 * (a + d)
    half_diff = 0.5 * (a - d)
    disc = half_diff * half_diff + b * c
    if disc >= 0.0:
        sq = math.sqrt(disc)
        lam1 = m + sq if m >= 0.0 else m - sq
        lam2 = (a * d - b * c) / lam1 if lam1 != 0.0 else 0.0
        return complex(lam1), complex(lam2)
    sq = math.sqrt(-disc)
    return complex(m, sq), complex(m, -sq)


def _householder(x: np.ndarray) -> np.ndarray | None:
    """Unit reflector vector v with (I - 2 v v^T) x along e1, or None if x ~ 0."""
    sigma = float(np.linalg.norm(x))
    if sigma == 0.0:
        return None
    v = x.astype(float).copy()
    v[0] += math.copysign(sigma, x[0]) if x[0] != 0.0 else sigma
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return None
    return v / vn


def _hessenberg(a: np.ndarray) -> np.ndarray:
    h = a.copy()
    n = h.shape[0]
    for k in range(n - 2):
        v = _householder(h[k + 1:, k])
        if v is None:
            continue
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
    return h


def _francis_step(b: np.ndarray, trace: float, det: float) -> None:
    """One implicit double-shift QR sweep on an unreduced Hessenberg block."""
    m = b.shape[0]
    x = b[0, 0] * b[0, 0] + b[0, 1] * b[1, 0] - trace * b[0, 0] + det
    y = b[1, 0] * (b[0, 0] + b[1, 1] - trace)
    z = b[2, 1] * b[1, 0]
    for k in range(m - 2):
        v = _householder(np.array([x, y, z]))
        if v is not None:
            q = max(0, k - 1)
            b[k:k + 3, q:] -= 2.0 * np.outer(v, v @ b[k:k + 3, q:])
            r = min(k + 4, m)
            b[:r, k:k + 3] -= 2.0 * np.outer(b[:r, k:k + 3] @ v, v)
        x = b[k + 1, k]
        y = b[k + 2, k]
        if k < m - 3:
            z = b[k + 3, k]
    v = _householder(np.array([x, y]))
    if v is not None:
        b[m - 2:m, m - 3:] -= 2.0 * np.outer(v, v @ b[m - 2:m, m - 3:])
        b[:, m - 2:m] -= 2.0 * np.outer(b[:, m - 2:m] @ v, v)


def spectrum(a, *, max_iter_per_block: int = 60) -> Spectrum:
    """All eigenvalues of a real square matrix.

    Raises :class:`ConvergenceError` (carrying the iteration count) if the
    QR iteration fails to deflate a block within its budget.
    """
    a = _as_square(a, "spectrum")
    n = a.shape[0]
    if n == 1:
        return Spectrum(np.array([complex(a[0, 0])]))
    if n == 2:
        return Spectrum(np.array(_eig2(a[0, 0], a[0, 1], a[1, 0], a[1, 1])))

    h = _hessenberg(a)
    anorm = float(np.abs(h).sum(axis=0).max())
    eigs: list[complex] = []
    hi = n - 1
    block_iters = 0
    total_iters = 0
    while hi >= 0:
        if hi == 0:
            eigs.append(complex(h[0, 0]))
            break
        for i in range(hi, 0, -1):
            scale = abs(h[i - 1, i - 1]) + abs(h[i, i])
            if scale == 0.0:
                scale = anorm
            if abs(h[i, i - 1]) <= _EPS * scale:
                h[i, i - 1] = 0.0
        if h[hi, hi - 1] == 0.0:
            eigs.append(complex(h[hi, hi]))
            hi -= 1
            block_iters = 0
            continue
        if hi == 1 or h[hi - 1, hi - 2] == 0.0:
            eigs.extend(_eig2(h[hi - 1, hi - 1], h[hi - 1, hi],
                              h[hi, hi - 1], h[hi, hi]))
            hi -= 2
            block_iters = 0
            continue
        lo = hi - 1
        while lo > 0 and h[lo, lo - 1] != 0.0:
            lo -= 1
        block_iters += 1
        total_iters += 1
        if block_iters > max_iter_per_block:
            raise ConvergenceError("QR iteration failed to deflate an eigenvalue block", total_iters)
        if block_iters % 10 == 0:
            # ad-hoc shifts break occasional symmetry-induced cycles
            ex = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
            trace, det = 1.5 * ex, -0.4375 * ex * ex
        else:
            trace = h[hi - 1, hi - 1] + h[hi, hi]
            det = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
        _francis_step(h[lo:hi + 1, lo:hi + 1], trace, det)
    return Spectrum(np.array(eigs))


# ---------------------------------------------------------------------------
# Lyapunov equation
# ---------------------------------------------------------------------------

def lyapunov_solve(a, q, *, hurwitz_tol: float = 1e-12, max_iter: int = 100,
                   residual_tol: float = 1e-10) -> np.ndarray:
    """Solve a W + W a^T + q = 0 for Hurwitz-stable ``a``.

    Uses the matrix sign-function Newton iteration with determinant scaling;
    the iterate pair (A_k, Q_k) converges quadratically to (-I, 2 W).
    """
    a = _as_square(a, "lyapunov_solve")
    q = _as_square(q, "lyapunov_solve")
    n = a.shape[0]
    if q.shape[0] != n:
        raise DimensionError(f"lyapunov_solve requires matching shapes, got {a.shape} and {q.shape}")
    spec = spectrum(a)
    if spec.min_real_part >= -hurwitz_tol:
        raise SingularOperatorError(
            "lyapunov_solve has no unique solution: matrix is not Hurwitz "
            f"(max eigenvalue real part {-(-spec.eigenvalues.real).min():.3e} "
            f"... min {spec.min_real_part:.3e} not < -{hurwitz_tol:g})")

    symmetric_q = bool(np.allclose(q, q.T, rtol=0.0, atol=1e-13 * max(1.0, float(np.abs(q).max()))))
    ak = a.copy()
    qk = q.copy()
    stop = 10.0 * n * _EPS
    for _ in range(max_iter):
        ainv = np.linalg.inv(ak)
        c = abs(float(np.linalg.det(ak))) ** (1.0 / n)
        if not math.isfinite(c) or c == 0.0:
            c = 1.0
        a_next = 0.5 * (ak / c + c * ainv)
        qk = 0.5 * (qk / c + c * (ainv @ qk @ ainv.T))
        delta = float(np.linalg.norm(a_next - ak, "fro"))
        ak = a_next
        if delta <= stop * float(np.linalg.norm(ak, "fro")):
            break
    w = 0.5 * qk
    if symmetric_q:
        w = 0.5 * (w + w.T)
    residual = float(np.linalg.norm(a @ w + w @ a.T + q, "fro"))
    qnorm = float(np.linalg.norm(q, "fro"))
    if residual > residual_tol * max(qnorm, 1e-300):
        raise NumericalError(
            f"lyapunov_solve residual {residual:.3e} exceeds {residual_tol:g} * ||q|| = {residual_tol * qnorm:.3e}")
    return w


# ---------------------------------------------------------------------------
# Kronecker product
# ---------------------------------------------------------------------------

def kron(a, b) -> np.ndarray:
    """Kronecker product of two real matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("kron requires two 2-d matrices")
    return np.kron(a, b)
