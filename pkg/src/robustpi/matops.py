"""Dense linear-algebra kernels and vectorization conventions.

All vectorizations are column-stacked.  ``svec`` carries sqrt(2) weights on
off-diagonal entries so that ``svec(P) @ svec(X) == <P, X>_F`` for symmetric
arguments; ``vecv`` is the plain quadratic-monomial vector without weights.
"""

import numpy as np
import scipy.linalg

from .errors import AsymmetricInput, BadLength, NotHurwitz, SolveFailure

SQRT2 = np.sqrt(2.0)

#: default guard added to the Hurwitz margin so that eigenvalues numerically
#: on the imaginary axis count as unstable
HURWITZ_GUARD = 1e-9


def as_matrix(M, name="matrix"):
    """Coerce to a finite 2-d float array."""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return A


def vec(M):
    """Column-stacked vectorization of M."""
    return as_matrix(M).flatten(order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec` for a known shape."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise BadLength(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def symmetrize(P):
    return 0.5 * (P + P.T)


def check_symmetric(P, tol=1e-10, name="matrix"):
    P = as_matrix(P, name)
    if P.shape[0] != P.shape[1]:
        raise AsymmetricInput(f"{name} is not square: {P.shape}")
    scale = max(1.0, np.abs(P).max())
    if np.abs(P - P.T).max() > tol * scale:
        raise AsymmetricInput(f"{name} violates symmetry tolerance {tol}")
    return symmetrize(P)


def svec(P, tol=1e-10):
    """Half-vectorization [p11, sqrt2*p12, ..., p22, ...] of symmetric P."""
    P = check_symmetric(P, tol)
    n = P.shape[0]
    out = np.empty(n * (n + 1) // 2)
    k = 0
    for i in range(n):
        out[k] = P[i, i]
        k += 1
        for j in range(i + 1, n):
            out[k] = SQRT2 * P[i, j]
            k += 1
    return out


def triangular_order(length):
    """Matrix dimension n with n(n+1)/2 == length, or raise BadLength."""
    n = int(round((np.sqrt(8.0 * length + 1.0) - 1.0) / 2.0))
    if n * (n + 1) // 2 != length:
        raise BadLength(f"length {length} is not a triangular number")
    return n


def smat(v):
    """Inverse of :func:`svec`; exact round trip for symmetric inputs."""
    v = np.asarray(v, dtype=float).ravel()
    n = triangular_order(v.size)
    P = np.empty((n, n))
    k = 0
    for i in range(n):
        P[i, i] = v[k]
        k += 1
        for j in range(i + 1, n):
            P[i, j] = P[j, i] = v[k] / SQRT2
            k += 1
    return P


def vecv(x):
    """Quadratic monomials [x1^2, x1x2, ..., x1xn, x2^2, ..., xn^2], no weights."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    out = np.empty(n * (n + 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i, n):
            out[k] = x[i] * x[j]
            k += 1
    return out


def vecv_weights(n):
    """Per-entry factors w with w * vecv(x) == svec(x x^T)."""
    w = np.empty(n * (n + 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i, n):
            w[k] = 1.0 if i == j else SQRT2
            k += 1
    return w


def kron(A, B):
    """Kronecker product with the convention (A kron B) vec(X) = vec(B X A^T)."""
    return np.kron(as_matrix(A), as_matrix(B))


class Spectrum:
    """Eigenvalues of a square matrix plus their spectral abscissa."""

    def __init__(self, A):
        A = as_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"spectrum of non-square matrix {A.shape}")
        self.eigenvalues = np.linalg.eigvals(A)
        self.abscissa = float(self.eigenvalues.real.max())

    def __repr__(self):
        return f"Spectrum(abscissa={self.abscissa:.6g}, n={len(self.eigenvalues)})"


class HurwitzCheck:
    """Boolean verdict carrying the spectrum it was decided on."""

    def __init__(self, ok, spectrum):
        self.ok = bool(ok)
        self.spectrum = spectrum

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return f"HurwitzCheck(ok={self.ok}, abscissa={self.spectrum.abscissa:.6g})"


def is_hurwitz(A, margin=0.0, guard=HURWITZ_GUARD):
    """True iff the spectral abscissa is below -(margin + guard)."""
    s = Spectrum(A)
    return HurwitzCheck(s.abscissa < -(margin + guard), s)


def solve_lyapunov(F, Qs, sym_tol=1e-10):
    """Unique symmetric P with F^T P + P F + Qs = 0 for Hurwitz F.

    Solved by dense Schur reduction (Bartels-Stewart); the result is
    symmetrized and its residual checked against 1e-10 * (1 + ||Qs||_F).
    """
    F = as_matrix(F, "F")
    Qs = check_symmetric(Qs, sym_tol, "Qs")
    if F.shape != Qs.shape:
        raise SolveFailure(f"shape mismatch F{F.shape} vs Qs{Qs.shape}")
    hz = is_hurwitz(F)
    if not hz:
        raise NotHurwitz(f"spectral abscissa {hz.spectrum.abscissa:.3e} >= 0")
    try:
        P = scipy.linalg.solve_lyapunov(F.T, -Qs)
    except Exception as exc:  # LinAlgError or LAPACK failure
        raise SolveFailure(f"Lyapunov solve failed: {exc}") from exc
    P = symmetrize(P)
    resid = np.linalg.norm(F.T @ P + P @ F + Qs, "fro")
    if not np.isfinite(resid) or resid > 1e-10 * (1.0 + np.linalg.norm(Qs, "fro")):
        raise SolveFailure(f"Lyapunov residual {resid:.3e} above tolerance")
    return P


def lyapunov_kron_solve(F, Qs):
    """Brute-force Lyapunov solve via (I kron F^T + F^T kron I) vec(P) = -vec(Qs).

    Independent of the Schur path; intended as a cross-check oracle.
    """
    F = as_matrix(F, "F")
    n = F.shape[0]
    big = np.kron(np.eye(n), F.T) + np.kron(F.T, np.eye(n))
    p = np.linalg.solve(big, -vec(np.asarray(Qs, dtype=float)))
    return symmetrize(unvec(p, n, n))


def lyapunov_quadrature_oracle(F, Qs, horizon=60.0, steps=6000):
    """Trapezoidal approximation of the integral representation of the
    Lyapunov solution, int_0^T expm(F^T t) Qs expm(F t) dt."""
    F = as_matrix(F, "F")
    Qs = as_matrix(Qs, "Qs")
    hz = is_hurwitz(F)
    if not hz:
        raise NotHurwitz(f"spectral abscissa {hz.spectrum.abscissa:.3e} >= 0")
    h = horizon / steps
    Eh = scipy.linalg.expm(F * h)
    E = np.eye(F.shape[0])
    acc = 0.5 * Qs  # t = 0 endpoint
    for k in range(1, steps):
        E = E @ Eh
        acc = acc + E.T @ Qs @ E
    E = E @ Eh
    acc = acc + 0.5 * (E.T @ Qs @ E)
    return symmetrize(acc * h)


def psd_floor(P):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(P)).min())
