"""Game-ARE residuals and solvers, bounded-real feasibility, H-infinity norm,
constraint-set membership, and the initial stabilizing-gain search.

The quadratic matrix equation at attenuation level gamma is

    A'P + PA - P (B R^-1 B' - gamma^-2 D D') P + Q = 0

whose stabilizing solution defines the saddle-point value of the underlying
zero-sum game.  For a fixed gain K, feasibility of the bounded-real equation

    A_K' P + P A_K + Q_K + gamma^-2 P D D' P = 0

with A_K + gamma^-2 DD'P Hurwitz is equivalent to ||T_zw(K)||_inf < gamma.
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import (DimensionMismatch, Infeasible, NoConvergence,
                     NotHurwitz, NotStabilizing, SearchFailure)
from .plant import GainPair


@dataclass(frozen=True)
class StateSpace:
    """Strictly proper closed-loop realization of the disturbance channel."""

    A_cl: np.ndarray
    B_in: np.ndarray
    C_out: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A_cl", matops.as_matrix(self.A_cl, "A_cl"))
        object.__setattr__(self, "B_in", matops.as_matrix(self.B_in, "B_in"))
        object.__setattr__(self, "C_out", matops.as_matrix(self.C_out, "C_out"))
        n = self.A_cl.shape[0]
        if self.A_cl.shape != (n, n):
            raise DimensionMismatch("A_cl must be square")
        if self.B_in.shape[0] != n or self.C_out.shape[1] != n:
            raise DimensionMismatch("B_in/C_out incompatible with A_cl")


def tzw_realization(plant, K):
    """Realization of T_zw(K) = (C - EK)(sI - A + BK)^-1 D."""
    K = matops.as_matrix(K, "K")
    if K.shape != (plant.m, plant.n):
        raise DimensionMismatch(f"K shape {K.shape}, want {(plant.m, plant.n)}")
    return StateSpace(plant.A - plant.B @ K, plant.D, plant.C - plant.E @ K)


def _gare_s(plant, gamma):
    Rinv_Bt = np.linalg.solve(plant.R, plant.B.T)
    return plant.B @ Rinv_Bt - (plant.D @ plant.D.T) / gamma**2


def gare_residual(P, plant, gamma):
    """Residual A'P + PA - P(BR^-1B' - gamma^-2 DD')P + Q; zero at the solution."""
    P = matops.as_matrix(P, "P")
    if P.shape != plant.A.shape:
        raise DimensionMismatch(f"P shape {P.shape}, want {plant.A.shape}")
    S = _gare_s(plant, gamma)
    return plant.A.T @ P + P @ plant.A - P @ S @ P + plant.Q


def _stable_subspace_solution(A, S, Q):
    """Stabilizing solution of A'P + PA - PSP + Q = 0 from the stable
    invariant subspace of the Hamiltonian [[A, -S], [-Q, -A']].

    Returns None when no imaginary-axis-free stable subspace of dimension n
    with invertible top block exists.
    """
    n = A.shape[0]
    H = np.block([[A, -S], [-Q, -A.T]])
    w, V = np.linalg.eig(H)
    scale = max(1.0, np.abs(w).max())
    if np.min(np.abs(w.real)) < 1e-9 * scale:
        return None
    idx = np.where(w.real < 0)[0]
    if len(idx) != n:
        return None
    X1 = V[:n, idx]
    X2 = V[n:, idx]
    if np.linalg.cond(X1) > 1e13:
        return None
    P = np.real(X2 @ np.linalg.inv(X1))
    return matops.symmetrize(P)


def solve_lqr(A, B, Q, R):
    """Stabilizing LQR solution of A'P + PA - P B R^-1 B' P + Q = 0, polished
    by one round of Newton-Kleinman iteration."""
    S = B @ np.linalg.solve(R, B.T)
    P = _stable_subspace_solution(A, S, Q)
    if P is None:
        raise Infeasible("no stabilizing LQR solution (stabilizability violated?)")
    # Kleinman polish: exact Newton steps from a stabilizing iterate
    for _ in range(20):
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if not matops.is_hurwitz(Acl, guard=0.0):
            break
        Pn = matops.solve_lyapunov(Acl, Q + K.T @ R @ K)
        if np.linalg.norm(Pn - P, "fro") <= 1e-13 * (1 + np.linalg.norm(P, "fro")):
            P = Pn
            break
        P = Pn
    return matops.symmetrize(P)


def solve_gare_oracle(plant, gamma, init=None, max_iter=200, tol_factor=1e-9):
    """Independent direct solver for the game equation at level gamma.

    Damped Newton on the matrix residual, seeded from the gamma = inf (LQR)
    solution or a caller-supplied iterate; every Newton step is a Lyapunov
    solve at the current closure A - S P, with step halving whenever the
    residual would grow or the closure would leave the Hurwitz region.
    Raises Infeasible when gamma is below the attenuation limit and
    NoConvergence when the budget runs out on a feasible problem.
    """
    S = _gare_s(plant, gamma)
    q_scale = 1.0 + np.linalg.norm(plant.Q, "fro")
    direct = _stable_subspace_solution(plant.A, S, plant.Q)
    if direct is None:
        raise Infeasible(f"no stabilizing game solution at gamma={gamma}")

    if init is not None:
        P = matops.symmetrize(matops.as_matrix(init, "init"))
    else:
        P = solve_lqr(plant.A, plant.B, plant.Q, plant.R)

    def newton(P, budget):
        for it in range(budget):
            res = matops.symmetrize(gare_residual(P, plant, gamma))
            rnorm = np.linalg.norm(res, "fro")
            if rnorm <= tol_factor * q_scale:
                return P, True
            F = plant.A - S @ P
            if not matops.is_hurwitz(F, guard=0.0):
                return P, False
            dP = matops.solve_lyapunov(F, res)
            step = 1.0
            while step > 1e-12:
                Pt = matops.symmetrize(P + step * dP)
                if (matops.is_hurwitz(plant.A - S @ Pt, guard=0.0)
                        and np.linalg.norm(gare_residual(Pt, plant, gamma), "fro")
                        < rnorm * (1.0 - 0.25 * step)):
                    break
                step *= 0.5
            else:
                return P, False
            P = matops.symmetrize(P + step * dP)
        return P, np.linalg.norm(gare_residual(P, plant, gamma), "fro") <= tol_factor * q_scale

    P, ok = newton(P, max_iter)
    if not ok:
        # retry from the invariant-subspace solution, then polish
        P, ok = newton(direct, max_iter)
    if not ok:
        raise NoConvergence(f"game-equation Newton stalled at gamma={gamma}")
    closure = plant.A - S @ P
    if not matops.is_hurwitz(closure):
        raise Infeasible(f"solution at gamma={gamma} is not stabilizing")
    if matops.psd_floor(P) < -1e-8 * (1 + np.abs(P).max()):
        raise Infeasible(f"solution at gamma={gamma} is indefinite")
    return P


def bounded_real_solve(plant, K, gamma):
    """Stabilizing solution P_K of A_K'P + PA_K + Q_K + gamma^-2 P DD' P = 0,
    or None when the gain's closed loop has H-infinity norm >= gamma."""
    K = matops.as_matrix(K, "K")
    A_K = plant.A - plant.B @ K
    hz = matops.is_hurwitz(A_K)
    if not hz:
        raise NotStabilizing(
            f"A - BK has spectral abscissa {hz.spectrum.abscissa:.3e}")
    Q_K = matops.symmetrize(plant.Q + K.T @ plant.R @ K)
    S = -(plant.D @ plant.D.T) / gamma**2  # note the sign: +P DD' P/g^2 term
    P = _stable_subspace_solution(A_K, S, Q_K)
    if P is None:
        return None
    # strict Hurwitz requirement on the gamma-closure; boundary cases count as
    # infeasible
    if not matops.is_hurwitz(A_K + (plant.D @ plant.D.T @ P) / gamma**2):
        return None
    if matops.psd_floor(P) < -1e-8 * (1 + np.abs(P).max()):
        return None
    return P


def _hinf_no_crossing(ss, gamma, guard=1e-9):
    """True when the level-gamma Hamiltonian has no imaginary-axis eigenvalue,
    i.e. the norm is strictly below gamma."""
    H = np.block([
        [ss.A_cl, (ss.B_in @ ss.B_in.T) / gamma**2],
        [-ss.C_out.T @ ss.C_out, -ss.A_cl.T],
    ])
    w = np.linalg.eigvals(H)
    scale = max(1.0, np.abs(w).max())
    return np.min(np.abs(w.real)) > guard * scale


def hinf_norm(ss, tol=1e-9, max_bisect=80):
    """H-infinity norm of a stable strictly proper realization by bisection on
    the Hamiltonian imaginary-axis eigenvalue test."""
    hz = matops.is_hurwitz(ss.A_cl)
    if not hz:
        raise NotHurwitz(f"A_cl spectral abscissa {hz.spectrum.abscissa:.3e}")
    if np.abs(ss.C_out).max() == 0.0 or np.abs(ss.B_in).max() == 0.0:
        return 0.0
    dc = np.linalg.norm(ss.C_out @ np.linalg.solve(-ss.A_cl, ss.B_in), 2)
    lo = max(dc, 1e-14)
    hi = max(2.0 * lo, 1e-12)
    for _ in range(60):
        if _hinf_no_crossing(ss, hi):
            break
        hi *= 2.0
    else:
        raise NoConvergence("upper bisection bracket not found")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if _hinf_no_crossing(ss, mid):
            hi = mid
        else:
            lo = mid
        if (hi - lo) <= tol * hi:
            break
    return hi


def hinf_norm_sweep(ss, num_points=100_000, omega_lo=1e-4, omega_hi=1e4):
    """Dense logarithmic frequency sweep of max singular values; slow oracle
    used to cross-check the bisection."""
    omegas = np.logspace(np.log10(omega_lo), np.log10(omega_hi), num_points)
    n = ss.A_cl.shape[0]
    best = np.linalg.norm(ss.C_out @ np.linalg.solve(-ss.A_cl, ss.B_in), 2)
    eye = np.eye(n)
    for w in omegas:
        G = ss.C_out @ np.linalg.solve(1j * w * eye - ss.A_cl, ss.B_in)
        s = np.linalg.norm(G, 2)
        if s > best:
            best = s
    return best


@dataclass
class ConstraintCheck:
    """Membership verdict for the robustly stabilizing gain set at level gamma."""

    ok: bool
    hurwitz: bool
    hinf: float
    brl_feasible: bool
    routes_agree: bool

    def __bool__(self):
        return self.ok


def in_constraint_set(plant, K, gamma, hinf_tol=1e-9):
    """True iff A - BK is Hurwitz and ||T_zw(K)||_inf < gamma.

    Decided by the bisection route, with bounded-real feasibility computed as
    an independent cross-check carried in the diagnostics.
    """
    K = matops.as_matrix(K, "K")
    A_K = plant.A - plant.B @ K
    if not matops.is_hurwitz(A_K):
        return ConstraintCheck(False, False, np.inf, False, True)
    norm = hinf_norm(tzw_realization(plant, K), tol=hinf_tol)
    feasible = bounded_real_solve(plant, K, gamma) is not None
    ok = bool(norm < gamma)
    return ConstraintCheck(ok, True, norm, feasible, feasible == ok)


def initial_gain_search(plant, gamma, max_tightenings=8):
    """Member of the constraint set via a deterministic homotopy.

    The gamma = inf (LQR) gain is tried first; if its closed loop misses the
    H-infinity bound, the control weight is tightened geometrically (R -> R/4)
    to push the gain harder, and as a final stage the game equation is solved
    at levels approaching the target from above.  Returns (K0, L0 = 0).
    """
    best_level = np.inf
    scale = 1.0
    for _ in range(max_tightenings):
        P = solve_lqr(plant.A, plant.B, plant.Q, plant.R * scale)
        K0 = np.linalg.solve(plant.R * scale, plant.B.T @ P)
        chk = in_constraint_set(plant, K0, gamma)
        best_level = min(best_level, chk.hinf)
        if chk:
            return GainPair(K0, np.zeros((plant.v, plant.n)))
        scale *= 0.25
    # homotopy in the attenuation level, walking down toward the target
    for factor in (8.0, 4.0, 2.0, 1.5, 1.2, 1.05, 1.0):
        try:
            P = solve_gare_oracle(plant, gamma * factor)
        except (Infeasible, NoConvergence):
            continue
        K0 = np.linalg.solve(plant.R, plant.B.T @ P)
        chk = in_constraint_set(plant, K0, gamma)
        best_level = min(best_level, chk.hinf)
        if chk:
            return GainPair(K0, np.zeros((plant.v, plant.n)))
    raise SearchFailure(
        f"no gain found with closed-loop norm below gamma={gamma}"
        f" (best achieved {best_level:.4g})", best_level=best_level)
