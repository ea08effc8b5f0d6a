import numpy as np
import pytest

from robustpi import plant, riccati


def scalar_brl_root(a, b, d, q, r, k, gamma):
    """Stabilizing root of the scalar bounded-real equation
    2 (a - b k) p + (q + r k^2) + (d^2 / gamma^2) p^2 = 0, or None."""
    ak = a - b * k
    qk = q + r * k * k
    c2 = d * d / gamma**2
    disc = 4.0 * ak * ak - 4.0 * c2 * qk
    if disc < 0:
        return None
    roots = np.roots([c2, 2.0 * ak, qk])
    stab = [p.real for p in roots
            if abs(p.imag) < 1e-12 and ak + c2 * p.real < 0 and p.real >= 0]
    return min(stab) if stab else None


def scalar_game_root(a, b, d, q, r, gamma):
    """Stabilizing root of 2 a p - (b^2/r - d^2/gamma^2) p^2 + q = 0, or None."""
    s = b * b / r - d * d / gamma**2
    roots = np.roots([-s, 2.0 * a, q])
    stab = [p.real for p in roots
            if abs(p.imag) < 1e-12 and a - s * p.real < 0 and p.real >= 0]
    return min(stab) if stab else None


@pytest.fixture(scope="session")
def golden():
    return plant.golden_scalar()


@pytest.fixture(scope="session")
def corpus():
    """Fifty random feasible (plant, gamma, K_lqr) triples with n <= 6,
    m <= 2, v <= 3; gamma sits 25% above the LQR closed-loop norm, which
    keeps the game equation feasible by construction."""
    out = []
    for seed in range(50):
        n = 2 + seed % 5
        m = 1 + seed % 2
        v = 1 + seed % 3
        pl = plant.random_plant(seed, n, m, v)
        P = riccati.solve_lqr(pl.A, pl.B, pl.Q, pl.R)
        K = np.linalg.solve(pl.R, pl.B.T @ P)
        h = riccati.hinf_norm(riccati.tzw_realization(pl, K), tol=1e-9)
        out.append((pl, 1.25 * h, K))
    return out
