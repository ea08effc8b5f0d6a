"""System model container, assumption validation, and built-in benchmark plants.

A plant is the matrix tuple (A, B, C, D, E) of

    dx = A x dt + B u dt + D dw,      z = C x + E u

with state dim n, input dim m, disturbance dim v and output dim p.  The
derived weights are Q = C^T C and R = E^T E; the cross-term condition
E^T C = 0 is required so that |z|^2 = x^T Q x + u^T R u.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .errors import BadParams, DimensionMismatch, GenerationFailure


@dataclass(frozen=True)
class StochasticPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    noise_intensity: float = 0.0

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "E"):
            object.__setattr__(self, name, matops.as_matrix(getattr(self, name), name))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n or self.D.shape[0] != n:
            raise DimensionMismatch("B and D must have n rows")
        if self.C.shape[1] != n:
            raise DimensionMismatch("C must have n columns")
        if self.E.shape[0] != self.C.shape[0]:
            raise DimensionMismatch("C and E must have the same number of rows")
        if self.E.shape[1] != self.B.shape[1]:
            raise DimensionMismatch("E must have m columns")
        if self.noise_intensity < 0:
            raise BadParams("noise_intensity must be >= 0")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def v(self):
        return self.D.shape[1]

    @property
    def Q(self):
        return self.C.T @ self.C

    @property
    def R(self):
        return self.E.T @ self.E

    def with_noise(self, noise_intensity):
        return StochasticPlant(self.A, self.B, self.C, self.D, self.E, noise_intensity)


@dataclass(frozen=True)
class DesignConfig:
    """Attenuation level and loop budgets for the double-loop iteration."""

    gamma: float
    outer_max: int = 20
    inner_max: int = 50
    tol: float = 1e-8
    hurwitz_margin: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise BadParams("gamma must be > 0")
        if self.tol <= 0:
            raise BadParams("tol must be > 0")
        if self.outer_max < 1 or self.inner_max < 1:
            raise BadParams("iteration budgets must be >= 1")
        if self.hurwitz_margin < 0:
            raise BadParams("hurwitz_margin must be >= 0")


@dataclass(frozen=True)
class GainPair:
    """Minimizing gain K (m x n) and maximizing gain L (v x n)."""

    K: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", matops.as_matrix(self.K, "K"))
        object.__setattr__(self, "L", matops.as_matrix(self.L, "L"))

    def check_dims(self, plant):
        if self.K.shape != (plant.m, plant.n):
            raise DimensionMismatch(f"K shape {self.K.shape}, want {(plant.m, plant.n)}")
        if self.L.shape != (plant.v, plant.n):
            raise DimensionMismatch(f"L shape {self.L.shape}, want {(plant.v, plant.n)}")
        return self


@dataclass
class ValidationReport:
    q_psd: bool
    q_pd: bool
    r_pd: bool
    cross_term_zero: bool
    stabilizable: bool
    detectable: bool
    messages: list = field(default_factory=list)

    @property
    def ok(self):
        return (self.q_psd and self.r_pd and self.cross_term_zero
                and self.stabilizable and self.detectable)


def _pbh_stabilizable(A, B, tol=1e-8):
    """PBH rank test at every eigenvalue of A with nonnegative real part."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -1e-9:
            continue
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        if np.linalg.matrix_rank(M, tol=tol) < n:
            return False, lam
    return True, None


def _pbh_detectable(A, Csqq, tol=1e-8):
    """PBH detectability of (Csqq, A): rank [A - lam I; Csqq] = n on the closed RHP."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -1e-9:
            continue
        M = np.vstack([A - lam * np.eye(n), Csqq.astype(complex)])
        if np.linalg.matrix_rank(M, tol=tol) < n:
            return False, lam
    return True, None


def sqrt_psd(Q):
    """Symmetric PSD square root, eigenvalues clipped at zero."""
    w, V = np.linalg.eigh(matops.symmetrize(Q))
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


def validate_assumptions(plant):
    """Check the standing assumptions: Q >= 0 (ideally > 0), R > 0, E^T C = 0,
    (A, B) stabilizable, (sqrt(Q), A) detectable."""
    Q, R = plant.Q, plant.R
    q_eigs = np.linalg.eigvalsh(Q)
    r_eigs = np.linalg.eigvalsh(R)
    scale_q = max(1.0, abs(q_eigs).max())
    q_psd = q_eigs.min() > -1e-10 * scale_q
    q_pd = q_eigs.min() > 1e-10 * scale_q
    r_pd = r_eigs.min() > 1e-12 * max(1.0, abs(r_eigs).max())
    cross = np.abs(plant.E.T @ plant.C).max() <= 1e-10 * max(
        1.0, np.abs(plant.C).max() * np.abs(plant.E).max())
    stab, bad_s = _pbh_stabilizable(plant.A, plant.B)
    det, bad_d = _pbh_detectable(plant.A, sqrt_psd(Q))
    rep = ValidationReport(q_psd, q_pd, r_pd, cross, stab, det)
    if not q_psd:
        rep.messages.append("Q = C'C has negative eigenvalues")
    if not q_pd:
        rep.messages.append("Q = C'C is only positive semidefinite")
    if not r_pd:
        rep.messages.append("R = E'E is singular")
    if not cross:
        rep.messages.append("cross term E'C is nonzero")
    if not stab:
        rep.messages.append(f"(A, B) not stabilizable at eigenvalue {bad_s:.4g}")
    if not det:
        rep.messages.append(f"(sqrt(Q), A) not detectable at eigenvalue {bad_d:.4g}")
    return rep


def closed_loop_matrices(plant, gains, P=None, gamma=None):
    """Closed-loop pieces A_K = A - BK, A_KL = A_K + DL, Q_K = Q + K'RK, and,
    when P and gamma are given, A_Kgamma = A_K + gamma^-2 DD'P."""
    gains.check_dims(plant)
    A_K = plant.A - plant.B @ gains.K
    A_KL = A_K + plant.D @ gains.L
    Q_K = matops.symmetrize(plant.Q + gains.K.T @ plant.R @ gains.K)
    A_Kgamma = None
    if P is not None:
        if gamma is None or gamma <= 0:
            raise BadParams("gamma must be positive when P is supplied")
        P = matops.as_matrix(P, "P")
        if P.shape != plant.A.shape:
            raise DimensionMismatch(f"P shape {P.shape}, want {plant.A.shape}")
        A_Kgamma = A_K + (plant.D @ plant.D.T @ P) / gamma**2
    return {"A_K": A_K, "A_KL": A_KL, "Q_K": Q_K, "A_Kgamma": A_Kgamma}


def _chain_pendulum(masses, lengths, gravity):
    """Linearized upright serial pendulum with point masses and massless rods.

    Coordinates are absolute link angles; the base joint is passive, every
    other joint is torque-actuated.  Returns (A, B) of the 2n-state model.
    """
    masses = np.asarray(masses, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if masses.ndim != 1 or masses.shape != lengths.shape:
        raise BadParams("masses and lengths must be equal-length vectors")
    if np.any(masses <= 0) or np.any(lengths <= 0) or gravity <= 0:
        raise BadParams("masses, lengths and gravity must be positive")
    k = masses.size
    M = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            M[i, j] = lengths[i] * lengths[j] * masses[max(i, j):].sum()
    G = np.diag([gravity * lengths[i] * masses[i:].sum() for i in range(k)])
    # joint torque at joint j acts on link j and reacts on link j-1
    S = np.zeros((k, k))
    for j in range(k):
        S[j, j] = 1.0
        if j + 1 < k:
            S[j + 1, j] = -1.0
    S = S[:, 1:]  # first joint unactuated
    Minv = np.linalg.inv(M)
    A = np.block([[np.zeros((k, k)), np.eye(k)], [Minv @ G, np.zeros((k, k))]])
    B = np.vstack([np.zeros((k, k - 1)), Minv @ S])
    return A, B


def _pendulum_outputs(n, m):
    """Regulated output stacking all states above the inputs: C = [I; 0], E = [0; I]."""
    C = np.vstack([np.eye(n), np.zeros((m, n))])
    E = np.vstack([np.zeros((n, m)), np.eye(m)])
    return C, E


def triple_pendulum(masses=(0.5, 0.3, 0.2), lengths=(0.4, 0.3, 0.2),
                    gravity=9.81, noise_intensity=0.0):
    """Three-link inverted pendulum benchmark: n=6, m=2, v=3.

    Noise enters the velocity equations only, D = [0_{3x3}; I_3].  The default
    parameters keep the attenuation limit of the plant near 1.1, so the
    benchmark level gamma = 5 is comfortably feasible.
    """
    A, B = _chain_pendulum(masses, lengths, gravity)
    if A.shape[0] != 6:
        raise BadParams("triple_pendulum needs exactly three links")
    D = np.vstack([np.zeros((3, 3)), np.eye(3)])
    C, E = _pendulum_outputs(6, 2)
    return StochasticPlant(A, B, C, D, E, noise_intensity)


def double_pendulum(masses=(0.5, 0.3), lengths=(0.4, 0.3),
                    gravity=9.81, noise_intensity=0.0):
    """Two-link inverted pendulum benchmark: n=4, m=1, v=2."""
    A, B = _chain_pendulum(masses, lengths, gravity)
    if A.shape[0] != 4:
        raise BadParams("double_pendulum needs exactly two links")
    D = np.vstack([np.zeros((2, 2)), np.eye(2)])
    C, E = _pendulum_outputs(4, 1)
    return StochasticPlant(A, B, C, D, E, noise_intensity)


def golden_scalar(noise_intensity=0.0):
    """Scalar test plant a = b = d = 1 with z = [x; u], so Q = R = 1."""
    return StochasticPlant(
        A=[[1.0]], B=[[1.0]], C=[[1.0], [0.0]], D=[[1.0]], E=[[0.0], [1.0]],
        noise_intensity=noise_intensity)


def random_plant(seed, n, m, v, noise_intensity=0.0, max_tries=50):
    """Deterministic random plant that passes validate_assumptions.

    C stacks a well-conditioned square block over an m-row zero block and E
    puts identity under zeros, which enforces E^T C = 0 and R > 0 by
    construction; stabilizability is rejection-sampled.
    """
    if n < 1 or m < 1 or v < 1:
        raise BadParams("n, m, v must all be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        B = rng.standard_normal((n, m))
        Cx = rng.standard_normal((n, n))
        Cx += np.eye(n) * 0.5  # keep Q away from singularity
        D = rng.standard_normal((n, v)) / np.sqrt(v)
        C = np.vstack([Cx, np.zeros((m, n))])
        E = np.vstack([np.zeros((n, m)), np.eye(m)])
        plant = StochasticPlant(A, B, C, D, E, noise_intensity)
        if validate_assumptions(plant).ok:
            return plant
    raise GenerationFailure(f"no valid plant after {max_tries} draws (seed={seed})")


def _strict_array(node, name):
    arr = np.asarray(node, dtype=object)
    try:
        out = np.array(node, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BadParams(f"field {name!r} is ragged or non-numeric") from exc
    if out.ndim != 2:
        raise BadParams(f"field {name!r} must be a nested (2-d) array")
    del arr
    return out


def load_plant(path):
    """Read a plant from a JSON document with keys A, B, C, D, E and an
    optional noise_intensity; dimensions are inferred and ragged rows rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    missing = [k for k in ("A", "B", "C", "D", "E") if k not in doc]
    if missing:
        raise BadParams(f"plant file missing keys: {missing}")
    mats = {k: _strict_array(doc[k], k) for k in ("A", "B", "C", "D", "E")}
    return StochasticPlant(noise_intensity=float(doc.get("noise_intensity", 0.0)), **mats)


def save_plant(plant, path):
    doc = {k: getattr(plant, k).tolist() for k in ("A", "B", "C", "D", "E")}
    doc["noise_intensity"] = plant.noise_intensity
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


BUILTIN_PLANTS = {
    "golden-scalar": golden_scalar,
    "double-pendulum": double_pendulum,
    "triple-pendulum": triple_pendulum,
}
