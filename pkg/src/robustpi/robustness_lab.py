"""Inexact-update experiments: inject norm-controlled perturbations into the
gain updates and measure how far the iteration settles from the exact
solution.

The outer experiment perturbs each improved gain, K <- R^-1 B' P + dK, and
tracks ||P_p - P*||_F across a fixed number of rounds; the inner experiment
perturbs the maximizer update L <- gamma^-2 D' P + dL at a frozen K.  Both
plateau at a level that grows with the injected magnitude (the
input-to-state-stability picture of the learning loop), and the sweep report
fits the log-log slope of plateau against magnitude, which the outer theory
predicts to be quadratic.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matops, riccati
from .errors import InnerDivergence
from .pi_model_based import inner_loop, outer_step, run_double_loop


@dataclass(frozen=True)
class PerturbationSpec:
    target: str               # "outer" or "inner"
    magnitude: float
    seed: int = 0
    schedule: str = "every-iteration"

    def __post_init__(self):
        if self.target not in ("outer", "inner"):
            raise ValueError("target must be 'outer' or 'inner'")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.schedule != "every-iteration":
            raise ValueError("only the every-iteration schedule is supported")


@dataclass
class ISSReport:
    magnitudes: list
    plateaus: list            # seed-averaged plateau error per magnitude
    plateau_spread: list      # (min, max) over seeds
    monotone: bool
    loglog_slope: float
    feasibility_lost: list = field(default_factory=list)  # (magnitude, seed, p)


def perturb_gain(shape, magnitude, seed):
    """Gaussian-direction matrix rescaled to exact Frobenius norm."""
    if magnitude == 0.0:
        return np.zeros(shape)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal(shape)
    nrm = np.linalg.norm(G, "fro")
    while nrm == 0.0:
        G = rng.standard_normal(shape)
        nrm = np.linalg.norm(G, "fro")
    return G * (magnitude / nrm)


def _perturbation_stream(magnitude, seed):
    """Per-iteration perturbation callback with exact-norm draws; a zero
    magnitude yields the untouched exact update (bit-identical path)."""
    if magnitude == 0.0:
        return None
    rng = np.random.default_rng(seed)
    def draw(_p, shape):
        G = rng.standard_normal(shape)
        nrm = np.linalg.norm(G, "fro")
        return G * (magnitude / nrm) if nrm > 0 else np.zeros(shape)
    return draw


def run_inexact_outer(plant, config, spec, init_gains=None, p_star=None):
    """Double loop with perturbed outer updates at fixed iteration count.

    Returns the trace and the per-round error curve ||P_p - P*||_F.  A
    feasibility loss (inner divergence after a large kick) truncates the run
    and is reported rather than raised.
    """
    if spec.target != "outer":
        raise ValueError("spec.target must be 'outer'")
    if p_star is None:
        p_star = riccati.solve_gare_oracle(plant, config.gamma)
    lost_at = None
    try:
        trace = run_double_loop(
            plant, config, init_gains=init_gains, early_stop=False,
            gain_perturbation=_perturbation_stream(spec.magnitude, spec.seed))
    except InnerDivergence:
        trace = None
    if trace is None:
        return None, [], 0
    errors = [float(np.linalg.norm(rec.P - p_star, "fro")) for rec in trace.outer]
    for p, rec in enumerate(trace.outer):
        if not rec.in_set:
            lost_at = p
            break
    return trace, errors, lost_at


def run_inexact_inner(plant, K, config, spec, p_k=None):
    """Inner loop at a frozen feasible K with perturbed maximizer updates.

    Returns the per-q error curve toward the exact bounded-real evaluation
    and the q at which the perturbed closed loop lost the Hurwitz property
    (None when it never did).
    """
    if spec.target != "inner":
        raise ValueError("spec.target must be 'inner'")
    K = matops.as_matrix(K, "K")
    if p_k is None:
        p_k = riccati.bounded_real_solve(plant, K, config.gamma)
        if p_k is None:
            raise InnerDivergence("K is outside the constraint set")
    rng = np.random.default_rng(spec.seed)
    A_K = plant.A - plant.B @ K
    Q_K = matops.symmetrize(plant.Q + K.T @ plant.R @ K)
    L = np.zeros((plant.v, plant.n))
    errors = []
    hurwitz_lost_at = None
    for q in range(config.inner_max + 1):
        A_KL = A_K + plant.D @ L
        if not matops.is_hurwitz(A_KL):
            hurwitz_lost_at = q
            break
        P = matops.solve_lyapunov(
            A_KL, matops.symmetrize(Q_K - config.gamma**2 * (L.T @ L)))
        errors.append(float(np.linalg.norm(P - p_k, "fro")))
        L = (plant.D.T @ P) / config.gamma**2
        if spec.magnitude > 0.0:
            G = rng.standard_normal(L.shape)
            nrm = np.linalg.norm(G, "fro")
            if nrm > 0:
                L = L + G * (spec.magnitude / nrm)
    return errors, hurwitz_lost_at


def _plateau(errors, tail=5):
    tail = min(tail, len(errors))
    return float(np.mean(errors[-tail:]))


def iss_outer_sweep(plant, config, magnitudes=(0.015, 0.05, 0.15),
                    seeds=range(20), init_gains=None):
    """Monte-Carlo sweep of the outer experiment across magnitudes.

    The plateau is the mean error over the last five rounds, averaged over
    seeds; the slope estimate fits log plateau against log magnitude.
    """
    if init_gains is None:
        init_gains = riccati.initial_gain_search(plant, config.gamma)
    p_star = riccati.solve_gare_oracle(plant, config.gamma)
    plateaus, spreads, lost = [], [], []
    for mag in magnitudes:
        per_seed = []
        for seed in seeds:
            spec = PerturbationSpec("outer", mag, seed)
            trace, errors, lost_at = run_inexact_outer(
                plant, config, spec, init_gains=init_gains, p_star=p_star)
            if trace is None or lost_at is not None:
                lost.append((mag, seed, lost_at))
            if errors:
                per_seed.append(_plateau(errors))
        plateaus.append(float(np.mean(per_seed)))
        spreads.append((float(np.min(per_seed)), float(np.max(per_seed))))
    mags = np.asarray(magnitudes, dtype=float)
    logp = np.log(np.maximum(plateaus, 1e-300))
    slope = float(np.polyfit(np.log(mags), logp, 1)[0]) if len(mags) > 1 else np.nan
    monotone = bool(np.all(np.diff(plateaus) >= -1e-12))
    return ISSReport(list(map(float, magnitudes)), plateaus, spreads,
                     monotone, slope, lost)


def hurwitz_threshold_sweep(plant, K, config, magnitudes, seed=0):
    """Smallest tested inner-perturbation magnitude that destabilizes some
    perturbed closed loop, or None if all survive."""
    for mag in sorted(magnitudes):
        spec = PerturbationSpec("inner", mag, seed)
        _, lost = run_inexact_inner(plant, K, config, spec)
        if lost is not None:
            return mag
    return None


def geometric_envelope_fit(errors, plateau_frac=0.2):
    """Fit log(e_q) ~ log(C) + q log(rho) over the pre-plateau transient.

    Returns (rho, r_squared); the transient is the prefix strictly above
    plateau + plateau_frac * (e_0 - plateau).
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 3:
        return np.nan, 0.0
    plateau = e[-1]
    cutoff = plateau + plateau_frac * max(e[0] - plateau, 0.0)
    mask = e > max(cutoff, 1e-300)
    idx = np.arange(len(e))[mask]
    if len(idx) < 3:
        idx = np.arange(min(3, len(e)))
    y = np.log(e[idx])
    coef = np.polyfit(idx, y, 1)
    fit = np.polyval(coef, idx)
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(coef[0])), r2
