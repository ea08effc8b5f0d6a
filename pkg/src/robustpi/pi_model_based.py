"""Nested double-loop policy iteration with exact models.

The outer loop evaluates the current minimizing gain K_p through the inner
loop, which starts from L_0 = 0 and alternates

    solve  A_KL' P + P A_KL + Q_K - gamma^2 L_q' L_q = 0,   A_KL = A - B K_p + D L_q
    update L_{q+1} = gamma^-2 D' P

until successive cost matrices agree to tolerance; the outer update is then
K_{p+1} = R^-1 B' P.  Inner iterates increase monotonically to the
bounded-real solution of the gain, outer iterates decrease monotonically to
the game value, and both facts are recorded per iterate so they can be
checked as certificates rather than assumed.
"""

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import matops, riccati
from .errors import InfeasibleStart, InnerDivergence
from .plant import GainPair


@dataclass
class InnerRecord:
    q: int
    L: np.ndarray
    P: np.ndarray
    gap: float            # ||P_q - P_{q-1}||_F, nan at q = 0
    hurwitz_ok: bool      # of A_K + D L_q


@dataclass
class OuterRecord:
    p: int
    K: np.ndarray
    P: np.ndarray         # converged inner cost matrix for K_p
    inner: list
    hinf: float
    in_set: bool
    hurwitz_ok: bool      # of A - B K_p
    gare_resid: float     # Frobenius norm of the game-equation residual at P
    wall_ms: float


@dataclass
class IterationTrace:
    gamma: float
    outer: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    final_K: np.ndarray = None
    final_L: np.ndarray = None
    final_P: np.ndarray = None
    wall_ms_total: float = 0.0
    # filled by certify()
    outer_ratios: list = None
    inner_ratios: list = None

    @property
    def iterations(self):
        return len(self.outer)


@dataclass
class ConvergenceCertificate:
    outer_ratios: list        # Tr(P^{p+1} - P*) / Tr(P^p - P*), nan when settled
    inner_ratios: list        # per p: list over q of Tr(P_K - P^{q+1}) / Tr(P_K - P^q)
    flagged: list             # (kind, p, q, ratio) entries with ratio >= 1
    c_h: float                # log(5/4) / (||A|| + (||BR^-1B'|| + g^-2||DD'||) h)
    d_K: list                 # per p: log(5/4) / (||A_K|| + g^-2 ||DD'|| ||P_K^p||)

    @property
    def ok(self):
        return not self.flagged


def inner_loop(plant, K, gamma, q_max=50, tol=1e-8):
    """Evaluate gain K by iterating the maximizing player to convergence.

    Returns the converged cost matrix and the per-q trace.  Raises
    InnerDivergence when some A_K + D L_q leaves the Hurwitz region, which
    signals that K violates the attenuation constraint.
    """
    K = matops.as_matrix(K, "K")
    A_K = plant.A - plant.B @ K
    Q_K = matops.symmetrize(plant.Q + K.T @ plant.R @ K)
    DDt = plant.D @ plant.D.T
    L = np.zeros((plant.v, plant.n))
    records = []
    P_prev = None
    for q in range(q_max + 1):
        A_KL = A_K + plant.D @ L
        hz = matops.is_hurwitz(A_KL)
        if not hz:
            raise InnerDivergence(
                f"A_KL lost stability at q={q}"
                f" (abscissa {hz.spectrum.abscissa:.3e}); K outside the set")
        rhs = matops.symmetrize(Q_K - gamma**2 * (L.T @ L))
        P = matops.solve_lyapunov(A_KL, rhs)
        gap = np.nan if P_prev is None else float(np.linalg.norm(P - P_prev, "fro"))
        records.append(InnerRecord(q=q, L=L.copy(), P=P, gap=gap, hurwitz_ok=bool(hz)))
        if P_prev is not None and gap <= tol:
            break
        P_prev = P
        L = (plant.D.T @ P) / gamma**2
    del DDt
    return records[-1].P, records


def outer_step(plant, P):
    """Gain improvement K = R^-1 B' P."""
    P = matops.as_matrix(P, "P")
    return np.linalg.solve(plant.R, plant.B.T @ P)


def run_double_loop(plant, config, init_gains=None, early_stop=True,
                    gain_perturbation=None, diagnostics=True):
    """Run the nested iteration from a constraint-set member.

    ``gain_perturbation(p, shape)`` may return a matrix added to each improved
    gain (used by the robustness experiments); returning None leaves the exact
    update untouched.  ``diagnostics=False`` skips the per-iterate membership
    evaluation (an H-infinity bisection) so timing comparisons measure the
    iteration itself; the fields can be filled afterwards with
    :func:`annotate_membership`.
    """
    t_start = time.perf_counter()
    if init_gains is None:
        init_gains = riccati.initial_gain_search(plant, config.gamma)
    init_gains.check_dims(plant)
    start_chk = riccati.in_constraint_set(plant, init_gains.K, config.gamma)
    if not start_chk:
        raise InfeasibleStart(
            f"initial gain has closed-loop norm {start_chk.hinf:.4g}"
            f" >= gamma={config.gamma}" if start_chk.hurwitz
            else "initial gain does not stabilize A - BK")

    trace = IterationTrace(gamma=config.gamma)
    K = init_gains.K.copy()
    chk = start_chk
    for p in range(config.outer_max + 1):
        t0 = time.perf_counter()
        if p > 0 and diagnostics:
            chk = riccati.in_constraint_set(plant, K, config.gamma)
        P, inner = inner_loop(plant, K, config.gamma,
                              q_max=config.inner_max, tol=config.tol)
        resid = float(np.linalg.norm(
            riccati.gare_residual(P, plant, config.gamma), "fro"))
        if diagnostics:
            hinf_val, in_set, hur = chk.hinf, bool(chk), chk.hurwitz
        else:
            hinf_val, in_set, hur = np.nan, True, True
        trace.outer.append(OuterRecord(
            p=p, K=K.copy(), P=P, inner=inner, hinf=hinf_val,
            in_set=in_set, hurwitz_ok=hur, gare_resid=resid,
            wall_ms=(time.perf_counter() - t0) * 1e3))
        K_next = outer_step(plant, P)
        if gain_perturbation is not None:
            pert = gain_perturbation(p, K_next.shape)
            if pert is not None and np.any(pert):
                K_next = K_next + pert
        gain_shift = np.linalg.norm(K_next - K, "fro")
        if early_stop and gain_shift <= config.tol:
            trace.converged = True
            trace.stop_reason = f"gain stationary at p={p} (shift {gain_shift:.2e})"
            K = K_next
            break
        if p == config.outer_max:
            trace.stop_reason = f"outer budget {config.outer_max} exhausted"
            K = K_next
            break
        K = K_next
    last = trace.outer[-1]
    trace.final_K = K
    trace.final_P = last.P
    trace.final_L = (plant.D.T @ last.P) / config.gamma**2
    trace.wall_ms_total = (time.perf_counter() - t_start) * 1e3
    return trace


def final_gains(trace):
    return GainPair(trace.final_K, trace.final_L)


def annotate_membership(trace, plant, gamma):
    """Fill the membership diagnostics of a trace produced with
    diagnostics=False."""
    for rec in trace.outer:
        chk = riccati.in_constraint_set(plant, rec.K, gamma)
        rec.hinf = chk.hinf
        rec.in_set = bool(chk)
        rec.hurwitz_ok = chk.hurwitz
    return trace


def _safe_ratio(num, den, floor):
    """Ratio of successive error traces; nan once either side has settled to
    within the iteration's own resolution floor."""
    if not np.isfinite(den) or den <= floor or abs(num) <= floor:
        return np.nan
    return num / den


def certify(trace, P_star, plant, settle_tol=1e-8):
    """Empirical contraction certificate against an oracle solution P_star.

    Outer ratios are trace ratios toward P_star; inner ratios measure the
    geometric approach of each inner sweep to its own converged limit.
    Ratios whose numerator or denominator is beneath the settle floor are
    reported as nan (converged); any finite ratio outside [0, 1) is flagged.
    The computable diagnostic constants c(h) and d(K) are reported alongside.
    """
    P_star = matops.as_matrix(P_star, "P_star")
    gamma = trace.gamma
    floor = settle_tol * (1.0 + abs(np.trace(P_star)))
    tr_err = [np.trace(rec.P - P_star) for rec in trace.outer]
    outer_ratios = [
        _safe_ratio(tr_err[p + 1], tr_err[p], floor)
        for p in range(len(tr_err) - 1)
    ]
    inner_ratios = []
    for rec in trace.outer:
        P_K = rec.P
        gaps = [np.trace(P_K - r.P) for r in rec.inner]
        inner_ratios.append([
            _safe_ratio(gaps[q + 1], gaps[q], floor)
            for q in range(len(gaps) - 1)
        ])
    flagged = []
    for p, r in enumerate(outer_ratios):
        if np.isfinite(r) and not 0.0 <= r < 1.0:
            flagged.append(("outer", p, None, r))
    for p, ratios in enumerate(inner_ratios):
        for q, r in enumerate(ratios):
            if np.isfinite(r) and not 0.0 <= r < 1.0:
                flagged.append(("inner", p, q, r))

    h = max(tr_err[0], 0.0)
    BRB = plant.B @ np.linalg.solve(plant.R, plant.B.T)
    DDt = plant.D @ plant.D.T
    denom = (np.linalg.norm(plant.A, 2)
             + (np.linalg.norm(BRB, 2) + np.linalg.norm(DDt, 2) / gamma**2) * h)
    c_h = np.log(5.0 / 4.0) / denom
    d_K = []
    for rec in trace.outer:
        A_K = plant.A - plant.B @ rec.K
        dd = (np.linalg.norm(A_K, 2)
              + np.linalg.norm(DDt, 2) * np.linalg.norm(rec.P, 2) / gamma**2)
        d_K.append(np.log(5.0 / 4.0) / dd)

    trace.outer_ratios = outer_ratios
    trace.inner_ratios = inner_ratios
    return ConvergenceCertificate(outer_ratios, inner_ratios, flagged, c_h, d_K)


# --- export -----------------------------------------------------------------

CSV_HEADER = ["p", "q", "frobenius_K", "trace_P", "residual", "hinf",
              "hurwitz_ok", "ratio", "wall_ms"]


def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def trace_rows(trace, include_timing=False):
    """Flatten a trace into CSV rows: inner rows carry q >= 0, the outer
    summary row for each p carries q = -1."""
    rows = []
    for p, rec in enumerate(trace.outer):
        k_norm = float(np.linalg.norm(rec.K, "fro"))
        for q, ir in enumerate(rec.inner):
            ratio = np.nan
            if trace.inner_ratios is not None and q < len(trace.inner_ratios[p]):
                ratio = trace.inner_ratios[p][q]
            rows.append([rec.p, ir.q, k_norm, float(np.trace(ir.P)), ir.gap,
                         np.nan, int(ir.hurwitz_ok), ratio,
                         rec.wall_ms if include_timing else 0.0])
        ratio = np.nan
        if trace.outer_ratios is not None and p < len(trace.outer_ratios):
            ratio = trace.outer_ratios[p]
        rows.append([rec.p, -1, k_norm, float(np.trace(rec.P)), rec.gare_resid,
                     rec.hinf, int(rec.hurwitz_ok), ratio,
                     rec.wall_ms if include_timing else 0.0])
    return rows


def write_trace_csv(trace, path, include_timing=False):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in trace_rows(trace, include_timing):
            writer.writerow([_fmt(x) for x in row])


def trace_summary(trace, certificate=None, extra=None):
    summary = {
        "gamma": trace.gamma,
        "converged": trace.converged,
        "stop_reason": trace.stop_reason,
        "outer_iterations": trace.iterations,
        "final_K": trace.final_K.tolist(),
        "final_L": trace.final_L.tolist() if trace.final_L is not None else None,
        "final_P": trace.final_P.tolist(),
        "final_trace_P": float(np.trace(trace.final_P)),
        "hinf_per_iterate": [rec.hinf for rec in trace.outer],
        "in_set_per_iterate": [bool(rec.in_set) for rec in trace.outer],
    }
    if certificate is not None:
        summary["certificate"] = {
            "outer_ratios": [None if np.isnan(r) else r
                             for r in certificate.outer_ratios],
            "flagged": [list(f) for f in certificate.flagged],
            "c_h": certificate.c_h,
            "d_K": certificate.d_K,
            "ok": certificate.ok,
        }
    if extra:
        summary.update(extra)
    return summary


def write_summary_json(summary, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
