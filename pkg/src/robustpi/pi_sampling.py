"""Model-free pipeline: SDE rollout, data-matrix assembly, rank checking,
least-squares retrieval, and the sampling-based double loop.

A single exploratory rollout of

    dx = A x dt + B u dt + D (xi dt + dnu),   u = -K0 x + eta_u,  xi = -L0 x + eta_w

is collected once, with eta_u / eta_w piecewise constant over each sampling
interval and dnu the Brownian increments.  For any later gain pair
(K_p, L_q) the inner-loop cost matrix P, the improved gains and the noise
trace term are retrieved from the same log by least squares: applying Ito's
rule to x'Px between sample instants and eliminating A through the inner-loop
Lyapunov equation yields, per interval [s_i, s_{i+1}],

    svec(x x')|_i^{i+1} . svec(P)
      - 2 [Ixx (K_p' ox I) + Iux] . vec(K'R)
      - 2 g^2 [Ixw - Ixx (L_q' ox I)] . vec(L')
      - QV . vec(D'PD)
      = -Ixx . vec(Q + K_p'RK_p - g^2 L_q'L_q)

where Ixx, Iux are time integrals of x ox x and u ox x, Ixw integrates the
total disturbance increment against the state (Ito convention for the
Brownian part), and QV accumulates dnu ox dnu.  Neither A, B, C nor E ever
enters the right-hand side; only the cost weights Q, R, the feedthrough D
and the level gamma are assumed known.
"""

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .errors import (Blowup, DimensionMismatch, DivergenceDetected,
                     IllConditionedWarning, RankDeficient)
from .pi_model_based import InnerRecord, IterationTrace, OuterRecord
from .plant import GainPair


@dataclass
class TrajectoryLog:
    """One exploratory rollout with per-interval integral accumulators."""

    instants: np.ndarray      # (l+1,)
    states: np.ndarray        # (l+1, n)
    inputs: np.ndarray        # (l+1, m) applied input at the instants
    brown_path: np.ndarray    # (l+1, v) Brownian motion samples
    eta_u: np.ndarray         # (l, m) exploration held on each interval
    eta_w: np.ndarray         # (l, v)
    Ixx: np.ndarray           # (l, n^2)   int x ox x dt
    Iux: np.ndarray           # (l, m*n)   int u ox x dt (raw applied input)
    Iwx_dt: np.ndarray        # (l, v*n)   int xi ox x dt (applied disturbance)
    Inux: np.ndarray          # (l, v*n)   sum dnu ox x (Ito)
    Iww: np.ndarray           # (l, v^2)   int xi ox xi dt
    QV: np.ndarray            # (l, v^2)   sum dnu ox dnu
    K0: np.ndarray
    L0: np.ndarray
    dt: float
    ds: float
    seed: int
    noise_intensity: float
    r_u: float
    r_w: float

    @property
    def l(self):
        return self.states.shape[0] - 1

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.inputs.shape[1]

    @property
    def v(self):
        return self.brown_path.shape[1]


@dataclass
class DataMatrices:
    """The printed data blocks: quadratic-monomial boundary differences and
    the four integral accumulators."""

    Dxx: np.ndarray   # l x n(n+1)/2, rows vecv(x_{i+1}) - vecv(x_i)
    Dww: np.ndarray   # l x v(v+1)/2, rows vecv(w_{i+1}) - vecv(w_i)
    Ixx: np.ndarray   # l x n^2
    Iww: np.ndarray   # l x v^2
    Ixw: np.ndarray   # l x n*v, disturbance-increment against state
    Iux: np.ndarray   # l x m*n


@dataclass
class LSSystem:
    """Regression Theta theta = Upsilon with unknown blocks
    [svec(P); vec(K'R); vec(L'); vec(D'PD)]."""

    Theta: np.ndarray
    Upsilon: np.ndarray
    n: int
    m: int
    v: int

    @property
    def widths(self):
        n, m, v = self.n, self.m, self.v
        return (n * (n + 1) // 2, m * n, v * n, v * v)

    @property
    def slices(self):
        out = []
        start = 0
        for w in self.widths:
            out.append(slice(start, start + w))
            start += w
        return out

    @property
    def decision_columns(self):
        """Columns of the P/K/L blocks (the trace block is diagnostics)."""
        return sum(self.widths[:3])


@dataclass
class RankReport:
    full_rank: bool
    min_singular: float
    condition: float
    rows: int
    required_columns: int            # block-width count of the unknown vector
    printed_rank_requirement: int    # the n(n+1) + mn + nv + v^2 variant
    decision_full_rank: bool
    decision_condition: float


@dataclass
class LSUpdate:
    P: np.ndarray
    K_next: np.ndarray
    L_next: np.ndarray
    trace_block: np.ndarray
    residual: float
    condition: float


def exploration_levels(K0, fraction=0.1):
    """Default exploration magnitude 0.1 ||K0||_F for both channels."""
    r = fraction * max(np.linalg.norm(K0, "fro"), 1.0)
    return {"r_u": r, "r_w": r}


def _unit_burst(rng, dim, magnitude):
    if magnitude == 0.0:
        return np.zeros(dim)
    g = rng.standard_normal(dim)
    nrm = np.linalg.norm(g)
    while nrm == 0.0:  # essentially impossible, but keep the norm exact
        g = rng.standard_normal(dim)
        nrm = np.linalg.norm(g)
    return g * (magnitude / nrm)


def simulate(plant, gains0, exploration=None, dt=1e-4, horizon=2.0, ds=0.02,
             seed=0, x0=None, blowup=1e8):
    """Euler-Maruyama rollout under the behavior policy with piecewise-constant
    exploration, accumulating every integral block the identification needs.

    dt must divide the sampling interval ds, and ds the horizon.  Time
    integrals use in-step trapezoids at the dt resolution; Ito terms pair the
    same Brownian increments that drive the state update with the left-point
    state.  Deterministic for a fixed seed.
    """
    gains0.check_dims(plant)
    n, m, v = plant.n, plant.m, plant.v
    steps_per = int(round(ds / dt))
    if steps_per < 1 or abs(steps_per * dt - ds) > 1e-9 * ds:
        raise DimensionMismatch(f"dt={dt} does not divide ds={ds}")
    segs = int(round(horizon / ds))
    if segs < 1 or abs(segs * ds - horizon) > 1e-9 * horizon:
        raise DimensionMismatch(f"ds={ds} does not divide horizon={horizon}")
    if exploration is None:
        exploration = exploration_levels(gains0.K)
    r_u = float(exploration["r_u"])
    r_w = float(exploration["r_w"])

    rng = np.random.default_rng(seed)
    sigma = plant.noise_intensity
    sq_dt = np.sqrt(dt)
    A, B, D = plant.A, plant.B, plant.D
    K0, L0 = gains0.K, gains0.L

    x = np.ones(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise DimensionMismatch(f"x0 must have length {n}")
    w_path = np.zeros(v)

    instants = np.empty(segs + 1)
    states = np.empty((segs + 1, n))
    inputs = np.empty((segs + 1, m))
    brown = np.empty((segs + 1, v))
    etas_u = np.empty((segs, m))
    etas_w = np.empty((segs, v))
    acc = {k: np.zeros((segs, width)) for k, width in
           [("Ixx", n * n), ("Iux", m * n), ("Iwx_dt", v * n),
            ("Inux", v * n), ("Iww", v * v), ("QV", v * v)]}

    instants[0] = 0.0
    states[0] = x
    brown[0] = w_path
    eta_u0 = _unit_burst(rng, m, r_u)
    inputs[0] = -K0 @ x + eta_u0

    # closed-loop pieces of the behavior policy; exploration enters as a
    # per-segment constant drift
    M_cl = A - B @ K0 - D @ L0
    X = np.empty((steps_per + 1, n))

    def _pairs(Yl, Yr):
        """Rows kron(y_i, x_i) for the paired trajectories (batched outer)."""
        return (Yl[:, :, None] * Yr[:, None, :]).reshape(Yl.shape[0], -1)

    def _trap(rows):
        return dt * (rows[:-1] + rows[1:]).sum(axis=0) * 0.5

    for i in range(segs):
        if i == 0:
            eta_u = eta_u0
        else:
            eta_u = _unit_burst(rng, m, r_u)
        eta_w = _unit_burst(rng, v, r_w)
        etas_u[i] = eta_u
        etas_w[i] = eta_w
        drift_const = B @ eta_u + D @ eta_w
        if sigma > 0.0:
            dnu = sigma * sq_dt * rng.standard_normal((steps_per, v))
        else:
            dnu = np.zeros((steps_per, v))
        X[0] = x
        for k in range(steps_per):
            x = x + (M_cl @ x + drift_const) * dt + D @ dnu[k]
            X[k + 1] = x
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > blowup:
            raise Blowup(f"state norm exceeded {blowup:.3g} in segment {i}")
        U = -X @ K0.T + eta_u
        Xi = -X @ L0.T + eta_w
        acc["Ixx"][i] = _trap(_pairs(X, X))
        acc["Iux"][i] = _trap(_pairs(U, X))
        acc["Iwx_dt"][i] = _trap(_pairs(Xi, X))
        acc["Iww"][i] = _trap(_pairs(Xi, Xi))
        acc["Inux"][i] = _pairs(dnu, X[:-1]).sum(axis=0)
        acc["QV"][i] = _pairs(dnu, dnu).sum(axis=0)
        w_path = w_path + dnu.sum(axis=0)
        instants[i + 1] = (i + 1) * ds
        states[i + 1] = x
        inputs[i + 1] = U[-1]
        brown[i + 1] = w_path

    return TrajectoryLog(
        instants=instants, states=states, inputs=inputs, brown_path=brown,
        eta_u=etas_u, eta_w=etas_w,
        Ixx=acc["Ixx"], Iux=acc["Iux"], Iwx_dt=acc["Iwx_dt"],
        Inux=acc["Inux"], Iww=acc["Iww"], QV=acc["QV"],
        K0=K0.copy(), L0=L0.copy(), dt=dt, ds=ds, seed=seed,
        noise_intensity=sigma, r_u=r_u, r_w=r_w)


def data_matrices(log):
    """Assemble the printed data blocks from a rollout."""
    l = log.l
    Dxx = np.empty((l, log.n * (log.n + 1) // 2))
    Dww = np.empty((l, log.v * (log.v + 1) // 2))
    for i in range(l):
        Dxx[i] = matops.vecv(log.states[i + 1]) - matops.vecv(log.states[i])
        Dww[i] = matops.vecv(log.brown_path[i + 1]) - matops.vecv(log.brown_path[i])
    return DataMatrices(Dxx=Dxx, Dww=Dww, Ixx=log.Ixx, Iww=log.Iww,
                        Ixw=log.Iwx_dt + log.Inux, Iux=log.Iux)


def assemble(log, gains, D, Q_K, gamma, brownian="measured"):
    """Build the regression for the gain pair (K_p, L_q) from one rollout.

    The blocks follow the identity in the module docstring; the boundary
    block reweights the quadratic monomials so that it pairs with svec(P),
    and the state-state integrals are re-targeted to the supplied gains, so
    one log serves every (p, q).

    ``brownian`` selects what the disturbance blocks may contain:

    * "measured" (default): only learner-observable data.  The cross block
      integrates the applied disturbance signal against the state, the trace
      block is a per-interval intercept of width ds on the diagonal
      positions, and the unmeasured Brownian martingale stays in the
      residual.  This is what a learner that cannot observe nature's noise
      increments can actually form, and it is where the noise-dependent
      error plateau of the sampling scheme comes from.
    * "oracle": the simulator's own increments enter the cross and trace
      blocks, which makes the identity exact up to discretization and is
      used to validate the assembly itself.
    """
    if brownian not in ("measured", "oracle"):
        raise ValueError(f"unknown brownian mode {brownian!r}")
    K_p = matops.as_matrix(gains.K, "K")
    L_q = matops.as_matrix(gains.L, "L")
    D = matops.as_matrix(D, "D")
    Q_K = matops.check_symmetric(Q_K, 1e-8, "Q_K")
    n, m, v = log.n, log.m, log.v
    if K_p.shape != (m, n) or L_q.shape != (v, n):
        raise DimensionMismatch("gain shapes do not match the log")
    if D.shape != (n, v):
        raise DimensionMismatch(f"D shape {D.shape}, want {(n, v)}")
    if Q_K.shape != (n, n):
        raise DimensionMismatch("Q_K must be n x n")

    dm = data_matrices(log)
    weights = matops.vecv_weights(n)
    boundary = dm.Dxx * weights              # rows now pair with svec(P)
    eye = np.eye(n)
    k_block = -2.0 * (dm.Ixx @ np.kron(K_p.T, eye) + dm.Iux)
    if brownian == "oracle":
        cross = dm.Ixw                       # signal part plus Ito part
        t_block = -log.QV
    else:
        cross = log.Iwx_dt
        t_block = np.zeros((log.l, v * v))
        t_block[:, :: v + 1] = -log.ds       # diagonal positions of vec(.)
    l_block = -2.0 * gamma**2 * (cross - dm.Ixx @ np.kron(L_q.T, eye))
    Theta = np.hstack([boundary, k_block, l_block, t_block])
    rhs_weight = matops.symmetrize(Q_K - gamma**2 * (L_q.T @ L_q))
    Upsilon = -dm.Ixx @ matops.vec(rhs_weight)
    return LSSystem(Theta=Theta, Upsilon=Upsilon, n=n, m=m, v=v)


def rank_check(sys, rel_tol=1e-8):
    """Singular-value diagnosis of the regression.

    ``full_rank`` applies the strict criterion to the whole matrix; the
    trace block is all-zero on noiseless logs, so the gate that matters for
    retrieval is ``decision_full_rank`` over the P/K/L columns.  Both the
    block-width column count and the larger printed rank requirement
    n(n+1) + mn + nv + v^2 are reported.
    """
    Theta = sys.Theta
    rows = Theta.shape[0]
    required = sum(sys.widths)
    n, m, v = sys.n, sys.m, sys.v
    printed = n * (n + 1) + m * n + n * v + v * v
    if rows == 0 or not np.any(Theta):
        return RankReport(False, 0.0, np.inf, rows, required, printed,
                          False, np.inf)
    sv = np.linalg.svd(Theta, compute_uv=False)
    full = bool(len(sv) == required and rows >= required
                and sv[-1] > rel_tol * sv[0])
    dec = Theta[:, :sys.decision_columns]
    svd_dec = np.linalg.svd(dec, compute_uv=False)
    dec_full = bool(rows >= sys.decision_columns
                    and svd_dec[-1] > rel_tol * svd_dec[0])
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    dec_cond = (float(svd_dec[0] / svd_dec[-1])
                if svd_dec[-1] > 0 else np.inf)
    return RankReport(full, float(sv[-1]), cond, rows, required, printed,
                      dec_full, dec_cond)


def ls_update(sys, R, cond_warn=1e10, rcond=1e-10):
    """Solve the regression and unpack the unknowns.

    Column-scaled rank-revealing least squares (never the normal equations);
    structurally zero columns, such as the trace block on noiseless logs, are
    left at zero by the minimum-norm solution.  Raises RankDeficient when the
    P/K/L columns are not identifiable; warns above condition 1e10.
    """
    report = rank_check(sys)
    if not report.decision_full_rank:
        raise RankDeficient(
            f"decision columns rank-deficient: rows={report.rows},"
            f" needed {sys.decision_columns} independent columns")
    if report.decision_condition > cond_warn:
        warnings.warn(
            f"regression condition {report.decision_condition:.3e} above"
            f" {cond_warn:.0e}", IllConditionedWarning, stacklevel=2)
    col_norms = np.linalg.norm(sys.Theta, axis=0)
    scale = np.where(col_norms > 0, col_norms, 1.0)
    theta_s, _, _, _ = np.linalg.lstsq(sys.Theta / scale, sys.Upsilon,
                                       rcond=rcond)
    theta = theta_s / scale
    sl = sys.slices
    n, m, v = sys.n, sys.m, sys.v
    P = matops.symmetrize(matops.smat(theta[sl[0]]))
    KR_t = matops.unvec(theta[sl[1]], n, m)       # = K_next' R
    K_next = np.linalg.solve(R, KR_t.T)
    L_next = matops.unvec(theta[sl[2]], n, v).T
    trace_block = matops.unvec(theta[sl[3]], v, v)
    resid = float(np.linalg.norm(sys.Theta @ theta - sys.Upsilon))
    return LSUpdate(P=P, K_next=K_next, L_next=L_next,
                    trace_block=trace_block, residual=resid,
                    condition=report.decision_condition)


@dataclass(frozen=True)
class CostModel:
    """What the learner is allowed to know: cost weights, feedthrough, level."""

    Q: np.ndarray
    R: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", matops.check_symmetric(self.Q, 1e-10, "Q"))
        object.__setattr__(self, "R", matops.check_symmetric(self.R, 1e-10, "R"))
        object.__setattr__(self, "D", matops.as_matrix(self.D, "D"))


def learner_view(plant):
    """CostModel exposing only Q, R and D of a plant."""
    return CostModel(Q=plant.Q, R=plant.R, D=plant.D)


def run_model_free(cost, log, config, gain_bound=1e6, plateau_ratio=0.99,
                   brownian="measured"):
    """Sampling-based double loop: every policy evaluation of the model-based
    iteration is replaced by assemble + ls_update over one fixed rollout.

    Starts from the behavior gains stored in the log.  The inner sweep stops
    at tolerance, at the budget, or when the Frobenius gap stops contracting
    (the noise floor of the regression).  Model-only diagnostics (H-infinity
    value, Hurwitz flags) are left unevaluated in the trace.
    """
    t_start = time.perf_counter()
    gamma = config.gamma
    trace = IterationTrace(gamma=gamma)
    K = log.K0.copy()
    for p in range(config.outer_max + 1):
        t0 = time.perf_counter()
        if np.linalg.norm(K, "fro") > gain_bound:
            raise DivergenceDetected(f"|K|_F exceeded {gain_bound:.3g} at p={p}")
        Q_K = matops.symmetrize(cost.Q + K.T @ cost.R @ K)
        L = np.zeros((log.v, log.n))
        inner = []
        P_prev = None
        upd = None
        for q in range(config.inner_max + 1):
            sys = assemble(log, GainPair(K, L), cost.D, Q_K, gamma,
                           brownian=brownian)
            upd = ls_update(sys, cost.R)
            gap = (np.nan if P_prev is None
                   else float(np.linalg.norm(upd.P - P_prev, "fro")))
            inner.append(InnerRecord(q=q, L=L.copy(), P=upd.P, gap=gap,
                                     hurwitz_ok=True))
            if P_prev is not None:
                prev_gap = inner[-2].gap
                if gap <= config.tol:
                    break
                if np.isfinite(prev_gap) and gap >= plateau_ratio * prev_gap:
                    break
            P_prev = upd.P
            # maximizer update through the known feedthrough, as in the exact
            # iteration; the LS block for vec(L') is kept as a diagnostic but
            # is much more weakly identified than P itself
            L = (cost.D.T @ upd.P) / gamma**2
        trace.outer.append(OuterRecord(
            p=p, K=K.copy(), P=upd.P, inner=inner, hinf=np.nan,
            in_set=True, hurwitz_ok=True, gare_resid=upd.residual,
            wall_ms=(time.perf_counter() - t0) * 1e3))
        K_next = upd.K_next
        shift = np.linalg.norm(K_next - K, "fro")
        if shift <= config.tol:
            trace.converged = True
            trace.stop_reason = f"gain stationary at p={p} (shift {shift:.2e})"
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
    trace.final_L = (cost.D.T @ last.P) / gamma**2
    trace.wall_ms_total = (time.perf_counter() - t_start) * 1e3
    return trace


def annotate_trace(trace, plant, gamma):
    """Post-hoc diagnostics for a model-free trace using the true plant.

    Only the experiment harness calls this; the learner itself never sees A,
    B, C or E.
    """
    from . import riccati
    for rec in trace.outer:
        chk = riccati.in_constraint_set(plant, rec.K, gamma)
        rec.hinf = chk.hinf
        rec.in_set = bool(chk)
        rec.hurwitz_ok = chk.hurwitz
    return trace


# --- persistence -------------------------------------------------------------

_LOG_ARRAYS = ("instants", "states", "inputs", "brown_path", "eta_u", "eta_w",
               "Ixx", "Iux", "Iwx_dt", "Inux", "Iww", "QV", "K0", "L0")
_LOG_SCALARS = ("dt", "ds", "seed", "noise_intensity", "r_u", "r_w")


def save_log(log, path):
    """Persist a rollout to a flat .npz with a JSON header so identification
    can be re-run without re-simulation."""
    header = json.dumps({k: getattr(log, k) for k in _LOG_SCALARS})
    arrays = {k: getattr(log, k) for k in _LOG_ARRAYS}
    np.savez_compressed(path, header=np.frombuffer(header.encode(), dtype=np.uint8),
                        **arrays)


def load_log(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        fields = {k: data[k] for k in _LOG_ARRAYS}
    header["seed"] = int(header["seed"])
    return TrajectoryLog(**fields, **header)
