import csv

import numpy as np
import pytest

from conftest import scalar_brl_root
from robustpi import pi_model_based as pm
from robustpi import plant, riccati
from robustpi.errors import InfeasibleStart, InnerDivergence
from robustpi.plant import DesignConfig, GainPair

GOLDEN_PSTAR = (2.0 + np.sqrt(7.0)) / 1.5


def hand_outer_sequence(k0, gamma, rounds):
    """Independent oracle: iterate the scalar loop with the closed-form
    stabilizing root of the bounded-real quadratic at every step."""
    k = k0
    out = []
    for _ in range(rounds):
        p = scalar_brl_root(1, 1, 1, 1, 1, k, gamma)
        out.append(p)
        k = p  # b = r = 1
    return out


class TestInnerLoop:
    def test_golden_hand_sequence(self, golden):
        P, recs = pm.inner_loop(golden, [[3.0]], 2.0, tol=1e-12)
        values = [r.P[0, 0] for r in recs]
        # hand iteration of the scalar Lyapunov recursion
        assert values[0] == pytest.approx(2.5, abs=1e-12)
        assert values[1] == pytest.approx(3.0681818181818183, abs=1e-10)
        assert values[2] == pytest.approx(3.100911458333, abs=1e-9)
        assert P[0, 0] == pytest.approx(8.0 - np.sqrt(24.0), abs=1e-9)

    def test_monotone_nondecreasing(self, golden):
        _, recs = pm.inner_loop(golden, [[3.0]], 2.0, tol=1e-12)
        vals = [r.P[0, 0] for r in recs]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_large_gamma_single_step(self, golden):
        P, recs = pm.inner_loop(golden, [[3.0]], 1e9, tol=1e-10)
        assert len(recs) <= 2
        assert P[0, 0] == pytest.approx(2.5, abs=1e-8)

    def test_zero_weight_gives_zero(self):
        pl = plant.StochasticPlant(A=[[-1.0]], B=[[1.0]], C=[[0.0], [0.0]],
                                   D=[[1.0]], E=[[0.0], [1.0]])
        P, recs = pm.inner_loop(pl, [[0.0]], 2.0)
        assert all(abs(r.P[0, 0]) < 1e-14 for r in recs)

    def test_divergence_outside_set(self, golden):
        # K = 2 stabilizes A - BK but violates the attenuation bound, so the
        # inner iterates must eventually destabilize A_KL
        with pytest.raises(InnerDivergence):
            pm.inner_loop(golden, [[2.0]], 2.0, q_max=200)

    def test_bounded_by_brl_solution(self, corpus):
        for pl, gamma, K in corpus[:8]:
            P_K = riccati.bounded_real_solve(pl, K, gamma)
            P, recs = pm.inner_loop(pl, K, gamma, tol=1e-10)
            for r in recs:
                assert np.linalg.eigvalsh(P_K - r.P).min() >= -1e-8


class TestOuterStep:
    def test_scalar_identity(self, golden):
        K = pm.outer_step(golden, [[3.1010205]])
        assert K[0, 0] == pytest.approx(3.1010205)

    def test_zero_p(self, golden):
        assert np.array_equal(pm.outer_step(golden, np.zeros((1, 1))),
                              np.zeros((1, 1)))

    def test_zero_b(self):
        pl = plant.StochasticPlant(A=[[-1.0]], B=[[0.0]], C=[[1.0], [0.0]],
                                   D=[[1.0]], E=[[0.0], [1.0]])
        assert np.array_equal(pm.outer_step(pl, [[5.0]]), np.zeros((1, 1)))


class TestDoubleLoop:
    def test_golden_from_k3_matches_hand_values(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-10)
        gains = GainPair([[3.0]], np.zeros((1, 1)))
        trace = pm.run_double_loop(golden, config, init_gains=gains)
        costs = [rec.P[0, 0] for rec in trace.outer]
        hand = hand_outer_sequence(3.0, 2.0, len(costs))
        assert costs[0] == pytest.approx(3.1010205, abs=1e-6)
        assert costs[1] == pytest.approx(3.09718, abs=1e-5)
        assert costs[-1] == pytest.approx(GOLDEN_PSTAR, abs=1e-8)
        for got, want in zip(costs, hand):
            assert got == pytest.approx(want, abs=1e-7)
        assert all(b <= a + 1e-10 for a, b in zip(costs, costs[1:]))

    def test_golden_from_lqr_start(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        assert trace.converged
        assert trace.iterations <= 10
        assert trace.final_P[0, 0] == pytest.approx(GOLDEN_PSTAR, abs=1e-8)
        hand = hand_outer_sequence(1.0 + np.sqrt(2.0), 2.0, trace.iterations)
        for rec, want in zip(trace.outer, hand):
            assert rec.P[0, 0] == pytest.approx(want, abs=1e-6)

    def test_fixed_point(self, golden):
        p_star = riccati.solve_gare_oracle(golden, 2.0)
        k_star = pm.outer_step(golden, p_star)
        P, _ = pm.inner_loop(golden, k_star, 2.0, tol=1e-13, q_max=200)
        k_next = pm.outer_step(golden, P)
        assert np.linalg.norm(k_next - k_star, "fro") <= 1e-10
        assert np.linalg.norm(P - p_star, "fro") <= 1e-8

    def test_infeasible_start_raises(self, golden):
        config = DesignConfig(gamma=2.0)
        with pytest.raises(InfeasibleStart):
            pm.run_double_loop(golden, config,
                               init_gains=GainPair([[2.0]], np.zeros((1, 1))))

    def test_membership_recorded_every_iterate(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        assert all(rec.in_set for rec in trace.outer)
        assert all(rec.hinf < 2.0 for rec in trace.outer)


class TestCertificate:
    def test_golden_ratios_contract(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        p_star = riccati.solve_gare_oracle(golden, 2.0)
        cert = pm.certify(trace, p_star, golden)
        assert cert.ok
        finite = [r for r in cert.outer_ratios if np.isfinite(r)]
        assert finite and all(0.0 <= r < 1.0 for r in finite)
        assert cert.c_h > 0
        assert all(d > 0 for d in cert.d_K)

    def test_settled_trace_reports_nan(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        p_star = trace.final_P  # pretend the oracle equals the converged value
        cert = pm.certify(trace, p_star, golden)
        assert not cert.flagged
        assert np.isnan(cert.outer_ratios[-1])

    def test_corrupted_trace_flagged(self, golden):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        p_star = riccati.solve_gare_oracle(golden, 2.0)
        trace.outer[1].P = trace.outer[1].P + 5.0  # break monotonicity
        cert = pm.certify(trace, p_star, golden)
        assert any(kind == "outer" for kind, _, _, _ in cert.flagged)


class TestExport:
    def test_csv_schema_and_determinism(self, golden, tmp_path):
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        p_star = riccati.solve_gare_oracle(golden, 2.0)
        pm.certify(trace, p_star, golden)
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        pm.write_trace_csv(trace, p1)
        pm.write_trace_csv(trace, p2)
        assert p1.read_bytes() == p2.read_bytes()
        with open(p1) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == pm.CSV_HEADER
        outer_rows = [r for r in rows[1:] if r[1] == "-1"]
        assert len(outer_rows) == trace.iterations
        assert float(outer_rows[0][5]) < 2.0  # hinf column of the outer row

    def test_summary_round_trips_json(self, golden, tmp_path):
        import json
        config = DesignConfig(gamma=2.0, tol=1e-9)
        trace = pm.run_double_loop(golden, config)
        summary = pm.trace_summary(trace)
        path = tmp_path / "s.json"
        pm.write_summary_json(summary, path)
        back = json.loads(path.read_text())
        assert back["converged"] is True
        assert back["final_K"][0][0] == pytest.approx(GOLDEN_PSTAR, abs=1e-8)


class TestCorpusInvariants:
    def test_outer_monotone_inner_monotone_in_set(self, corpus):
        # spot-check a slice here; the full corpus is exercised in acceptance
        for pl, gamma, K in corpus[:10]:
            config = DesignConfig(gamma=gamma, tol=1e-9)
            trace = pm.run_double_loop(pl, config,
                                       init_gains=GainPair(K, np.zeros((pl.v, pl.n))))
            assert trace.converged
            for a, b in zip(trace.outer, trace.outer[1:]):
                assert np.linalg.eigvalsh(a.P - b.P).min() >= -1e-9
            for rec in trace.outer:
                assert rec.in_set
                vals = rec.inner
                for x, y in zip(vals, vals[1:]):
                    assert np.linalg.eigvalsh(y.P - x.P).min() >= -1e-9
