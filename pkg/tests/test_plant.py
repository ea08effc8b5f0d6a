import json

import numpy as np
import pytest

from robustpi import plant
from robustpi.errors import (BadParams, DimensionMismatch,
                             GenerationFailure)


class TestValidation:
    def test_golden_scalar_passes(self, golden):
        rep = plant.validate_assumptions(golden)
        assert rep.ok
        assert rep.q_pd and rep.r_pd and rep.cross_term_zero
        assert rep.stabilizable and rep.detectable

    def test_unreachable_unstable_mode(self):
        pl = plant.StochasticPlant(
            A=[[1.0]], B=[[0.0]], C=[[1.0], [0.0]], D=[[1.0]],
            E=[[0.0], [1.0]])
        rep = plant.validate_assumptions(pl)
        assert not rep.stabilizable
        assert not rep.ok

    def test_zero_output_fails_detectability(self):
        pl = plant.StochasticPlant(
            A=[[1.0]], B=[[1.0]], C=[[0.0], [0.0]], D=[[1.0]],
            E=[[0.0], [1.0]])
        rep = plant.validate_assumptions(pl)
        assert not rep.detectable
        assert not rep.q_pd

    def test_cross_term_detected(self):
        pl = plant.StochasticPlant(
            A=[[-1.0]], B=[[1.0]], C=[[1.0], [0.5]], D=[[1.0]],
            E=[[0.0], [1.0]])
        rep = plant.validate_assumptions(pl)
        assert not rep.cross_term_zero

    def test_builtin_plants_all_valid(self):
        for maker in plant.BUILTIN_PLANTS.values():
            assert plant.validate_assumptions(maker()).ok


class TestClosedLoop:
    def test_zero_gains(self, golden):
        gains = plant.GainPair(np.zeros((1, 1)), np.zeros((1, 1)))
        cl = plant.closed_loop_matrices(golden, gains)
        assert np.array_equal(cl["A_K"], golden.A)
        assert np.array_equal(cl["A_KL"], golden.A)
        assert np.array_equal(cl["Q_K"], golden.Q)

    def test_scalar_values(self, golden):
        gains = plant.GainPair([[3.0]], [[0.625]])
        cl = plant.closed_loop_matrices(golden, gains, P=[[2.5]], gamma=2.0)
        assert cl["A_K"][0, 0] == pytest.approx(-2.0)
        assert cl["A_KL"][0, 0] == pytest.approx(-1.375)
        assert cl["Q_K"][0, 0] == pytest.approx(10.0)
        assert cl["A_Kgamma"][0, 0] == pytest.approx(-2.0 + 2.5 / 4.0)

    def test_gain_linearity(self, golden):
        g1 = plant.GainPair([[1.5]], [[0.0]])
        g2 = plant.GainPair([[3.0]], [[0.0]])
        c1 = plant.closed_loop_matrices(golden, g1)
        c2 = plant.closed_loop_matrices(golden, g2)
        corr1 = golden.A - c1["A_K"]
        corr2 = golden.A - c2["A_K"]
        assert np.allclose(corr2, 2.0 * corr1)

    def test_dimension_mismatch(self, golden):
        with pytest.raises(DimensionMismatch):
            plant.GainPair(np.zeros((2, 1)), np.zeros((1, 1))).check_dims(golden)


class TestPendulums:
    def test_triple_shapes_and_structure(self):
        pl = plant.triple_pendulum()
        assert pl.A.shape == (6, 6) and pl.B.shape == (6, 2)
        assert pl.D.shape == (6, 3)
        assert np.array_equal(pl.D[3:], np.eye(3))
        assert np.array_equal(pl.D[:3], np.zeros((3, 3)))
        assert pl.C.shape == (8, 6) and pl.E.shape == (8, 2)
        assert np.abs(pl.E.T @ pl.C).max() == 0.0

    def test_triple_upright_unstable(self):
        pl = plant.triple_pendulum()
        assert np.linalg.eigvals(pl.A).real.max() > 0

    def test_double_shapes(self):
        pl = plant.double_pendulum()
        assert pl.A.shape == (4, 4) and pl.B.shape == (4, 1)
        assert pl.D.shape == (4, 2) and pl.C.shape == (5, 4)
        assert pl.E.shape == (5, 1)

    def test_bad_params(self):
        with pytest.raises(BadParams):
            plant.triple_pendulum(masses=(1.0, -1.0, 1.0))
        with pytest.raises(BadParams):
            plant.double_pendulum(gravity=0.0)
        with pytest.raises(BadParams):
            plant.triple_pendulum(masses=(1.0, 1.0))


class TestRandomPlant:
    def test_deterministic(self):
        p1 = plant.random_plant(7, 4, 2, 2)
        p2 = plant.random_plant(7, 4, 2, 2)
        assert np.array_equal(p1.A, p2.A) and np.array_equal(p1.B, p2.B)
        assert np.array_equal(p1.D, p2.D)

    def test_valid_by_construction(self):
        pl = plant.random_plant(1, 4, 1, 2)
        assert plant.validate_assumptions(pl).ok

    def test_bad_dims(self):
        with pytest.raises(BadParams):
            plant.random_plant(0, 0, 1, 1)

    def test_exhaustion_reported(self):
        with pytest.raises(GenerationFailure):
            plant.random_plant(0, 3, 1, 1, max_tries=0)


class TestPlantIO:
    def test_round_trip(self, tmp_path, golden):
        path = tmp_path / "plant.json"
        plant.save_plant(golden, path)
        back = plant.load_plant(path)
        for name in ("A", "B", "C", "D", "E"):
            assert np.array_equal(getattr(back, name), getattr(golden, name))
        assert back.noise_intensity == golden.noise_intensity

    def test_ragged_rejected(self, tmp_path):
        doc = {"A": [[1.0, 2.0], [3.0]], "B": [[1.0], [0.0]],
               "C": [[1.0, 0.0]], "D": [[1.0], [0.0]], "E": [[0.0]]}
        path = tmp_path / "ragged.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(BadParams):
            plant.load_plant(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "missing.json"
        path.write_text(json.dumps({"A": [[1.0]]}))
        with pytest.raises(BadParams):
            plant.load_plant(path)


class TestConfig:
    def test_rejects_bad_gamma(self):
        with pytest.raises(BadParams):
            plant.DesignConfig(gamma=0.0)

    def test_rejects_bad_tol(self):
        with pytest.raises(BadParams):
            plant.DesignConfig(gamma=1.0, tol=0.0)

    def test_noise_override(self, golden):
        pl = golden.with_noise(0.3)
        assert pl.noise_intensity == 0.3
        assert np.array_equal(pl.A, golden.A)
