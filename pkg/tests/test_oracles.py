import numpy as np
import pytest

from indeflink.energy import EnergyModel
from indeflink.errors import DimensionError, OracleInconclusive
from indeflink.grid import PotentialSpec, WeightSpec
from indeflink.nonlinearity import NonlinearitySpec
from indeflink.oracles import shooting_oracle_1d

from conftest import small_model


@pytest.fixture(scope="module")
def shots(small):
    return shooting_oracle_1d(small)


def test_candidates_are_discrete_solutions(small, shots):
    assert shots.candidates
    for c in shots.candidates:
        assert c.residual <= 1e-6
        assert c.amplitude > 0
        np.testing.assert_allclose(c.field.values, c.field.values[::-1], atol=1e-12)


def test_closest_is_sign_invariant(shots):
    c = shots.candidates[0]
    best, d = shots.closest(-c.field.values)
    assert best is c and d == pytest.approx(0.0, abs=1e-15)


def test_zero_nonlinearity_inconclusive(small):
    free = EnergyModel(small.op, small.split, small.h_values, NonlinearitySpec.zero())
    with pytest.raises(OracleInconclusive):
        shooting_oracle_1d(free)


def test_rejects_periodic_and_uneven():
    per = small_model(n=32, L=np.pi, boundary="periodic",
                      potential=PotentialSpec("periodic_cosine", {"amplitude": 1.0}))
    with pytest.raises(DimensionError):
        shooting_oracle_1d(per)
    off = small_model(n=32, weight=WeightSpec("gaussian", {"amplitude": 2.0, "center": 1.0}))
    with pytest.raises(DimensionError):
        shooting_oracle_1d(off)
