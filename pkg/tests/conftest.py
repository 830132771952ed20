import numpy as np
import pytest

from app.models.geometry import Box, Domain, MatrixPair, WaveVector
from app.services.scenario_service import two_branch_scenario
from app.services.tn_service import build_tn


@pytest.fixture(scope="session")
def two_branch():
    """The scalar forward-backward scenario with N = 2."""
    return two_branch_scenario()


@pytest.fixture
def symmetric_tn():
    """N = 2, m = n = 1, ρ = 0, γ_2 = −γ_1, κ = (2, 2)."""
    gammas = [WaveVector([1.0], [1.0], [[0.0]]), WaveVector([-1.0], [1.0], [[0.0]])]
    return build_tn(MatrixPair.zeros(1, 1), gammas, [2.0, 2.0])


@pytest.fixture
def t4_gammas():
    """Four wave vectors with m = 1, n = 2 and nonzero flux components, summing to zero."""
    return [
        WaveVector([1.0], [1.0, 0.0], [[0.0, 1.0]]),
        WaveVector([1.0], [0.0, 1.0], [[-1.0, 0.0]]),
        WaveVector([-1.0], [1.0, 0.0], [[0.0, -1.0]]),
        WaveVector([-1.0], [0.0, 1.0], [[1.0, 0.0]]),
    ]


@pytest.fixture
def t4_tn(t4_gammas):
    return build_tn(MatrixPair.zeros(1, 2), t4_gammas, [2.0, 2.0, 2.0, 2.0])


@pytest.fixture
def unit_square():
    return Box([0.5, 0.5], [0.5, 0.5])


@pytest.fixture
def unit_interval():
    return Domain((Box([0.5], [0.5]),))


@pytest.fixture
def rng():
    """Seeded generator; every test gets the same stream."""
    return np.random.default_rng(42)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
