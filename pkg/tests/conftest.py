import numpy as np
import pytest

# At least five parameter settings per family; Waring keeps sigma small so
# that its power-law tail has a finite variance that summation can resolve.
PARAM_GRID = {
    "Poisson": [(0.05,), (0.5,), (1.0,), (3.0,), (12.0,), (40.0,)],
    "Geometric": [(0.05,), (0.5,), (1.0,), (3.0,), (8.0,)],
    "NegBinomial": [(0.1, 0.5), (1.0, 1.0), (2.0, 0.2), (5.0, 2.0), (20.0, 0.05), (0.5, 5.0)],
    "Waring": [(0.5, 0.2), (1.0, 0.1), (2.0, 0.25), (5.0, 0.05), (0.2, 0.3)],
    "GenPoisson": [(0.5, 0.5), (2.0, 0.5), (1.0, 1.0), (5.0, 0.1), (10.0, 0.02), (0.2, 2.0)],
    "DoublePoisson": [(0.5, 0.5), (2.0, 1.0), (3.0, 2.0), (10.0, 0.3), (5.0, 1.5)],
    "ZeroInfPoisson": [(1.0, 0.5), (5.0, 0.3), (0.5, 0.1), (10.0, 0.9), (3.0, 0.01)],
}

M5_GRID = (0.005, 0.025, 0.165, 0.25, 0.5, 0.75, 0.835, 0.975, 0.995)


def grid_cases():
    return [(fam, th) for fam, ths in PARAM_GRID.items() for th in ths]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
