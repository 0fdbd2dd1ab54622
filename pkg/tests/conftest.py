import numpy as np
import pytest

from schro_ldp.measures import DiscreteMeasure
from schro_ldp.ot_dual import ot_solve_exact


def random_measure(rng: np.random.Generator, n: int, d: int) -> DiscreteMeasure:
    """n distinct atoms in [0, 1]^d with Dirichlet weights bounded away from zero."""
    points = rng.uniform(0.0, 1.0, size=(n, d))
    weights = rng.dirichlet(np.ones(n)) + 0.01
    return DiscreteMeasure.normalized(points, weights)


@pytest.fixture
def follmer_pair() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """delta_0 -> (delta_{-1} + delta_{+1}) / 2 in one dimension."""
    return DiscreteMeasure.dirac([0.0]), DiscreteMeasure.uniform([-1.0, 1.0])


@pytest.fixture
def follmer_duals(follmer_pair):
    return ot_solve_exact(*follmer_pair)[1]


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a file under tmp_path and return its path."""

    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write
