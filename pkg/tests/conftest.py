import numpy as np
import pytest

from ctgames import GameConfig, Theta

# Benchmark nature rate: the one-period up/down probability of the
# five-level demand matrix taken as the instantaneous rate.  This choice
# reproduces the published steady state of the benchmark game almost
# exactly; the Frobenius fit (~0.2956) is tested separately in test_game.
BENCHMARK_Q = 0.2

# Paper-scale benchmark game: five heterogeneous firms, five demand levels.
BENCH_THETA = Theta(fc=(-1.9, -1.8, -1.7, -1.6, -1.5), rs=1.0, rn=0.0, ec=1.0)


def benchmark_config(**overrides):
    base = dict(n_players=5, market_levels=5, lam=1.0, rho=0.05,
                q_up=BENCHMARK_Q, q_down=BENCHMARK_Q, delta=1.0)
    base.update(overrides)
    return GameConfig(**base)


def desk_config(**overrides):
    """Small three-firm game (K=24) used where paper scale is overkill."""
    base = dict(n_players=3, market_levels=3, lam=1.0, rho=0.05,
                q_up=BENCHMARK_Q, q_down=BENCHMARK_Q, delta=1.0)
    base.update(overrides)
    return GameConfig(**base)


DESK_THETA = Theta(fc=(-1.9, -1.8, -1.7), rs=1.0, rn=1.0, ec=1.0)


def random_generator(rng, k, scale=1.0):
    """Random valid intensity matrix with total exit rates of order ``scale``."""
    q = rng.uniform(size=(k, k)) * (2.0 * scale / k)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
