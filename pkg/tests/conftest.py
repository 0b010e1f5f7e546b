import numpy as np
import pytest

from clt_lab.markov_exact import FiniteChain


@pytest.fixture(scope="session")
def two_state() -> FiniteChain:
    """2-state chain with exact closed forms: pi=(2/3,1/3), hbar=(1,-2),
    P hbar = 0.7 hbar, g=(10/3,-20/3), sigma_inf^2 = 34/3."""
    return FiniteChain(kernel=[[0.9, 0.1], [0.2, 0.8]], obs=[1.0, -2.0],
                       lyapunov=[1.0, 2.0], small_set=(0, 1))


@pytest.fixture(scope="session")
def three_state() -> FiniteChain:
    """Geometrically ergodic 3-state chain with a rare, heavy-observation state."""
    return FiniteChain(
        kernel=[[0.90, 0.08, 0.02], [0.20, 0.70, 0.10], [0.10, 0.30, 0.60]],
        obs=[0.0, 1.0, 4.0], lyapunov=[1.0, 2.0, 6.0], small_set=(0, 1))
