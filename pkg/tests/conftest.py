import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from credalcat import bundled
from credalcat.model import PerturbationSpec, perturb_to_credal


@pytest.fixture(scope="session")
def fig1():
    return bundled.fig1_model()


@pytest.fixture(scope="session")
def fig1_credal(fig1):
    return perturb_to_credal(fig1, PerturbationSpec(0.05))


@pytest.fixture(scope="session")
def bank18():
    return bundled.single_skill_18q_model()


@pytest.fixture(scope="session")
def bank18_credal(bank18):
    return perturb_to_credal(bank18, PerturbationSpec(0.05))


@pytest.fixture(scope="session")
def chain():
    return bundled.chain_4skill_64q_model()


@pytest.fixture(scope="session")
def chain_credal(chain):
    return perturb_to_credal(chain, PerturbationSpec(0.05))


# Exact interval bounds on P(S=1 | q1, q2) for the two-question model with
# eps = 0.05 intervals, frozen from rational-arithmetic vertex enumeration.
EXACT_FIG1_CREDAL = {
    ("0", "0"): (0.028532608696, 0.1875),
    ("0", None): (0.051724137931, 0.22),
    ("0", "1"): (0.0625, 0.34375),
    (None, "0"): (0.305825242718, 0.5),
    (None, "1"): (0.5, 0.694174757282),
    ("1", "0"): (0.516891891892, 0.791666666667),
    ("1", None): (0.665217391304, 0.822834645669),
    ("1", "1"): (0.708333333333, 0.89610817942),
}


@pytest.fixture(scope="session")
def fig1_exact_credal_bounds():
    return EXACT_FIG1_CREDAL
