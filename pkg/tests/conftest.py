import numpy as np
import pytest

from pmdlab.chain import behavior_model
from pmdlab.garnet import GarnetSpec, gen_garnet
from pmdlab.mdp import TabularMdp, uniform_policy

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance_report(request):
    """Record one ``(passed, detail)`` line per acceptance criterion."""
    store = request.config.stash[ACCEPTANCE_KEY]

    def record(label: str, passed: bool, detail: str):
        store[label] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(store, key=lambda s: int(s.split()[0])):
        passed, detail = store[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


def two_state_mdp(gamma: float = 0.9) -> TabularMdp:
    """Action 0 stays put, action 1 switches; reward 1 only for staying in state 1."""
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 0, 1] = 1.0
    p[0, 1, 1] = p[1, 1, 0] = 1.0
    r = np.array([[0.0, 0.0], [1.0, 0.0]])
    return TabularMdp(p, r, gamma)


@pytest.fixture
def two_state():
    return two_state_mdp()


@pytest.fixture
def garnet():
    return gen_garnet(GarnetSpec(num_states=6, num_actions=3, branching=3, seed=7, gamma=0.8))


@pytest.fixture
def garnet_behavior(garnet):
    return behavior_model(garnet, uniform_policy(garnet.num_states, garnet.num_actions))
