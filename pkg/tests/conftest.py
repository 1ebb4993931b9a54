import numpy as np
import pytest

from blindspot.envs import CatcherConfig, Env, FlappyConfig, make_env_pair
from blindspot.oracle import ground_truth_blind_spots, make_oracle
from blindspot.tabular import greedy_policy, value_iteration


class TableEnv(Env):
    """Deterministic MDP given as ``table[state][action] = (next, reward, done)``.

    Sim observation is the identity, so it doubles as a source environment.
    """

    real_fields = sim_fields = ("s",)

    def __init__(self, table, starts=None, terminal=(), horizon=50, n_actions=None):
        self.table = table
        self.terminal = set(terminal)
        self.horizon = horizon
        n = n_actions or max(len(v) for v in table.values())
        self.actions = tuple(f"a{i}" for i in range(n))
        self.starts = starts or [((s,), 1.0) for s in table if s not in self.terminal]

    def sim_observe(self, s):
        return tuple(s)

    def is_terminal(self, s):
        return s[0] in self.terminal

    def step(self, s, a):
        self.check_action(a)
        if self.is_terminal(s):
            return tuple(s), 0.0, True
        nxt, r, done = self.table[s[0]][a]
        return (nxt,), r, done

    def start_distribution(self):
        return self.starts

    def enumerate_real(self):
        return [(s,) for s in self.table]


@pytest.fixture
def chain_env():
    # 0 -> 1 -> 2 (goal); action 1 moves right, action 0 stays and pays a little
    table = {
        0: [(0, 0.1, False), (1, 0.0, False)],
        1: [(0, 0.0, False), (2, 1.0, True)],
        2: [(2, 0.0, True), (2, 0.0, True)],
    }
    return TableEnv(table, terminal={2})


def _context(domain, cfg, mode, pct):
    pair = make_env_pair(domain, cfg)
    q_sim = value_iteration(pair.source, "sim")
    q_real = value_iteration(pair.target, "real")
    pi = greedy_policy(q_sim)
    orc = make_oracle(q_real, mode, pct, env=pair.target)
    truth = ground_truth_blind_spots(pair, pi, orc.acceptable)
    return pair, pi, orc, truth


@pytest.fixture(scope="session")
def small_catcher():
    """7x7 Catcher with value-iteration policies and a strict oracle."""
    return _context("catcher", CatcherConfig(width=7, height=7), "strict", None)


@pytest.fixture(scope="session")
def small_catcher_lenient():
    return _context("catcher", CatcherConfig(width=7, height=7), "lenient", 0.95)


@pytest.fixture(scope="session")
def flappy_strict():
    return _context("flappybird", FlappyConfig(), "strict", None)


@pytest.fixture(scope="session")
def flappy_lenient():
    return _context("flappybird", FlappyConfig(), "lenient", 0.7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
