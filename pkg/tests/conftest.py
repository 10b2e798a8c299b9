import numpy as np
import pytest

from duffgap.beam_ops import assemble_fd
from duffgap.gap_pair import diag_pair, gap_spectrum, unstable_mode
from duffgap.lyapunov import certified_constants


class Setup:
    def __init__(self, pair, lam, k=None):
        self.pair = pair
        self.lam = lam
        self.spectrum = gap_spectrum(pair, k=k)
        self.mode = unstable_mode(pair, self.spectrum, lam)
        self.consts = certified_constants(pair, self.spectrum, self.mode, lam)

    @property
    def sigma0(self):
        return self.consts.sigma0


@pytest.fixture(scope="session")
def diag():
    return Setup(diag_pair(), 2.0)


@pytest.fixture(scope="session")
def beam64():
    return Setup(assemble_fd(64), 60.0, k=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_spd(rng, n, shift=None):
    X = rng.standard_normal((n, n))
    return X @ X.T + (n if shift is None else shift) * np.eye(n)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
