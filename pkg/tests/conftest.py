from __future__ import annotations

import numpy as np
import pytest

from lham.runner import PRESETS, build_system, embedding_and_channel, reference_solution
from lham.spectral import ModeSet, ProblemDef, parse_ic, project_initial

BURGERS_IC = "sin(1)"
MHD_OMEGA = "sin(1,0) + 0.5*sin(1,-1)"
MHD_XI = "cos(0,1) + 0.25*cos(1,1)"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def burgers_problem():
    p, ms = ProblemDef("burgers", 0.05), ModeSet(1, 4)
    return p, ms, project_initial(p, ms, parse_ic(BURGERS_IC))


@pytest.fixture(scope="session")
def mhd_problem():
    p, ms = ProblemDef("mhd", 0.05, 0.03), ModeSet(2, 1)
    return p, ms, project_initial(p, ms, parse_ic(MHD_OMEGA, 0) + parse_ic(MHD_XI, 1))


class Preset:
    """Lazily built lift, embedding and channel for one built-in preset."""

    def __init__(self, name: str):
        self.name = name
        self.config = PRESETS[name]
        self.system, self.hierarchy = build_system(self.config)
        self._pair = None

    @property
    def embedding(self):
        return self.channel_pair[0]

    @property
    def channel(self):
        return self.channel_pair[1]

    @property
    def channel_pair(self):
        if self._pair is None:
            self._pair = embedding_and_channel(self.system.A, self.config.dt, self.config.extra_shift)
        return self._pair

    @property
    def reference(self):
        return reference_solution(self.config)


@pytest.fixture(scope="session")
def presets():
    return {name: Preset(name) for name in PRESETS}


ACCEPTANCE: list[str] = []


def record(name: str, passed: bool, detail: str) -> None:
    """Log one acceptance line and echo it for ``-s`` runs."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
