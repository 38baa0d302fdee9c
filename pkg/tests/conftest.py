import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hsfrag.hamiltonian import Stark, build_hamiltonian
from hsfrag.lattice import LadderGeometry, enumerate_sector

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("HSFRAG_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="set HSFRAG_EXTENDED=1 to run")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def ladder4():
    """4x2 ladder at half filling (dim 70) with the default couplings."""
    return LadderGeometry.default(4), enumerate_sector(4, 4)


@pytest.fixture(scope="session")
def stark4(ladder4):
    geo, basis = ladder4
    return build_hamiltonian(geo, Stark(1.0), basis)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one (criterion, passed, detail) line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
