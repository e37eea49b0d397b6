import numpy as np
import pytest
from hypothesis import settings

from relscat.fields import Family, FieldModel

settings.register_profile("relscat", max_examples=60, deadline=None)
settings.load_profile("relscat")


@pytest.fixture(scope="session")
def soft_full():
    """Soft-Coulomb model with all four parts."""
    return FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5)


@pytest.fixture(scope="session")
def soft_short():
    """Short-range-only soft-Coulomb model of moderate strength."""
    return FieldModel(family=Family.SOFT_COULOMB, q_s=0.05, m_s=0.03)


@pytest.fixture(scope="session")
def zero_model():
    return FieldModel()


def unit(phi):
    return np.array([np.cos(phi), np.sin(phi)])


def perp(phi):
    return np.array([-np.sin(phi), np.cos(phi)])


# -- acceptance reporting ---------------------------------------------------

N_CRITERIA = 12
_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request, capsys):
    """``criterion(number, ok, detail)`` prints one PASS/FAIL line and asserts ``ok``."""
    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, {})[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(lines.get(k, f"criterion {k:2d}: FAIL  (no result recorded)"))
