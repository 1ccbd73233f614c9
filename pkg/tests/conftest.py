import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqdamage.simnet import ISOLATION_VIOLATIONS  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def no_foreign_buffer_reads():
    """The isolation hook must stay silent across the whole run."""
    yield
    assert ISOLATION_VIOLATIONS == [], f"sensors read foreign buffers: {ISOLATION_VIOLATIONS}"


@pytest.fixture
def report(capsys):
    """Print a verdict line that survives output capture."""

    def _report(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
        return ok

    return _report
