import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ompdiff.campaign import discover_default_toolchains


@pytest.fixture(scope="session")
def toolchains():
    found = discover_default_toolchains()
    if not found:
        pytest.skip("no OpenMP toolchain available on this host")
    return found


@pytest.fixture(scope="session")
def toolchain(toolchains):
    return toolchains[0]
