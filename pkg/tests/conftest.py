import sys
import os

import pytest

# Add repository root to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from dfsblock.services.device import isolated_chain, standard_block, standard_chain  # noqa: E402


@pytest.fixture
def block():
    return standard_block(1.0, 0.5)


@pytest.fixture
def single_chain(block):
    return isolated_chain(block)


@pytest.fixture
def two_blocks():
    return standard_chain(1.0, 0.5, 2)
