import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes support/oracle importable

from lyat.params import ArchConfig

from support import TINY


@pytest.fixture
def tiny_arch():
    return ArchConfig(**TINY)
