import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flgi_trials.gittins import build_gittins_table


@pytest.fixture(scope="session")
def table_small():
    """Default-discount table large enough for short trials and tree tests."""
    return build_gittins_table(0.99, max_count=30)


@pytest.fixture(scope="session")
def table_zero_discount():
    return build_gittins_table(0.0, max_count=12)


@pytest.fixture(scope="session")
def table_n40():
    return build_gittins_table(0.99, max_count=46)


@pytest.fixture(scope="session")
def table_n80():
    return build_gittins_table(0.99, max_count=86)
