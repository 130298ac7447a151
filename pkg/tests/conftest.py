"""Pytest configuration and shared fixtures for foba-select tests."""
import sys
import pytest
import numpy as np
from pathlib import Path

# Add project root to path for all tests
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))


def pytest_configure(config):
    """Configure pytest with custom markers and settings."""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "slow: Slow running tests")
    config.addinivalue_line("markers", "acceptance: End-to-end acceptance checks")
    config.addinivalue_line("markers", "requires_data: Tests that need external dataset files")


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on test names."""
    for item in items:
        if "integration" in item.name.lower() or "sweep" in item.name.lower():
            item.add_marker(pytest.mark.slow)


@pytest.fixture
def rng():
    """A fresh seeded generator per test."""
    return np.random.default_rng(20240607)


def pytest_runtest_setup(item):
    """Setup hook to handle conditional test skipping."""
    if item.get_closest_marker("requires_data"):
        import os
        data_dir = os.environ.get("FOBA_SELECT_DATA")
        if not data_dir or not Path(data_dir).is_dir():
            pytest.skip("Test requires FOBA_SELECT_DATA pointing at the dataset directory")
