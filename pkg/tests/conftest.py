import os

import pytest

from rtsched.planner import ArtifactCache


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: full acceptance-criteria suite (slow)")


@pytest.fixture(scope="session")
def artifact_cache(tmp_path_factory):
    """Persistent cache if RTSCHED_CACHE is set, else session-local."""
    directory = os.environ.get("RTSCHED_CACHE")
    if not directory:
        directory = str(tmp_path_factory.mktemp("artifact-cache"))
    return ArtifactCache(directory)


@pytest.fixture(scope="session")
def shared_backends():
    return {}


@pytest.fixture(scope="session")
def shared_bundles():
    return {}
