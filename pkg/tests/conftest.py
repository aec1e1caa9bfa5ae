import pytest

from webcp.demo import build_demo_fixture


@pytest.fixture(scope="session")
def demo_fixture(tmp_path_factory):
    """One shared demo fixture tree per test session."""
    root = tmp_path_factory.mktemp("demo")
    config_path = build_demo_fixture(root, seed=7)
    return config_path
