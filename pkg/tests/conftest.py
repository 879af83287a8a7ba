import pytest

from sgd_limits import default_rule, make_activation

BOUNDED = ("tanh", "erf", "purified")
BUILTINS = ("identity", "h2", "h3", "tanh", "erf", "purified")


@pytest.fixture(scope="session")
def rule():
    return default_rule()


@pytest.fixture(scope="session")
def acts():
    return {label: make_activation(label) for label in BUILTINS + ("zero",)}
