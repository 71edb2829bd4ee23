import pytest

from renorm_lab.experiments import ExperimentConfig, FamilyConfig, solve_family


@pytest.fixture(scope="session")
def golden_arnold():
    """Arnold map solved for 16 golden digits (unit-test depth)."""
    cfg = ExperimentConfig()
    return solve_family(FamilyConfig("arnold"), [1] * 16, cfg, depth=14)


@pytest.fixture(scope="session")
def golden_two_harmonic():
    cfg = ExperimentConfig()
    return solve_family(FamilyConfig("two_harmonic", {"beta": "0.1"}), [1] * 16, cfg, depth=14)


@pytest.fixture(scope="session")
def large_digit_arnold():
    """Arnold map whose first digit is 60, followed by golden digits."""
    cfg = ExperimentConfig()
    return solve_family(FamilyConfig("arnold"), [60] + [1] * 12, cfg)


@pytest.fixture(scope="session")
def mixed_arnold():
    cfg = ExperimentConfig()
    return solve_family(FamilyConfig("arnold"), [5, 4, 3, 2, 2, 2, 2, 2, 2, 2], cfg, depth=9)


@pytest.fixture(scope="session")
def second_digit_arnold():
    """Arnold map with digits [1, 60, 1, ...]: its level-0 pair has period 60."""
    cfg = ExperimentConfig()
    return solve_family(FamilyConfig("arnold"), [1, 60] + [1] * 12, cfg)
