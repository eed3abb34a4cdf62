"""
Environment-driven runtime settings.
"""
import os

from src.config import TOLERANCES, RuntimeSettings


def test_defaults(monkeypatch):
    for name in ("ENVIRONMENT", "CAPALLOC_JOBS", "CAPALLOC_SEED"):
        monkeypatch.delenv(name, raising=False)
    settings = RuntimeSettings.from_env()
    assert settings.environment == "development"
    assert settings.jobs is None
    assert settings.seed == 0
    assert settings.resolve_jobs() == (os.cpu_count() or 1)


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("ENVIRONMENT", "production")
    monkeypatch.setenv("CAPALLOC_JOBS", "3")
    monkeypatch.setenv("CAPALLOC_SEED", "42")
    settings = RuntimeSettings.from_env()
    assert settings.environment == "production"
    assert settings.seed == 42
    assert settings.resolve_jobs() == 3
    assert settings.resolve_jobs(5) == 5
    assert settings.resolve_jobs(0) == 1


def test_tolerances():
    assert TOLERANCES.rde_max_sweeps == 100_000
    assert TOLERANCES.lambda_cap == 1e6
