"""
Runtime configuration: environment variables and numerical tolerances.
"""
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel


class Tolerances(BaseModel):
    """Numerical tolerances shared by the solvers."""
    lr_slack: float = 1e-9
    normalization: float = 1e-12
    bp_tol: float = 1e-10
    rde_tol: float = 1e-12
    rde_max_sweeps: int = 100_000
    poisson_trunc: float = 1e-12
    threshold_tol_m: float = 1e-9
    lambda_cap: float = 1e6
    enumeration_guard: int = 10_000_000
    fixed_point_search_nodes: int = 50_000


TOLERANCES = Tolerances()


class RuntimeSettings(BaseModel):
    """Settings read from the environment (and a .env file when present)."""
    environment: str = "development"
    jobs: Optional[int] = None
    seed: int = 0

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        load_dotenv()
        jobs = os.getenv("CAPALLOC_JOBS")
        return cls(
            environment=os.getenv("ENVIRONMENT", "development"),
            jobs=int(jobs) if jobs else None,
            seed=int(os.getenv("CAPALLOC_SEED", "0")),
        )

    def resolve_jobs(self, cli_value: Optional[int] = None) -> int:
        """--jobs wins, then CAPALLOC_JOBS, then the processor count."""
        if cli_value is not None:
            return max(1, cli_value)
        if self.jobs is not None:
            return max(1, self.jobs)
        return os.cpu_count() or 1
