"""
Experiment orchestration: LLN trials, threshold bisection with simulation cross-checks,
CDN capacity, and a quick health check of every solver.
"""
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.apps import cdn_bracket, cuckoo_laws, cuckoo_threshold, cuckoo_value, orientable_fraction
from src.bp import bp_finite_lambda, bp_zero_temperature, op_F, tree_leaf_removal, vertex_occupancies
from src.config import RuntimeSettings
from src.gen import Seed, sample_bipartite_config
from src.graph import CapGraph, max_allocation_enum, max_allocation_flow
from src.limits import VertexLaw, limit_M
from src.logger import AllocLogger, LogLevel
from src.models import (
    CdnRecord, CdnScenarioFile, CuckooParams, LlnRecord, OccupancyRecord, RunReport, SolveRecord, ThresholdRecord
)

LLN_REL_TOL = 0.02
TRANSITION_BAND = 0.05


def lln_trial(phiA: VertexLaw, phiB: VertexLaw, nA: int, seed: Seed) -> Tuple[float, float]:
    """M(G)/|A| for one sampled graph, with the wall time; top-level for worker pickling."""
    start = time.perf_counter()
    g = sample_bipartite_config(phiA, phiB, nA, seed)
    size, _ = max_allocation_flow(g)
    return size / nA if nA else 0.0, time.perf_counter() - start


class ExperimentRunner:
    """Runs experiments and reports them as CSV-ready records."""

    def __init__(self, environment: Optional[str] = None, jobs: Optional[int] = None, echo: bool = True):
        settings = RuntimeSettings.from_env()
        if environment is None:
            environment = settings.environment

        self.logger = AllocLogger(environment, echo=echo)
        self.jobs = settings.resolve_jobs(jobs)
        self.default_seed = settings.seed

        self.logger.info("Experiment runner initialized", {
            "environment": environment,
            "jobs": self.jobs
        })

    @contextmanager
    def _pool(self) -> Iterator[Optional[Executor]]:
        if self.jobs <= 1:
            yield None
            return
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            yield pool

    # ------------------------------------------------------------------
    # Single instances
    # ------------------------------------------------------------------

    def run_solve(self, g: CapGraph, methods: Sequence[str], lam: float = 1.0) -> RunReport:
        """Solve one graph with each requested method and cross-check against the flow oracle."""
        self.logger.info("Solving instance", {"vertices": g.n_vertices, "edges": g.n_edges, "methods": list(methods)})

        try:
            certified = g.bipartition() is not None or g.is_forest()
            flow_size: Optional[int] = None
            if "flow" in methods or len(methods) > 1:
                flow_size, _ = max_allocation_flow(g)
            rows: List = []
            passed = True

            for method in methods:
                start = time.perf_counter()
                occupancy: List[float] = []
                sweeps, estimate, witness = 0, None, False
                if method == "flow":
                    size, witness = float(flow_size), True
                elif method == "enum":
                    size, witness = float(max_allocation_enum(g)), False
                elif method == "leaf":
                    _, peeled = tree_leaf_removal(g)
                    size = float(peeled)
                elif method == "bp0":
                    result = bp_zero_temperature(g, logger=self.logger)
                    occupancy = op_F(g, result.alpha).tolist()
                    estimate = result.estimate
                    size = estimate / 2
                elif method == "bp":
                    run = bp_finite_lambda(g, lam, logger=self.logger)
                    occupancy = vertex_occupancies(g, run.state)
                    sweeps = run.sweeps
                    estimate = float(sum(occupancy))
                    size = estimate / 2
                else:
                    raise ValueError(f"unknown method {method!r}")

                agrees = None
                if flow_size is not None and method != "flow" and method != "bp":
                    agrees = size == flow_size
                    # bp0 is only exact on bipartite graphs and forests
                    if not agrees and (method != "bp0" or certified):
                        passed = False
                        self.logger.warning("Method disagrees with the flow oracle",
                                            {"method": method, "size": size, "flow": flow_size})

                rows.append(SolveRecord(method=method, m=size, witness=witness, sweeps=sweeps, estimate=estimate,
                                        agrees_with_flow=agrees, runtime_s=time.perf_counter() - start))
                rows.extend(OccupancyRecord(method=method, vertex=g.ids[v], occupancy=value)
                            for v, value in enumerate(occupancy))

            return RunReport(
                rows=rows,
                summary={"flow": float(flow_size)} if flow_size is not None else {},
                checks_passed=passed,
                processing_log=self.logger.get_processing_summary(),
                success=True
            )

        except Exception as e:
            self.logger.log_error_with_context(e, "Instance solve")
            return RunReport(
                processing_log=self.logger.get_processing_summary(),
                success=False,
                error_message=f"Solve failed: {str(e)}"
            )

    # ------------------------------------------------------------------
    # Law of large numbers
    # ------------------------------------------------------------------

    def run_lln(self, phiA: VertexLaw, phiB: VertexLaw, nA: int, trials: int, seed: Optional[int] = None) -> RunReport:
        """Empirical M(G_n)/|A_n| over seeded trials against the limit prediction."""
        seed = self.default_seed if seed is None else seed
        self.logger.info("Starting LLN experiment", {"n_a": nA, "trials": trials, "seed": seed})

        try:
            start = time.perf_counter()
            prediction = limit_M(phiA, phiB, logger=self.logger)
            self.logger.info("Limit prediction computed", {"prediction": prediction})

            seeds = [Seed(seed, t) for t in range(trials)]
            with self._pool() as pool:
                if pool is None:
                    outcomes = [lln_trial(phiA, phiB, nA, s) for s in seeds]
                else:
                    outcomes = list(pool.map(lln_trial, [phiA] * trials, [phiB] * trials, [nA] * trials, seeds))

            rows: List[LlnRecord] = []
            for t, (value, runtime) in enumerate(outcomes):
                self.logger.log_trial("lln", t, value, seed)
                rows.append(LlnRecord(kind="trial", trial=t, seed=seed, n_a=nA, m_over_a=value,
                                      prediction=prediction, rel_error=_rel_error(value, prediction),
                                      runtime_s=runtime))

            mean = float(np.mean([v for v, _ in outcomes])) if outcomes else 0.0
            rel = _rel_error(mean, prediction)
            rows.append(LlnRecord(kind="summary", trial=trials, seed=seed, n_a=nA, m_over_a=mean,
                                  prediction=prediction, rel_error=rel,
                                  runtime_s=time.perf_counter() - start))
            passed = rel <= LLN_REL_TOL
            if not passed:
                self.logger.warning("Empirical mean is off the limit prediction", {"rel_error": rel})

            return RunReport(
                rows=rows,
                summary={"mean": mean, "prediction": prediction, "rel_error": rel},
                checks_passed=passed,
                processing_log=self.logger.get_processing_summary(),
                success=True
            )

        except Exception as e:
            self.logger.log_error_with_context(e, "LLN experiment")
            return RunReport(
                processing_log=self.logger.get_processing_summary(),
                success=False,
                error_message=f"LLN experiment failed: {str(e)}"
            )

    # ------------------------------------------------------------------
    # Orientability thresholds
    # ------------------------------------------------------------------

    def _simulation_rows(self, p: CuckooParams, taus: Sequence[float], n: int, trials: int,
                         seed: int, tol: float) -> List[ThresholdRecord]:
        rows = []
        with self._pool() as pool:
            for i, tau in enumerate(taus):
                start = time.perf_counter()
                fraction = orientable_fraction(n, tau, p, trials, Seed(seed, 1000 * (i + 1)), executor=pool)
                self.logger.log_trial("orientability", i, fraction, seed)
                rows.append(ThresholdRecord(kind="simulation", h=p.h, k=p.k, l=p.l, r=p.r, tau=tau,
                                            value=fraction, tol=tol, trials=trials, n=n,
                                            runtime_s=time.perf_counter() - start))
        return rows

    def run_orientability(self, p: CuckooParams, taus: Sequence[float], n: int, trials: int,
                          seed: Optional[int] = None) -> RunReport:
        """Empirical orientable fractions on a grid of loads."""
        seed = self.default_seed if seed is None else seed
        try:
            p.check()
            rows = self._simulation_rows(p, taus, n, trials, seed, tol=0.0)
            return RunReport(
                rows=rows,
                summary={f"fraction@{row.tau:.6g}": row.value for row in rows},
                processing_log=self.logger.get_processing_summary(),
                success=True
            )
        except Exception as e:
            self.logger.log_error_with_context(e, "Orientability simulation")
            return RunReport(
                processing_log=self.logger.get_processing_summary(),
                success=False,
                error_message=f"Orientability simulation failed: {str(e)}"
            )

    def run_threshold(self, p: CuckooParams, tol: float = 1e-3, simulate: Optional[Tuple[int, int]] = None,
                      seed: Optional[int] = None) -> RunReport:
        """Threshold by bisection; with simulate=(n, trials) also the transition at tau*(1 -+ 5%)."""
        seed = self.default_seed if seed is None else seed
        self.logger.info("Starting threshold computation", {"params": p.model_dump(), "tol": tol})

        try:
            start = time.perf_counter()
            tau_star = cuckoo_threshold(p, tol=tol, logger=self.logger)
            value = cuckoo_value(p, tau_star)
            rows = [ThresholdRecord(kind="threshold", h=p.h, k=p.k, l=p.l, r=p.r, tau=tau_star, value=value,
                                    tol=tol, runtime_s=time.perf_counter() - start)]
            summary = {"tau_star": tau_star}
            passed = True

            if simulate is not None:
                n, trials = simulate
                taus = [tau_star * (1 - TRANSITION_BAND), tau_star * (1 + TRANSITION_BAND)]
                below, above = self._simulation_rows(p, taus, n, trials, seed, tol)
                rows.extend([below, above])
                summary.update({"fraction_below": below.value, "fraction_above": above.value})
                passed = below.value >= 1 - TRANSITION_BAND and above.value <= TRANSITION_BAND
                if not passed:
                    self.logger.warning("Simulated transition is not sharp around the threshold", summary)

            return RunReport(
                rows=rows,
                summary=summary,
                checks_passed=passed,
                processing_log=self.logger.get_processing_summary(),
                success=True
            )

        except Exception as e:
            self.logger.log_error_with_context(e, "Threshold computation")
            return RunReport(
                processing_log=self.logger.get_processing_summary(),
                success=False,
                error_message=f"Threshold computation failed: {str(e)}"
            )

    # ------------------------------------------------------------------
    # CDN
    # ------------------------------------------------------------------

    def run_cdn(self, scenario: CdnScenarioFile) -> RunReport:
        """Absorbed load per server for a CDN scenario."""
        self.logger.info("Starting CDN capacity computation", {"coded": scenario.coded})

        try:
            start = time.perf_counter()
            result = cdn_bracket(scenario, logger=self.logger)
            row = CdnRecord(
                capacity=result.value,
                value_low_start=result.value_low_start,
                value_high_start=result.value_high_start,
                gap=result.gap,
                units="fragments_per_server" if scenario.coded else "requests_per_server",
                coded=scenario.coded,
                runtime_s=time.perf_counter() - start
            )
            return RunReport(
                rows=[row],
                summary={"capacity": result.value, "gap": result.gap},
                processing_log=self.logger.get_processing_summary(),
                success=True
            )

        except Exception as e:
            self.logger.log_error_with_context(e, "CDN capacity computation")
            return RunReport(
                processing_log=self.logger.get_processing_summary(),
                success=False,
                error_message=f"CDN capacity computation failed: {str(e)}"
            )

    # ------------------------------------------------------------------
    # Health
    # ------------------------------------------------------------------

    def test_system_health(self) -> dict:
        """Run every solver on a tiny instance and return health status."""
        self.logger.info("Testing system health")

        health_status = {
            "overall_status": "healthy",
            "components": {},
            "timestamp": self.logger._create_log_entry(LogLevel.INFO, "Health check")["timestamp"]
        }

        # Exact oracles against zero-temperature BP on a star
        try:
            star = CapGraph.build(
                [("c", 2), ("x", 1), ("y", 1), ("z", 1)],
                [("c", "x", 1), ("c", "y", 1), ("c", "z", 1)],
            )
            flow, _ = max_allocation_flow(star)
            estimate = bp_zero_temperature(star).estimate
            _, peeled = tree_leaf_removal(star)
            healthy = flow == 2 and estimate == 4 and peeled == 2
            health_status["components"]["allocation_solvers"] = {
                "status": "healthy" if healthy else "unhealthy",
                "details": f"flow={flow}, bp0 estimate/2={estimate / 2:g}, leaf removal={peeled}"
            }
            if not healthy:
                health_status["overall_status"] = "unhealthy"
        except Exception as e:
            health_status["components"]["allocation_solvers"] = {
                "status": "unhealthy",
                "details": f"Error: {str(e)}"
            }
            health_status["overall_status"] = "unhealthy"

        # Limit functional well below the classical threshold
        try:
            params = CuckooParams(h=2, k=1, l=1, r=1)
            value = cuckoo_value(params, 0.25)
            healthy = abs(value - 1.0) < 1e-6
            health_status["components"]["limit_functional"] = {
                "status": "healthy" if healthy else "unhealthy",
                "details": f"M(2,1,1,1; tau=0.25) = {value:.9f}"
            }
            if not healthy:
                health_status["overall_status"] = "degraded"
        except Exception as e:
            health_status["components"]["limit_functional"] = {
                "status": "unhealthy",
                "details": f"Error: {str(e)}"
            }
            health_status["overall_status"] = "degraded"

        # Random instance generation
        try:
            items, bins = cuckoo_laws(CuckooParams(h=2, k=1, l=1, r=1), 0.4)
            g = sample_bipartite_config(items, bins, 200, Seed(self.default_seed))
            health_status["components"]["generators"] = {
                "status": "healthy",
                "details": f"Sampled {g.n_vertices} vertices and {g.n_edges} edges"
            }
        except Exception as e:
            health_status["components"]["generators"] = {
                "status": "unhealthy",
                "details": f"Failed to sample a configuration-model graph: {str(e)}"
            }
            health_status["overall_status"] = "degraded"

        health_status["components"]["environment"] = {
            "status": "healthy",
            "details": f"environment={self.logger.environment}, jobs={self.jobs}, seed={self.default_seed}"
        }

        self.logger.info("System health check completed", {"status": health_status["overall_status"]})

        return health_status


def _rel_error(value: float, reference: float) -> float:
    if reference == 0:
        return 0.0 if value == 0 else float("inf")
    return abs(value - reference) / abs(reference)
