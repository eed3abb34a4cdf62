"""
Experiment orchestration: reports, agreement checks and the health check.
"""
import pytest

from src.apps import cdn_laws, cuckoo_laws
from src.experiment_runner import ExperimentRunner
from src.limits import VertexLaw
from src.models import CdnScenarioFile, CuckooParams, LlnRecord, OccupancyRecord, SolveRecord, ThresholdRecord
from tests.helpers import cycle, random_bipartite, star


@pytest.fixture
def runner():
    return ExperimentRunner("test", jobs=1, echo=False)


class TestSolve:

    def test_all_methods_agree_on_a_star(self, runner):
        report = runner.run_solve(star(), ["flow", "enum", "leaf", "bp0", "bp"], lam=2.0)
        assert report.success
        assert report.checks_passed
        solves = {row.method: row for row in report.rows if isinstance(row, SolveRecord)}
        assert solves["flow"].m == 2 and solves["flow"].witness
        assert solves["enum"].agrees_with_flow and solves["leaf"].agrees_with_flow
        assert solves["bp0"].estimate == 4
        assert solves["bp"].agrees_with_flow is None
        assert solves["bp"].sweeps > 0
        occupancy = [row for row in report.rows if isinstance(row, OccupancyRecord) and row.method == "bp0"]
        assert [row.vertex for row in occupancy] == ["c", "l0", "l1", "l2"]
        assert report.summary == {"flow": 2.0}

    def test_bp0_agrees_on_random_bipartite_graphs(self, runner, rng):
        for _ in range(10):
            report = runner.run_solve(random_bipartite(rng, n_max=20), ["flow", "bp0"])
            assert report.checks_passed

    def test_odd_cycles_are_not_checked_for_bp0(self, runner):
        report = runner.run_solve(cycle(3), ["flow", "bp0"])
        assert report.success and report.checks_passed

    def test_errors_become_unsuccessful_reports(self, runner):
        report = runner.run_solve(cycle(4), ["leaf"])
        assert not report.success
        assert "Solve failed" in report.error_message
        assert "ERROR" in report.processing_log
        assert not runner.run_solve(star(), ["magic"]).success


class TestThresholdAndCdn:

    def test_threshold_row(self, runner):
        report = runner.run_threshold(CuckooParams(h=2, k=1, l=1, r=1), tol=0.01)
        assert report.success
        (row,) = report.rows
        assert isinstance(row, ThresholdRecord) and row.kind == "threshold"
        assert row.tau == pytest.approx(0.5, abs=0.01)
        assert report.summary["tau_star"] == row.tau

    def test_invalid_params_fail_the_run(self, runner):
        report = runner.run_threshold(CuckooParams(h=2, k=1, l=2, r=1))
        assert not report.success
        assert "Threshold computation failed" in report.error_message

    def test_orientability_grid(self, runner):
        report = runner.run_orientability(CuckooParams(h=2, k=1, l=1, r=1), [0.1, 1.5], n=100, trials=4, seed=1)
        assert report.success
        assert [row.value for row in report.rows] == [1.0, 0.0]

    def test_cdn(self, runner):
        scenario = CdnScenarioFile.model_validate({
            "servers": {"atoms": [{"p": 1.0, "d": 3, "w": 1}]},
            "contents": {"poisson": {"rate": 3.0, "w": 2}},
            "coded": True,
        })
        report = runner.run_cdn(scenario)
        assert report.success
        (row,) = report.rows
        assert row.units == "fragments_per_server"
        assert 0.0 < row.capacity <= 1.0
        assert row.gap >= 0.0

    def test_cdn_inconsistent_laws(self, runner):
        scenario = CdnScenarioFile.model_validate({
            "servers": {"atoms": [{"p": 1.0, "d": 2, "w": 1}]},
            "contents": {"atoms": [{"p": 1.0, "d": 0, "w": 1}]},
            "coded": True,
        })
        report = runner.run_cdn(scenario)
        assert not report.success


class TestLln:

    def test_small_run_reports_every_trial(self, runner):
        single = VertexLaw.point(1, 1, (1,))
        report = runner.run_lln(single, single, nA=50, trials=3, seed=4)
        assert report.success and report.checks_passed
        kinds = [row.kind for row in report.rows if isinstance(row, LlnRecord)]
        assert kinds == ["trial", "trial", "trial", "summary"]
        assert report.summary["mean"] == pytest.approx(1.0)

    def test_degenerate_laws_give_zeros(self, runner):
        isolated = VertexLaw.point(0, 2, ())
        report = runner.run_lln(isolated, isolated, nA=20, trials=2, seed=1)
        assert report.success and report.checks_passed
        assert all(row.m_over_a == 0.0 and row.prediction == 0.0 for row in report.rows)

    def test_same_seed_same_trials(self, runner):
        items = VertexLaw.point(2, 1, (1, 1))
        bins = VertexLaw.poisson_degree(0.8, 1, 1)
        first = runner.run_lln(items, bins, nA=300, trials=3, seed=9)
        again = runner.run_lln(items, bins, nA=300, trials=3, seed=9)
        assert [row.m_over_a for row in first.rows] == [row.m_over_a for row in again.rows]

    @pytest.mark.slow
    def test_cuckoo_graphs_follow_the_limit(self, runner):
        items = VertexLaw.point(2, 1, (1, 1))
        bins = VertexLaw.poisson_degree(1.4, 1, 1)
        report = runner.run_lln(items, bins, nA=20_000, trials=5, seed=7)
        assert report.success
        assert report.checks_passed
        assert report.summary["rel_error"] <= 0.02

    @pytest.mark.slow
    def test_transition_is_sharp_around_the_threshold(self, runner):
        report = runner.run_threshold(CuckooParams(h=3, k=1, l=1, r=1), tol=1e-3, simulate=(20_000, 20), seed=5)
        assert report.success
        assert report.summary["fraction_below"] >= 0.95
        assert report.summary["fraction_above"] <= 0.05

    @pytest.mark.slow
    @pytest.mark.parametrize("params, tau", [
        (CuckooParams(h=2, k=1, l=1, r=1), 0.4),
        (CuckooParams(h=3, k=2, l=2, r=1), 0.5),
    ])
    def test_cuckoo_laws_at_desk_scale(self, runner, params, tau):
        items, bins = cuckoo_laws(params, tau)
        report = runner.run_lln(items, bins, nA=20_000, trials=10, seed=11)
        assert report.success
        assert report.checks_passed
        assert all(row.rel_error <= 0.02 for row in report.rows)

    @pytest.mark.slow
    def test_coded_cdn_at_desk_scale(self, runner):
        scenario = CdnScenarioFile.model_validate({
            "servers": {"atoms": [{"p": 0.5, "d": 3, "w": 2}, {"p": 0.5, "d": 2, "w": 1}]},
            "contents": {"atoms": [{"p": 0.5, "d": 2, "w": 1, "segments": 2},
                                   {"p": 0.5, "d": 3, "w": 2, "segments": 1}]},
            "coded": True,
        })
        servers, contents = cdn_laws(scenario)
        report = runner.run_lln(servers, contents, nA=20_000, trials=10, seed=13)
        assert report.success
        assert report.checks_passed
        assert all(row.rel_error <= 0.02 for row in report.rows)


class TestHealth:

    def test_healthy(self, runner):
        health = runner.test_system_health()
        assert health["overall_status"] == "healthy"
        assert set(health["components"]) == {"allocation_solvers", "limit_functional", "generators", "environment"}
        assert all(c["status"] == "healthy" for c in health["components"].values())
