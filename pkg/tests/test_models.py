"""
Input validation, parameter checks and CSV formatting.
"""
import json

import pytest
from pydantic import ValidationError

from src.config import Tolerances
from src.models import (
    CdnRecord, GraphFile, LawFile, LimitResult, RunConfig, RunReport, SolveRecord, ThresholdRecord, format_real
)


class TestFormatting:

    def test_reals_use_twelve_significant_digits(self):
        assert format_real(1 / 3) == "0.333333333333"
        assert format_real(2.0) == "2"
        assert format_real(7) == "7"
        assert format_real(True) == "true"
        assert format_real(None) == ""

    def test_csv_rows(self):
        row = SolveRecord(method="bp0", m=2.0, witness=False, estimate=4.0, agrees_with_flow=True, runtime_s=0.5)
        assert SolveRecord.csv_header() == "method,m,witness,sweeps,estimate,agrees_with_flow,runtime_s"
        assert row.to_csv_row() == "bp0,2,false,0,4,true,0.5"

    def test_report_always_has_a_header(self):
        assert RunReport(success=True).to_csv(CdnRecord) == CdnRecord.csv_header()
        rows = [ThresholdRecord(kind="threshold", h=2, k=1, l=1, r=1, tau=0.5, value=1.0, tol=1e-3)]
        lines = RunReport(rows=rows, success=True).to_csv(ThresholdRecord).splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("threshold,2,1,1,1,0.5,1,0.001,")

    def test_config_record(self):
        record = RunConfig(command="cdn", params={"scenario": "s.json"}, seed=3).to_record()
        assert record.startswith("# config ")
        payload = json.loads(record[len("# config "):])
        assert payload["seed"] == 3
        assert payload["tolerances"]["rde_tol"] == Tolerances().rde_tol

    def test_limit_table_row(self):
        result = LimitResult(value=0.5, value_low_start=0.5, value_high_start=0.5, gap=0.0,
                             sweeps_low_start=3, sweeps_high_start=4)
        assert result.to_table_row() == "| 0.5 | 0.5 | 0.5 | 0 | True |"


class TestInputFiles:

    def test_graph_file_defaults(self):
        parsed = GraphFile.model_validate({"vertices": [{"id": "a", "b": 1}]})
        assert parsed.edges == []

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            GraphFile.model_validate({"vertices": [{"id": "a", "b": 1, "colour": "red"}]})

    def test_negative_capacity_rejected(self):
        with pytest.raises(ValidationError):
            GraphFile.model_validate({"vertices": [{"id": "a", "b": 1}, {"id": "b", "b": 1}],
                                      "edges": [{"u": "a", "v": "b", "c": -1}]})

    def test_law_file_caps_match_degree(self):
        with pytest.raises(ValidationError):
            LawFile.model_validate({"atoms": [{"p": 1.0, "d": 2, "w": 1, "caps": [1]}]})
        assert LawFile.model_validate({"poisson": {"rate": 2.0, "w": 1, "cap": 1}}).poisson.trunc == 1e-12
