"""
Cuckoo-hashing thresholds, hypergraph orientations and CDN capacities.
"""
import json
from itertools import product

import numpy as np
import pytest

from src.apps import (
    cdn_capacity, cdn_laws, cuckoo_laws, cuckoo_threshold, cuckoo_value, incidence_graph, load_scenario,
    orient_decide, orientable_fraction
)
from src.errors import BracketFailure, InvalidParams, ParseError
from src.gen import Hypergraph, Seed, sample_hypergraph
from src.limits import VertexLaw, check_consistency
from src.models import CdnScenarioFile, CuckooParams
from tests.helpers import scalar_limit

CLASSIC = CuckooParams(h=2, k=1, l=1, r=1)


def brute_orientable(hg: Hypergraph, p: CuckooParams) -> bool:
    """Depth-first search over the ways of spreading l marks (at most r per endpoint) on each hyperedge."""
    per_edge = [x for x in product(range(p.r + 1), repeat=hg.h) if sum(x) == p.l]
    load = [0] * hg.n

    def place(i: int) -> bool:
        if i == hg.m:
            return True
        row = hg.edges[i].tolist()
        for marks in per_edge:
            if all(load[v] + x <= p.k for v, x in zip(row, marks)):
                for v, x in zip(row, marks):
                    load[v] += x
                fits = place(i + 1)
                for v, x in zip(row, marks):
                    load[v] -= x
                if fits:
                    return True
        return False

    return place(0)


def scenario(servers, contents, coded=False) -> CdnScenarioFile:
    return CdnScenarioFile.model_validate({"servers": servers, "contents": contents, "coded": coded})


class TestParams:

    def test_constraints(self):
        with pytest.raises(InvalidParams):
            CuckooParams(h=2, k=1, l=2, r=1).check()
        with pytest.raises(InvalidParams):
            CuckooParams(h=2, k=1, l=2, r=2).check()
        assert CuckooParams(h=3, k=2, l=2, r=1).check().violations() == []

    def test_tight_case(self):
        assert CLASSIC.tight
        assert not CuckooParams(h=3, k=1, l=1, r=1).tight


class TestCuckooLaws:

    def test_classic(self):
        items, bins = cuckoo_laws(CLASSIC, 0.5)
        assert items == VertexLaw.point(2, 1, (1, 1))
        assert bins.poisson.rate == pytest.approx(1.0)
        assert check_consistency(items, bins)

    def test_more_choices(self):
        items, _ = cuckoo_laws(CuckooParams(h=3, k=2, l=2, r=1), 0.7)
        assert items == VertexLaw.point(3, 2, (1, 1, 1))

    def test_load_must_be_positive(self):
        with pytest.raises(ValueError):
            cuckoo_laws(CLASSIC, 0.0)


class TestThreshold:

    def test_classic_threshold_is_one_half(self, quiet_logger):
        tau_star = cuckoo_threshold(CLASSIC, tol=0.005, logger=quiet_logger)
        assert tau_star == pytest.approx(0.5, abs=0.005)
        assert any(entry["message"] == "Threshold step" for entry in quiet_logger.logs)

    def test_bracket_must_straddle(self):
        with pytest.raises(BracketFailure):
            cuckoo_threshold(CLASSIC, tol=0.01, lower=0.9)

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            cuckoo_threshold(CuckooParams(h=2, k=1, l=2, r=1))

    def test_value_is_monotone_in_load(self):
        taus = np.linspace(0.06, 1.01, 20)
        values = [cuckoo_value(CLASSIC, float(t)) for t in taus]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
        per_bin = [t * v for t, v in zip(taus, values)]
        assert all(b >= a - 1e-9 for a, b in zip(per_bin, per_bin[1:]))


class TestOrientation:

    def test_single_edge(self):
        assert orient_decide(Hypergraph(2, 2, [[0, 1]]), CLASSIC)

    def test_three_parallel_edges(self):
        assert not orient_decide(Hypergraph(2, 2, [[0, 1]] * 3), CLASSIC)

    def test_incidence_graph(self):
        g = incidence_graph(Hypergraph(4, 3, [[0, 1, 2], [1, 2, 3]]), CuckooParams(h=3, k=2, l=2, r=1))
        assert g.n_vertices == 6
        assert g.n_edges == 6
        assert g.b.tolist() == [2, 2, 2, 2, 2, 2]
        assert g.bipartition() is not None

    @pytest.mark.parametrize("params", [
        CuckooParams(h=2, k=1, l=1, r=1),
        CuckooParams(h=3, k=1, l=1, r=1),
        CuckooParams(h=3, k=2, l=2, r=1),
        CuckooParams(h=3, k=2, l=3, r=2),
    ])
    def test_matches_brute_force(self, params):
        for t in range(40):
            n = 3 + t % 4
            m = 1 + t % 6
            hg = sample_hypergraph(n, m, params.h, Seed(11, t))
            assert orient_decide(hg, params) == brute_orientable(hg, params)

    def test_fraction_extremes(self):
        assert orientable_fraction(200, 0.1, CLASSIC, 5, 3) == 1.0
        assert orientable_fraction(200, 1.5, CLASSIC, 5, 3) == 0.0
        assert orientable_fraction(200, 0.2, CLASSIC, 0, 3) == 0.0


class TestCdn:

    def test_no_upload_capacity(self):
        s = scenario({"atoms": [{"p": 1.0, "d": 3, "w": 0}]}, {"atoms": [{"p": 1.0, "d": 2, "w": 2}]})
        assert cdn_capacity(s) == pytest.approx(0.0, abs=1e-12)

    def test_unit_capacities_match_scalar_recursion(self):
        servers = [{"p": 0.3, "d": 1, "w": 1}, {"p": 0.7, "d": 3, "w": 1}]
        contents = [{"p": 0.5, "d": 2, "w": 1}, {"p": 0.5, "d": 4, "w": 1}]
        phiA = VertexLaw.from_atoms((a["p"], a["d"], a["w"], (1,) * a["d"]) for a in servers)
        phiB = VertexLaw.from_atoms((a["p"], a["d"], a["w"], (1,) * a["d"]) for a in contents)
        value = cdn_capacity(scenario({"atoms": servers}, {"atoms": contents}))
        assert value == pytest.approx(scalar_limit(phiA, phiB), abs=1e-8)

    def test_single_segment_coding_is_uncoded(self):
        servers = {"atoms": [{"p": 0.5, "d": 2, "w": 1}, {"p": 0.5, "d": 3, "w": 2}]}
        contents = {"atoms": [{"p": 0.6, "d": 2, "w": 3}, {"p": 0.4, "d": 1, "w": 3}]}
        plain = scenario(servers, contents)
        coded = scenario(servers, contents, coded=True)
        assert cdn_laws(coded) == cdn_laws(plain)
        assert cdn_capacity(coded) == pytest.approx(cdn_capacity(plain), abs=1e-12)

    def test_coded_contents_take_segments(self):
        servers = {"poisson": {"rate": 2.0, "w": 2}}
        contents = {"atoms": [{"p": 1.0, "d": 3, "w": 1, "segments": 2}]}
        phiA, phiB = cdn_laws(scenario(servers, contents, coded=True))
        assert phiB.atoms[0].w == 2
        assert phiB.atoms[0].caps == (1, 1, 1)
        assert phiA.capacities() == [1]
        assert 0.0 < cdn_capacity(scenario(servers, contents, coded=True)) <= 2.0

    def test_segments_on_servers_rejected(self):
        with pytest.raises(ValueError):
            scenario({"atoms": [{"p": 1.0, "d": 1, "w": 1, "segments": 2}]}, {"poisson": {"rate": 1.0, "w": 1}})

    def test_load_scenario(self, tmp_path):
        target = tmp_path / "cdn.json"
        target.write_text(json.dumps({
            "servers": {"atoms": [{"p": 1.0, "d": 2, "w": 1}]},
            "contents": {"poisson": {"rate": 2.0, "w": 1}},
        }))
        assert not load_scenario(str(target)).coded
        target.write_text(json.dumps({"servers": {}, "contents": {}}))
        with pytest.raises(ParseError):
            load_scenario(str(target))
        with pytest.raises(ParseError):
            load_scenario(str(tmp_path / "absent.json"))
