"""
Applications of the limit functional: (k,l,r)-orientability thresholds of random
h-uniform hypergraphs, and the absorbed load of a content delivery network.
"""
import json
from itertools import combinations_with_replacement
from math import factorial
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from src.config import TOLERANCES
from src.errors import BracketFailure, ParseError
from src.gen import Hypergraph, Seed, SeedLike, sample_hypergraph
from src.graph import CapGraph, max_allocation_flow
from src.limits import Atom, VertexLaw, limit_bracket
from src.logger import AllocLogger
from src.models import CdnScenarioFile, CdnSideSpec, CuckooParams, LimitResult


# ----------------------------------------------------------------------
# Cuckoo hashing
# ----------------------------------------------------------------------

def cuckoo_laws(p: CuckooParams, tau: float) -> Tuple[VertexLaw, VertexLaw]:
    """Items (h, l, {r,...,r}) and bins (Poi(tau h), k, {r,...}) with tau items per bin."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    items = VertexLaw.point(p.h, p.l, (p.r,) * p.h)
    bins = VertexLaw.poisson_degree(tau * p.h, p.k, p.r)
    return items, bins


def cuckoo_value(p: CuckooParams, tau: float, logger: Optional[AllocLogger] = None) -> float:
    """Allocated mass per item in the limit; equals l exactly when items fit."""
    items, bins = cuckoo_laws(p, tau)
    result = limit_bracket(items, bins, strict=False, logger=logger)
    if logger and not result.converged:
        logger.warning("RDE hit the sweep cap; value taken at the last iterate", {"tau": tau})
    return result.value


def cuckoo_threshold(
    p: CuckooParams,
    tol: float = 1e-3,
    lower: float = 1e-3,
    logger: Optional[AllocLogger] = None,
) -> float:
    """Load tau* past which the limit can no longer give every item its l units.

    Bisection on [lower, 2k/l] with predicate M < l - tol_M; the returned midpoint
    is within tol/2 of the transition.
    """
    p.check()
    if logger and p.tight:
        logger.warning("k+(h-2)r-l = 0: peeling cores may be bare cycles, threshold taken from the limit as is",
                       {"params": p.model_dump()})
    slack = TOLERANCES.threshold_tol_m

    def short(tau: float) -> bool:
        value = cuckoo_value(p, tau)
        below = value < p.l - slack
        if logger:
            logger.log_bisection_step(tau, value, below)
        return below

    lo, hi = lower, 2.0 * p.k / p.l
    if short(lo) or not short(hi):
        raise BracketFailure(f"predicate M < l does not change sign on [{lo:g}, {hi:g}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if short(mid):
            hi = mid
        else:
            lo = mid
    tau_star = 0.5 * (lo + hi)
    if logger:
        logger.info("Threshold located", {"params": p.model_dump(), "tau": tau_star, "tol": tol})
    return tau_star


def incidence_graph(hg: Hypergraph, p: CuckooParams) -> CapGraph:
    """Hyperedges (b = l, side A) against vertices (b = k, side B), one edge of capacity r per incidence."""
    m = hg.m
    b = [p.l] * m + [p.k] * hg.n
    eu = np.repeat(np.arange(m), hg.h)
    ev = m + hg.edges.ravel()
    caps = np.full(eu.size, p.r)
    return CapGraph(b, eu, ev, caps, sides=["A"] * m + ["B"] * hg.n)


def orient_decide(hg: Hypergraph, p: CuckooParams) -> bool:
    """Whether every hyperedge can place l marks, at most r per endpoint and k per vertex."""
    size, _ = max_allocation_flow(incidence_graph(hg, p))
    return size == p.l * hg.m


def orientation_trial(n: int, m: int, p: CuckooParams, seed: Seed) -> bool:
    """One orientability draw; top-level so worker processes can pickle it."""
    return orient_decide(sample_hypergraph(n, m, p.h, seed), p)


def orientable_fraction(n: int, tau: float, p: CuckooParams, trials: int, seed: SeedLike,
                        executor=None) -> float:
    """Share of `trials` hypergraphs with n vertices and floor(tau n) hyperedges that are orientable."""
    base = seed if isinstance(seed, Seed) else Seed(int(seed))
    m = int(np.floor(tau * n))
    args = [(n, m, p, base.child(base.stream + t)) for t in range(trials)]
    if executor is None:
        outcomes = [orientation_trial(*a) for a in args]
    else:
        outcomes = list(executor.map(orientation_trial, *zip(*args)))
    return float(np.mean(outcomes)) if outcomes else 0.0


# ----------------------------------------------------------------------
# Content delivery networks
# ----------------------------------------------------------------------

def _compositions(d: int, law: Dict[int, float]) -> List[Tuple[float, Tuple[int, ...]]]:
    """Multinomial law of d i.i.d. capacity labels drawn from `law`, as (prob, sorted caps)."""
    out = []
    for caps in combinations_with_replacement(sorted(law), d):
        counts = {c: caps.count(c) for c in set(caps)}
        coeff = factorial(d)
        prob = 1.0
        for c, k in counts.items():
            coeff //= factorial(k)
            prob *= law[c] ** k
        if coeff * prob > 0:
            out.append((coeff * prob, caps))
    return out


def _side_atoms(side: CdnSideSpec) -> List[Tuple[float, int, int, int]]:
    """(p, d, w, segments) per atom, a Poisson marker expanded at its truncation."""
    if side.atoms is not None:
        return [(a.p, a.d, a.w, a.segments) for a in side.atoms]
    m = side.poisson
    expanded = VertexLaw.poisson_degree(m.rate, m.w, 0, m.trunc)
    return [(a.p, a.d, m.w, m.segments) for a in expanded.atoms]


def cdn_laws(s: CdnScenarioFile) -> Tuple[VertexLaw, VertexLaw]:
    """Servers (side A) and contents (side B) as vertex laws.

    Uncoded: every edge gets one capacity at least every vertex capacity, which is the
    same as no edge constraint. Coded: a content with omega requests in l segments has
    capacity omega*l and edges of capacity omega; server edges carry labels drawn from
    the capacity law the content side induces on a uniform edge.
    """
    servers = _side_atoms(s.servers)
    contents = _side_atoms(s.contents)
    if not s.coded:
        cap = max(max(w for _, _, w, _ in servers), max(w for _, _, w, _ in contents))
        phiA = VertexLaw.from_atoms((p, d, w, (cap,) * d) for p, d, w, _ in servers)
        phiB = VertexLaw.from_atoms((p, d, w, (cap,) * d) for p, d, w, _ in contents)
        return phiA, phiB

    phiB = VertexLaw.from_atoms((p, d, w * seg, (w,) * d) for p, d, w, seg in contents)
    edge_law = phiB.edge_cap_law()
    atoms = []
    for p, d, w, _ in servers:
        if d == 0 or not edge_law:
            # no content edges: the 0 labels make the consistency check fail unless d == 0
            atoms.append(Atom(p, d, w, (0,) * d))
            continue
        atoms.extend(Atom(p * q, d, w, caps) for q, caps in _compositions(d, edge_law))
    total = sum(a.p for a in atoms)
    phiA = VertexLaw(tuple(a._replace(p=a.p / total) for a in atoms))
    return phiA, phiB


def cdn_bracket(s: CdnScenarioFile, logger: Optional[AllocLogger] = None) -> LimitResult:
    phiA, phiB = cdn_laws(s)
    return limit_bracket(phiA, phiB, logger=logger)


def cdn_capacity(s: CdnScenarioFile, logger: Optional[AllocLogger] = None) -> float:
    """Asymptotic load absorbed per server: requests, or fragments for coded contents."""
    return cdn_bracket(s, logger=logger).value


def load_scenario(path: str) -> CdnScenarioFile:
    try:
        with open(path, encoding="utf-8") as fp:
            return CdnScenarioFile.model_validate(json.load(fp))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ParseError(f"{path}: {e}") from e
