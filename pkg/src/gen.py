"""
Seeded random instance generators: uniform h-uniform hypergraphs and bipartite
configuration-model graphs drawn from a pair of vertex laws.
"""
from dataclasses import dataclass
from math import comb
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.errors import InconsistentLaws
from src.graph import CapGraph
from src.limits import Atom, VertexLaw, check_consistency
from src.logger import AllocLogger


@dataclass(frozen=True)
class Seed:
    """A 64-bit seed and a stream id; one independent generator per pair."""
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.stream < 0:
            raise ValueError("stream id must be non-negative")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def child(self, stream: int) -> "Seed":
        return Seed(self.seed, stream)


SeedLike = Union[int, Seed]


def _rng(seed: SeedLike) -> np.random.Generator:
    return (seed if isinstance(seed, Seed) else Seed(int(seed))).rng()


# ----------------------------------------------------------------------
# Hypergraphs
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Hypergraph:
    """n vertices and one row of h distinct vertices per hyperedge."""
    n: int
    h: int
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, self.h).copy()
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)


def _draw_subsets(rng: np.random.Generator, n: int, h: int, count: int) -> np.ndarray:
    """`count` uniform h-subsets of {0..n-1} as sorted rows, redrawing rows with a repeat."""
    rows = np.sort(rng.integers(0, n, size=(count, h)), axis=1)
    while True:
        bad = np.flatnonzero(np.any(np.diff(rows, axis=1) == 0, axis=1)) if h > 1 else np.zeros(0, dtype=np.int64)
        if bad.size == 0:
            return rows
        rows[bad] = np.sort(rng.integers(0, n, size=(bad.size, h)), axis=1)


def sample_hypergraph(n: int, m: int, h: int, seed: SeedLike) -> Hypergraph:
    """m independent uniform h-subsets of n vertices; the same hyperedge may repeat."""
    if not 1 <= h <= n:
        raise ValueError("need 1 <= h <= n")
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = _rng(seed)
    return Hypergraph(n, h, _draw_subsets(rng, n, h, m))


def hyperedge_probability(n: int, h: int, tau: float) -> float:
    """p such that the expected vertex degree is tau*h."""
    return min(1.0, tau * h / comb(n - 1, h - 1))


def sample_hypergraph_np(n: int, p: float, h: int, seed: SeedLike) -> Hypergraph:
    """Each of the C(n, h) hyperedges present independently with probability p."""
    if not 1 <= h <= n:
        raise ValueError("need 1 <= h <= n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = _rng(seed)
    total = comb(n, h)
    m = int(rng.binomial(total, p)) if total < 2 ** 62 else int(rng.poisson(total * p))
    chosen = np.zeros((0, h), dtype=np.int64)
    while chosen.shape[0] < m:
        extra = _draw_subsets(rng, n, h, m - chosen.shape[0])
        chosen = np.unique(np.vstack([chosen, extra]), axis=0)
    return Hypergraph(n, h, rng.permutation(chosen))


# ----------------------------------------------------------------------
# Bipartite configuration model
# ----------------------------------------------------------------------

BALANCE_PATIENCE = 10_000
# share of half-edges that may be left unpaired when the classes cannot be balanced exactly
STUB_DROP_SHARE = 0.01


def _balance(rng: np.random.Generator, laws: Dict[str, VertexLaw], picks: Dict[str, np.ndarray],
             classes: List[int], patience: int) -> Tuple[int, Dict[str, np.ndarray]]:
    """Redraw single atoms, keeping a redraw only if it shrinks the half-edge imbalance.

    Stops at zero imbalance or after `patience` redraws in a row that do not help.
    Returns the number of atoms redrawn and the per-class half-edge totals of each side.
    """
    probs = {s: np.array([a.p for a in law.atoms]) for s, law in laws.items()}
    per_atom = {
        s: np.array([[dict(c).get(k, 0) for k in classes] for c in law.cap_counts()], dtype=np.int64)
        for s, law in laws.items()
    }
    totals = {s: per_atom[s][picks[s]].sum(axis=0) for s in laws}
    imbalance = int(np.abs(totals["A"] - totals["B"]).sum())
    movable = [s for s in ("A", "B") if len(laws[s].atoms) > 1 and picks[s].size]
    resampled = 0
    idle = 0
    while imbalance and movable and idle < patience:
        idle += 1
        side = movable[int(rng.integers(len(movable)))]
        i = int(rng.integers(picks[side].size))
        new = int(rng.choice(probs[side].size, p=probs[side]))
        old = int(picks[side][i])
        if new == old:
            continue
        trial = totals[side] - per_atom[side][old] + per_atom[side][new]
        other = totals["B" if side == "A" else "A"]
        score = int(np.abs(trial - other).sum())
        if score < imbalance:
            picks[side][i] = new
            totals[side] = trial
            imbalance = score
            resampled += 1
            idle = 0
    return resampled, totals


def _class_stubs(atoms: List[Atom], c: int, offset: int) -> np.ndarray:
    return np.array([offset + v for v, a in enumerate(atoms) for k in a.caps if k == c], dtype=np.int64)


def sample_bipartite_config(
    phiA: VertexLaw,
    phiB: VertexLaw,
    nA: int,
    seed: SeedLike,
    logger: Optional[AllocLogger] = None,
) -> CapGraph:
    """Configuration-model bipartite graph: A vertices 0..nA-1, B vertices after them.

    |B| = round(nA E[D^A] / E[D^B]). Atoms are drawn i.i.d. and redrawn one at a time
    while that brings the two sides' half-edge counts closer in every capacity class.
    Whatever difference is left, at most 1% of the half-edges, is dropped at random
    from the larger side; the rest are paired uniformly within each class. Parallel
    edges are kept.
    """
    if not check_consistency(phiA, phiB):
        raise InconsistentLaws("the two laws induce different edge-capacity laws")
    rng = _rng(seed)
    mean_a, mean_b = phiA.mean_degree, phiB.mean_degree
    nB = int(round(nA * mean_a / mean_b)) if mean_b > 0 else nA
    laws = {"A": phiA, "B": phiB}
    picks = {
        s: rng.choice(len(law.atoms), size=size, p=np.array([a.p for a in law.atoms]))
        for s, law, size in (("A", phiA, nA), ("B", phiB, nB))
    }
    classes = sorted(set(phiA.capacities()) | set(phiB.capacities()))
    resampled, totals = _balance(rng, laws, picks, classes, patience=BALANCE_PATIENCE)
    stubs = int(max(totals["A"].sum(), totals["B"].sum()))
    dropped = int(np.abs(totals["A"] - totals["B"]).sum())
    if dropped > max(STUB_DROP_SHARE * stubs, len(classes)):
        raise InconsistentLaws(f"half-edge counts still differ by {dropped} of {stubs} after rebalancing")
    if logger:
        data = {"n_a": nA, "n_b": nB, "resampled": resampled, "dropped_half_edges": dropped}
        if resampled > 0.01 * (nA + nB):
            logger.warning("Half-edge balancing redrew more than 1% of atoms", data)
        else:
            logger.debug("Half-edge balancing done", data)

    atoms_a = [phiA.atoms[i] for i in picks["A"]]
    atoms_b = [phiB.atoms[i] for i in picks["B"]]
    b = [a.w for a in atoms_a] + [a.w for a in atoms_b]
    eu: List[int] = []
    ev: List[int] = []
    caps: List[int] = []
    for c in classes:
        stubs_a = _class_stubs(atoms_a, c, 0)
        stubs_b = rng.permutation(_class_stubs(atoms_b, c, nA))
        if stubs_a.size > stubs_b.size:
            stubs_a = np.sort(rng.choice(stubs_a, size=stubs_b.size, replace=False))
        stubs_b = stubs_b[:stubs_a.size]
        eu.extend(stubs_a.tolist())
        ev.extend(stubs_b.tolist())
        caps.extend([c] * stubs_a.size)
    sides = ["A"] * nA + ["B"] * nB
    return CapGraph(b, eu, ev, caps, sides=sides)
