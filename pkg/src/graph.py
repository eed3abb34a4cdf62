"""
Capacitated graphs, allocation validity and exact oracles for the maximum allocation.
"""
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import ValidationError
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from src.config import TOLERANCES
from src.errors import IndexMismatch, ParseError, TooLarge
from src.models import EdgeSpec, GraphFile, VertexSpec

INF = math.inf

Capacity = Union[int, float]


class CapGraph:
    """Finite multigraph with vertex capacities b_v and edge capacities c_e.

    Undirected edge i yields directed edges 2i (u -> v) and 2i+1 (v -> u), so the
    reverse of directed edge d is d ^ 1. Infinite edge capacities are replaced by
    min(b_u, b_v) at construction.
    """

    def __init__(
        self,
        b: Sequence[int],
        edges_u: Sequence[int],
        edges_v: Sequence[int],
        caps: Sequence[Capacity],
        sides: Optional[Sequence[Optional[str]]] = None,
        ids: Optional[Sequence[str]] = None,
    ):
        self.b = np.asarray(b, dtype=np.int64).copy()
        self.eu = np.asarray(edges_u, dtype=np.int64).copy()
        self.ev = np.asarray(edges_v, dtype=np.int64).copy()
        n = self.b.size
        if np.any(self.b < 0):
            raise ValueError("vertex capacities must be non-negative")
        if self.eu.shape != self.ev.shape or self.eu.ndim != 1:
            raise ValueError("edge endpoint arrays must match")
        if self.eu.size and (min(self.eu.min(), self.ev.min()) < 0 or max(self.eu.max(), self.ev.max()) >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(self.eu == self.ev):
            raise ValueError("self-loops are not allowed")

        raw_caps = np.asarray(caps, dtype=float)
        if raw_caps.shape != self.eu.shape:
            raise ValueError("one capacity per edge is required")
        if np.any(raw_caps < 0):
            raise ValueError("edge capacities must be non-negative")
        infinite = np.isinf(raw_caps)
        endpoint_min = np.minimum(self.b[self.eu], self.b[self.ev]) if self.eu.size else np.zeros(0, dtype=np.int64)
        self.c = np.where(infinite, endpoint_min, np.nan_to_num(raw_caps, posinf=0)).astype(np.int64)

        self.ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(n))
        if len(self.ids) != n:
            raise ValueError("one id per vertex is required")
        self.sides = tuple(sides) if sides is not None else None
        if self.sides is not None:
            self._check_sides()

        for arr in (self.b, self.eu, self.ev, self.c):
            arr.setflags(write=False)

        # directed-edge index
        self.tails = np.empty(2 * self.eu.size, dtype=np.int64)
        self.tails[0::2] = self.eu
        self.tails[1::2] = self.ev
        self.heads = np.empty_like(self.tails)
        self.heads[0::2] = self.ev
        self.heads[1::2] = self.eu
        self.directed_caps = np.repeat(self.c, 2)
        order = np.argsort(self.heads, kind="stable")
        counts = np.bincount(self.heads, minlength=n) if self.heads.size else np.zeros(n, dtype=np.int64)
        self._in_ptr = np.concatenate([[0], np.cumsum(counts)])
        self._in_idx = order
        for arr in (self.tails, self.heads, self.directed_caps):
            arr.setflags(write=False)

    # ------------------------------------------------------------------
    # Construction helpers
    # ------------------------------------------------------------------

    @classmethod
    def build(cls, vertices: Iterable[tuple], edges: Iterable[tuple]) -> "CapGraph":
        """vertices: (id, b) or (id, b, side); edges: (u_id, v_id, c) with c an int or INF."""
        vertices = list(vertices)
        ids = [str(v[0]) for v in vertices]
        index = {vid: i for i, vid in enumerate(ids)}
        if len(index) != len(ids):
            raise ValueError("vertex ids must be unique")
        b = [int(v[1]) for v in vertices]
        sides = [v[2] if len(v) > 2 else None for v in vertices]
        eu, ev, caps = [], [], []
        for u, v, c in edges:
            eu.append(index[str(u)])
            ev.append(index[str(v)])
            caps.append(INF if c in ("inf", INF, None) else int(c))
        declared = sides if any(s is not None for s in sides) else None
        return cls(b, eu, ev, caps, sides=declared, ids=ids)

    def _check_sides(self):
        for s in self.sides:
            if s not in ("A", "B"):
                raise ValueError("a declared bipartition must give every vertex side A or B")
        side_arr = np.array([s == "A" for s in self.sides], dtype=bool)
        if np.any(side_arr[self.eu] == side_arr[self.ev]):
            raise ValueError("every edge must cross the declared bipartition")

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return int(self.b.size)

    @property
    def n_edges(self) -> int:
        return int(self.eu.size)

    @property
    def n_directed(self) -> int:
        return 2 * self.n_edges

    def incoming(self, v: int) -> np.ndarray:
        """Directed edges w -> v."""
        return self._in_idx[self._in_ptr[v]:self._in_ptr[v + 1]]

    def outgoing(self, v: int) -> np.ndarray:
        """Directed edges v -> w."""
        return self.incoming(v) ^ 1

    def others(self, d: int) -> np.ndarray:
        """The directed edges feeding d = v -> u: every w -> v except u -> v along the same edge."""
        inc = self.incoming(int(self.tails[d]))
        return inc[inc != (d ^ 1)]

    def bipartition(self) -> Optional[np.ndarray]:
        """Boolean side-A mask: the declared one, else a 2-colouring, else None."""
        if self.sides is not None:
            return np.array([s == "A" for s in self.sides], dtype=bool)
        try:
            colouring = nx.bipartite.color(self.to_networkx())
        except nx.NetworkXError:
            return None
        return np.array([colouring.get(v, 0) == 0 for v in range(self.n_vertices)], dtype=bool)

    def is_forest(self) -> bool:
        if self.n_vertices == 0:
            return True
        return nx.is_forest(self.to_networkx())

    def diameter(self) -> int:
        """Largest component diameter (0 for edgeless graphs)."""
        simple = nx.Graph(self.to_networkx())
        best = 0
        for comp in nx.connected_components(simple):
            if len(comp) > 1:
                best = max(best, nx.diameter(simple.subgraph(comp)))
        return best

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(range(self.n_vertices))
        for i in range(self.n_edges):
            g.add_edge(int(self.eu[i]), int(self.ev[i]), key=i, c=int(self.c[i]))
        return g

    def __repr__(self) -> str:
        return f"CapGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class Allocation:
    """Integer weight per undirected edge."""
    x: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=np.int64).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    @property
    def size(self) -> int:
        return int(self.x.sum())


# ----------------------------------------------------------------------
# Validity
# ----------------------------------------------------------------------

def vertex_loads(g: CapGraph, x: np.ndarray) -> np.ndarray:
    loads = np.zeros(g.n_vertices, dtype=np.int64)
    np.add.at(loads, g.eu, x)
    np.add.at(loads, g.ev, x)
    return loads


def validate(g: CapGraph, a: Union[Allocation, Sequence[int]]) -> bool:
    x = a.x if isinstance(a, Allocation) else np.asarray(a, dtype=np.int64)
    if x.shape != (g.n_edges,):
        raise IndexMismatch(f"allocation has {x.size} entries for {g.n_edges} edges")
    if np.any(x < 0) or np.any(x > g.c):
        return False
    return bool(np.all(vertex_loads(g, x) <= g.b))


# ----------------------------------------------------------------------
# Exact oracles
# ----------------------------------------------------------------------

def max_allocation_flow(g: CapGraph) -> Tuple[int, Allocation]:
    """Maximum allocation size with a witness.

    Bipartite graphs use an integral max-flow (source -> A at b_v, A -> B at c_e,
    B -> sink at b_v). Other graphs go through the unit-copy gadget: b_v copies of each
    vertex, each edge split into c_e units u_i - e_u - e_v - v_j; a maximum-cardinality
    matching of the gadget has size (number of units) + M(G).
    """
    if g.n_edges == 0:
        return 0, Allocation(np.zeros(0, dtype=np.int64))
    side_a = g.bipartition()
    if side_a is not None:
        x = _flow_bipartite(g, side_a)
    else:
        x = _flow_gadget(g)
    return int(x.sum()), Allocation(x)


def _flow_bipartite(g: CapGraph, side_a: np.ndarray) -> np.ndarray:
    n = g.n_vertices
    source, sink = n, n + 1
    u_in_a = side_a[g.eu]
    a_end = np.where(u_in_a, g.eu, g.ev)
    b_end = np.where(u_in_a, g.ev, g.eu)
    a_vertices = np.flatnonzero(side_a)
    b_vertices = np.flatnonzero(~side_a)
    rows = np.concatenate([np.full(a_vertices.size, source), a_end, b_vertices])
    cols = np.concatenate([a_vertices, b_end, np.full(b_vertices.size, sink)])
    data = np.concatenate([g.b[a_vertices], g.c, g.b[b_vertices]]).astype(np.int32)
    network = csr_matrix((data, (rows, cols)), shape=(n + 2, n + 2))
    network.sum_duplicates()
    network.eliminate_zeros()
    result = maximum_flow(network, source, sink)
    flow = result.flow if hasattr(result, "flow") else result.residual

    # split the aggregated flow of parallel edges greedily
    pair_flow = np.asarray(flow[a_end, b_end]).ravel().astype(np.int64)
    remaining = {}
    x = np.zeros(g.n_edges, dtype=np.int64)
    for i in range(g.n_edges):
        key = (int(a_end[i]), int(b_end[i]))
        left = remaining.setdefault(key, int(pair_flow[i]))
        take = min(left, int(g.c[i]))
        x[i] = take
        remaining[key] = left - take
    return x


def _flow_gadget(g: CapGraph) -> np.ndarray:
    gadget = nx.Graph()
    units = []
    for e in range(g.n_edges):
        u, v = int(g.eu[e]), int(g.ev[e])
        for j in range(int(g.c[e])):
            near, far = ("e", e, j, 0), ("e", e, j, 1)
            gadget.add_edge(near, far)
            gadget.add_edges_from((("v", u, i), near) for i in range(int(g.b[u])))
            gadget.add_edges_from((far, ("v", v, i)) for i in range(int(g.b[v])))
            units.append((e, near, far))
    matching = nx.max_weight_matching(gadget, maxcardinality=True)
    mate = {}
    for p, q in matching:
        mate[p] = q
        mate[q] = p
    x = np.zeros(g.n_edges, dtype=np.int64)
    for e, near, far in units:
        if mate.get(near, ("e",))[0] == "v" and mate.get(far, ("e",))[0] == "v":
            x[e] += 1
    return x


def _check_guard(g: CapGraph):
    box = 1
    for c in g.c:
        box *= int(c) + 1
        if box > TOLERANCES.enumeration_guard:
            raise TooLarge(f"allocation box exceeds {TOLERANCES.enumeration_guard} candidates")


def iter_allocations(g: CapGraph, batch: int = 65536):
    """Yield arrays of valid allocations (one per row), batch by batch."""
    _check_guard(g)
    incidence = np.zeros((g.n_vertices, g.n_edges), dtype=np.int64)
    np.add.at(incidence, (g.eu, np.arange(g.n_edges)), 1)
    np.add.at(incidence, (g.ev, np.arange(g.n_edges)), 1)
    candidates = itertools.product(*(range(int(c) + 1) for c in g.c))
    while True:
        chunk = list(itertools.islice(candidates, batch))
        if not chunk:
            return
        xs = np.array(chunk, dtype=np.int64).reshape(len(chunk), g.n_edges)
        ok = np.all(xs @ incidence.T <= g.b, axis=1)
        yield xs[ok]


def max_allocation_enum(g: CapGraph) -> int:
    best = 0
    for xs in iter_allocations(g):
        if xs.shape[0]:
            best = max(best, int(xs.sum(axis=1).max()))
    return best


def allocation_polynomial(g: CapGraph) -> Tuple[np.ndarray, np.ndarray]:
    """Counts of allocations by size s and the summed vertex loads by size.

    Returns (counts[s], loads[s, v]); any Gibbs expectation at any lambda follows from them.
    """
    top = int(g.c.sum())
    counts = np.zeros(top + 1)
    loads = np.zeros((top + 1, g.n_vertices))
    incidence = np.zeros((g.n_vertices, g.n_edges))
    np.add.at(incidence, (g.eu, np.arange(g.n_edges)), 1)
    np.add.at(incidence, (g.ev, np.arange(g.n_edges)), 1)
    for xs in iter_allocations(g):
        sizes = xs.sum(axis=1)
        np.add.at(counts, sizes, 1)
        np.add.at(loads, sizes, xs @ incidence.T)
    return counts, loads


def gibbs_brute(g: CapGraph, lam: float) -> Tuple[List[float], float]:
    """Exact per-vertex expected occupancy under mu(x) ~ lam^|x| and the partition function."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    counts, loads = allocation_polynomial(g)
    sizes = np.flatnonzero(counts)
    log_w = sizes * math.log(lam)
    shift = log_w.max()
    w = np.exp(log_w - shift)
    scaled_z = float(np.dot(w, counts[sizes]))
    occupancy = (w @ loads[sizes]) / scaled_z
    partition = scaled_z * math.exp(shift) if shift < 700 else math.inf
    return occupancy.tolist(), partition


# ----------------------------------------------------------------------
# Graph file I/O
# ----------------------------------------------------------------------

def graph_from_file(graph_file: GraphFile) -> CapGraph:
    vertices = [(v.id, v.b, v.side) if v.side else (v.id, v.b) for v in graph_file.vertices]
    edges = [(e.u, e.v, INF if e.c == "inf" else e.c) for e in graph_file.edges]
    if any(v.side for v in graph_file.vertices) and not all(v.side for v in graph_file.vertices):
        raise ParseError("either every vertex declares a side or none does")
    try:
        return CapGraph.build(vertices, edges)
    except ValueError as e:
        raise ParseError(str(e)) from e


def load_graph(path: str) -> CapGraph:
    try:
        with open(path, encoding="utf-8") as fp:
            graph_file = GraphFile.model_validate(json.load(fp))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ParseError(f"{path}: {e}") from e
    return graph_from_file(graph_file)


def graph_to_file(g: CapGraph) -> GraphFile:
    vertices = [
        VertexSpec(id=g.ids[i], b=int(g.b[i]), side=g.sides[i] if g.sides else None)
        for i in range(g.n_vertices)
    ]
    edges = [EdgeSpec(u=g.ids[g.eu[i]], v=g.ids[g.ev[i]], c=int(g.c[i])) for i in range(g.n_edges)]
    return GraphFile(vertices=vertices, edges=edges)
