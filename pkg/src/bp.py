"""
Belief propagation for maximum capacitated allocations.

Messages live on directed edges: index d is the directed edge tails[d] -> heads[d]
and d ^ 1 is its reverse. The finite-lambda engine iterates the local operator R
synchronously; the zero-temperature engine works on the integer support infima only.
"""
import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.config import TOLERANCES
from src.distkit import FiniteDist, convolve, geometric_weights, is_log_concave, reweight, shifted_reversal
from src.errors import InvariantViolation, NoConvergence, NotATree, TooLarge
from src.graph import CapGraph, max_allocation_flow
from src.logger import AllocLogger

DELTA_0 = FiniteDist.point(0)


# ----------------------------------------------------------------------
# Message containers
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MessageState:
    """One FiniteDist per directed edge; an immutable snapshot between sweeps."""
    messages: Tuple[FiniteDist, ...]

    def __getitem__(self, d: int) -> FiniteDist:
        return self.messages[int(d)]

    def __len__(self) -> int:
        return len(self.messages)

    @classmethod
    def canonical(cls, g: CapGraph) -> "MessageState":
        return cls(tuple(DELTA_0 for _ in range(g.n_directed)))

    @classmethod
    def random(cls, g: CapGraph, rng: np.random.Generator) -> "MessageState":
        """Full-support random messages on {0, ..., c_e}."""
        return cls(tuple(
            FiniteDist.from_weights(rng.uniform(0.05, 1.0, size=int(c) + 1))
            for c in g.directed_caps
        ))

    def gather(self, edges: Sequence[int]) -> List[FiniteDist]:
        return [self.messages[int(d)] for d in edges]

    def alphas(self) -> np.ndarray:
        """Support infimum of every message."""
        return np.array([m.support_min for m in self.messages], dtype=np.int64)

    def distance(self, other: "MessageState") -> float:
        """Largest L1 distance between corresponding messages."""
        if not self.messages:
            return 0.0
        return max(m.l1_distance(o) for m, o in zip(self.messages, other.messages))


class BPRun(NamedTuple):
    state: MessageState
    sweeps: int


class ZeroTemperatureResult(NamedTuple):
    alpha: np.ndarray
    beta: np.ndarray
    estimate: float


# ----------------------------------------------------------------------
# Local operators
# ----------------------------------------------------------------------

def _incoming_sum(incoming: Sequence[FiniteDist]) -> FiniteDist:
    return convolve(incoming) if len(incoming) else DELTA_0


def _r_operator(b: int, c: int, incoming: Sequence[FiniteDist], lam: float) -> FiniteDist:
    theta = _incoming_sum(incoming)
    if theta.support_min > b:
        return DELTA_0
    # (box_[0,b] * theta) reversed around b gives P(|y| <= b - x) at x
    window = np.convolve(np.ones(b + 1), theta.dense())
    room = shifted_reversal(window, b)
    top = min(b, c)
    return FiniteDist.from_weights(room[:top + 1] * geometric_weights(lam, top + 1))


def op_R(g: CapGraph, d: int, incoming: Sequence[FiniteDist], lam: float) -> FiniteDist:
    """Message sent on directed edge d = v -> u given the messages on the other edges into v.

    R(x) is proportional to lam^x 1(x <= c_e) P(|y| <= b_v - x); it is delta_0 when the
    incoming support infima already exceed b_v.
    """
    v = int(g.tails[d])
    return _r_operator(int(g.b[v]), int(g.directed_caps[d]), incoming, lam)


def op_D(g: CapGraph, v: int, incoming: Sequence[FiniteDist]) -> float:
    """Mean of |y| conditioned on |y| <= b_v, under the product of the incoming messages."""
    b = int(g.b[v])
    theta = _incoming_sum(incoming)
    if theta.support_min > b:
        return float(b)
    w = theta.dense()[:b + 1]
    return float(np.dot(np.arange(w.size), w) / w.sum())


def op_Q(g: CapGraph, d: int, incoming: Sequence[FiniteDist], lam: float) -> FiniteDist:
    """Message on d = v -> u built from R-messages; lam may be math.inf."""
    v = int(g.tails[d])
    b, c = int(g.b[v]), int(g.directed_caps[d])
    if math.isinf(lam):
        return _q_infinite(b, c, incoming)
    tilted = [reweight(n, geometric_weights(lam, n.support_max + 1)) for n in incoming]
    return _r_operator(b, c, tilted, lam)


def _q_infinite(b: int, c: int, incoming: Sequence[FiniteDist]) -> FiniteDist:
    theta = _incoming_sum(incoming)
    if theta.support_max < b - c:
        return FiniteDist.point(c)
    top = min(b, c)
    mass = theta.dense(max(theta.support_max, b) + 1)
    return FiniteDist.raw(mass[b - np.arange(top + 1)])


def op_S(g: CapGraph, d: int, alphas: Sequence[int]) -> int:
    """[b_v - sum(alphas)] clipped to [0, c_e]."""
    v = int(g.tails[d])
    return int(min(max(int(g.b[v]) - int(np.sum(alphas)), 0), int(g.directed_caps[d])))


def op_S_graph(g: CapGraph, alpha: np.ndarray) -> np.ndarray:
    """S applied on every directed edge at once."""
    alpha = np.asarray(alpha, dtype=np.int64)
    into = np.bincount(g.heads, weights=alpha, minlength=g.n_vertices).astype(np.int64)
    reverse = alpha[np.arange(g.n_directed) ^ 1]
    rest = into[g.tails] - reverse
    return np.clip(g.b[g.tails] - rest, 0, g.directed_caps)


def op_F(g: CapGraph, alpha: np.ndarray) -> np.ndarray:
    """Per-vertex occupancy read off a two-step fixed point.

    F_v = min(b_v, |alpha into v|) + 1(|beta into v| > b_v) (b_v - |alpha out of v|)^+
    with beta = S(alpha).
    """
    alpha = np.asarray(alpha, dtype=np.int64)
    beta = op_S_graph(g, alpha)
    n = g.n_vertices
    alpha_in = np.bincount(g.heads, weights=alpha, minlength=n)
    alpha_out = np.bincount(g.tails, weights=alpha, minlength=n)
    beta_in = np.bincount(g.heads, weights=beta, minlength=n)
    saturated = beta_in > g.b
    return np.minimum(g.b, alpha_in) + saturated * np.maximum(g.b - alpha_out, 0)


def fixed_point_estimate(g: CapGraph, alpha: np.ndarray) -> float:
    return float(op_F(g, alpha).sum())


# ----------------------------------------------------------------------
# Finite lambda
# ----------------------------------------------------------------------

def sweep_messages(g: CapGraph, state: MessageState, lam: float) -> MessageState:
    """One synchronous application of R on every directed edge."""
    return MessageState(tuple(
        op_R(g, d, state.gather(g.others(d)), lam) for d in range(g.n_directed)
    ))


def default_max_sweeps(g: CapGraph) -> int:
    return 10 * (g.diameter() + int(g.c.sum())) + 1000


def _check_log_concave(state: MessageState, sweep: int):
    for d, m in enumerate(state.messages):
        if m.support_min != 0 or not is_log_concave(m):
            raise InvariantViolation(f"message on directed edge {d} left the log-concave class at sweep {sweep}")


def bp_finite_lambda(
    g: CapGraph,
    lam: float,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
    initial: Optional[MessageState] = None,
    history: Optional[List[MessageState]] = None,
    logger: Optional[AllocLogger] = None,
) -> BPRun:
    """Iterate m <- R(m) until consecutive states are within tol.

    Starting from delta_0 everywhere (the default) every sweep is checked to stay
    log-concave with 0 in the support. Pass a list as `history` to record the start
    and every sweep.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if lam > TOLERANCES.lambda_cap:
        raise ValueError(f"lambda above {TOLERANCES.lambda_cap:g}; use bp_zero_temperature instead")
    tol = TOLERANCES.bp_tol if tol is None else tol
    max_sweeps = default_max_sweeps(g) if max_sweeps is None else max_sweeps
    check = initial is None
    state = MessageState.canonical(g) if initial is None else initial
    if history is not None:
        history.append(state)

    residual = math.inf
    for sweep in range(1, max_sweeps + 1):
        new = sweep_messages(g, state, lam)
        if check:
            _check_log_concave(new, sweep)
        residual = new.distance(state)
        state = new
        if history is not None:
            history.append(state)
        if logger:
            logger.log_sweep("bp", sweep, residual)
        if residual <= tol:
            if logger:
                logger.log_fixed_point("bp", sweep, residual, {"lambda": lam})
            return BPRun(state, sweep)

    raise NoConvergence(f"BP did not reach tol {tol:g} in {max_sweeps} sweeps (residual {residual:.3g})",
                        sweeps=max_sweeps, last=state)


def vertex_occupancies(g: CapGraph, state: MessageState) -> List[float]:
    """D_v at every vertex."""
    return [op_D(g, v, state.gather(g.incoming(v))) for v in range(g.n_vertices)]


# ----------------------------------------------------------------------
# Zero temperature
# ----------------------------------------------------------------------

def _two_step(g: CapGraph, alpha: np.ndarray) -> np.ndarray:
    return op_S_graph(g, op_S_graph(g, alpha))


def _settle(g: CapGraph, start: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fixed point of clip(S o S, lo, hi) reached monotonically from start (lo or hi)."""
    alpha = start
    for _ in range(int((hi - lo).sum()) + 1):
        nxt = np.clip(_two_step(g, alpha), lo, hi)
        if np.array_equal(nxt, alpha):
            return alpha
        alpha = nxt
    raise InvariantViolation("S o S failed to stabilize inside its box")


def _sum_f_lower_bound(g: CapGraph, lo: np.ndarray, hi: np.ndarray) -> float:
    """Lower bound of sum F_v over every alpha with lo <= alpha <= hi.

    min(b_v, |alpha in|) is non-decreasing in alpha; the saturation indicator and
    (b_v - |alpha out|)^+ are non-increasing.
    """
    n = g.n_vertices
    lo_in = np.bincount(g.heads, weights=lo, minlength=n)
    hi_out = np.bincount(g.tails, weights=hi, minlength=n)
    beta_in = np.bincount(g.heads, weights=op_S_graph(g, hi), minlength=n)
    return float(np.minimum(g.b, lo_in).sum() + ((beta_in > g.b) * np.maximum(g.b - hi_out, 0)).sum())


def _coupled_blocks(g: CapGraph, free: np.ndarray) -> List[np.ndarray]:
    """Split free coordinates into blocks sharing no S o S equation and no part of any F_v.

    Fixed points then factor over blocks and sum F_v is a sum of per-block terms, so
    each block can be optimised with the others held still. On a bipartite graph the
    two directions always land in different blocks.
    """
    is_free = np.zeros(g.n_directed, dtype=bool)
    is_free[free] = True
    blocks = nx.utils.UnionFind(int(d) for d in free)

    def link(coords):
        members = [int(d) for d in coords if is_free[d]]
        if len(members) > 1:
            blocks.union(*members)

    def behind(edges):
        return [int(x) for w in edges for x in g.others(int(w))]

    for d in free:
        link([int(d), *behind(g.others(int(d)))])
    for v in range(g.n_vertices):
        incoming = g.incoming(v)
        link(incoming)
        link([*g.outgoing(v), *behind(incoming)])

    grouped = {}
    for d in free:
        grouped.setdefault(blocks[int(d)], []).append(int(d))
    return [np.array(members, dtype=np.int64) for members in grouped.values()]


def _min_sum_f(g: CapGraph, lo: np.ndarray, hi: np.ndarray, budget: int,
               floor: float = -math.inf) -> Tuple[np.ndarray, int]:
    """Branch and bound over the two-step fixed points inside [lo, hi]; lo must be one.

    Each node shrinks its box to the least and greatest fixed points of the clipped
    map, so every fixed point of S o S in the box survives. Ties keep the first
    fixed point met, and lo is met first.
    The search stops early once a fixed point reaches `floor`, a known lower bound.
    """
    best, best_value = None, math.inf
    stack = [(lo, hi)]
    nodes = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > budget:
            raise TooLarge(f"fixed-point search exceeded {TOLERANCES.fixed_point_search_nodes} nodes")
        lo = _settle(g, lo, lo, hi)
        hi = _settle(g, hi, lo, hi)
        bound = _sum_f_lower_bound(g, lo, hi)
        if bound >= best_value:
            continue
        for alpha in (lo, hi):
            if np.array_equal(_two_step(g, alpha), alpha):
                value = fixed_point_estimate(g, alpha)
                if value < best_value:
                    best, best_value = alpha, value
                    if best_value <= floor:
                        return best, nodes
        free = np.flatnonzero(lo < hi)
        if free.size == 0 or bound >= best_value:
            continue
        d = int(free[0])
        for x in range(int(hi[d]), int(lo[d]) - 1, -1):
            sub_lo, sub_hi = lo.copy(), hi.copy()
            sub_lo[d] = sub_hi[d] = x
            stack.append((sub_lo, sub_hi))
    if best is None:
        raise InvariantViolation("no two-step fixed point inside the search box")
    return best, nodes


def bp_zero_temperature(g: CapGraph, logger: Optional[AllocLogger] = None) -> ZeroTemperatureResult:
    """Two-step fixed point alpha = S(S(alpha)) minimising sum F_v, and that minimum.

    Every fixed point lies between the least one (S o S iterated from 0) and the
    greatest (iterated from the capacities). Coordinates on which the two differ are
    searched block by block. The least fixed point is returned whenever it attains
    the minimum, which covers every forest.
    On bipartite graphs the search stops at the first fixed point worth 2 M(G).
    """
    zeros = np.zeros(g.n_directed, dtype=np.int64)
    caps = np.asarray(g.directed_caps, dtype=np.int64)
    least = _settle(g, zeros, zeros, caps)
    greatest = _settle(g, caps, zeros, caps)

    alpha, nodes = least, 0
    blocks = _coupled_blocks(g, np.flatnonzero(least < greatest))
    floor = -math.inf
    if blocks and g.bipartition() is not None:
        # no two-step fixed point of a bipartite graph goes below 2 M(G)
        floor = 2.0 * max_allocation_flow(g)[0]
    for block in blocks:
        lo, hi = alpha.copy(), alpha.copy()
        lo[block], hi[block] = least[block], greatest[block]
        alpha, searched = _min_sum_f(g, lo, hi, TOLERANCES.fixed_point_search_nodes - nodes, floor)
        nodes += searched
        if fixed_point_estimate(g, alpha) <= floor:
            break

    beta = op_S_graph(g, alpha)
    estimate = fixed_point_estimate(g, alpha)
    if logger:
        logger.log_fixed_point("bp0", 0, 0.0, {"estimate": estimate, "blocks": len(blocks), "nodes": nodes})
    return ZeroTemperatureResult(alpha, beta, estimate)


def tree_leaf_removal(g: CapGraph) -> Tuple[np.ndarray, int]:
    """Fixed point of S on a forest by an upward then a downward pass, with M(G)."""
    if not g.is_forest():
        raise NotATree("leaf removal needs an acyclic graph")
    alpha = np.zeros(g.n_directed, dtype=np.int64)

    def settle(d: int):
        v = int(g.tails[d])
        rest = int(alpha[g.others(d)].sum())
        alpha[d] = min(max(int(g.b[v]) - rest, 0), int(g.directed_caps[d]))

    seen = np.zeros(g.n_vertices, dtype=bool)
    for root in range(g.n_vertices):
        if seen[root]:
            continue
        seen[root] = True
        order, up_edge, children = [], {}, {}
        queue = deque([root])
        while queue:
            v = queue.popleft()
            order.append(v)
            children[v] = []
            for d in g.incoming(v):
                w = int(g.tails[d])
                if not seen[w]:
                    seen[w] = True
                    up_edge[w] = int(d)
                    children[v].append(int(d) ^ 1)
                    queue.append(w)
        for v in reversed(order[1:]):
            settle(up_edge[v])
        for v in order:
            for d in children[v]:
                settle(d)

    if not np.array_equal(op_S_graph(g, alpha), alpha):
        raise InvariantViolation("leaf removal did not reach a fixed point")
    total = int(op_F(g, alpha).sum())
    return alpha, total // 2


def enumerate_two_step_fixed_points(g: CapGraph, batch: int = 65536) -> List[np.ndarray]:
    """Every alpha in the capacity box with alpha = S(S(alpha))."""
    box = 1
    for c in g.directed_caps:
        box *= int(c) + 1
        if box > TOLERANCES.enumeration_guard:
            raise TooLarge(f"alpha box exceeds {TOLERANCES.enumeration_guard} candidates")
    nd = g.n_directed
    heads = np.zeros((nd, g.n_vertices), dtype=np.int64)
    heads[np.arange(nd), g.heads] = 1
    reverse = np.arange(nd) ^ 1

    def s_rows(a: np.ndarray) -> np.ndarray:
        into = a @ heads
        return np.clip(g.b[g.tails] - (into[:, g.tails] - a[:, reverse]), 0, g.directed_caps)

    candidates = itertools.product(*(range(int(c) + 1) for c in g.directed_caps))
    found = []
    while True:
        chunk = list(itertools.islice(candidates, batch))
        if not chunk:
            return found
        a = np.array(chunk, dtype=np.int64).reshape(len(chunk), nd)
        fixed = np.all(s_rows(s_rows(a)) == a, axis=1)
        found.extend(row.copy() for row in a[fixed])
