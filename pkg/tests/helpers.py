"""
Builders shared by the test modules.
"""
from typing import Optional

import numpy as np
from scipy.stats import binom

from src.distkit import FiniteDist, geometric_weights, interval_indicator, reweight
from src.graph import INF, CapGraph
from src.limits import VertexLaw


def single_edge(b=(2, 3), c=2) -> CapGraph:
    return CapGraph.build([("u", b[0]), ("v", b[1])], [("u", "v", c)])


def star(center_b=2, leaves=3) -> CapGraph:
    vertices = [("c", center_b)] + [(f"l{i}", 1) for i in range(leaves)]
    return CapGraph.build(vertices, [("c", f"l{i}", 1) for i in range(leaves)])


def cycle(n: int, b: int = 1, c: int = 1) -> CapGraph:
    return CapGraph.build([(str(i), b) for i in range(n)], [(str(i), str((i + 1) % n), c) for i in range(n)])


def path(n_edges: int, b: int = 1, c: int = 1) -> CapGraph:
    return CapGraph.build([(str(i), b) for i in range(n_edges + 1)],
                          [(str(i), str(i + 1), c) for i in range(n_edges)])


def random_bipartite(rng: np.random.Generator, n_max: int = 60, b_max: int = 4, c_max: int = 3,
                     declare_sides: Optional[bool] = None, allow_inf: bool = True) -> CapGraph:
    n_a = int(rng.integers(1, n_max // 2 + 1))
    n_b = int(rng.integers(1, n_max - n_a + 1))
    m = int(rng.integers(0, 2 * (n_a + n_b) + 1))
    vertices = [(f"a{i}", int(rng.integers(0, b_max + 1)), "A") for i in range(n_a)]
    vertices += [(f"b{i}", int(rng.integers(0, b_max + 1)), "B") for i in range(n_b)]
    if declare_sides is None:
        declare_sides = bool(rng.integers(2))
    if not declare_sides:
        vertices = [v[:2] for v in vertices]
    edges = []
    for _ in range(m):
        c = int(rng.integers(0, c_max + 1))
        if allow_inf and rng.random() < 0.1:
            c = INF
        edges.append((f"a{rng.integers(n_a)}", f"b{rng.integers(n_b)}", c))
    return CapGraph.build(vertices, edges)


def random_tree(rng: np.random.Generator, n: int, b_max: int = 3, c_max: int = 2, c_min: int = 0) -> CapGraph:
    vertices = [(str(i), int(rng.integers(0, b_max + 1))) for i in range(n)]
    edges = [(str(int(rng.integers(0, v))), str(v), int(rng.integers(c_min, c_max + 1))) for v in range(1, n)]
    return CapGraph.build(vertices, edges)


def random_forest(rng: np.random.Generator, n: int, b_max: int = 3, c_max: int = 2, cut: float = 0.2) -> CapGraph:
    """A random tree on n vertices with a fraction of its edges dropped."""
    tree = random_tree(rng, n, b_max, c_max)
    keep = rng.random(tree.n_edges) >= cut
    edges = [(str(int(u)), str(int(v)), int(c)) for u, v, c, k in zip(tree.eu, tree.ev, tree.c, keep) if k]
    return CapGraph.build([(str(i), int(b)) for i, b in enumerate(tree.b)], edges)


def random_loopy(rng: np.random.Generator, n: int, extra: int, b_max: int = 3, c_max: int = 2,
                 c_min: int = 0) -> CapGraph:
    """A random tree plus `extra` random chords (parallel edges allowed)."""
    tree = random_tree(rng, n, b_max, c_max, c_min)
    edges = [(str(int(u)), str(int(v)), int(c)) for u, v, c in zip(tree.eu, tree.ev, tree.c)]
    while extra > 0:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u != v:
            edges.append((str(u), str(v), int(rng.integers(c_min, c_max + 1))))
            extra -= 1
    return CapGraph.build([(str(i), int(b)) for i, b in enumerate(tree.b)], edges)


def random_log_concave(rng: np.random.Generator, length: int, support_min: int = 0) -> FiniteDist:
    """Full-support log-concave law on {support_min, ..., support_min + length - 1}."""
    steps = np.sort(rng.normal(scale=1.5, size=length - 1))[::-1]
    log_w = np.concatenate([[0.0], np.cumsum(steps)])
    return FiniteDist.from_weights(np.exp(log_w - log_w.max()), support_min)


def ordered_pair(rng: np.random.Generator, length: int):
    """Two reweightings of one log-concave law with m1 <=lr-up m2 by construction."""
    m0 = random_log_concave(rng, length)
    rho1 = float(rng.uniform(0.2, 3.0))
    rho2 = rho1 * float(rng.uniform(1.0, 3.0))
    m1 = reweight(m0, geometric_weights(rho1, length) * interval_indicator(0, int(rng.integers(0, length)), length))
    m2 = reweight(m0, geometric_weights(rho2, length) * interval_indicator(int(rng.integers(0, length)), length, length))
    return m1, m2


def random_positive(rng: np.random.Generator, length: int) -> FiniteDist:
    return FiniteDist.from_weights(rng.uniform(0.05, 1.0, size=length))


def scalar_limit(phiA: VertexLaw, phiB: VertexLaw, sweeps: int = 200_000) -> float:
    """Unit-capacity limit: X and Y are Bernoulli and the recursion acts on their means."""
    mean_a, mean_b = phiA.mean_degree, phiB.mean_degree

    def biased(phi, mean):
        rows = np.array([(a.p * a.d / mean, a.d - 1, a.w) for a in phi.atoms if a.d])
        return rows[:, 0], rows[:, 1], rows[:, 2]

    side_a, side_b = biased(phiA, mean_a), biased(phiB, mean_b)

    def room(side, z):
        q, d, w = side
        return float(np.dot(q, binom.cdf(w - 1, d, z)))

    values = []
    for x in (0.0, 1.0):
        for _ in range(sweeps):
            nxt = room(side_b, room(side_a, x))
            done = abs(nxt - x) < 1e-14
            x = nxt
            if done:
                break
        y = room(side_a, x)
        served = 0.0
        for a in phiA.atoms:
            k = np.arange(a.d + 1)
            served += a.p * float(np.dot(np.minimum(a.w, k), binom.pmf(k, a.d, x)))
        leftover = sum(b.p * b.w * binom.sf(b.w, b.d, y) for b in phiB.atoms if b.w < b.d)
        values.append(served + mean_a / mean_b * leftover)
    return min(values)


def random_unit_law(rng) -> VertexLaw:
    count = int(rng.integers(1, 4))
    probs = rng.dirichlet(np.ones(count))
    degrees = rng.integers(1, 5, size=count)
    return VertexLaw.from_atoms(
        (float(p), int(d), int(rng.integers(0, 4)), (1,) * int(d)) for p, d in zip(probs, degrees)
    )
