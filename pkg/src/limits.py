"""
Galton-Watson vertex laws, their size-biased versions, the recursive distributional
equation on edge laws (X(c), Y(c)) and the limit functional M(phi_A, phi_B).

Everything is exact finite probability arithmetic: laws are finite atom mixtures and
Poisson degrees are truncated at a tail quantile.
"""
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.stats import poisson

from src.config import TOLERANCES
from src.distkit import FiniteDist
from src.errors import InconsistentLaws, NoConvergence, ParseError, ZeroMass
from src.logger import AllocLogger
from src.models import LawFile, LimitResult


class Atom(NamedTuple):
    p: float
    d: int
    w: int
    caps: Tuple[int, ...]


@dataclass(frozen=True)
class PoissonMarker:
    rate: float
    w: int
    cap: int
    trunc: float


# ----------------------------------------------------------------------
# Vertex laws
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class VertexLaw:
    """Law of (degree D, vertex capacity W, multiset of edge capacities {C_i})."""
    atoms: Tuple[Atom, ...]
    poisson: Optional[PoissonMarker] = None
    _counts: Tuple[Tuple[Tuple[int, int], ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple(Atom(float(a.p), int(a.d), int(a.w), tuple(sorted(int(c) for c in a.caps))) for a in self.atoms)
        if not atoms:
            raise ValueError("a vertex law needs at least one atom")
        for a in atoms:
            if a.p < 0 or a.d < 0 or a.w < 0:
                raise ValueError(f"invalid atom {a}")
            if len(a.caps) != a.d or any(c < 0 for c in a.caps):
                raise ValueError(f"atom {a} must list one non-negative capacity per edge")
        total = sum(a.p for a in atoms)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities sum to {total}, expected 1")
        atoms = tuple(a._replace(p=a.p / total) for a in atoms if a.p > 0)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_counts", tuple(tuple(sorted(Counter(a.caps).items())) for a in atoms))

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence]) -> "VertexLaw":
        """atoms: (p, d, w, caps) tuples."""
        return cls(tuple(Atom(p, d, w, tuple(caps)) for p, d, w, caps in atoms))

    @classmethod
    def point(cls, d: int, w: int, caps: Sequence[int]) -> "VertexLaw":
        return cls((Atom(1.0, d, w, tuple(caps)),))

    @classmethod
    def poisson_degree(cls, rate: float, w: int, cap: int, trunc: Optional[float] = None) -> "VertexLaw":
        """Poi(rate) degree with every edge of capacity `cap`, truncated at tail mass `trunc`."""
        trunc = TOLERANCES.poisson_trunc if trunc is None else trunc
        if rate < 0:
            raise ValueError("Poisson rate must be non-negative")
        if rate == 0:
            return cls((Atom(1.0, 0, w, ()),), PoissonMarker(rate, w, cap, trunc))
        top = int(poisson.isf(trunc, rate)) + 1
        degrees = np.arange(top + 1)
        probs = poisson.pmf(degrees, rate)
        probs = probs / probs.sum()
        atoms = tuple(Atom(float(p), int(d), w, (cap,) * int(d)) for d, p in zip(degrees, probs) if p > 0)
        return cls(atoms, PoissonMarker(rate, w, cap, trunc))

    @classmethod
    def from_file(cls, law_file: LawFile) -> "VertexLaw":
        if law_file.poisson is not None:
            m = law_file.poisson
            return cls.poisson_degree(m.rate, m.w, m.cap, m.trunc)
        return cls.from_atoms((a.p, a.d, a.w, a.caps) for a in law_file.atoms)

    # -- moments --------------------------------------------------------

    @property
    def mean_degree(self) -> float:
        return float(sum(a.p * a.d for a in self.atoms))

    @property
    def mean_capacity(self) -> float:
        return float(sum(a.p * a.w for a in self.atoms))

    @property
    def max_w(self) -> int:
        return max(a.w for a in self.atoms)

    def capacities(self) -> List[int]:
        """Edge capacity values carried with positive mass."""
        return sorted({c for a in self.atoms for c in a.caps})

    def cap_mass(self, c: int) -> float:
        """E[sum_i 1(C_i = c)]."""
        return float(sum(a.p * dict(counts).get(c, 0) for a, counts in zip(self.atoms, self._counts)))

    def edge_cap_law(self) -> Dict[int, float]:
        """Capacity of a uniformly chosen half-edge."""
        mean = self.mean_degree
        if mean == 0:
            return {}
        return {c: self.cap_mass(c) / mean for c in self.capacities()}

    def cap_counts(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        """Per atom, (capacity, multiplicity) pairs."""
        return self._counts


def load_law(path: str) -> VertexLaw:
    try:
        with open(path, encoding="utf-8") as fp:
            law_file = LawFile.model_validate(json.load(fp))
        return VertexLaw.from_file(law_file)
    except (OSError, json.JSONDecodeError, ValidationError, ValueError) as e:
        raise ParseError(f"{path}: {e}") from e


class SizeBiasedSlice(NamedTuple):
    """Offspring law seen through a dangling edge of capacity c0."""
    c0: int
    atoms: Tuple[Atom, ...]


def size_biased(phi: VertexLaw, c0: int) -> SizeBiasedSlice:
    """Atoms (d, w, caps) reweighted by the multiplicity of c0 in caps, one c0 removed."""
    weighted = []
    for a in phi.atoms:
        k = a.caps.count(c0)
        if k:
            rest = list(a.caps)
            rest.remove(c0)
            weighted.append(Atom(a.p * k, a.d - 1, a.w, tuple(rest)))
    total = sum(a.p for a in weighted)
    if total <= 0:
        raise ZeroMass(f"no atom carries edge capacity {c0}")
    return SizeBiasedSlice(c0, tuple(a._replace(p=a.p / total) for a in weighted))


def check_consistency(phiA: VertexLaw, phiB: VertexLaw, tol: float = 1e-9) -> bool:
    """Both sides induce the same capacity law on a uniformly chosen edge."""
    mean_a, mean_b = phiA.mean_degree, phiB.mean_degree
    if mean_a == 0 or mean_b == 0:
        return mean_a == mean_b
    classes = set(phiA.capacities()) | set(phiB.capacities())
    return all(abs(phiA.cap_mass(c) / mean_a - phiB.cap_mass(c) / mean_b) <= tol for c in classes)


# ----------------------------------------------------------------------
# Recursive distributional equation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeLawPair:
    """Laws of X(c) and Y(c) on {0, ..., c} for every edge capacity class c."""
    x: Dict[int, FiniteDist]
    y: Dict[int, FiniteDist]

    @property
    def classes(self) -> List[int]:
        return sorted(self.x)

    @classmethod
    def low(cls, classes: Iterable[int]) -> "EdgeLawPair":
        classes = list(classes)
        return cls({c: FiniteDist.point(0) for c in classes}, {c: FiniteDist.point(0) for c in classes})

    @classmethod
    def high(cls, classes: Iterable[int]) -> "EdgeLawPair":
        classes = list(classes)
        return cls({c: FiniteDist.point(c) for c in classes}, {c: FiniteDist.point(c) for c in classes})

    def distance(self, other: "EdgeLawPair") -> float:
        """Largest total variation distance over classes and both sides."""
        gaps = [self.x[c].total_variation(other.x[c]) for c in self.x]
        gaps += [self.y[c].total_variation(other.y[c]) for c in self.y]
        return max(gaps, default=0.0)


class _PowerTable:
    """Convolution powers of the current edge laws, truncated to `length` entries."""

    def __init__(self, laws: Dict[int, FiniteDist], length: int):
        self.laws = {c: m.dense() for c, m in laws.items()}
        self.length = length
        self._cache: Dict[Tuple[int, int], np.ndarray] = {}

    def power(self, c: int, k: int) -> np.ndarray:
        key = (c, k)
        if key not in self._cache:
            if k == 0:
                self._cache[key] = np.ones(1)
            else:
                self._cache[key] = np.convolve(self.power(c, k - 1), self.laws[c])[:self.length]
        return self._cache[key]

    def sum_law(self, counts: Sequence[Tuple[int, int]]) -> np.ndarray:
        parts = [self.power(c, k) for c, k in counts]
        if not parts:
            return np.ones(1)
        return reduce(lambda a, b: np.convolve(a, b)[:self.length], parts)


def _clipped_residual(s_pmf: np.ndarray, w: int, c: int) -> np.ndarray:
    """Law of [w - S]_0^c on {0, ..., c} given the (possibly truncated) pmf of S."""
    out = np.zeros(c + 1)
    if c == 0:
        out[0] = 1.0
        return out
    cdf = np.cumsum(s_pmf)

    def at_most(k: int) -> float:
        return 0.0 if k < 0 else float(cdf[min(k, cdf.size - 1)])

    out[0] = max(1.0 - at_most(w - 1), 0.0)
    ks = w - np.arange(1, c)
    inside = (ks >= 0) & (ks < s_pmf.size)
    out[1:c][inside] = s_pmf[ks[inside]]
    out[c] = at_most(w - c)
    return out


class _SideKernel:
    """Size-biased slices of one law, prepared for repeated half-steps."""

    def __init__(self, phi: VertexLaw, classes: Sequence[int]):
        self.length = phi.max_w + 1
        self.slices = {}
        for c0 in classes:
            sb = size_biased(phi, c0)
            self.slices[c0] = [(a.p, a.w, tuple(sorted(Counter(a.caps).items()))) for a in sb.atoms]

    def push(self, incoming: Dict[int, FiniteDist]) -> Dict[int, FiniteDist]:
        table = _PowerTable(incoming, self.length)
        out = {}
        for c0, atoms in self.slices.items():
            mix = np.zeros(c0 + 1)
            for p, w, counts in atoms:
                mix += p * _clipped_residual(table.sum_law(counts), w, c0)
            out[c0] = FiniteDist.raw(mix)
        return out


def _classes(phiA: VertexLaw, phiB: VertexLaw) -> List[int]:
    return [c for c in sorted(set(phiA.capacities()) | set(phiB.capacities()))
            if phiA.cap_mass(c) > 0 and phiB.cap_mass(c) > 0]


class _RdeKernel:
    """Both sides of one two-step application, built once per iteration."""

    def __init__(self, phiA: VertexLaw, phiB: VertexLaw, classes: Sequence[int]):
        self.side_a = _SideKernel(phiA, classes)
        self.side_b = _SideKernel(phiB, classes)

    def step(self, pair: EdgeLawPair) -> EdgeLawPair:
        y = self.side_a.push(pair.x)
        x = self.side_b.push(y)
        return EdgeLawPair(x, y)


def rde_step(pair: EdgeLawPair, phiA: VertexLaw, phiB: VertexLaw) -> EdgeLawPair:
    """Y(c) from X through the A side, then X(c) from the new Y through the B side."""
    return _RdeKernel(phiA, phiB, pair.classes).step(pair)


# ----------------------------------------------------------------------
# Limit functional
# ----------------------------------------------------------------------

def _saturation_term(w: int, caps: Tuple[int, ...], y_laws: Dict[int, FiniteDist]) -> float:
    """E[(w - sum_i [w - sum_{j != i} Y_j]_0^{c_i})^+] for a B vertex with w < sum(caps).

    Conditioning on T = sum_j Y_j turns every clipped term into a function of Y_i alone;
    a joint pass over (partial T, partial load) then gives the exact expectation.
    """
    if w == 0:
        return 0.0
    ys = [y_laws[c].dense(c + 1) for c in caps]
    t_pmf = reduce(np.convolve, ys)
    horizon = w + max(caps)
    total = w * float(t_pmf[horizon:].sum())
    for t in range(min(horizon, t_pmf.size)):
        if t_pmf[t] == 0:
            continue
        joint = np.zeros((t + 1, w))
        joint[0, 0] = 1.0
        for c, y in zip(caps, ys):
            nxt = np.zeros_like(joint)
            for val in range(min(c, t) + 1):
                if y[val] == 0:
                    continue
                load = min(max(w - t + val, 0), c)
                if load >= w:
                    continue
                nxt[val:, load:] += y[val] * joint[:t + 1 - val, :w - load]
            joint = nxt
        total += float(np.dot(w - np.arange(w), joint[t]))
    return total


def limit_functional(pair: EdgeLawPair, phiA: VertexLaw, phiB: VertexLaw) -> float:
    """E[min(W^A, sum X_i(C^A_i))] + (E D^A / E D^B) E[(W^B - sum_i [W^B - sum_{j!=i} Y_j]_0^{C_i})^+ 1(W^B < sum C_i)]."""
    mean_a, mean_b = phiA.mean_degree, phiB.mean_degree
    if mean_a == 0:
        return 0.0
    table = _PowerTable(pair.x, phiA.max_w + 1)
    served = 0.0
    for a, counts in zip(phiA.atoms, phiA.cap_counts()):
        if a.w == 0 or a.d == 0:
            continue
        s = table.sum_law(counts)[:a.w]
        served += a.p * (float(np.dot(np.arange(s.size), s)) + a.w * max(1.0 - float(s.sum()), 0.0))
    leftover = 0.0
    for b in phiB.atoms:
        if b.w < sum(b.caps):
            leftover += b.p * _saturation_term(b.w, b.caps, pair.y)
    return served + (mean_a / mean_b) * leftover


def _iterate(pair: EdgeLawPair, kernel: _RdeKernel, tol: float, max_sweeps: int,
             label: str, logger: Optional[AllocLogger]) -> Tuple[EdgeLawPair, int]:
    residual = math.inf
    for sweep in range(1, max_sweeps + 1):
        nxt = kernel.step(pair)
        residual = nxt.distance(pair)
        pair = nxt
        if logger:
            logger.log_sweep(label, sweep, residual)
        if residual <= tol:
            if logger:
                logger.log_fixed_point(label, sweep, residual)
            return pair, sweep
    raise NoConvergence(f"{label} did not reach tol {tol:g} in {max_sweeps} sweeps (residual {residual:.3g})",
                        sweeps=max_sweeps, last=pair)


def limit_bracket(
    phiA: VertexLaw,
    phiB: VertexLaw,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
    strict: bool = True,
    logger: Optional[AllocLogger] = None,
) -> LimitResult:
    """Run the RDE from X = delta_0 and from X = delta_c and evaluate the functional at both.

    With strict=False a start that hits the sweep cap is evaluated at its last iterate
    and the result is flagged as not converged.
    """
    tol = TOLERANCES.rde_tol if tol is None else tol
    max_sweeps = TOLERANCES.rde_max_sweeps if max_sweeps is None else max_sweeps
    if not check_consistency(phiA, phiB):
        raise InconsistentLaws("the two laws induce different edge-capacity laws")
    classes = _classes(phiA, phiB)
    if not classes:
        return LimitResult(value=0.0, value_low_start=0.0, value_high_start=0.0, gap=0.0,
                           sweeps_low_start=0, sweeps_high_start=0)

    kernel = _RdeKernel(phiA, phiB, classes)
    values, sweeps, converged = [], [], True
    for label, start in (("rde-low", EdgeLawPair.low(classes)), ("rde-high", EdgeLawPair.high(classes))):
        try:
            fixed, n = _iterate(start, kernel, tol, max_sweeps, label, logger)
        except NoConvergence as e:
            if strict:
                raise
            if logger:
                logger.warning(f"{label} stopped at the sweep cap", {"sweeps": e.sweeps})
            fixed, n, converged = e.last, e.sweeps, False
        values.append(limit_functional(fixed, phiA, phiB))
        sweeps.append(n)

    low, high = values
    return LimitResult(value=min(low, high), value_low_start=low, value_high_start=high,
                       gap=abs(high - low), sweeps_low_start=sweeps[0], sweeps_high_start=sweeps[1],
                       converged=converged)


def limit_M(phiA: VertexLaw, phiB: VertexLaw, tol: Optional[float] = None,
            logger: Optional[AllocLogger] = None) -> float:
    """Asymptotic M(G_n)/|A_n| for the bipartite configuration model with these laws."""
    return limit_bracket(phiA, phiB, tol=tol, logger=logger).value
