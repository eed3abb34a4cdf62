"""
Data models for input files, parameters, run configuration and result records.
"""
import json
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import Tolerances
from src.errors import InvalidParams


def format_real(value: Any) -> str:
    """Reals are printed with 12 significant digits."""
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


# ----------------------------------------------------------------------
# Graph file
# ----------------------------------------------------------------------

class VertexSpec(BaseModel):
    """One vertex of a graph file."""
    model_config = ConfigDict(extra="forbid")

    id: str
    b: int = Field(ge=0)
    side: Optional[Literal["A", "B"]] = None


class EdgeSpec(BaseModel):
    """One edge of a graph file; capacity is an integer or "inf"."""
    model_config = ConfigDict(extra="forbid")

    u: str
    v: str
    c: Union[int, Literal["inf"]]

    @field_validator("c")
    @classmethod
    def _non_negative(cls, value):
        if value != "inf" and value < 0:
            raise ValueError("edge capacity must be non-negative or \"inf\"")
        return value


class GraphFile(BaseModel):
    """Top-level graph file."""
    model_config = ConfigDict(extra="forbid")

    vertices: List[VertexSpec]
    edges: List[EdgeSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_references(self):
        ids = [v.id for v in self.vertices]
        if len(set(ids)) != len(ids):
            raise ValueError("vertex ids must be unique")
        known = set(ids)
        for edge in self.edges:
            if edge.u not in known or edge.v not in known:
                raise ValueError(f"edge {edge.u}-{edge.v} references an unknown vertex")
            if edge.u == edge.v:
                raise ValueError(f"self-loop on vertex {edge.u}")
        return self


# ----------------------------------------------------------------------
# Vertex law files
# ----------------------------------------------------------------------

class AtomSpec(BaseModel):
    """One atom (degree, vertex capacity, edge capacities) of a vertex law."""
    model_config = ConfigDict(extra="forbid")

    p: float = Field(ge=0.0)
    d: int = Field(ge=0)
    w: int = Field(ge=0)
    caps: List[int]

    @model_validator(mode="after")
    def _caps_match_degree(self):
        if len(self.caps) != self.d:
            raise ValueError(f"atom lists {len(self.caps)} capacities for degree {self.d}")
        if any(c < 0 for c in self.caps):
            raise ValueError("edge capacities must be non-negative")
        return self


class PoissonSpec(BaseModel):
    """Poisson-degree marker: Poi(rate) degree, fixed w and edge capacity."""
    model_config = ConfigDict(extra="forbid")

    rate: float = Field(ge=0.0)
    w: int = Field(ge=0)
    cap: int = Field(ge=0)
    trunc: float = Field(default=1e-12, gt=0.0, lt=1.0)


class LawFile(BaseModel):
    """A vertex law: explicit atoms or a Poisson marker, never both."""
    model_config = ConfigDict(extra="forbid")

    atoms: Optional[List[AtomSpec]] = None
    poisson: Optional[PoissonSpec] = None

    @model_validator(mode="after")
    def _exclusive(self):
        if (self.atoms is None) == (self.poisson is None):
            raise ValueError("a law file holds exactly one of \"atoms\" or \"poisson\"")
        if self.atoms is not None:
            total = sum(a.p for a in self.atoms)
            if not self.atoms or abs(total - 1.0) > 1e-9:
                raise ValueError(f"atom probabilities sum to {total}, expected 1")
        return self


# ----------------------------------------------------------------------
# CDN scenario files
# ----------------------------------------------------------------------

class CdnAtomSpec(BaseModel):
    """Server atom (d stored contents, upload w) or content atom (d replicas, w requests)."""
    model_config = ConfigDict(extra="forbid")

    p: float = Field(ge=0.0)
    d: int = Field(ge=0)
    w: int = Field(ge=0)
    segments: int = Field(default=1, ge=1)


class CdnPoissonSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate: float = Field(ge=0.0)
    w: int = Field(ge=0)
    segments: int = Field(default=1, ge=1)
    trunc: float = Field(default=1e-12, gt=0.0, lt=1.0)


class CdnSideSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    atoms: Optional[List[CdnAtomSpec]] = None
    poisson: Optional[CdnPoissonSpec] = None

    @model_validator(mode="after")
    def _exclusive(self):
        if (self.atoms is None) == (self.poisson is None):
            raise ValueError("a scenario side holds exactly one of \"atoms\" or \"poisson\"")
        if self.atoms is not None:
            total = sum(a.p for a in self.atoms)
            if not self.atoms or abs(total - 1.0) > 1e-9:
                raise ValueError(f"atom probabilities sum to {total}, expected 1")
        return self

    def segment_counts(self) -> List[int]:
        if self.poisson is not None:
            return [self.poisson.segments]
        return [a.segments for a in self.atoms]


class CdnScenarioFile(BaseModel):
    """Servers (side A) and contents (side B) of a CDN scenario."""
    model_config = ConfigDict(extra="forbid")

    servers: CdnSideSpec
    contents: CdnSideSpec
    coded: bool = False

    @model_validator(mode="after")
    def _servers_are_uncoded(self):
        if any(s != 1 for s in self.servers.segment_counts()):
            raise ValueError("segments apply to contents only")
        return self


# ----------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------

class CuckooParams(BaseModel):
    """(k,l,r)-orientability of h-uniform hypergraphs."""
    model_config = ConfigDict(frozen=True)

    h: int = Field(gt=0)
    k: int = Field(gt=0)
    l: int = Field(gt=0)
    r: int = Field(gt=0)

    def violations(self) -> List[str]:
        """The parameter constraints that fail, as readable inequalities."""
        failed = []
        if not self.k >= self.r:
            failed.append(f"k >= r fails ({self.k} < {self.r})")
        if not self.l >= self.r:
            failed.append(f"l >= r fails ({self.l} < {self.r})")
        if not (self.h - 1) * self.r >= self.l:
            failed.append(f"(h-1)r >= l fails ({(self.h - 1) * self.r} < {self.l})")
        return failed

    @property
    def tight(self) -> bool:
        """k = r and (h-1)r = l together, i.e. k+(h-2)r-l = 0; plain 2-choice cuckoo hashing is tight."""
        return self.k + (self.h - 2) * self.r - self.l == 0

    def check(self) -> "CuckooParams":
        failed = self.violations()
        if failed:
            raise InvalidParams("; ".join(failed))
        return self


# ----------------------------------------------------------------------
# Run configuration and CSV records
# ----------------------------------------------------------------------

class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI run."""
    command: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    jobs: int = 1
    environment: str = "development"
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: Optional[str] = None

    def to_record(self) -> str:
        return "# config " + json.dumps(self.model_dump(mode="json"), sort_keys=True)


class CsvRecord(BaseModel):
    """A result row; subclasses declare the columns as fields."""

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.model_fields.keys())

    def to_csv_row(self) -> str:
        return ",".join(format_real(getattr(self, name)) for name in type(self).model_fields)


class ThresholdRecord(CsvRecord):
    kind: Literal["threshold", "simulation"]
    h: int
    k: int
    l: int
    r: int
    tau: float
    value: float
    tol: float
    trials: int = 0
    n: int = 0
    runtime_s: float = 0.0


class CdnRecord(CsvRecord):
    capacity: float
    value_low_start: float
    value_high_start: float
    gap: float
    units: Literal["requests_per_server", "fragments_per_server"]
    coded: bool
    runtime_s: float = 0.0


class LlnRecord(CsvRecord):
    kind: Literal["trial", "summary"]
    trial: int
    seed: int
    n_a: int
    m_over_a: float
    prediction: float
    rel_error: float
    runtime_s: float = 0.0


class SolveRecord(CsvRecord):
    method: Literal["flow", "bp0", "bp", "enum", "leaf"]
    m: float
    witness: bool
    sweeps: int = 0
    estimate: Optional[float] = None
    agrees_with_flow: Optional[bool] = None
    runtime_s: float = 0.0


class OccupancyRecord(CsvRecord):
    method: Literal["bp0", "bp"]
    vertex: str
    occupancy: float


class RunReport(BaseModel):
    """Response from an experiment run."""
    rows: List[CsvRecord] = Field(default_factory=list)
    summary: Dict[str, float] = Field(default_factory=dict)
    checks_passed: bool = True
    processing_log: str = ""
    success: bool
    error_message: Optional[str] = None

    def to_csv(self, record_type: type) -> str:
        """Header row always, then one line per record."""
        lines = [record_type.csv_header()]
        lines.extend(row.to_csv_row() for row in self.rows)
        return "\n".join(lines)


class LimitResult(BaseModel):
    """Limit functional evaluated at the fixed points reached from both extremal starts."""
    value: float
    value_low_start: float
    value_high_start: float
    gap: float
    sweeps_low_start: int
    sweeps_high_start: int
    converged: bool = True

    def to_table_row(self) -> str:
        return (f"| {format_real(self.value)} | {format_real(self.value_low_start)} "
                f"| {format_real(self.value_high_start)} | {format_real(self.gap)} | {self.converged} |")
