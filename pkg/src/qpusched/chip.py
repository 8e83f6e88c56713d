"""Quantum-chip topology and calibration model.

A chip is a connected coupling graph (vertices = physical qubits, edges =
allowed two-qubit interactions) plus per-qubit calibration: coherence times
in microseconds and a readout-error probability. Chips, and the distance
matrices derived from them, are immutable after construction and safe to
share between concurrently running simulations.

Chip files are JSON documents::

    {"name": "...",
     "qubits": [{"id": 0, "t1_us": 120.0, "t2_us": 100.0, "readout_error": 0.01}, ...],
     "edges": [[0, 1], [1, 2], ...]}

``t1_us`` is optional. Indices are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import bfs_all_pairs


class ChipError(ValueError):
    """Malformed or inconsistent chip description."""


@dataclass(frozen=True)
class QubitSpec:
    """Calibration data for one physical qubit. Durations in microseconds."""

    id: int
    t2_us: float
    readout_error: float
    t1_us: float | None = None

    def __post_init__(self):
        if self.id < 0:
            raise ChipError(f"qubit id must be non-negative, got {self.id}")
        if not self.t2_us > 0:
            raise ChipError(f"qubit {self.id}: t2 must be positive, got {self.t2_us}")
        if self.t1_us is not None and not self.t1_us > 0:
            raise ChipError(f"qubit {self.id}: t1 must be positive, got {self.t1_us}")
        if not 0.0 <= self.readout_error <= 1.0:
            raise ChipError(
                f"qubit {self.id}: readout_error must lie in [0, 1], "
                f"got {self.readout_error}"
            )

    def coherence_us(self, mode: str = "t2") -> float:
        """Coherence time used by error formulas: plain t2 or min(t1, t2)."""
        if mode == "t2" or self.t1_us is None:
            return self.t2_us
        if mode == "min_t1_t2":
            return min(self.t1_us, self.t2_us)
        raise ChipError(f"unknown coherence mode {mode!r}")


@dataclass(frozen=True)
class CouplingGraph:
    """Undirected, connected graph over qubit indices 0..n_qubits-1."""

    n_qubits: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ChipError(f"chip needs at least one qubit, got {self.n_qubits}")
        seen = set()
        normalized = []
        for e in self.edges:
            a, b = int(e[0]), int(e[1])
            if a == b:
                raise ChipError(f"self-loop edge [{a}, {b}]")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ChipError(f"edge [{a}, {b}] index out of range (n={self.n_qubits})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ChipError(f"duplicate edge [{a}, {b}]")
            seen.add(key)
            normalized.append(key)
        object.__setattr__(self, "edges", tuple(sorted(normalized)))
        if not self._is_connected():
            raise ChipError("coupling graph is disconnected")

    def _is_connected(self) -> bool:
        if self.n_qubits == 1:
            return True
        adj: list[list[int]] = [[] for _ in range(self.n_qubits)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_qubits

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n_qubits)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return tuple(tuple(sorted(v)) for v in adj)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) int32 arrays for the kernel functions."""
        indptr = np.zeros(self.n_qubits + 1, dtype=np.int32)
        for i, nbrs in enumerate(self.neighbors):
            indptr[i + 1] = indptr[i] + len(nbrs)
        indices = np.empty(indptr[-1], dtype=np.int32)
        for i, nbrs in enumerate(self.neighbors):
            indices[indptr[i]:indptr[i + 1]] = nbrs
        return indptr, indices

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr, _ = self.csr
        return np.diff(indptr).astype(np.int64)


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs shortest-path hop distances of a connected chip."""

    hops: np.ndarray = field(repr=False)

    def d(self, a: int, b: int) -> int:
        return int(self.hops[a, b])

    @cached_property
    def eccentricity(self) -> np.ndarray:
        """Per-qubit eccentricity: max hop distance to any other qubit."""
        return self.hops.max(axis=1)

    def __eq__(self, other):
        return isinstance(other, DistanceMatrix) and np.array_equal(self.hops, other.hops)


@dataclass(frozen=True)
class Chip:
    """Named coupling graph plus one QubitSpec per qubit."""

    name: str
    graph: CouplingGraph
    specs: tuple[QubitSpec, ...]

    def __post_init__(self):
        if len(self.specs) != self.graph.n_qubits:
            raise ChipError(
                f"{len(self.specs)} qubit specs for a {self.graph.n_qubits}-qubit graph"
            )
        for i, spec in enumerate(self.specs):
            if spec.id != i:
                raise ChipError(f"qubit specs must cover ids 0..n-1 in order; slot {i} has id {spec.id}")

    @property
    def n_qubits(self) -> int:
        return self.graph.n_qubits

    @cached_property
    def distances(self) -> DistanceMatrix:
        indptr, indices = self.graph.csr
        return DistanceMatrix(bfs_all_pairs(indptr, indices, self.n_qubits))

    def coherence_array(self, mode: str = "t2") -> np.ndarray:
        """Per-qubit coherence time in microseconds under the given mode."""
        return np.array([s.coherence_us(mode) for s in self.specs], dtype=np.float64)

    @cached_property
    def readout_array(self) -> np.ndarray:
        return np.array([s.readout_error for s in self.specs], dtype=np.float64)


def load_chip(source) -> Chip:
    """Parse and validate a chip file.

    ``source`` may be bytes, a JSON string, or a readable file object.
    Raises ChipError for malformed documents or invariant violations.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ChipError(f"malformed chip document: {exc}") from exc
    if not isinstance(doc, dict) or "qubits" not in doc or "edges" not in doc:
        raise ChipError("chip document must be an object with 'qubits' and 'edges'")
    try:
        entries = sorted(doc["qubits"], key=lambda q: int(q["id"]))
        specs = tuple(
            QubitSpec(
                id=int(q["id"]),
                t2_us=float(q["t2_us"]),
                readout_error=float(q["readout_error"]),
                t1_us=float(q["t1_us"]) if q.get("t1_us") is not None else None,
            )
            for q in entries
        )
    except (KeyError, TypeError) as exc:
        raise ChipError(f"malformed qubit record: {exc}") from exc
    graph = CouplingGraph(n_qubits=len(specs), edges=tuple(tuple(e) for e in doc["edges"]))
    return Chip(name=str(doc.get("name", "chip")), graph=graph, specs=specs)


def dump_chip(chip: Chip) -> dict:
    """Chip as a JSON-serializable document; load_chip(json.dumps(...)) round-trips."""
    qubits = []
    for s in chip.specs:
        rec: dict = {"id": s.id, "t2_us": s.t2_us, "readout_error": s.readout_error}
        if s.t1_us is not None:
            rec["t1_us"] = s.t1_us
        qubits.append(rec)
    return {
        "name": chip.name,
        "qubits": qubits,
        "edges": [list(e) for e in chip.graph.edges],
    }


DEFAULT_TEMPLATE = QubitSpec(id=0, t2_us=100.0, readout_error=0.01)


def generate_grid(
    rows: int,
    cols: int,
    spec_template: QubitSpec | None = None,
    noise_seed: int | None = None,
    name: str | None = None,
) -> Chip:
    """Build a rows x cols lattice chip with 4-neighbor coupling.

    Qubits are indexed row-major. With ``noise_seed`` given, each qubit's
    t2 (and t1, if the template has one) is jittered by a uniform +-20%
    factor and readout_error by +-50%, deterministically for the seed.
    """
    if rows < 1 or cols < 1:
        raise ChipError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    template = spec_template if spec_template is not None else DEFAULT_TEMPLATE
    n = rows * cols
    rng = np.random.default_rng(noise_seed) if noise_seed is not None else None
    specs = []
    for q in range(n):
        t2 = template.t2_us
        ro = template.readout_error
        t1 = template.t1_us
        if rng is not None:
            t2 = t2 * rng.uniform(0.8, 1.2)
            ro = float(np.clip(ro * rng.uniform(0.5, 1.5), 1e-9, 1.0))
            if t1 is not None:
                t1 = t1 * rng.uniform(0.8, 1.2)
        specs.append(QubitSpec(id=q, t2_us=t2, readout_error=ro, t1_us=t1))
    edges = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                edges.append((q, q + 1))
            if r + 1 < rows:
                edges.append((q, q + cols))
    graph = CouplingGraph(n_qubits=n, edges=tuple(edges))
    return Chip(name=name or f"grid-{rows}x{cols}", graph=graph, specs=tuple(specs))


def all_pairs_distances(chip: Chip) -> DistanceMatrix:
    """Hop distances between every qubit pair (BFS from each qubit)."""
    return chip.distances
