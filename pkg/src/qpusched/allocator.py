"""Connected-region qubit allocation with inter-group buffers.

Each dispatched group gets a connected region of exactly its demanded
size. Regions of distinct groups may never touch: a free qubit adjacent
to someone else's region is ineligible (it acts as a buffer), enforced as
a candidate filter rather than by reserving qubits.

Placement of one group:

1. Root choice: among eligible qubits, maximize the summed hop distance
   to the roots of already-placed and still-running groups, then (on
   ties) the graph eccentricity; remaining ties go to the smallest error
   score, then the lowest id. With no prior roots this reduces to pure
   eccentricity maximization, pushing the first root to the chip rim.
2. Growth: starting from the root, repeatedly add the frontier qubit
   that maximizes the region's internal-to-total edge ratio r_i/r_a
   (compared exactly, by integer cross-multiplication). Ties prefer the
   smallest error score E_Q = (1 - exp(-t_e/T_Q)) * E_meas, then the
   candidate whose addition enables the best next-step ratio, then the
   lowest id.
3. If the frontier empties before the region is full, the growth stalls
   and names the groups whose regions boxed it in; the lower-priority
   side of the conflict is bounced back to the queue (merged groups shed
   only their lowest-priority member) and the pass restarts. Running
   groups are never disturbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._kernels import eval_candidates
from .chip import Chip, QubitSpec
from .merger import Group
from .workload import Job


class AllocationError(RuntimeError):
    """Violated allocation precondition or invariant."""


@dataclass(frozen=True)
class RegionStats:
    """Edge counts of an allocated region.

    r_i counts edges with both endpoints inside; r_a counts every edge
    incident to the region (internal plus boundary).
    """

    r_i: int
    r_a: int

    def __post_init__(self):
        if not 0 <= self.r_i <= self.r_a:
            raise AllocationError(f"inconsistent region stats r_i={self.r_i}, r_a={self.r_a}")

    @property
    def ratio(self) -> float:
        if self.r_a == 0:
            return 1.0  # an isolated region with no incident edges touches nothing outside
        return self.r_i / self.r_a


@dataclass(frozen=True)
class Region:
    """Connected qubit set owned by one group."""

    group_id: int
    qubits: tuple[int, ...]


@dataclass(frozen=True)
class GrowthStep:
    """One greedy growth decision, recorded for replay verification."""

    chosen: int
    r_i: int
    r_a: int
    frontier: tuple[int, ...]
    frontier_r_i: tuple[int, ...]
    frontier_r_a: tuple[int, ...]


@dataclass
class GrowthResult:
    """Grown region (with its step log) or a stall naming the blockers."""

    region: Region | None
    stats: RegionStats | None
    steps: list[GrowthStep]
    blockers: frozenset[int] = frozenset()

    @property
    def ok(self) -> bool:
        return self.region is not None


class Occupancy:
    """Mutable map from physical qubits to owning groups.

    owner[q] is the owning group id, or -1 when free. One simulation owns
    its Occupancy exclusively; clone() produces an independent scratch
    copy for speculative allocation passes.
    """

    def __init__(self, chip: Chip):
        self.chip = chip
        self.owner = np.full(chip.n_qubits, -1, dtype=np.int32)
        self.regions: dict[int, tuple[int, ...]] = {}
        self.roots: dict[int, int] = {}

    def place(self, group_id: int, qubits: Iterable[int], root: int) -> None:
        qs = sorted(int(q) for q in qubits)
        if group_id in self.regions:
            raise AllocationError(f"group {group_id} is already placed")
        arr = np.array(qs, dtype=np.int64)
        if np.any(self.owner[arr] >= 0):
            raise AllocationError("placement overlaps an owned qubit")
        self.owner[arr] = group_id
        self.regions[group_id] = tuple(qs)
        self.roots[group_id] = int(root)

    def release(self, group_id: int) -> None:
        qs = self.regions.pop(group_id)
        self.roots.pop(group_id)
        self.owner[np.array(qs, dtype=np.int64)] = -1

    def owned_count(self) -> int:
        return int((self.owner >= 0).sum())

    def free_count(self) -> int:
        return self.chip.n_qubits - self.owned_count()

    def buffer_qubits(self) -> set[int]:
        """Free qubits adjacent to an owned qubit (unusable while it runs)."""
        out: set[int] = set()
        owner = self.owner
        for a, b in self.chip.graph.edges:
            if owner[a] >= 0 and owner[b] < 0:
                out.add(b)
            elif owner[b] >= 0 and owner[a] < 0:
                out.add(a)
        return out

    def clone(self) -> "Occupancy":
        other = Occupancy.__new__(Occupancy)
        other.chip = self.chip
        other.owner = self.owner.copy()
        other.regions = dict(self.regions)
        other.roots = dict(self.roots)
        return other


def qubit_error(spec: QubitSpec, t_e_group: float, t_q_mode: str = "t2") -> float:
    """Error score E_Q = (1 - exp(-t_e/T_Q)) * E_meas for tie-breaking.

    t_e_group is in seconds; coherence times are stored in microseconds.
    """
    if t_e_group < 0:
        raise AllocationError(f"duration must be >= 0, got {t_e_group}")
    t_us = t_e_group * 1e6
    return (1.0 - math.exp(-t_us / spec.coherence_us(t_q_mode))) * spec.readout_error


def _qubit_error_array(chip: Chip, t_e_group: float, t_q_mode: str) -> np.ndarray:
    t_us = t_e_group * 1e6
    coh = chip.coherence_array(t_q_mode)
    return (1.0 - np.exp(-t_us / coh)) * chip.readout_array


def region_ratio(chip: Chip, region: Iterable[int]) -> RegionStats:
    """Internal and incident edge counts of an arbitrary qubit set."""
    qubits = {int(q) for q in region}
    if not qubits:
        raise AllocationError("empty region")
    if any(q < 0 or q >= chip.n_qubits for q in qubits):
        raise AllocationError("region qubit outside the chip")
    r_i = 0
    boundary = 0
    for a, b in chip.graph.edges:
        a_in = a in qubits
        b_in = b in qubits
        if a_in and b_in:
            r_i += 1
        elif a_in or b_in:
            boundary += 1
    return RegionStats(r_i=r_i, r_a=r_i + boundary)


def _cmp_frac(r1: int, a1: int, r2: int, a2: int) -> int:
    """Compare r1/a1 with r2/a2 exactly; positive denominators assumed."""
    lhs = int(r1) * int(a2)
    rhs = int(r2) * int(a1)
    return (lhs > rhs) - (lhs < rhs)


def _foreign_owners(owner: np.ndarray, indptr, indices, q: int, group_id: int) -> list[int]:
    nbrs = indices[indptr[q]:indptr[q + 1]]
    own = owner[nbrs]
    return [int(o) for o in own[(own >= 0) & (own != group_id)]]


def _choose_root(
    chip: Chip,
    occupancy: Occupancy,
    t_e_group: float,
    prior_roots: Sequence[int],
    t_q_mode: str,
    exclude: set[int] | None = None,
) -> tuple[int | None, frozenset[int]]:
    """Best root for the next group, or (None, blockers) when none exists."""
    owner = occupancy.owner
    indptr, indices = chip.graph.csr
    free = np.flatnonzero(owner < 0)
    eligible: list[int] = []
    blockers: set[int] = set()
    for q in free:
        q = int(q)
        if exclude and q in exclude:
            continue
        foreign = _foreign_owners(owner, indptr, indices, q, group_id=-2)
        if foreign:
            blockers.update(foreign)
        else:
            eligible.append(q)
    if not eligible:
        if not blockers:
            blockers = set(occupancy.regions.keys())
        return None, frozenset(blockers)
    elig = np.array(eligible, dtype=np.int64)
    dist = chip.distances
    if prior_roots:
        score = dist.hops[np.ix_(elig, np.array(sorted(prior_roots), dtype=np.int64))].sum(axis=1)
    else:
        score = np.zeros(elig.size, dtype=np.int64)
    ecc = dist.eccentricity[elig]
    keep = score == score.max()
    keep &= ecc == ecc[keep].max()
    cands = elig[keep]
    if cands.size > 1:
        eq = _qubit_error_array(chip, t_e_group, t_q_mode)[cands]
        cands = cands[eq == eq.min()]
    return int(cands.min()), frozenset()


def select_roots(
    chip: Chip,
    groups: Sequence[Group],
    occupancy: Occupancy,
    *,
    t_q_mode: str = "t2",
) -> dict[int, int]:
    """Pick one root per group, in priority order, spreading them apart.

    Each root maximizes the summed hop distance to the roots already
    chosen in this pass plus the roots of running groups; the first root
    (no priors) maximizes eccentricity. Raises AllocationError when some
    group has no eligible qubit left.
    """
    roots: dict[int, int] = {}
    priors: list[int] = [occupancy.roots[g] for g in sorted(occupancy.roots)]
    chosen: set[int] = set()
    for group in groups:
        root, _ = _choose_root(
            chip, occupancy, group.t_e_group, priors, t_q_mode, exclude=chosen
        )
        if root is None:
            raise AllocationError(f"no eligible root qubit for group {group.id}")
        roots[group.id] = root
        priors.append(root)
        chosen.add(root)
    return roots


def grow_region(
    chip: Chip,
    occupancy: Occupancy,
    root: int,
    demand: int,
    t_e_group: float,
    *,
    group_id: int,
    t_q_mode: str = "t2",
    record_steps: bool = True,
) -> GrowthResult:
    """Grow a connected region of ``demand`` qubits from ``root``.

    Greedy: every step adds the frontier candidate maximizing the
    post-addition r_i/r_a (exact comparison); ties prefer minimum E_Q,
    then the best next-step achievable ratio, then the lowest id. The
    frontier never contains qubits adjacent to another group's region.
    Returns a stall naming the blocking groups if the frontier empties
    before the region is complete.
    """
    n = chip.n_qubits
    if not 1 <= demand <= n:
        raise AllocationError(f"demand {demand} outside 1..{n}")
    owner = occupancy.owner
    indptr, indices = chip.graph.csr
    degrees = chip.graph.degrees
    if owner[root] >= 0:
        raise AllocationError(f"root {root} is not free")
    if _foreign_owners(owner, indptr, indices, root, group_id):
        raise AllocationError(f"root {root} is adjacent to another group's region")

    eq = _qubit_error_array(chip, t_e_group, t_q_mode)
    in_region = np.zeros(n, dtype=np.uint8)
    in_region[root] = 1
    region = [root]
    r_i = 0
    sum_deg = int(degrees[root])
    frontier: set[int] = set()
    blockers: set[int] = set()

    def extend_frontier(q: int) -> None:
        for w in chip.graph.neighbors[q]:
            if owner[w] >= 0 or in_region[w] or w in frontier:
                continue
            foreign = _foreign_owners(owner, indptr, indices, w, group_id)
            if foreign:
                blockers.update(foreign)
            else:
                frontier.add(w)

    extend_frontier(root)
    steps: list[GrowthStep] = []

    while len(region) < demand:
        if not frontier:
            blocked = blockers or set(occupancy.regions.keys())
            return GrowthResult(region=None, stats=None, steps=steps, blockers=frozenset(blocked))
        cand = np.fromiter(sorted(frontier), dtype=np.int32, count=len(frontier))
        links, _ = eval_candidates(indptr, indices, owner, group_id, in_region, cand)
        ri_new = r_i + links
        ra_new = (sum_deg + degrees[cand]) - ri_new
        best = [0]
        for i in range(1, len(cand)):
            c = _cmp_frac(ri_new[i], ra_new[i], ri_new[best[0]], ra_new[best[0]])
            if c > 0:
                best = [i]
            elif c == 0:
                best.append(i)
        if len(best) > 1:
            errs = eq[cand[best]]
            floor = errs.min()
            best = [i for i in best if eq[cand[i]] == floor]
        if len(best) > 1 and len(region) + 1 < demand:
            best = _lookahead_filter(
                chip, owner, group_id, in_region, ri_new, sum_deg, frontier,
                cand, best, indptr, indices, degrees,
            )
        chosen_i = min(best)
        chosen = int(cand[chosen_i])
        if record_steps:
            steps.append(
                GrowthStep(
                    chosen=chosen,
                    r_i=int(ri_new[chosen_i]),
                    r_a=int(ra_new[chosen_i]),
                    frontier=tuple(int(c) for c in cand),
                    frontier_r_i=tuple(int(v) for v in ri_new),
                    frontier_r_a=tuple(int(v) for v in ra_new),
                )
            )
        r_i = int(ri_new[chosen_i])
        sum_deg += int(degrees[chosen])
        in_region[chosen] = 1
        region.append(chosen)
        frontier.discard(chosen)
        extend_frontier(chosen)

    stats = RegionStats(r_i=r_i, r_a=sum_deg - r_i)
    return GrowthResult(
        region=Region(group_id=group_id, qubits=tuple(sorted(region))),
        stats=stats,
        steps=steps,
    )


def _lookahead_filter(
    chip, owner, group_id, in_region, ri_new, sum_deg, frontier, cand, best,
    indptr, indices, degrees,
) -> list[int]:
    """Among tied candidates, keep those enabling the best next-step ratio."""
    outcomes: list[tuple[int, int]] = []
    for i in best:
        c = int(cand[i])
        ri_c = int(ri_new[i])
        sum_c = sum_deg + int(degrees[c])
        in_region[c] = 1
        nxt = set(frontier)
        nxt.discard(c)
        for w in chip.graph.neighbors[c]:
            if owner[w] >= 0 or in_region[w] or w in nxt:
                continue
            if not _foreign_owners(owner, indptr, indices, w, group_id):
                nxt.add(w)
        if nxt:
            arr = np.fromiter(sorted(nxt), dtype=np.int32, count=len(nxt))
            links2, _ = eval_candidates(indptr, indices, owner, group_id, in_region, arr)
            r2 = ri_c + links2
            a2 = (sum_c + degrees[arr]) - r2
            bi = 0
            for t in range(1, len(arr)):
                if _cmp_frac(r2[t], a2[t], r2[bi], a2[bi]) > 0:
                    bi = t
            outcomes.append((int(r2[bi]), int(a2[bi])))
        else:
            outcomes.append((-1, 1))
        in_region[c] = 0
    keep = [0]
    for j in range(1, len(best)):
        c = _cmp_frac(outcomes[j][0], outcomes[j][1], outcomes[keep[0]][0], outcomes[keep[0]][1])
        if c > 0:
            keep = [j]
        elif c == 0:
            keep.append(j)
    return [best[j] for j in keep]


@dataclass(frozen=True)
class EvictionDecision:
    """Outcome of a stall: which job leaves which group."""

    target_group_id: int
    job: Job
    whole_group: bool


def resolve_conflict(
    stalled: Group,
    blockers: Iterable[int],
    placed_this_pass: dict[int, Group],
    running_ids: set[int] | None = None,
) -> EvictionDecision:
    """Decide who yields when a growth stalls.

    Candidates for eviction are the blockers placed in this pass; running
    groups are immune. The lowest-priority group among {stalled, worst
    such blocker} loses: a singleton is requeued whole, a merged group
    sheds only its lowest-priority member and retries with reduced
    demand. With only running blockers the stalled side yields.
    """
    pass_blockers = [placed_this_pass[b] for b in blockers if b in placed_this_pass]
    if pass_blockers:
        worst = max(pass_blockers, key=lambda g: g.priority_key)
        loser = stalled if stalled.priority_key > worst.priority_key else worst
    else:
        loser = stalled
    job = loser.worst_member()
    return EvictionDecision(
        target_group_id=loser.id, job=job, whole_group=len(loser.members) == 1
    )


@dataclass
class Placement:
    group: Group
    region: Region
    root: int
    stats: RegionStats
    steps: list[GrowthStep]


@dataclass
class AllocationOutcome:
    """Placements committed to the occupancy plus the jobs bounced back."""

    placed: list[Placement]
    requeued: list[Job]
    conflicts: list[dict] = field(default_factory=list)


def allocate(
    chip: Chip,
    occupancy: Occupancy,
    groups: Sequence[Group],
    *,
    t_q_mode: str = "t2",
    record_steps: bool = True,
) -> AllocationOutcome:
    """Place every group or requeue the losers of irreconcilable conflicts.

    Groups are processed in priority order, roots interleaved with
    growth. On a stall the conflict is resolved, the evicted job leaves
    the pass, and the whole pass restarts against the original occupancy.
    Committed placements appear in the passed occupancy on return.
    """
    work = list(groups)
    requeued: list[Job] = []
    conflicts: list[dict] = []
    while True:
        scratch = occupancy.clone()
        placements: list[Placement] = []
        stalled: Group | None = None
        stall_blockers: frozenset[int] = frozenset()
        for group in work:
            root, blockers = _choose_root(
                chip, scratch, group.t_e_group, list(scratch.roots.values()), t_q_mode
            )
            if root is None:
                stalled, stall_blockers = group, blockers
                break
            result = grow_region(
                chip, scratch, root, group.demand, group.t_e_group,
                group_id=group.id, t_q_mode=t_q_mode, record_steps=record_steps,
            )
            if not result.ok:
                stalled, stall_blockers = group, result.blockers
                break
            scratch.place(group.id, result.region.qubits, root)
            placements.append(Placement(group, result.region, root, result.stats, result.steps))
        if stalled is None:
            for p in placements:
                occupancy.place(p.group.id, p.region.qubits, p.root)
            return AllocationOutcome(placed=placements, requeued=requeued, conflicts=conflicts)
        decision = resolve_conflict(
            stalled, stall_blockers, {p.group.id: p.group for p in placements}
        )
        requeued.append(decision.job)
        conflicts.append(
            {
                "stalled_group": stalled.id,
                "evicted_group": decision.target_group_id,
                "requeued_job": decision.job.id,
                "whole_group": decision.whole_group,
            }
        )
        new_work: list[Group] = []
        for g in work:
            if g.id != decision.target_group_id:
                new_work.append(g)
            elif not decision.whole_group:
                new_work.append(g.without(decision.job.id))
        work = new_work
