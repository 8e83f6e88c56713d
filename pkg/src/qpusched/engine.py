"""Deterministic discrete-event simulation loop.

Ties arrivals, queue ordering, merging, allocation, execution, and
shot-boundary preemption together. A scheduling pass (reorder queue,
select prefix, merge, allocate, start groups) runs at every arrival,
group completion, quantum expiry, and executed preemption. Events at
equal times process in a fixed kind order (completion before arrival
before quantum expiry before preemption), then by id, so a simulation is
a pure function of its config: identical configs produce byte-identical
traces.

Preemption never lands mid-shot. SRTF marks a running group when a
queued job's remaining demand undercuts the group's; the mark fires at
the group's next shot boundary and is re-validated there. RR and MFQ
expire quanta exactly on shot boundaries; an expired group keeps running
when the queue is empty (work conservation). A preempted merged group
dissolves: each member returns to the queue with its own remaining
shots, and members whose shots are already exhausted complete at the
boundary.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

from .allocator import Occupancy, Placement, allocate
from .chip import Chip
from .merger import Group, group_by_exec_time, select_prefix
from .metrics import MetricsReport, compute_report
from .scheduler import (
    Policy,
    RunningSnapshot,
    SchedulerState,
    order_queue,
    preemption_decision,
    priority_key,
)
from .workload import Job, Workload


class SimulationError(RuntimeError):
    """Invalid simulation input or internal inconsistency."""


@dataclass(frozen=True)
class MergeConfig:
    enabled: bool = True
    alpha: float = 1.5
    backfill: bool = False
    by_total_time: bool = False

    def __post_init__(self):
        if self.alpha < 1:
            raise SimulationError(f"merge alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class SimConfig:
    chip: Chip
    workload: Workload
    policy: Policy
    merge: MergeConfig = MergeConfig()
    exclusive: bool = False
    seed: int = 0
    t_q_mode: str = "t2"
    record_growth_steps: bool = False


# event kind ranks; equal-time ties process in this order
COMPLETE, ARRIVAL, QUANTUM, PREEMPT = 0, 1, 2, 3

_EPS = 1e-9


@dataclass
class DispatchRecord:
    start: float
    group_id: int
    region: tuple[int, ...]
    t_e_group: float
    end: float | None = None
    shots_executed: int = 0


@dataclass
class JobRecord:
    job: Job
    t_comp: float | None = None
    preemptions: int = 0
    requeues: int = 0
    executed_shots: int = 0
    dispatches: list[DispatchRecord] = field(default_factory=list)


@dataclass
class GroupInterval:
    group_id: int
    start: float
    region: tuple[int, ...]
    end: float | None = None


@dataclass
class AllocationRecord:
    time: float
    group_id: int
    root: int
    region: tuple[int, ...]
    r_i: int
    r_a: int
    t_e_group: float
    member_ids: tuple[int, ...]
    steps: list = field(default_factory=list)


class Trace:
    """Ordered event log plus per-job and per-allocation records."""

    def __init__(self, meta: dict):
        self.meta = meta
        self.events: list[dict] = []
        self.jobs: dict[int, JobRecord] = {}
        self.allocations: list[AllocationRecord] = []
        self.intervals: list[GroupInterval] = []

    def log(self, time: float, kind: str, **payload) -> None:
        self.events.append({"time": time, "kind": kind, **payload})

    def completed_jobs(self) -> list[JobRecord]:
        return [rec for rec in self.jobs.values() if rec.t_comp is not None]

    def to_jsonl(self, include_steps: bool = False) -> str:
        """Serialize the trace as JSON lines: meta, events, then job summaries."""
        lines = [json.dumps({"type": "meta", **self.meta})]
        for ev in self.events:
            lines.append(json.dumps({"type": "event", **ev}))
        if include_steps:
            for rec in self.allocations:
                lines.append(
                    json.dumps(
                        {
                            "type": "growth",
                            "group": rec.group_id,
                            "root": rec.root,
                            "steps": [
                                {
                                    "chosen": s.chosen,
                                    "r_i": s.r_i,
                                    "r_a": s.r_a,
                                    "frontier": list(s.frontier),
                                    "frontier_r_i": list(s.frontier_r_i),
                                    "frontier_r_a": list(s.frontier_r_a),
                                }
                                for s in rec.steps
                            ],
                        }
                    )
                )
        for jid in sorted(self.jobs):
            rec = self.jobs[jid]
            lines.append(
                json.dumps(
                    {
                        "type": "job",
                        "id": jid,
                        "n": rec.job.n,
                        "shots": rec.job.shots,
                        "t_sub": rec.job.t_sub,
                        "t_e_shot": rec.job.t_e_shot,
                        "t_comp": rec.t_comp,
                        "preemptions": rec.preemptions,
                        "requeues": rec.requeues,
                        "executed_shots": rec.executed_shots,
                        "dispatches": [
                            {
                                "start": d.start,
                                "end": d.end,
                                "group": d.group_id,
                                "t_e_group": d.t_e_group,
                                "shots_executed": d.shots_executed,
                                "region": list(d.region),
                            }
                            for d in rec.dispatches
                        ],
                    }
                )
            )
        return "\n".join(lines) + "\n"


@dataclass
class _RunningGroup:
    group: Group
    region: tuple[int, ...]
    root: int
    start: float
    t_e: float
    dispatch_shots: int
    completion_time: float
    member_entry_shots: dict[int, int]
    interval_idx: int
    quantum_shots: int = 0       # 0 when the policy grants no quantum
    quantum_start_shot: int = 0
    preempt_pending: bool = False


def remaining_demand(running: _RunningGroup, now: float) -> float:
    """Seconds of execution a running group still needs: remaining shots x t_e."""
    done = int((now - running.start) / running.t_e + _EPS)
    done = min(max(done, 0), running.dispatch_shots)
    return (running.dispatch_shots - done) * running.t_e


class _Simulation:
    def __init__(self, config: SimConfig):
        self.config = config
        self.chip = config.chip
        self.n_qubits = config.chip.n_qubits
        self.policy = config.policy
        self.state = SchedulerState()
        self.occupancy = Occupancy(config.chip)
        self.queue: list[Job] = []
        self.running: dict[int, _RunningGroup] = {}
        self.heap: list[tuple] = []
        self.trace = Trace(
            {
                "chip": config.chip.name,
                "n_qubits": config.chip.n_qubits,
                "policy": config.policy.name,
                "n_jobs": len(config.workload.jobs),
                "seed": config.seed,
                "exclusive": config.exclusive,
                "merge_enabled": config.merge.enabled,
                "merge_alpha": config.merge.alpha,
            }
        )
        self._next_group_id = 0

    # -- event machinery ---------------------------------------------------

    def _push(self, time: float, rank: int, key: int, payload=None) -> None:
        heapq.heappush(self.heap, (time, rank, key, payload))

    def run(self) -> Trace:
        for job in self.config.workload.jobs:
            if job.n > self.n_qubits:
                raise SimulationError(
                    f"job {job.id} demands {job.n} qubits, chip has {self.n_qubits}"
                )
        for job in self.config.workload.jobs:
            self._push(job.t_sub, ARRIVAL, job.id, job)
        while self.heap:
            time, rank, key, payload = heapq.heappop(self.heap)
            if rank == ARRIVAL:
                # drain simultaneous arrivals so one pass sees them all
                batch = [payload]
                while self.heap and self.heap[0][0] == time and self.heap[0][1] == ARRIVAL:
                    batch.append(heapq.heappop(self.heap)[3])
                self._on_arrivals(time, batch)
            elif rank == COMPLETE:
                if key in self.running:
                    self._finish_group(key, time, preempted=False, done_shots=None)
                    self._pass(time)
            elif rank == QUANTUM:
                self._on_quantum(time, key)
            else:
                self._on_preempt_point(time, key, payload)
        incomplete = [jid for jid, rec in self.trace.jobs.items() if rec.t_comp is None]
        if incomplete or len(self.trace.jobs) != len(self.config.workload.jobs):
            raise SimulationError(f"simulation drained with incomplete jobs: {incomplete}")
        return self.trace

    def _on_arrivals(self, now: float, jobs: list[Job]) -> None:
        for job in jobs:
            self.state.ensure(job)
            self.trace.jobs[job.id] = JobRecord(job=job)
            self.queue.append(job)
            self.trace.log(now, "arrival", job=job.id, n=job.n, shots=job.shots)
        self._pass(now)

    def _on_quantum(self, now: float, gid: int) -> None:
        rg = self.running.get(gid)
        if rg is None:
            return
        done = rg.quantum_start_shot + rg.quantum_shots
        if self.policy.name == "mfq":
            for member in rg.group.members:
                st = self.state.jobs[member.id]
                st.mfq_level = min(st.mfq_level + 1, self.policy.mfq_levels - 1)
            if self.queue:
                self._finish_group(gid, now, preempted=True, done_shots=done)
                self._pass(now)
                return
            level = min(self.state.jobs[m.id].mfq_level for m in rg.group.members)
            nxt = self.policy.quantum_shots_for_level(level)
            rg.quantum_start_shot = done
            rg.quantum_shots = nxt or 0
            if nxt is not None and done + nxt < rg.dispatch_shots:
                self._push(rg.start + (done + nxt) * rg.t_e, QUANTUM, gid)
            return
        # round robin
        snap = RunningSnapshot(gid, remaining_demand(rg, now), quantum_exhausted=True)
        marked = preemption_decision(self.policy, [snap], self.queue, now, self.state)
        if gid in marked:
            self._finish_group(gid, now, preempted=True, done_shots=done)
            self._pass(now)
            return
        rg.quantum_start_shot = done
        if done + rg.quantum_shots < rg.dispatch_shots:
            self._push(rg.start + (done + rg.quantum_shots) * rg.t_e, QUANTUM, gid)

    def _on_preempt_point(self, now: float, gid: int, target_shots: int) -> None:
        rg = self.running.get(gid)
        if rg is None:
            return
        rg.preempt_pending = False
        snap = RunningSnapshot(gid, remaining_demand(rg, now), quantum_exhausted=False)
        still = preemption_decision(self.policy, [snap], self.queue, now, self.state)
        if gid not in still:
            return  # the motivating job got served in the meantime
        self._finish_group(gid, now, preempted=True, done_shots=target_shots)
        self._pass(now)

    # -- group lifecycle ----------------------------------------------------

    def _finish_group(self, gid: int, now: float, preempted: bool, done_shots: int | None) -> None:
        rg = self.running.pop(gid)
        self.occupancy.release(gid)
        self.trace.intervals[rg.interval_idx].end = now
        if done_shots is None:
            done_shots = rg.dispatch_shots
        done_shots = min(done_shots, rg.dispatch_shots)
        requeued: list[int] = []
        completed: list[int] = []
        for member in rg.group.members:
            entry = rg.member_entry_shots[member.id]
            executed = min(done_shots, entry)
            st = self.state.jobs[member.id]
            st.remaining_shots = entry - executed
            st.run_time += now - rg.start
            rec = self.trace.jobs[member.id]
            rec.executed_shots += executed
            d = rec.dispatches[-1]
            d.end = now
            d.shots_executed = executed
            if st.remaining_shots == 0:
                rec.t_comp = now
                completed.append(member.id)
            else:
                rec.preemptions += 1
                self.queue.append(member)
                st.rr_seq = self.state.next_rr_seq()
                requeued.append(member.id)
        kind = "preempt" if preempted else "group_complete"
        self.trace.log(
            now, kind, group=gid, shots_done=done_shots,
            completed=completed, requeued=requeued,
        )

    def _start_group(self, placement: Placement, now: float) -> None:
        group = placement.group
        region = placement.region.qubits
        rg = _RunningGroup(
            group=group,
            region=region,
            root=placement.root,
            start=now,
            t_e=group.t_e_group,
            dispatch_shots=group.shots_group,
            completion_time=now + group.shots_group * group.t_e_group,
            member_entry_shots={
                j.id: self.state.jobs[j.id].remaining_shots for j in group.members
            },
            interval_idx=len(self.trace.intervals),
        )
        self.trace.intervals.append(GroupInterval(group_id=group.id, start=now, region=region))
        self.running[group.id] = rg
        self._push(rg.completion_time, COMPLETE, group.id)
        quantum: int | None = None
        if self.policy.name == "rr":
            quantum = self.policy.rr_quantum_shots
        elif self.policy.name == "mfq":
            level = min(self.state.jobs[j.id].mfq_level for j in group.members)
            quantum = self.policy.quantum_shots_for_level(level)
        rg.quantum_shots = quantum or 0
        if quantum is not None and quantum < rg.dispatch_shots:
            self._push(now + quantum * rg.t_e, QUANTUM, group.id)
        for job in group.members:
            st = self.state.jobs[job.id]
            st.last_run = now
            self.trace.jobs[job.id].dispatches.append(
                DispatchRecord(
                    start=now, group_id=group.id, region=region, t_e_group=group.t_e_group
                )
            )
        self.trace.allocations.append(
            AllocationRecord(
                time=now,
                group_id=group.id,
                root=placement.root,
                region=region,
                r_i=placement.stats.r_i,
                r_a=placement.stats.r_a,
                t_e_group=group.t_e_group,
                member_ids=tuple(j.id for j in group.members),
                steps=placement.steps if self.config.record_growth_steps else [],
            )
        )
        self.trace.log(
            now, "dispatch", group=group.id, members=[j.id for j in group.members],
            root=placement.root, region=list(region),
            r_i=placement.stats.r_i, r_a=placement.stats.r_a,
            shots=rg.dispatch_shots, t_e_group=group.t_e_group,
        )

    # -- the scheduling pass --------------------------------------------------

    def _mfq_aging(self, now: float) -> None:
        for job in self.queue:
            st = self.state.ensure(job)
            if st.mfq_level > 0 and self.state.t_wait(job, now) > self.policy.mfq_aging_s:
                st.mfq_level = 0

    def _pass(self, now: float) -> None:
        if self.queue:
            if self.policy.name == "mfq":
                self._mfq_aging(now)
            ordered = order_queue(self.policy, self.queue, now, self.n_qubits, self.state)
            if self.config.exclusive:
                prefix = [] if self.running else ordered[:1]
                merging = False
            else:
                free_cap = self.n_qubits - self.occupancy.owned_count()
                prefix = select_prefix(ordered, free_cap, self.config.merge.backfill)
                merging = self.config.merge.enabled
            if prefix:
                keys = {
                    j.id: priority_key(self.policy, j, now, self.n_qubits, self.state)
                    for j in prefix
                }
                shots = {j.id: self.state.jobs[j.id].remaining_shots for j in prefix}
                if merging:
                    groups = group_by_exec_time(
                        prefix,
                        self.config.merge.alpha,
                        by_total=self.config.merge.by_total_time,
                        start_id=self._next_group_id,
                        shots_by_id=shots,
                        keys_by_id=keys,
                    )
                else:
                    groups = [
                        Group.build(self._next_group_id + i, [j], shots, keys)
                        for i, j in enumerate(prefix)
                    ]
                    groups.sort(key=lambda g: g.priority_key)
                self._next_group_id += len(groups)
                outcome = allocate(
                    self.chip,
                    self.occupancy,
                    groups,
                    t_q_mode=self.config.t_q_mode,
                    record_steps=True,
                )
                placed_ids: set[int] = set()
                for p in outcome.placed:
                    self._start_group(p, now)
                    placed_ids.update(j.id for j in p.group.members)
                for conflict in outcome.conflicts:
                    self.trace.jobs[conflict["requeued_job"]].requeues += 1
                    self.trace.log(now, "requeue", **conflict)
                if placed_ids:
                    self.queue = [j for j in self.queue if j.id not in placed_ids]
        if self.policy.name == "srtf" and self.queue and self.running:
            snaps = [
                RunningSnapshot(gid, remaining_demand(rg, now), quantum_exhausted=False)
                for gid, rg in sorted(self.running.items())
            ]
            for gid in sorted(
                preemption_decision(self.policy, snaps, self.queue, now, self.state)
            ):
                self._schedule_preempt(gid, now)

    def _schedule_preempt(self, gid: int, now: float) -> None:
        rg = self.running[gid]
        if rg.preempt_pending:
            return
        k = math.ceil((now - rg.start) / rg.t_e - _EPS)  # next shot boundary, float-guarded
        # a freshly started group always executes at least one shot, otherwise
        # a mark at its own dispatch instant would preempt it with zero
        # progress and the pass could loop at one timestamp forever
        k = min(max(k, 1), rg.dispatch_shots)
        if k >= rg.dispatch_shots:
            return  # would land at completion; let it finish
        rg.preempt_pending = True
        self._push(rg.start + k * rg.t_e, PREEMPT, gid, k)


def run(config: SimConfig) -> tuple[Trace, MetricsReport]:
    """Simulate the config to quiescence and compute its metrics."""
    sim = _Simulation(config)
    trace = sim.run()
    report = compute_report(trace, config.chip, t_q_mode=config.t_q_mode)
    return trace, report
