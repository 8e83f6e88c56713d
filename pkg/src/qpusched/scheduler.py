"""Queue-ordering policies and shot-boundary preemption rules.

Eight policies order the waiting queue:

  fcfs   -- submission time
  sjf    -- total service demand t_E = shots * t_e_shot
  qsjf   -- eta * t_E, with eta = n / N the single-program qubit fraction
  srtf   -- remaining service demand (preemptive)
  rr     -- ring order with a fixed quantum, counted in shots (preemptive)
  mfq    -- multilevel feedback: level quanta q, 2q, ..., run-to-completion
            at the bottom; demote on expiry, promote on aging (preemptive
            above the bottom level)
  hrrf   -- highest response ratio (t_wait + t_ser) / t_ser first
  qhrrf  -- highest quantum response ratio (t_wait + eta * t_ser) / t_ser first

Priority keys are tuples; SMALLER sorts first. Every key ends with
(t_sub, id), so orderings are total, deterministic, and replayable.
Waiting time is wall time minus accumulated running time, so preempted
jobs are not credited (or charged) for the time they actually ran.

Preemption may only land between shots: a mark issued here takes effect at
the next shot boundary of the running group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .workload import Job, service_demand

POLICY_NAMES = ("fcfs", "sjf", "qsjf", "srtf", "rr", "mfq", "hrrf", "qhrrf")


@dataclass(frozen=True)
class Policy:
    """A named scheduling policy plus its parameters."""

    name: str
    rr_quantum_shots: int = 100
    mfq_levels: int = 3
    mfq_base_quantum_shots: int = 100
    mfq_aging_s: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.lower())
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}")
        if self.rr_quantum_shots < 1:
            raise ValueError("rr quantum must be at least one shot")
        if self.mfq_levels < 2:
            raise ValueError("mfq needs at least two levels")
        if self.mfq_base_quantum_shots < 1:
            raise ValueError("mfq base quantum must be at least one shot")
        if not self.mfq_aging_s > 0:
            raise ValueError("mfq aging threshold must be positive")

    @property
    def preemptive(self) -> bool:
        return self.name in ("srtf", "rr", "mfq")

    def quantum_shots_for_level(self, level: int) -> int | None:
        """Shot quantum at an MFQ level; None at the bottom (run to completion)."""
        if level >= self.mfq_levels - 1:
            return None
        return self.mfq_base_quantum_shots * (2 ** level)


@dataclass
class JobState:
    """Mutable per-job bookkeeping owned by one simulation."""

    remaining_shots: int
    run_time: float = 0.0     # seconds actually spent executing
    mfq_level: int = 0
    rr_seq: int = 0           # ring position; reassigned when requeued
    last_run: float = -1.0    # start time of the most recent dispatch


class SchedulerState:
    """Per-job states plus the round-robin ring counter."""

    def __init__(self):
        self.jobs: dict[int, JobState] = {}
        self._rr_counter = 0

    def next_rr_seq(self) -> int:
        self._rr_counter += 1
        return self._rr_counter

    def ensure(self, job: Job) -> JobState:
        st = self.jobs.get(job.id)
        if st is None:
            st = JobState(remaining_shots=job.shots, rr_seq=self.next_rr_seq())
            self.jobs[job.id] = st
        return st

    def t_wait(self, job: Job, now: float) -> float:
        st = self.ensure(job)
        return max(0.0, now - job.t_sub - st.run_time)

    def remaining_demand(self, job: Job) -> float:
        return self.ensure(job).remaining_shots * job.t_e_shot


def eta(job: Job, n_qubits: int) -> float:
    """Qubit fraction n / N claimed by a single program, in (0, 1]."""
    if job.n > n_qubits:
        raise ValueError(f"oversized job: needs {job.n} qubits, chip has {n_qubits}")
    return job.n / n_qubits


def response_ratio(t_wait: float, t_ser: float) -> float:
    """(t_wait + t_ser) / t_ser; >= 1, grows as the job waits."""
    if t_ser <= 0:
        raise ValueError(f"service time must be positive, got {t_ser}")
    return (t_wait + t_ser) / t_ser


def q_response_ratio(t_wait: float, t_ser: float, eta_: float) -> float:
    """(t_wait + eta * t_ser) / t_ser; reduces to response_ratio at eta = 1."""
    if t_ser <= 0:
        raise ValueError(f"service time must be positive, got {t_ser}")
    return (t_wait + eta_ * t_ser) / t_ser


def priority_key(
    policy: Policy, job: Job, now: float, n_qubits: int, state: SchedulerState
) -> tuple:
    """Ordering key for a queued job; smaller sorts first.

    Ties always break by (t_sub, id).
    """
    st = state.ensure(job)
    name = policy.name
    if name == "fcfs":
        primary = job.t_sub
    elif name == "sjf":
        primary = service_demand(job)
    elif name == "qsjf":
        primary = eta(job, n_qubits) * service_demand(job)
    elif name == "srtf":
        primary = st.remaining_shots * job.t_e_shot
    elif name == "rr":
        primary = st.rr_seq
    elif name == "mfq":
        primary = st.mfq_level
    elif name == "hrrf":
        primary = -response_ratio(state.t_wait(job, now), service_demand(job))
    else:  # qhrrf
        primary = -q_response_ratio(
            state.t_wait(job, now), service_demand(job), eta(job, n_qubits)
        )
    return (primary, job.t_sub, job.id)


def order_queue(
    policy: Policy,
    queue: Sequence[Job],
    now: float,
    n_qubits: int,
    state: SchedulerState,
) -> list[Job]:
    """Queue sorted by priority; stable, does not mutate the input."""
    return sorted(queue, key=lambda j: priority_key(policy, j, now, n_qubits, state))


@dataclass(frozen=True)
class RunningSnapshot:
    """What preemption_decision needs to know about a running group."""

    group_id: int
    remaining_demand: float
    quantum_exhausted: bool = False


def preemption_decision(
    policy: Policy,
    running: Iterable[RunningSnapshot],
    queue: Sequence[Job],
    now: float,
    state: SchedulerState,
) -> set[int]:
    """Group ids to preempt at their next shot boundary.

    Only SRTF and RR mark groups here: SRTF when some queued job's full
    service demand is strictly below a group's remaining demand, RR when a
    group has consumed its quantum and the queue is non-empty (the
    work-conserving exception keeps a lone group running). All other
    policies return the empty set; MFQ demotion/preemption is driven by
    its quantum-expiry events, not by this check.
    """
    if policy.name == "srtf":
        if not queue:
            return set()
        shortest = min(state.remaining_demand(j) for j in queue)
        return {
            snap.group_id for snap in running if shortest < snap.remaining_demand
        }
    if policy.name == "rr":
        if not queue:
            return set()
        return {snap.group_id for snap in running if snap.quantum_exhausted}
    return set()
