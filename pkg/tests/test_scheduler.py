"""Policy formulas, queue orderings, and preemption-mark tests."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpusched.scheduler import (
    Policy,
    RunningSnapshot,
    SchedulerState,
    eta,
    order_queue,
    preemption_decision,
    priority_key,
    q_response_ratio,
    response_ratio,
)
from qpusched.workload import Job

from conftest import make_job


def job_with_demand(jid, n, t_e_total, t_sub=0.0, shots=10):
    """A job whose total service demand is exactly t_e_total seconds."""
    return Job(id=jid, n=n, shots=shots, t_sub=t_sub, t_e_shot=t_e_total / shots)


class TestFormulas:
    def test_eta_full_chip(self):
        assert eta(make_job(n=100), 100) == 1.0

    def test_eta_fraction(self):
        assert eta(make_job(n=20), 100) == pytest.approx(0.2)

    def test_eta_oversized(self):
        with pytest.raises(ValueError, match="oversized"):
            eta(make_job(n=101), 100)

    def test_response_ratio(self):
        assert response_ratio(0.0, 10.0) == 1.0
        assert response_ratio(30.0, 10.0) == 4.0
        assert response_ratio(10.0, 10.0) == 2.0

    def test_response_ratio_zero_service(self):
        with pytest.raises(ValueError):
            response_ratio(1.0, 0.0)

    def test_q_response_ratio(self):
        assert q_response_ratio(30.0, 10.0, 0.2) == pytest.approx(3.2)
        assert q_response_ratio(0.0, 10.0, 0.2) == pytest.approx(0.2)

    @given(
        t_wait=st.floats(0, 1e4, allow_nan=False),
        t_ser=st.floats(0.001, 1e4, allow_nan=False),
    )
    @settings(max_examples=100, deadline=None)
    def test_q_ratio_reduces_at_full_eta(self, t_wait, t_ser):
        assert q_response_ratio(t_wait, t_ser, 1.0) == response_ratio(t_wait, t_ser)


class TestPolicy:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            Policy("lifo")

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            Policy("rr", rr_quantum_shots=0)
        with pytest.raises(ValueError):
            Policy("mfq", mfq_levels=1)
        with pytest.raises(ValueError):
            Policy("mfq", mfq_aging_s=0.0)

    def test_mfq_level_quanta(self):
        p = Policy("mfq", mfq_levels=3, mfq_base_quantum_shots=50)
        assert p.quantum_shots_for_level(0) == 50
        assert p.quantum_shots_for_level(1) == 100
        assert p.quantum_shots_for_level(2) is None  # bottom runs to completion


class TestOrdering:
    def test_fcfs_by_submission(self):
        jobs = [make_job(0, t_sub=3.0), make_job(1, t_sub=1.0), make_job(2, t_sub=2.0)]
        ordered = order_queue(Policy("fcfs"), jobs, 5.0, 100, SchedulerState())
        assert [j.id for j in ordered] == [1, 2, 0]

    def test_qsjf_vs_sjf(self):
        # A: small but long; B: big but short. QSJF prefers A, SJF prefers B.
        a = job_with_demand(0, n=10, t_e_total=10.0)
        b = job_with_demand(1, n=50, t_e_total=3.0)
        st_ = SchedulerState()
        key_a = priority_key(Policy("qsjf"), a, 0.0, 100, st_)
        key_b = priority_key(Policy("qsjf"), b, 0.0, 100, st_)
        assert key_a[0] == pytest.approx(1.0)
        assert key_b[0] == pytest.approx(1.5)
        assert [j.id for j in order_queue(Policy("qsjf"), [a, b], 0.0, 100, st_)] == [0, 1]
        assert [j.id for j in order_queue(Policy("sjf"), [a, b], 0.0, 100, st_)] == [1, 0]

    def test_qhrrf_example(self):
        # both waited 30s, t_ser 10s; the full-chip job outranks the small one
        a = job_with_demand(0, n=100, t_e_total=10.0)
        b = job_with_demand(1, n=20, t_e_total=10.0)
        st_ = SchedulerState()
        key_a = priority_key(Policy("qhrrf"), a, 30.0, 100, st_)
        key_b = priority_key(Policy("qhrrf"), b, 30.0, 100, st_)
        assert key_a[0] == pytest.approx(-4.0)
        assert key_b[0] == pytest.approx(-3.2)
        ordered = order_queue(Policy("qhrrf"), [b, a], 30.0, 100, st_)
        assert [j.id for j in ordered] == [0, 1]

    def test_hrrf_prefers_waited(self):
        fresh = job_with_demand(0, n=2, t_e_total=10.0, t_sub=30.0)
        waited = job_with_demand(1, n=2, t_e_total=10.0, t_sub=0.0)
        ordered = order_queue(Policy("hrrf"), [fresh, waited], 30.0, 100, SchedulerState())
        assert [j.id for j in ordered] == [1, 0]

    def test_empty_queue(self):
        assert order_queue(Policy("fcfs"), [], 0.0, 100, SchedulerState()) == []

    def test_tie_break_by_id(self):
        a = make_job(3, n=4, shots=10, t_sub=1.0, t_e=0.1)
        b = make_job(7, n=4, shots=10, t_sub=1.0, t_e=0.1)
        for name in ("fcfs", "sjf", "qsjf", "srtf", "hrrf", "qhrrf", "mfq"):
            ordered = order_queue(Policy(name), [b, a], 2.0, 100, SchedulerState())
            assert [j.id for j in ordered] == [3, 7], name

    def test_rr_ring_order_follows_arrival_then_requeue(self):
        a, b = make_job(0, t_sub=0.0), make_job(1, t_sub=1.0)
        st_ = SchedulerState()
        st_.ensure(a)
        st_.ensure(b)
        assert [j.id for j in order_queue(Policy("rr"), [b, a], 2.0, 100, st_)] == [0, 1]
        st_.jobs[0].rr_seq = st_.next_rr_seq()  # a consumed its quantum, to the back
        assert [j.id for j in order_queue(Policy("rr"), [b, a], 2.0, 100, st_)] == [1, 0]

    def test_mfq_levels_order_before_arrival(self):
        a, b = make_job(0, t_sub=0.0), make_job(1, t_sub=1.0)
        st_ = SchedulerState()
        st_.ensure(a).mfq_level = 1
        st_.ensure(b)
        ordered = order_queue(Policy("mfq"), [a, b], 2.0, 100, st_)
        assert [j.id for j in ordered] == [1, 0]


# random queue strategy: ids unique, attribute ranges exercise every key
queue_strategy = st.lists(
    st.tuples(
        st.integers(1, 64),               # n
        st.integers(1, 500),              # shots
        st.floats(0.0, 50.0),             # t_sub
        st.floats(1e-4, 0.05),            # t_e_shot
    ),
    min_size=0,
    max_size=12,
).map(
    lambda rows: [
        Job(id=i, n=r[0], shots=r[1], t_sub=r[2], t_e_shot=r[3])
        for i, r in enumerate(rows)
    ]
)


class TestOrderingProperties:
    @given(queue_strategy, st.sampled_from(["fcfs", "sjf", "qsjf", "srtf", "rr", "mfq", "hrrf", "qhrrf"]))
    @settings(max_examples=120, deadline=None)
    def test_permutation_and_idempotence(self, jobs, name):
        st_ = SchedulerState()
        now = 60.0
        ordered = order_queue(Policy(name), jobs, now, 64, st_)
        assert sorted(j.id for j in ordered) == sorted(j.id for j in jobs)
        assert order_queue(Policy(name), ordered, now, 64, st_) == ordered

    @given(queue_strategy)
    @settings(max_examples=80, deadline=None)
    def test_reduction_identities_at_full_chip(self, jobs):
        # with every n = N, the qubit-aware variants equal their parents
        jobs = [Job(j.id, 64, j.shots, j.t_sub, j.t_e_shot) for j in jobs]
        st_ = SchedulerState()
        now = 60.0
        assert order_queue(Policy("qhrrf"), jobs, now, 64, st_) == order_queue(
            Policy("hrrf"), jobs, now, 64, st_
        )
        assert order_queue(Policy("qsjf"), jobs, now, 64, st_) == order_queue(
            Policy("sjf"), jobs, now, 64, st_
        )

    @given(queue_strategy)
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance(self, jobs):
        # doubling every service demand leaves size-based orderings unchanged
        scaled = [Job(j.id, j.n, j.shots, j.t_sub, j.t_e_shot * 2.0) for j in jobs]
        for name in ("sjf", "qsjf", "srtf"):
            st_ = SchedulerState()
            a = [j.id for j in order_queue(Policy(name), jobs, 60.0, 64, st_)]
            st2 = SchedulerState()
            b = [j.id for j in order_queue(Policy(name), scaled, 60.0, 64, st2)]
            assert a == b

    @given(
        t_ser=st.floats(0.01, 100.0),
        w1=st.floats(0.0, 1e3),
        extra=st.floats(0.001, 1e3),
        eta_=st.floats(0.01, 1.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_keys_strictly_improve_with_wait(self, t_ser, w1, extra, eta_):
        assert response_ratio(w1 + extra, t_ser) > response_ratio(w1, t_ser)
        assert q_response_ratio(w1 + extra, t_ser, eta_) > q_response_ratio(w1, t_ser, eta_)


class TestPreemptionDecision:
    def test_non_preemptive_policies_never_mark(self):
        running = [RunningSnapshot(0, 5.0, quantum_exhausted=True)]
        queue = [make_job(1, shots=1, t_e=0.001)]
        st_ = SchedulerState()
        st_.ensure(queue[0])
        for name in ("fcfs", "sjf", "qsjf", "hrrf", "qhrrf", "mfq"):
            assert preemption_decision(Policy(name), running, queue, 1.0, st_) == set()

    def test_srtf_marks_on_shorter_arrival(self):
        running = [RunningSnapshot(0, 5.0)]
        short = make_job(1, shots=100, t_e=0.01)  # demand 1.0 < 5.0
        st_ = SchedulerState()
        st_.ensure(short)
        assert preemption_decision(Policy("srtf"), running, [short], 0.0, st_) == {0}

    def test_srtf_strictness(self):
        running = [RunningSnapshot(0, 1.0)]
        equal = make_job(1, shots=100, t_e=0.01)  # demand exactly 1.0
        st_ = SchedulerState()
        st_.ensure(equal)
        assert preemption_decision(Policy("srtf"), running, [equal], 0.0, st_) == set()

    def test_rr_marks_only_when_queue_nonempty(self):
        exhausted = [RunningSnapshot(0, 5.0, quantum_exhausted=True)]
        job = make_job(1)
        st_ = SchedulerState()
        st_.ensure(job)
        assert preemption_decision(Policy("rr"), exhausted, [job], 0.0, st_) == {0}
        assert preemption_decision(Policy("rr"), exhausted, [], 0.0, st_) == set()
        fresh = [RunningSnapshot(0, 5.0, quantum_exhausted=False)]
        assert preemption_decision(Policy("rr"), fresh, [job], 0.0, st_) == set()


class TestWaitAccounting:
    def test_wait_excludes_run_time(self):
        job = make_job(0, t_sub=2.0)
        st_ = SchedulerState()
        st_.ensure(job).run_time = 3.0
        assert st_.t_wait(job, 10.0) == pytest.approx(5.0)
