import pytest

from lbsim.config import ScenarioConfig, ServerSpec
from lbsim.engine import replay_completions
from lbsim.servers import (
    FIFO_WORKERS,
    PROCESSOR_SHARING,
    Flow,
    Server,
    expected_finish_load,
)
from lbsim.traffic import TrafficModel, ExponentialWorkload


def drive(server, jobs):
    """Run (arrival, workload) jobs through a lone server; returns fid -> t_complete."""
    spec = ServerSpec(server.speed, server.workers, discipline=server.discipline)
    scenario = ScenarioConfig(
        servers=[spec],
        lb_count=1,
        traffic=TrafficModel(1.0, ExponentialWorkload(1.0), 1.0),
    )
    flows = [Flow(i, t, w, "H", lb_id=0, server_id=0) for i, (t, w) in enumerate(jobs)]
    return replay_completions(flows, scenario)


def test_single_flow_completes_at_w_over_v():
    done = drive(Server(0, 2.0, 1), [(0.0, 1.0)])
    assert done[0] == pytest.approx(0.5)


def test_fifo_queueing_two_flows_one_worker():
    done = drive(Server(0, 1.0, 1), [(0.0, 1.0), (0.0, 1.0)])
    assert done[0] == pytest.approx(1.0)
    assert done[1] == pytest.approx(2.0)


def test_processor_sharing_equal_split():
    done = drive(Server(0, 1.0, 4, PROCESSOR_SHARING), [(0.0, 1.0), (0.0, 1.0)])
    assert done[0] == pytest.approx(2.0)
    assert done[1] == pytest.approx(2.0)


def test_queued_flow_starts_when_head_completes():
    s = Server(0, 1.0, 1)
    f1, f2 = Flow(1, 0.0, 1.0, "H"), Flow(2, 0.0, 2.0, "H")
    comps = s.admit(f1, 0.0)
    assert comps[0].time == pytest.approx(1.0)
    assert s.admit(f2, 0.0) == []  # queued
    _, comps = s.complete(1, 1.0, 0)
    assert comps[0].flow_id == 2
    assert comps[0].time == pytest.approx(3.0)
    assert f2.t_service_start == pytest.approx(1.0)


def test_idle_slot_after_empty_queue():
    s = Server(0, 1.0, 1)
    s.admit(Flow(1, 0.0, 1.0, "H"), 0.0)
    _, comps = s.complete(1, 1.0, 0)
    assert comps == [] and s.busy_workers() == 0


def test_completion_of_non_active_flow_errors():
    s = Server(0, 1.0, 1)
    with pytest.raises(RuntimeError):
        s.complete(42, 1.0, 0)


def test_busy_workers_counts_and_ps_cap():
    s = Server(0, 1.0, 4)
    for i in range(3):
        s.admit(Flow(i, 0.0, 5.0, "H"), 0.0)
    assert s.busy_workers() == 3
    ps = Server(1, 1.0, 4, PROCESSOR_SHARING)
    for i in range(6):
        ps.admit(Flow(i, 0.0, 5.0, "H"), 0.0)
    assert ps.busy_workers() == 4
    assert Server(2, 1.0, 1).busy_workers() == 0


def test_expected_finish_load():
    s = Server(0, 2.0, 2)
    s.admit(Flow(0, 0.0, 1.0, "H"), 0.0)
    s.admit(Flow(1, 0.5, 1.0, "H"), 0.5)
    assert expected_finish_load(s, (0.0, 1.0)) == pytest.approx(1.0)
    assert expected_finish_load(s, (2.0, 3.0)) == 0.0
    s2 = Server(1, 1.0, 2)
    for k in range(5):
        s2.admit(Flow(k, 0.1 * k, 0.2, "H"), 0.1 * k)
    assert expected_finish_load(s2, (0.0, 1.0)) == pytest.approx(1.0)


def test_doubling_speed_halves_every_fct():
    jobs = [(0.0, 1.3), (0.1, 0.4), (0.15, 2.0), (0.9, 0.7)]
    slow = drive(Server(0, 1.0, 2), jobs)
    # halved arrival times too, so the whole schedule compresses by 2
    fast = drive(Server(0, 2.0, 2), [(t / 2, w) for t, w in jobs])
    for fid in slow:
        t_slow = slow[fid] - jobs[fid][0]
        t_fast = fast[fid] - jobs[fid][0] / 2
        assert t_fast == pytest.approx(t_slow / 2)


def test_work_conservation_fifo():
    s = Server(0, 1.0, 2)
    for i in range(5):
        s.admit(Flow(i, 0.0, 1.0, "H"), 0.0)
    # slots full whenever the queue is non-empty
    assert len(s.queue) > 0 and s.busy_workers() == s.workers


def test_invalid_server_params():
    with pytest.raises(ValueError):
        Server(0, 0.0, 1)
    with pytest.raises(ValueError):
        Server(0, 1.0, 0)
    with pytest.raises(ValueError):
        Server(0, 1.0, 1, "round_robin")
