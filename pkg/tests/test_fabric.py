from __future__ import annotations

import json
import sys
import threading
import time
from pathlib import Path

import pytest

from hyperfab.clock import ManualClock
from hyperfab.fabric import (Broker, BrokerError, Constraint, EvaluatorError,
                             ObjectiveSpec, RewardRecord, Task, TaskState,
                             UnknownTaskError, WorkerPool, combine_reward, evaluate,
                             deploy_probe, pareto_front)
from hyperfab.space import Configuration, parse_space, sample
from hyperfab.strategies import FidelityBudget

EVALUATORS = Path(__file__).parent / "evaluators"


def make_task(broker: Broker, space, seed=0) -> Task:
    return broker.publish("job", sample(space, seed), FidelityBudget(1.0, True))


@pytest.fixture
def space():
    return parse_space("x: {type: float, range: [0.0...1.0]}", space_id="line")


class TestBroker:
    def test_reserve_is_mutually_exclusive(self, space):
        broker = Broker()
        for seed in range(8):
            make_task(broker, space, seed)
        reservations: list[int] = []
        errors: list[Exception] = []

        def grab(worker: str):
            try:
                while True:
                    task = broker.reserve(worker)
                    if task is None:
                        return
                    reservations.append(task.task_id)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=grab, args=(f"w{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert sorted(reservations) == list(range(1, 9))  # each task exactly once

    def test_lease_expiry_requeues_with_attempt_bump(self, space):
        clock = ManualClock()
        broker = Broker(clock=clock, lease_ttl=10.0)
        task = make_task(broker, space)
        assert broker.reserve("w1").task_id == task.task_id
        clock.advance(11.0)
        assert broker.sweep_leases() == [task.task_id]
        fresh = broker.get(task.task_id)
        assert fresh.state is TaskState.PENDING
        assert fresh.attempts == 2

    def test_max_attempts_then_failed(self, space):
        clock = ManualClock()
        broker = Broker(clock=clock, lease_ttl=10.0, max_attempts=2)
        task = make_task(broker, space)
        for _ in range(2):
            assert broker.reserve("w1") is not None
            clock.advance(11.0)
            broker.sweep_leases()
        final = broker.get(task.task_id)
        assert final.state is TaskState.FAILED
        assert "attempts" in final.failure

    def test_late_report_after_requeue_first_write_wins(self, space):
        clock = ManualClock()
        broker = Broker(clock=clock, lease_ttl=10.0)
        task = make_task(broker, space)
        broker.reserve("w1")
        clock.advance(11.0)
        broker.sweep_leases()
        # w2 picks up the requeued task, then w1's late success arrives first
        broker.reserve("w2")
        assert broker.report(task.task_id, "w1", result=RewardRecord({"score": 1.0}))
        assert broker.get(task.task_id).state is TaskState.COMPLETED
        # w2 finishes later: ignored duplicate
        assert not broker.report(task.task_id, "w2", result=RewardRecord({"score": 2.0}))
        assert broker.get(task.task_id).result.train_metrics["score"] == 1.0

    def test_unknown_task_id(self):
        with pytest.raises(UnknownTaskError):
            Broker().report(42, "w1", failure="nope")

    def test_report_requires_exactly_one_outcome(self, space):
        broker = Broker()
        task = make_task(broker, space)
        broker.reserve("w1")
        with pytest.raises(BrokerError):
            broker.report(task.task_id, "w1")

    def test_timeout_label_does_not_block_completion(self, space):
        broker = Broker()
        task = make_task(broker, space)
        broker.reserve("w1")
        broker.mark_timeout(task.task_id)
        assert broker.report(task.task_id, "w1", result=RewardRecord({"score": 0.0}))
        final = broker.get(task.task_id)
        assert final.timed_out and final.state is TaskState.COMPLETED


class TestEvaluatorProtocol:
    def test_sleep_evaluator_roundtrip(self, space, tmp_path):
        script = tmp_path / "eval.py"
        script.write_text(
            "import json,sys\n"
            "job = json.loads(sys.stdin.readline())\n"
            "print(json.dumps({'metrics': {'score': 0.5}}))\n")
        broker = Broker()
        task = make_task(broker, space)
        record = evaluate([sys.executable, str(script)], task)
        assert record.train_metrics == {"score": 0.5}

    def test_branin_evaluator_at_known_minimum(self, tmp_path):
        space = parse_space("x1: {type: float, range: [-5.0...10.0]}\n"
                            "x2: {type: float, range: [0.0...15.0]}\n", space_id="branin")
        broker = Broker()
        config = Configuration(assignments={"x1": 3.141592653589793, "x2": 2.275},
                               space_id="branin", space_version=1)
        task = broker.publish("job", config, FidelityBudget(1.0, True))
        record = evaluate([sys.executable, str(EVALUATORS / "branin.py")], task)
        assert record.train_metrics["score"] == pytest.approx(0.397887, abs=1e-4)

    def test_nonzero_exit_is_failure_with_diagnostic(self, space, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text("import sys; sys.stderr.write('boom'); sys.exit(1)\n")
        broker = Broker()
        task = make_task(broker, space)
        with pytest.raises(EvaluatorError, match="boom"):
            evaluate([sys.executable, str(script)], task)

    def test_protocol_violation_is_failure(self, space, tmp_path):
        script = tmp_path / "junk.py"
        script.write_text("print('not json at all')\n")
        broker = Broker()
        task = make_task(broker, space)
        with pytest.raises(EvaluatorError, match="malformed"):
            evaluate([sys.executable, str(script)], task)

    def test_wall_clock_cap_enforced(self, space, tmp_path):
        script = tmp_path / "slow.py"
        script.write_text("import time; time.sleep(5)\n")
        broker = Broker()
        task = make_task(broker, space)
        with pytest.raises(EvaluatorError, match="wall-clock"):
            evaluate([sys.executable, str(script)], task, timeout=0.3)

    def test_probe_merges_metrics(self, tmp_path):
        probe = tmp_path / "probe.py"
        probe.write_text(
            "import json,sys\n"
            "doc = json.loads(sys.stdin.readline())\n"
            "print(json.dumps({'metrics': {'latency_ms': 12.5}}))\n")
        metrics = deploy_probe("model.bin", [sys.executable, str(probe)])
        assert metrics == {"latency_ms": 12.5}

    def test_worker_runs_probe_and_merges_deploy_metrics(self, space, tmp_path):
        evaluator = tmp_path / "train.py"
        evaluator.write_text(
            "import json,sys\n"
            "job = json.loads(sys.stdin.readline())\n"
            "print(json.dumps({'metrics': {'acc': 0.9}, 'artifact': 'model.bin'}))\n")
        probe = tmp_path / "probe.py"
        probe.write_text(
            "import json,sys\n"
            "doc = json.loads(sys.stdin.readline())\n"
            "assert doc['artifact'] == 'model.bin'\n"
            "print(json.dumps({'metrics': {'latency_ms': 12.5}}))\n")
        broker = Broker()
        task = make_task(broker, space)
        pool = WorkerPool(broker, [sys.executable, str(evaluator)], n_workers=1,
                          probe_cmd=[sys.executable, str(probe)], poll_interval=0.005)
        pool.start()
        deadline = time.time() + 10
        while time.time() < deadline and not broker.get(task.task_id).resolved:
            time.sleep(0.02)
        pool.stop()
        record = broker.get(task.task_id).result
        assert record.train_metrics == {"acc": 0.9}
        assert record.deploy_metrics == {"latency_ms": 12.5}
        assert not record.probe_failed

    def test_probe_failure_sets_unavailable_flag(self, space, tmp_path):
        evaluator = tmp_path / "train.py"
        evaluator.write_text(
            "import json,sys\n"
            "job = json.loads(sys.stdin.readline())\n"
            "print(json.dumps({'metrics': {'acc': 0.9}, 'artifact': 'model.bin'}))\n")
        probe = tmp_path / "probe.py"
        probe.write_text("import sys; sys.exit(1)\n")
        broker = Broker()
        task = make_task(broker, space)
        pool = WorkerPool(broker, [sys.executable, str(evaluator)], n_workers=1,
                          probe_cmd=[sys.executable, str(probe)], poll_interval=0.005)
        pool.start()
        deadline = time.time() + 10
        while time.time() < deadline and not broker.get(task.task_id).resolved:
            time.sleep(0.02)
        pool.stop()
        record = broker.get(task.task_id).result
        assert record.probe_failed
        assert record.deploy_metrics == {}
        # downstream: the constrained metric behaves as if at limit x 2
        spec = ObjectiveSpec(objective="acc",
                             constraints=(Constraint("latency_ms", 40.0, 1.0),))
        assert combine_reward(record, spec) == pytest.approx(0.9 - 1.0)


class TestWorkerPool:
    def test_workers_drain_queue(self, space):
        broker = Broker(lease_ttl=5.0)
        tasks = [make_task(broker, space, seed) for seed in range(12)]
        pool = WorkerPool(broker, lambda task: {"score": task.task_id * 0.1}, n_workers=4,
                          poll_interval=0.005)
        pool.start()
        deadline = time.time() + 10
        while time.time() < deadline:
            if all(broker.get(t.task_id).resolved for t in tasks):
                break
            time.sleep(0.01)
        pool.stop()
        assert all(broker.get(t.task_id).state is TaskState.COMPLETED for t in tasks)

    def test_killed_worker_task_reexecutes_elsewhere(self, space):
        broker = Broker(lease_ttl=0.3)
        release = threading.Event()
        first_started = threading.Event()

        def evaluator(task: Task):
            if not release.is_set():
                first_started.set()
                time.sleep(0.4)  # long enough for the lease to lapse after the kill
            return {"score": float(task.config.assignments["x"])}

        task = make_task(broker, space)
        pool = WorkerPool(broker, evaluator, n_workers=2, poll_interval=0.005)
        pool.start()
        assert first_started.wait(5.0)
        pool.kill([0, 1][:1])  # kill whichever got it first; one worker stays alive
        release.set()
        deadline = time.time() + 10
        while time.time() < deadline and not broker.get(task.task_id).resolved:
            broker.sweep_leases()
            time.sleep(0.02)
        pool.stop()
        final = broker.get(task.task_id)
        assert final.state is TaskState.COMPLETED
        assert final.attempts >= 1

    def test_evaluator_exception_reports_failure(self, space):
        broker = Broker()

        def evaluator(task):
            raise RuntimeError("cuda out of memory")

        task = make_task(broker, space)
        pool = WorkerPool(broker, evaluator, n_workers=1, poll_interval=0.005)
        pool.start()
        deadline = time.time() + 5
        while time.time() < deadline and not broker.get(task.task_id).resolved:
            time.sleep(0.01)
        pool.stop()
        final = broker.get(task.task_id)
        assert final.state is TaskState.FAILED
        assert "cuda out of memory" in final.failure

    def test_idle_workers_survive_empty_queue(self, space):
        broker = Broker()
        pool = WorkerPool(broker, lambda t: {"score": 0.0}, n_workers=2, poll_interval=0.005)
        pool.start()
        time.sleep(0.1)
        assert pool.alive_count == 2
        pool.stop()


class TestCombineReward:
    def test_latency_penalty_arithmetic(self):
        record = RewardRecord(train_metrics={"acc": 0.9},
                              deploy_metrics={"latency_ms": 50.0})
        spec = ObjectiveSpec(objective="acc", direction="maximize",
                             constraints=(Constraint("latency_ms", 40.0, 1.0),))
        assert combine_reward(record, spec) == pytest.approx(0.9 - 0.25)
        assert record.scalar_reward == pytest.approx(0.65)

    def test_no_constraints_reward_is_objective(self):
        record = RewardRecord(train_metrics={"acc": 0.7})
        spec = ObjectiveSpec(objective="acc")
        assert combine_reward(record, spec) == 0.7

    def test_metric_exactly_at_limit_no_penalty(self):
        record = RewardRecord(train_metrics={"acc": 0.8},
                              deploy_metrics={"latency_ms": 40.0})
        spec = ObjectiveSpec(objective="acc",
                             constraints=(Constraint("latency_ms", 40.0, 2.0),))
        assert combine_reward(record, spec) == 0.8

    def test_missing_constrained_metric_counts_as_double_limit(self):
        record = RewardRecord(train_metrics={"acc": 0.8}, probe_failed=True)
        spec = ObjectiveSpec(objective="acc",
                             constraints=(Constraint("latency_ms", 40.0, 1.0),))
        # documented rule: unavailable metric behaves like limit*2 -> penalty = lambda
        assert combine_reward(record, spec) == pytest.approx(0.8 - 1.0)

    def test_minimize_direction_mirrors_penalty(self):
        record = RewardRecord(train_metrics={"loss": 0.3},
                              deploy_metrics={"latency_ms": 80.0})
        spec = ObjectiveSpec(objective="loss", direction="minimize",
                             constraints=(Constraint("latency_ms", 40.0, 1.0),))
        assert combine_reward(record, spec) == pytest.approx(0.3 + 1.0)

    def test_monotone_nonincreasing_beyond_limit(self):
        spec = ObjectiveSpec(objective="acc",
                             constraints=(Constraint("latency_ms", 40.0, 0.5),))
        rewards = []
        for latency in (40.0, 50.0, 80.0, 200.0):
            record = RewardRecord(train_metrics={"acc": 0.9},
                                  deploy_metrics={"latency_ms": latency})
            rewards.append(combine_reward(record, spec))
        assert all(a >= b for a, b in zip(rewards, rewards[1:]))


class TestParetoFront:
    SPEC = ObjectiveSpec(objective="acc", direction="maximize",
                         constraints=(Constraint("latency_ms", 40.0, 1.0),))

    @staticmethod
    def record(acc: float, latency: float) -> RewardRecord:
        return RewardRecord(train_metrics={"acc": acc},
                            deploy_metrics={"latency_ms": latency})

    def test_singleton(self):
        records = [self.record(0.9, 50.0)]
        assert pareto_front(records, self.SPEC) == records

    def test_dominated_point_removed(self):
        a = self.record(0.9, 30.0)
        b = self.record(0.8, 50.0)   # dominated by a (worse acc, worse latency)
        c = self.record(0.95, 60.0)
        front = pareto_front([a, b, c], self.SPEC)
        assert front == [a, c]
        # O(n^2) oracle agreement
        assert b not in front

    def test_duplicates_all_kept(self):
        a = self.record(0.9, 30.0)
        b = self.record(0.9, 30.0)
        assert pareto_front([a, b], self.SPEC) == [a, b]
