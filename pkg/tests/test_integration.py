"""Cross-module runs: every strategy through the controller and engine."""

from __future__ import annotations

import pytest

from hyperfab.clock import ManualClock
from hyperfab.estimator import JobController
from hyperfab.fabric import Broker, ObjectiveSpec
from hyperfab.plane import Engine, JobSpec
from hyperfab.sim import SimulatedWorkers
from hyperfab.strategies import HyperbandStrategy, hyperband_schedule, make_strategy

MINIMIZE = ObjectiveSpec(objective="score", direction="minimize")


class TestHyperbandThroughController:
    def test_full_run_matches_plan_budget(self, depth_channels_space):
        clock = ManualClock()
        broker = Broker(clock=clock, lease_ttl=1e9)
        # duration scales with fidelity, like real partial training
        SimulatedWorkers(broker, clock, 4,
                         lambda t: 0.1 * t.fidelity.resource,
                         lambda t: {"score": float(t.task_id % 7)})
        plan = hyperband_schedule(9, 3)
        expected = [(n, r) for bracket in plan.brackets for (n, r) in bracket.rounds]
        total_tasks = sum(n for n, _ in expected)
        strategy = HyperbandStrategy(max_resource=9, eta=3, seed=6)
        controller = JobController(
            job_id="hb", space=depth_channels_space, strategy=strategy, broker=broker,
            objective=MINIMIZE, batch_size=4, max_evaluations=total_tasks, clock=clock,
            t_min=5.0, t_max=60.0, poll_interval=0.01)
        controller.run()
        assert controller.status == "COMPLETE"
        assert strategy.finished
        tasks = broker.tasks()
        assert len(tasks) == total_tasks  # 22 for (R=9, eta=3)
        # resources issued per rung match the plan exactly
        by_resource: dict[float, int] = {}
        for task in tasks:
            by_resource[task.fidelity.resource] = by_resource.get(task.fidelity.resource, 0) + 1
        plan_by_resource: dict[float, int] = {}
        for n, r in expected:
            plan_by_resource[r] = plan_by_resource.get(r, 0) + n
        assert by_resource == plan_by_resource
        # promotions: within bracket s=2, survivors at r=3 are the best at r=1
        first_round = [t for t in tasks if t.iteration is not None][:9]
        losses = {t.task_id: t.result.train_metrics["score"] for t in first_round}
        best3 = sorted(losses, key=lambda tid: (losses[tid], tid))[:3]
        promoted_configs = [t.config.canonical_key() for t in tasks[9:12]]
        assert sorted(promoted_configs) == sorted(
            broker.get(tid).config.canonical_key() for tid in best3)

    def test_hyperband_with_stragglers_still_terminates(self, depth_channels_space):
        clock = ManualClock()
        broker = Broker(clock=clock, lease_ttl=1e9)
        SimulatedWorkers(broker, clock, 8,
                         lambda t: 30.0 if t.task_id % 5 == 0 else 0.5,
                         lambda t: {"score": float(t.task_id % 7)})
        strategy = HyperbandStrategy(max_resource=9, eta=3, seed=2)
        controller = JobController(
            job_id="hb2", space=depth_channels_space, strategy=strategy, broker=broker,
            objective=MINIMIZE, batch_size=9, max_evaluations=40, clock=clock,
            t_min=0.1, t_max=2.0, poll_interval=0.01)
        controller.run()
        # timeouts shrink rounds, but the bracket ladder still drains
        assert controller.status == "COMPLETE"
        assert strategy.finished


@pytest.mark.parametrize("strategy_name,params", [
    ("evolution", {"P": 6, "S": 3}),
    ("hyperband", {"R": 4, "eta": 2.0}),
    ("bo", {"surrogate": "gp", "init_random": 4}),
])
def test_every_strategy_completes_through_engine(tmp_path, strategy_name, params):
    def evaluator(task):
        x = float(task.config.assignments["x"])
        return {"score": (x - 0.6) ** 2}

    spec = JobSpec(
        name=f"engine-{strategy_name}",
        space={"x": {"type": "float", "range": [0.0, 1.0]}},
        strategy=strategy_name,
        strategy_params=params,
        objective=ObjectiveSpec(objective="score", direction="minimize"),
        batch_size=4,
        max_evaluations=8,
        parallelism=4,
        max_resource=params.get("R", 1.0),
        t_min=1.0,
        seed=13,
        evaluator_cmd=evaluator,
    )
    engine = Engine(tmp_path)
    job_id = engine.submit(spec)
    state = engine.wait(job_id, timeout=120)
    assert state.status == "COMPLETE", state.diagnostic
    assert len(state.observations) >= 8
    assert state.best is not None
