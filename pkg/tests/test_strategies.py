from __future__ import annotations

import math

import pytest

from hyperfab.space import parse_space, validate_configuration
from hyperfab.strategies import (EvolutionStrategy, HyperbandStrategy, Observation,
                                 RandomStrategy, StrategyError, hyperband_schedule,
                                 make_strategy)


def oracle_bracket_table(R: float, eta: float) -> list[tuple[int, int, float]]:
    """Direct evaluation of the successive-halving bracket formulas."""
    s_max = int(math.floor(math.log(R) / math.log(eta) + 1e-9))
    table = []
    for s in range(s_max, -1, -1):
        n0 = int(math.ceil((s_max + 1) / (s + 1) * eta ** s - 1e-9))
        r0 = R / eta ** s
        table.append((s, n0, r0))
    return table


def make_obs(task_id: int, config, loss: float, fidelity: float = 1.0) -> Observation:
    return Observation(task_id=task_id, config=config, fidelity=fidelity,
                       loss=loss, reward=-loss, metrics={"score": loss})


def drive(strategy, batch, next_id, losses):
    """Issue one generate/reward cycle with synthetic losses keyed by loss_fn."""
    proposals = strategy.generate_tasks(batch)
    issued = [(next_id + i, p) for i, p in enumerate(proposals)]
    strategy.notify_issued(issued)
    rewards = [make_obs(tid, p.config, losses(tid, p), p.fidelity.resource)
               for tid, p in issued]
    strategy.handle_rewards(rewards)
    return next_id + len(proposals), issued


class TestHyperbandSchedule:
    def test_r81_eta3_brackets_match_oracle(self):
        plan = hyperband_schedule(81, 3)
        got = [(b.s, b.n0, b.r0) for b in plan.brackets]
        assert got == oracle_bracket_table(81, 3)
        assert got == [(4, 81, 1), (3, 34, 3), (2, 15, 9), (1, 8, 27), (0, 5, 81)]

    def test_s4_halving_ladder(self):
        plan = hyperband_schedule(81, 3)
        ladder = plan.brackets[0].rounds
        # oracle: n_{i+1} = floor(n_i / eta), r_{i+1} = r_i * eta
        ns, rs = [81], [1.0]
        for _ in range(4):
            ns.append(ns[-1] // 3)
            rs.append(rs[-1] * 3)
        assert [n for n, _ in ladder] == ns == [81, 27, 9, 3, 1]
        assert [r for _, r in ladder] == rs == [1, 3, 9, 27, 81]

    def test_r1_single_bracket(self):
        plan = hyperband_schedule(1, 3)
        assert [(b.s, b.n0, b.r0) for b in plan.brackets] == [(0, 1, 1)]

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            hyperband_schedule(0, 3)
        with pytest.raises(ValueError):
            hyperband_schedule(81, 1.0)

    def test_budget_bound_per_bracket(self):
        plan = hyperband_schedule(81, 3)
        for bracket in plan.brackets:
            total = sum(n * r for n, r in bracket.rounds)
            assert total <= (plan.s_max + 1) * plan.max_resource + 1e-9


class TestRandomStrategy:
    def test_batch_of_iid_samples_at_full_fidelity(self, depth_channels_space):
        strategy = RandomStrategy(seed=3, max_resource=9.0)
        strategy.bind_space(depth_channels_space)
        proposals = strategy.generate_tasks(4)
        assert len(proposals) == 4
        for p in proposals:
            validate_configuration(p.config, depth_channels_space)
            assert p.fidelity.resource == 9.0 and p.fidelity.is_final

    def test_unbound_space_errors(self):
        with pytest.raises(StrategyError):
            RandomStrategy().generate_tasks(1)

    def test_duplicate_task_id_rejected(self, depth_channels_space):
        strategy = RandomStrategy(seed=0)
        strategy.bind_space(depth_channels_space)
        [p] = strategy.generate_tasks(1)
        strategy.notify_issued([(1, p)])
        strategy.handle_rewards([make_obs(1, p.config, 0.5)])
        with pytest.raises(StrategyError, match="duplicate"):
            strategy.handle_rewards([make_obs(1, p.config, 0.5)])

    def test_unknown_task_id_rejected(self, depth_channels_space):
        strategy = RandomStrategy(seed=0)
        strategy.bind_space(depth_channels_space)
        with pytest.raises(StrategyError, match="unknown"):
            strategy.handle_rewards([make_obs(99, strategy.generate_tasks(1)[0].config, 0.1)])

    def test_observation_count_grows(self, depth_channels_space):
        strategy = RandomStrategy(seed=1)
        strategy.bind_space(depth_channels_space)
        next_id, _ = drive(strategy, 3, 1, lambda tid, p: 0.1 * tid)
        assert len(strategy.observations) == 3


class TestHyperbandStrategy:
    def test_first_round_of_s4_is_81_configs_at_r1(self, depth_channels_space):
        strategy = HyperbandStrategy(max_resource=81, eta=3, seed=0)
        strategy.bind_space(depth_channels_space)
        proposals = strategy.generate_tasks(100)
        assert len(proposals) == 81
        assert all(p.fidelity.resource == 1 and not p.fidelity.is_final for p in proposals)

    def test_promotion_keeps_floor_n_over_eta_best(self, depth_channels_space):
        strategy = HyperbandStrategy(max_resource=9, eta=3, seed=0)
        strategy.bind_space(depth_channels_space)
        # bracket s=2: n0=9 at r=1; survivors 3 at r=3; then 1 at r=9
        proposals = strategy.generate_tasks(100)
        assert len(proposals) == 9
        issued = [(i + 1, p) for i, p in enumerate(proposals)]
        strategy.notify_issued(issued)
        losses = {tid: float(tid) for tid, _ in issued}  # ids 1..9, lower id = better
        strategy.handle_rewards([make_obs(tid, p.config, losses[tid], 1.0)
                                 for tid, p in issued])
        promoted = strategy.generate_tasks(100)
        assert len(promoted) == 3  # sort-and-truncate oracle: floor(9/3)
        assert [p.config for p in promoted] == [p.config for _, p in issued[:3]]
        assert all(p.fidelity.resource == 3 for p in promoted)

    def test_tie_breaks_toward_earlier_task_id(self, depth_channels_space):
        strategy = HyperbandStrategy(max_resource=3, eta=3, seed=0)
        strategy.bind_space(depth_channels_space)
        proposals = strategy.generate_tasks(100)  # bracket s=1: n0=2 at r=1
        issued = [(i + 1, p) for i, p in enumerate(proposals)]
        strategy.notify_issued(issued)
        strategy.handle_rewards([make_obs(tid, p.config, 0.5, 1.0) for tid, p in issued])
        [survivor] = strategy.generate_tasks(100)
        assert survivor.config == issued[0][1].config

    def test_timeouts_close_rounds_via_failure_notice(self, depth_channels_space):
        strategy = HyperbandStrategy(max_resource=9, eta=3, seed=1)
        strategy.bind_space(depth_channels_space)
        proposals = strategy.generate_tasks(100)
        issued = [(i + 1, p) for i, p in enumerate(proposals)]
        strategy.notify_issued(issued)
        strategy.handle_rewards([make_obs(tid, p.config, float(tid), 1.0)
                                 for tid, p in issued[:4]])
        assert strategy.generate_tasks(100) == []  # round still open
        strategy.handle_failures([tid for tid, _ in issued[4:]])
        promoted = strategy.generate_tasks(100)
        assert [p.config for p in promoted] == [p.config for _, p in issued[:3]]

    def test_full_run_terminates(self, depth_channels_space):
        strategy = HyperbandStrategy(max_resource=9, eta=3, seed=2)
        strategy.bind_space(depth_channels_space)
        next_id = 1
        for _ in range(50):
            if strategy.finished:
                break
            next_id, _ = drive(strategy, 100, next_id, lambda tid, p: float(tid % 7))
        assert strategy.finished

    def test_checkpoint_resume_reproduces_promotions(self, depth_channels_space):
        def run(kill_after_round: bool):
            strategy = HyperbandStrategy(max_resource=9, eta=3, seed=4)
            strategy.bind_space(depth_channels_space)
            next_id = 1
            next_id, _ = drive(strategy, 100, next_id, lambda tid, p: float((tid * 7) % 11))
            if kill_after_round:
                state = strategy.state_dict()
                strategy = HyperbandStrategy(max_resource=9, eta=3, seed=4)
                strategy.bind_space(depth_channels_space)
                strategy.load_state_dict(state)
            proposals = strategy.generate_tasks(100)
            return [tuple(sorted(p.config.assignments.items())) for p in proposals]

        assert run(False) == run(True)


class TestEvolutionStrategy:
    def test_cold_start_falls_back_to_random(self, depth_channels_space):
        strategy = EvolutionStrategy(population_size=4, sample_size=2, seed=0)
        strategy.bind_space(depth_channels_space)
        proposals = strategy.generate_tasks(3)
        assert len(proposals) == 3
        for p in proposals:
            validate_configuration(p.config, depth_channels_space)

    def test_p1_parent_is_sole_member(self, depth_channels_space):
        strategy = EvolutionStrategy(population_size=1, sample_size=3, seed=0)
        strategy.bind_space(depth_channels_space)
        next_id, issued = drive(strategy, 1, 1, lambda tid, p: 0.5)
        import numpy as np

        child = strategy.evolve_step(np.random.default_rng(0))
        parent = strategy.observations[-1].config
        # the child mutates the sole population member
        shared = set(child.assignments) & set(parent.assignments)
        assert any(child.assignments[k] != parent.assignments[k] for k in shared) or \
            set(child.assignments) != set(parent.assignments)

    def test_child_differs_in_exactly_one_active_path_on_grid(self):
        space = parse_space("a: {type: int, range: [0...3]}\nb: {type: int, range: [0...3]}\n",
                            space_id="grid")
        strategy = EvolutionStrategy(population_size=5, sample_size=2, seed=1)
        strategy.bind_space(space)
        next_id, _ = drive(strategy, 4, 1, lambda tid, p: float(tid))
        for _ in range(10):
            import numpy as np

            child = strategy.evolve_step(np.random.default_rng(_))
            parents = [o.config for o in strategy.observations]
            diffs = min(sum(1 for k in child.assignments
                            if child.assignments[k] != parent.assignments[k])
                        for parent in parents)
            assert diffs == 1  # diff-count oracle vs the chosen parent

    def test_evolve_step_requires_observations(self, depth_channels_space):
        import numpy as np

        strategy = EvolutionStrategy(seed=0)
        strategy.bind_space(depth_channels_space)
        with pytest.raises(StrategyError):
            strategy.evolve_step(np.random.default_rng(0))

    def test_children_remain_valid(self, multilayer_space):
        strategy = EvolutionStrategy(population_size=8, sample_size=3, seed=5)
        strategy.bind_space(multilayer_space)
        next_id = 1
        next_id, _ = drive(strategy, 6, next_id, lambda tid, p: float(tid % 3))
        for _ in range(4):
            proposals = strategy.generate_tasks(4)
            issued = [(next_id + i, p) for i, p in enumerate(proposals)]
            strategy.notify_issued(issued)
            for _, p in issued:
                validate_configuration(p.config, multilayer_space)
            strategy.handle_rewards([make_obs(tid, p.config, float(tid % 5), 1.0)
                                     for tid, p in issued])
            next_id += len(issued)


class TestDeterminism:
    @pytest.mark.parametrize("name,params", [
        ("random", {}),
        ("evolution", {"P": 4, "S": 2}),
        ("hyperband", {"R": 9, "eta": 3}),
    ])
    def test_checkpoint_replay_reproduces_proposals(self, depth_channels_space, name, params):
        def trajectory(resume_at: int | None):
            strategy = make_strategy(name, seed=9, max_resource=9.0, params=params)
            strategy.bind_space(depth_channels_space)
            out, next_id = [], 1
            for step in range(6):
                if resume_at is not None and step == resume_at:
                    state = strategy.state_dict()
                    strategy = make_strategy(name, seed=9, max_resource=9.0, params=params)
                    strategy.bind_space(depth_channels_space)
                    strategy.load_state_dict(state)
                proposals = strategy.generate_tasks(3)
                issued = [(next_id + i, p) for i, p in enumerate(proposals)]
                strategy.notify_issued(issued)
                out.extend(tuple(sorted(p.config.assignments.items())) for _, p in issued)
                strategy.handle_rewards([make_obs(tid, p.config, float((tid * 13) % 17), p.fidelity.resource)
                                         for tid, p in issued])
                next_id += len(issued)
            return out

        baseline = trajectory(None)
        for resume_at in (1, 3, 5):
            assert trajectory(resume_at) == baseline
