from __future__ import annotations

import math

import numpy as np
import pytest

from hyperfab.advisor import (InsufficientDataError, importance, pairwise_marginal,
                              project_2d, suggest_space)
from hyperfab.space import (Configuration, configuration_in_space, new_version,
                            parse_space, sample)
from hyperfab.strategies import Observation

GRID_SPACE = parse_space(
    "x1: {type: int, range: [0...9]}\nx2: {type: int, range: [0...9]}\n",
    space_id="grid10")


def grid_observations(f, space=GRID_SPACE):
    obs = []
    tid = 1
    for a in range(10):
        for b in range(10):
            config = Configuration(assignments={"x1": a, "x2": b},
                                   space_id=space.space_id, space_version=1)
            reward = float(f(a, b))
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
            tid += 1
    return obs


def brute_force_unary_fractions(f):
    """Exact variance decomposition on the fully enumerated grid."""
    values = np.array([[f(a, b) for b in range(10)] for a in range(10)], dtype=float)
    total = values.var()
    v1 = values.mean(axis=1).var()
    v2 = values.mean(axis=0).var()
    return v1 / total, v2 / total


class TestImportance:
    def test_grid_f_x1_matches_exact_decomposition(self):
        report = importance(grid_observations(lambda a, b: a), GRID_SPACE)
        exact = brute_force_unary_fractions(lambda a, b: a)
        assert exact == (1.0, 0.0)
        assert report.fractions["x1"] >= 0.95
        assert report.fractions["x2"] <= 0.05
        assert abs(report.fractions["x1"] - exact[0]) <= 0.05
        assert abs(report.fractions["x2"] - exact[1]) <= 0.05

    def test_additive_two_signal_grid_within_tolerance(self):
        f = lambda a, b: 2.0 * a + 1.0 * b  # exact fractions 4/5, 1/5 scaled by variances
        report = importance(grid_observations(f), GRID_SPACE)
        exact1, exact2 = brute_force_unary_fractions(f)
        assert abs(report.fractions["x1"] - exact1) <= 0.06
        assert abs(report.fractions["x2"] - exact2) <= 0.06

    def test_constant_rewards_all_zero_with_flag(self):
        report = importance(grid_observations(lambda a, b: 3.0), GRID_SPACE)
        assert report.constant
        assert all(v == 0.0 for v in report.fractions.values())

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            importance(grid_observations(lambda a, b: a)[:5], GRID_SPACE)

    def test_fractions_sum_at_most_one(self):
        rng = np.random.default_rng(0)
        f = lambda a, b: math.sin(a) * math.cos(b) + 0.3 * a
        report = importance(grid_observations(f), GRID_SPACE)
        assert sum(report.fractions.values()) <= 1.0 + 1e-9

    def test_affine_rescaling_invariance(self):
        f = lambda a, b: a * 0.7 + math.cos(b)
        base = importance(grid_observations(f), GRID_SPACE)
        scaled = importance(grid_observations(lambda a, b: 4.0 * f(a, b) - 2.5), GRID_SPACE)
        for path in base.fractions:
            assert abs(base.fractions[path] - scaled.fractions[path]) < 1e-6

    def test_conditional_param_importance_and_rates(self, multilayer_space):
        rng = np.random.default_rng(1)
        obs = []
        for tid in range(1, 41):
            config = sample(multilayer_space, rng)
            depth = config.assignments["backbone_nums_block"]
            reward = float(depth)
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
        report = importance(obs, multilayer_space)
        # reward depends only on the root; the root is always active
        assert report.activation_rates["backbone_nums_block"] == 1.0
        best = max(report.fractions, key=report.fractions.get)
        assert best == "backbone_nums_block"
        # conditional dims never active in zero observations get rate zero there
        for path, rate in report.activation_rates.items():
            if rate == 0.0:
                assert report.fractions[path] == 0.0


class TestPairwiseMarginal:
    def test_f_x1_rows_constant_across_x2(self):
        a_vals, b_vals, matrix = pairwise_marginal(
            grid_observations(lambda a, b: a), GRID_SPACE, "x1", "x2")
        assert len(a_vals) == 10 and len(b_vals) == 10
        for row in matrix:
            assert np.ptp(row) <= 1e-9  # forest is exact when only x1 matters

    def test_transpose_symmetry(self):
        f = lambda a, b: a * 0.3 + b * b * 0.01
        a_vals, b_vals, m_ab = pairwise_marginal(grid_observations(f), GRID_SPACE,
                                                 "x1", "x2")
        b_vals2, a_vals2, m_ba = pairwise_marginal(grid_observations(f), GRID_SPACE,
                                                   "x2", "x1")
        assert a_vals == a_vals2 and b_vals == b_vals2
        np.testing.assert_allclose(m_ab, m_ba.T, atol=1e-12)

    def test_1x1_grid_single_marginal_mean(self):
        space = parse_space("u: {type: float, range: [0.0...1.0]}\n"
                            "v: {type: float, range: [0.0...1.0]}\n", space_id="uv")
        rng = np.random.default_rng(2)
        obs = []
        for tid in range(1, 21):
            config = sample(space, rng)
            reward = config.assignments["u"]
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
        a_vals, b_vals, matrix = pairwise_marginal(obs, space, "u", "v", grid=1)
        assert matrix.shape == (1, 1)
        assert np.isfinite(matrix[0, 0])

    def test_unknown_path(self):
        with pytest.raises(KeyError):
            pairwise_marginal(grid_observations(lambda a, b: a), GRID_SPACE, "nope", "x2")


class TestProjection:
    def _obs(self, assignments_list, space, rewards=None):
        out = []
        for i, assignments in enumerate(assignments_list):
            config = Configuration(assignments=assignments, space_id=space.space_id,
                                   space_version=1)
            r = rewards[i] if rewards else 0.0
            out.append(Observation(task_id=i + 1, config=config, fidelity=1.0,
                                   loss=-r, reward=r))
        return out

    def test_identical_configs_identical_coordinates(self):
        space = parse_space("a: {type: float, range: [0.0...1.0]}", space_id="p1")
        obs = self._obs([{"a": 0.5}, {"a": 0.5}, {"a": 0.9}], space)
        points = project_2d(obs, space)
        assert points[0][:2] == pytest.approx(points[1][:2], abs=1e-9)

    def test_equilateral_triple_embeds_exactly(self):
        # three categorical mismatches are pairwise equidistant (distance 1)
        space = parse_space("c: {type: choice, range: {a, b, c}}", space_id="tri")
        obs = self._obs([{"c": "a"}, {"c": "b"}, {"c": "c"}], space)
        points = project_2d(obs, space)
        dists = []
        for i in range(3):
            for j in range(i + 1, 3):
                dx = points[i][0] - points[j][0]
                dy = points[i][1] - points[j][1]
                dists.append(math.hypot(dx, dy))
        assert max(dists) - min(dists) <= 1e-6

    def test_collinear_configs_embed_on_a_line(self):
        space = parse_space("a: {type: float, range: [0.0...1.0]}", space_id="line")
        obs = self._obs([{"a": v} for v in (0.0, 0.25, 0.5, 0.75, 1.0)], space)
        points = project_2d(obs, space)
        assert all(abs(p[1]) <= 1e-9 for p in points)  # second eigenvalue ~ 0
        xs = [p[0] for p in points]
        assert xs[0] >= 0  # sign convention

    def test_requires_two_observations(self):
        space = parse_space("a: {type: float, range: [0.0...1.0]}", space_id="p2")
        with pytest.raises(InsufficientDataError):
            project_2d(self._obs([{"a": 0.1}], space), space)

    def test_deterministic_given_input_order(self, multilayer_space):
        rng = np.random.default_rng(3)
        obs = []
        for tid in range(1, 13):
            config = sample(multilayer_space, rng)
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=0.1 * tid, reward=-0.1 * tid))
        assert project_2d(obs, multilayer_space) == project_2d(obs, multilayer_space)


class TestSuggestSpace:
    def _depth_obs(self, space, depths, rewards):
        obs = []
        rng = np.random.default_rng(0)
        tid = 0
        for depth, reward in zip(depths, rewards):
            tid += 1
            while True:
                config = sample(space, rng)
                if config.assignments["depth"] == depth:
                    break
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
        return obs

    def test_shrink_rule_arithmetic(self, depth_channels_space):
        # incumbents (top 30% of 10 = 3 best) all have depth in {2, 3};
        # rule: [2 - 0.3, 3 + 0.3] -> floor/ceil -> [1, 4] -> clamp -> [2, 4]
        depths = [2, 3, 2, 5, 5, 4, 5, 4, 5, 5]
        rewards = [9.0, 8.0, 7.0, 1.0, 1.1, 0.9, 1.2, 0.8, 1.3, 0.7]
        obs = self._depth_obs(depth_channels_space, depths, rewards)
        suggestion = suggest_space(obs, depth_channels_space, q=0.3)
        [entry] = [e for e in suggestion.diff.entries if e.path == "depth"]
        assert entry.kind == "range-narrowed"
        assert entry.new == [2, 4]

    def test_uniform_rewards_no_signal(self, depth_channels_space):
        obs = self._depth_obs(depth_channels_space, [2] * 10, [1.0] * 10)
        suggestion = suggest_space(obs, depth_channels_space, q=0.3)
        assert not suggestion.diff.entries
        assert "no signal" in suggestion.rationale

    def test_single_observation_insufficient(self, depth_channels_space):
        obs = self._depth_obs(depth_channels_space, [2], [1.0])
        with pytest.raises(InsufficientDataError):
            suggest_space(obs, depth_channels_space, q=0.5)

    def test_applied_diff_still_contains_every_incumbent(self, depth_channels_space):
        rng = np.random.default_rng(5)
        obs = []
        for tid in range(1, 25):
            config = sample(depth_channels_space, rng)
            reward = (10.0 if config.assignments["depth"] == 2 else 0.0) + 0.01 * tid
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
        suggestion = suggest_space(obs, depth_channels_space, q=0.25)
        assert suggestion.diff.entries  # incumbents cluster at depth 2 -> [2, 3]
        shrunk = new_version(depth_channels_space, list(suggestion.diff.entries))
        incumbents = set(suggestion.incumbent_task_ids)
        for obs_item in obs:
            if obs_item.task_id in incumbents:
                assert configuration_in_space(obs_item.config, shrunk)

    def test_categorical_values_flagged_not_removed(self, depth_channels_space):
        rng = np.random.default_rng(7)
        obs = []
        for tid in range(1, 21):
            config = sample(depth_channels_space, rng)
            channels = [v for k, v in config.assignments.items() if k.endswith("channels")]
            reward = 5.0 if all(c == "64" for c in channels) else 0.1 * tid / 10
            obs.append(Observation(task_id=tid, config=config, fidelity=1.0,
                                   loss=-reward, reward=reward))
        suggestion = suggest_space(obs, depth_channels_space, q=0.1)
        flagged = suggestion.flagged_values.get("depth.channels", [])
        if flagged:
            assert "256" in flagged
        # the diff itself never touches choice values
        assert all(e.kind != "values-changed" for e in suggestion.diff.entries)
