"""Task dynamics: interval draws, the transition table, scoring, sensors."""

import numpy as np
import pytest

from timesense.env import Action, Phase, TaskConfig, TimingTask, score_points
from timesense.estimator import fit_hyperparams
from timesense.ou import OUHyperparams

CFG = TaskConfig(max_interval_steps=8, boundary_steps=4)


def find_seed(cfg, predicate, start=0):
    """First seed whose drawn interval satisfies the predicate."""
    for seed in range(start, start + 10_000):
        task = TimingTask(cfg)
        state = task.reset(seed)
        if predicate(state.true_interval_steps):
            return seed, task
    raise AssertionError("no seed found")


class TestReset:
    def test_interval_range_and_balance(self):
        draws = []
        for seed in range(10_000):
            draws.append(TimingTask(CFG).reset(seed).true_interval_steps)
        draws = np.array(draws)
        assert draws.min() >= 1 and draws.max() <= 8
        p_short = np.mean(draws <= 4)
        sd = np.sqrt(0.25 / 10_000)
        assert abs(p_short - 0.5) <= 3 * sd

    def test_smallest_instance(self):
        cfg = TaskConfig(max_interval_steps=2, boundary_steps=1)
        draws = np.array(
            [TimingTask(cfg).reset(seed).true_interval_steps for seed in range(4000)]
        )
        assert set(draws) == {1, 2}
        assert abs(np.mean(draws == 1) - 0.5) <= 3 * np.sqrt(0.25 / 4000)

    def test_deterministic(self):
        a = TimingTask(CFG).reset(99).true_interval_steps
        b = TimingTask(CFG).reset(99).true_interval_steps
        assert a == b

    def test_initial_state(self):
        state = TimingTask(CFG).reset(0)
        assert state.phase is Phase.INIT
        assert state.tones_heard == 0
        assert state.steps_since_first_tone is None


class TestTransitionTable:
    def test_init_row(self):
        for action, check in [
            (Action.START, lambda o: o.next_state.phase is Phase.TONE
             and o.reward == 0.0 and not o.done),
            (Action.WAIT, lambda o: o.next_state.phase is Phase.INIT
             and o.reward == 0.0 and not o.done),
            (Action.SHORT, lambda o: o.done and o.reward == CFG.reward_wrong),
            (Action.LONG, lambda o: o.done and o.reward == CFG.reward_wrong),
        ]:
            task = TimingTask(CFG)
            task.reset(0)
            assert check(task.step(action))

    def test_first_tone_row(self):
        _, proto = find_seed(CFG, lambda k: k >= 3)
        interval = proto.state.true_interval_steps
        seed = None
        for s in range(10_000):
            if TimingTask(CFG).reset(s).true_interval_steps == interval:
                seed = s
                break
        for action, check in [
            (Action.WAIT, lambda o: o.next_state.phase is Phase.INTERVAL
             and o.next_state.tones_heard == 1 and not o.done),
            (Action.START, lambda o: o.done and o.reward == CFG.reward_wrong),
            (Action.SHORT, lambda o: o.done and o.reward == CFG.reward_wrong),
            (Action.LONG, lambda o: o.done and o.reward == CFG.reward_wrong),
        ]:
            task = TimingTask(CFG)
            task.reset(seed)
            task.step(Action.START)
            assert check(task.step(action))

    def test_interval_row(self):
        seed, _ = find_seed(CFG, lambda k: k >= 3)
        for action, check in [
            (Action.WAIT, lambda o: o.next_state.phase in (Phase.INTERVAL, Phase.TONE)
             and not o.done),
            (Action.START, lambda o: o.done and o.reward == CFG.reward_wrong),
            (Action.SHORT, lambda o: o.done and o.reward == CFG.reward_wrong),
            (Action.LONG, lambda o: o.done and o.reward == CFG.reward_wrong),
        ]:
            task = TimingTask(CFG)
            task.reset(seed)
            task.step(Action.START)
            task.step(Action.WAIT)
            assert task.state.phase is Phase.INTERVAL
            assert check(task.step(action))

    def test_wait_counts_down_to_second_tone(self):
        seed, _ = find_seed(CFG, lambda k: k == 3)
        task = TimingTask(CFG)
        task.reset(seed)
        task.step(Action.START)
        out1 = task.step(Action.WAIT)
        out2 = task.step(Action.WAIT)
        out3 = task.step(Action.WAIT)
        assert out1.next_state.phase is Phase.INTERVAL
        assert out2.next_state.phase is Phase.INTERVAL
        assert out3.next_state.phase is Phase.TONE
        assert out3.next_state.tones_heard == 2

    def test_single_step_interval_reaches_second_tone_immediately(self):
        seed, _ = find_seed(CFG, lambda k: k == 1)
        task = TimingTask(CFG)
        task.reset(seed)
        task.step(Action.START)
        out = task.step(Action.WAIT)
        assert out.next_state.tones_heard == 2
        assert out.next_state.phase is Phase.TONE

    def _to_second_tone(self, seed):
        task = TimingTask(CFG)
        state = task.reset(seed)
        task.step(Action.START)
        for _ in range(state.true_interval_steps):
            task.step(Action.WAIT)
        assert task.state.tones_heard == 2
        return task

    def test_choice_after_second_tone_short_interval(self):
        seed, _ = find_seed(CFG, lambda k: k <= 4)
        out = self._to_second_tone(seed).step(Action.SHORT)
        assert out.done and out.reward == CFG.reward_correct
        out = self._to_second_tone(seed).step(Action.LONG)
        assert out.done and out.reward == CFG.reward_wrong

    def test_choice_after_second_tone_long_interval(self):
        seed, _ = find_seed(CFG, lambda k: k > 4)
        out = self._to_second_tone(seed).step(Action.LONG)
        assert out.done and out.reward == CFG.reward_correct
        out = self._to_second_tone(seed).step(Action.SHORT)
        assert out.done and out.reward == CFG.reward_wrong

    def test_start_after_second_tone_is_wrong(self):
        seed, _ = find_seed(CFG, lambda k: k <= 4)
        out = self._to_second_tone(seed).step(Action.START)
        assert out.done and out.reward == CFG.reward_wrong

    def test_wait_after_second_tone_times_out_with_penalty(self):
        seed, _ = find_seed(CFG, lambda k: k <= 4)
        task = self._to_second_tone(seed)
        out = None
        for _ in range(CFG.max_episode_steps + 1):
            out = task.step(Action.WAIT)
            if out.done:
                break
        assert out.done and out.reward == CFG.reward_wrong

    def test_idle_timeout_is_neutral(self):
        task = TimingTask(CFG)
        task.reset(0)
        out = None
        for _ in range(CFG.max_episode_steps):
            out = task.step(Action.WAIT)
        assert out.done and out.reward == 0.0

    def test_step_after_terminal_rejected(self):
        task = TimingTask(CFG)
        task.reset(0)
        task.step(Action.SHORT)
        with pytest.raises(RuntimeError):
            task.step(Action.WAIT)


class TestEpisodeProperties:
    def test_bounded_liveness_and_single_reward(self):
        rng = np.random.default_rng(17)
        for episode in range(200):
            task = TimingTask(CFG)
            task.reset(episode)
            rewards = []
            steps = 0
            done = False
            while not done:
                out = task.step(Action(int(rng.integers(4))))
                rewards.append(out.reward)
                steps += 1
                done = out.done
                assert steps <= CFG.max_episode_steps
            nonzero = [r for r in rewards if r != 0.0]
            assert len(nonzero) <= 1
            assert all(
                r in (0.0, CFG.reward_correct, CFG.reward_wrong) for r in rewards
            )

    def test_sensor_emission_only_between_tones(self):
        rng = np.random.default_rng(23)
        for episode in range(100):
            task = TimingTask(CFG)
            task.reset(episode)
            done = False
            while not done:
                tones_before = task.state.tones_heard
                action = Action(int(rng.integers(4)))
                out = task.step(action)
                if out.sensor_slice is not None:
                    assert action is Action.WAIT
                    assert tones_before == 1
                    assert out.sensor_slice.shape == (
                        CFG.sensor_channels,
                        CFG.samples_per_step,
                    )
                elif action is Action.WAIT and tones_before == 1:
                    pytest.fail("waiting between tones must emit samples")
                done = out.done


class TestCollectIntervalBatch:
    def test_sample_and_channel_counts(self):
        seed, _ = find_seed(CFG, lambda k: k == 3)
        task = TimingTask(CFG)
        task.reset(seed)
        task.step(Action.START)
        for _ in range(3):
            task.step(Action.WAIT)
        batch = task.collect_interval_batch()
        assert batch.n == 3 * CFG.samples_per_step
        assert batch.m == CFG.sensor_channels
        spacing = np.diff(batch.sample_times.times)
        assert np.allclose(spacing, CFG.dt / CFG.samples_per_step, rtol=1e-9)

    def test_before_first_tone_rejected(self):
        task = TimingTask(CFG)
        task.reset(0)
        with pytest.raises(RuntimeError):
            task.collect_interval_batch()

    def test_roundtrip_recovers_generator_params(self):
        # force a ~20 s interval so the fit has enough data
        cfg = TaskConfig(
            max_interval_steps=67,
            boundary_steps=66,
            samples_per_step=2,
            max_episode_steps=80,
        )
        seed, task = find_seed(cfg, lambda k: k == 67)
        task.step(Action.START)
        for _ in range(67):
            task.step(Action.WAIT)
        batch = task.collect_interval_batch()
        params = fit_hyperparams(batch)
        truth = cfg.true_ou_params
        assert abs(params.lam - truth.lam) <= 0.2
        assert abs(params.sigma - truth.sigma) <= 0.2


class TestScorePoints:
    def test_never_started(self):
        assert score_points([Action.SHORT], 3, 4) == 0
        assert score_points([Action.WAIT, Action.WAIT, Action.LONG], 3, 4) == 0

    def test_started_then_blundered(self):
        assert score_points([Action.START, Action.SHORT], 3, 4) == 1
        assert score_points([Action.START, Action.START], 3, 4) == 1

    def test_waited_once_after_first_tone(self):
        actions = [Action.START, Action.WAIT, Action.SHORT]
        assert score_points(actions, 3, 4) == 2

    def test_waited_to_second_tone_then_wrong(self):
        actions = [Action.START] + [Action.WAIT] * 3 + [Action.LONG]
        assert score_points(actions, 3, 4) == 3

    def test_full_correct_sequence(self):
        short = [Action.START] + [Action.WAIT] * 3 + [Action.SHORT]
        assert score_points(short, 3, 4) == 4
        long = [Action.START] + [Action.WAIT] * 6 + [Action.LONG]
        assert score_points(long, 6, 4) == 4

    def test_dithering_at_init_still_scores(self):
        actions = [Action.WAIT, Action.WAIT, Action.START] + [Action.WAIT] * 2 + [
            Action.SHORT
        ]
        assert score_points(actions, 2, 4) == 4


class TestConfigValidation:
    def test_boundary_constraints(self):
        with pytest.raises(ValueError):
            TaskConfig(boundary_steps=8, max_interval_steps=8)
        with pytest.raises(ValueError):
            TaskConfig(boundary_steps=0)
        with pytest.raises(ValueError):
            TaskConfig(dt=0.0)
