import csv
import io

import numpy as np
import pytest

from dpbandit.environment import (
    PRESETS,
    BanditInstance,
    RewardSource,
    RunTrace,
    geometric_checkpoints,
    monte_carlo,
    preset,
    pseudo_regret,
    resolve_workers,
    run_episode,
    sample_reward,
)
from dpbandit.policies import Policy, make_policy
from dpbandit.privacy import SeededRng


class FixedArm(Policy):
    """Plays one arm for the whole horizon, in blocks of ``block``."""

    name = "fixed"

    def __init__(self, n_arms, horizon, arm, block=7):
        super().__init__(n_arms, horizon, 1.0)
        self.arm, self.block = arm, block

    def next_batch(self):
        return self.arm, self.block

    def observe(self, arm, rewards):
        self._advance(len(rewards))


class TestInstance:
    def test_presets(self):
        assert PRESETS["mu1"] == (0.75, 0.7, 0.7, 0.7, 0.7)
        assert PRESETS["mu2"] == (0.75, 0.625, 0.5, 0.375, 0.25)
        assert PRESETS["mu3"] == (0.75, 0.53125, 0.375, 0.28125, 0.25)
        assert PRESETS["mu4"] == (0.75, 0.71875, 0.625, 0.46875, 0.25)

    def test_gaps(self):
        env = preset("mu2")
        assert env.K == 5 and env.best_mean == 0.75
        assert env.gaps == (0.0, 0.125, 0.25, 0.375, 0.5)

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="mu1, mu2, mu3, mu4"):
            preset("mu9")

    @pytest.mark.parametrize("means", [[0.5], [0.5, 1.2], [-0.1, 0.3]])
    def test_rejects(self, means):
        with pytest.raises(ValueError):
            BanditInstance(means)


class TestSampling:
    def test_degenerate_means(self):
        env = BanditInstance([0.0, 1.0])
        rng = SeededRng(0)
        assert all(sample_reward(env, 0, rng) == 0 for _ in range(1000))
        assert all(sample_reward(env, 1, rng) == 1 for _ in range(1000))

    def test_empirical_mean(self):
        env = BanditInstance([0.75, 0.2])
        rng = SeededRng(1)
        draws = [sample_reward(env, 0, rng) for _ in range(10**5)]
        assert np.mean(draws) == pytest.approx(0.75, abs=0.01)

    def test_arm_out_of_range(self):
        env = BanditInstance([0.5, 0.5])
        with pytest.raises(IndexError):
            sample_reward(env, 2, SeededRng(0))
        with pytest.raises(IndexError):
            RewardSource(env, 0).draw(-1, 3)

    def test_source_split_invariance(self):
        env = preset("mu1")
        whole = RewardSource(env, 5).draw(0, 10_000)
        src = RewardSource(env, 5)
        parts = [src.draw(0, 3000), src.draw(1, 50), src.draw(0, 5000), src.draw(0, 2000)]
        assert np.array_equal(whole, np.concatenate([parts[0], parts[2], parts[3]]))

    def test_source_mean(self):
        r = RewardSource(BanditInstance([0.3, 0.9]), 2).draw(1, 10**5)
        assert set(np.unique(r)) <= {0.0, 1.0}
        assert r.mean() == pytest.approx(0.9, abs=0.01)


class TestCheckpoints:
    def test_endpoints_and_order(self):
        pts = geometric_checkpoints(10**5)
        assert pts[0] == 1 and pts[-1] == 10**5
        assert all(a < b for a, b in zip(pts, pts[1:]))
        assert 50 <= len(pts) <= 100

    def test_small_horizon(self):
        assert geometric_checkpoints(1) == [1]
        assert geometric_checkpoints(3, 100) == [1, 2, 3]


@pytest.fixture(scope="module")
def trace():
    env = preset("mu2")
    return run_episode(make_policy("dp_imed", 5, 10**5, 0.25, seed=0), env, 10**5, 0)


class TestRunEpisode:
    def test_equal_means_zero_regret(self):
        env = BanditInstance([0.4] * 4)
        trace = run_episode(make_policy("dp_klucb", 4, 3000, 0.5), env, 3000, 0)
        assert all(r == 0.0 for r in trace.regrets)

    def test_best_arm_zero_regret(self):
        env = preset("mu3")
        trace = run_episode(FixedArm(5, 1000, 0), env, 1000, 0)
        assert trace.final_regret == 0.0
        assert trace.pull_counts == [1000, 0, 0, 0, 0]

    def test_exact_within_block(self):
        env = preset("mu2")
        trace = run_episode(FixedArm(5, 100, 4, block=100), env, 100, 0, [1, 37, 100])
        assert trace.checkpoints == [(1, 0.5, (0, 0, 0, 0, 1)), (37, 18.5, (0, 0, 0, 0, 37)),
                                     (100, 50.0, (0, 0, 0, 0, 100))]

    def test_horizon_appended(self):
        env = preset("mu2")
        trace = run_episode(FixedArm(5, 50, 1), env, 50, 0, [10, 20])
        assert trace.times == [10, 20, 50]

    def test_bad_checkpoints(self):
        env = preset("mu2")
        with pytest.raises(ValueError):
            run_episode(FixedArm(5, 50, 1), env, 50, 0, [0, 10])
        with pytest.raises(ValueError):
            run_episode(FixedArm(5, 50, 1), env, 40, 0)
        with pytest.raises(ValueError):
            run_episode(FixedArm(3, 50, 1), env, 50, 0)

    def test_invariants(self, trace):
        assert sum(trace.pull_counts) == trace.horizon
        assert trace.final_regret == pseudo_regret(preset("mu2").gaps, trace.pull_counts)
        assert all(a <= b for a, b in zip(trace.regrets, trace.regrets[1:]))
        for t, _, counts in trace.checkpoints:
            assert sum(counts) == t
        assert sum(n for _, n in trace.choices) == trace.horizon

    def test_golden(self, trace):
        # recorded once the invariants above held; DP-IMED, mu2, eps 0.25, seed 0
        assert trace.pull_counts == [99428, 255, 127, 127, 63]
        assert trace.final_regret == 142.75
        assert trace.noise_draws == 45

    def test_csv_round_trip(self, trace):
        rows = list(csv.reader(io.StringIO(trace.to_csv())))
        assert rows[0] == ["t", "regret", "N_1", "N_2", "N_3", "N_4", "N_5"]
        for row, (t, r, counts) in zip(rows[1:], trace.checkpoints):
            assert int(row[0]) == t
            assert float(row[1]) == r
            assert tuple(int(v) for v in row[2:]) == counts

    def test_json_round_trip(self, trace):
        back = RunTrace.from_json(trace.to_json())
        assert back == trace
        assert back.to_json() == trace.to_json()

    def test_reward_stream_shared_across_policies(self):
        # the same seed gives every policy the same per-arm reward sequence
        env = preset("mu1")
        seen = {}

        class Recorder(FixedArm):
            def observe(self, arm, rewards):
                seen.setdefault(self.block, []).extend(rewards)
                super().observe(arm, rewards)

        run_episode(Recorder(5, 500, 2, block=3), env, 500, 8)
        run_episode(Recorder(5, 500, 2, block=11), env, 500, 8)
        assert seen[3] == seen[11]


class TestMonteCarlo:
    def test_single_seed(self):
        env = preset("mu2")
        res = monte_carlo("dp_imed", env, 5000, 0.5, 1, base_seed=3, keep_traces=True)
        assert np.array_equal(res.mean, np.array(res.traces[0].regrets))
        assert np.all(res.std == 0.0)
        assert res.seeds == [3]

    def test_deterministic_policy_zero_std(self):
        env = BanditInstance([0.5, 0.5, 0.5])
        res = monte_carlo("dp_klucb", env, 2000, 1.0, 4)
        assert np.all(res.std == 0.0)

    def test_aggregation(self):
        env = preset("mu1")
        res = monte_carlo("dp_klucb", env, 4000, 0.5, 5, base_seed=10, keep_traces=True)
        finals = np.array([tr.final_regret for tr in res.traces])
        assert res.final_mean == pytest.approx(finals.mean(), rel=1e-15)
        assert res.final_std == pytest.approx(finals.std(), rel=1e-12)
        assert np.array_equal(res.finals, finals)
        assert res.seeds == list(range(10, 15))

    def test_workers_do_not_change_result(self):
        env = preset("mu4")
        a = monte_carlo("dp_imed", env, 5000, 0.25, 4, workers=1)
        b = monte_carlo("dp_imed", env, 5000, 0.25, 4, workers=2)
        assert a.to_csv() == b.to_csv()

    def test_csv_header(self):
        res = monte_carlo("imed", preset("mu2"), 500, 1.0, 2)
        assert res.to_csv().splitlines()[0] == "t,mean_regret,std_regret"

    def test_rejects_zero_seeds(self):
        with pytest.raises(ValueError):
            monte_carlo("imed", preset("mu2"), 500, 1.0, 0)

    def test_worker_env_override(self, monkeypatch):
        monkeypatch.delenv("DPB_WORKERS", raising=False)
        assert resolve_workers(None) == 1
        assert resolve_workers(3) == 3
        monkeypatch.setenv("DPB_WORKERS", "5")
        assert resolve_workers(2) == 5
