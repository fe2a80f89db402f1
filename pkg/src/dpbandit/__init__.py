"""Regret minimisation for Bernoulli bandits under eps-global differential privacy."""
from .bounds import BoundReport, lower_bound_rate, private_sum_bound, regime_classify
from .environment import BanditInstance, RunTrace, monte_carlo, preset, run_episode
from .kernel import Regime, bernoulli_kl, d_eps, d_eps_closed, d_eps_oracle, imed_score, klucb_upper
from .policies import BatchSchedule, Kind, PolicyKind, batch_size, cumulative, make_policy

__version__ = "0.1.0"
