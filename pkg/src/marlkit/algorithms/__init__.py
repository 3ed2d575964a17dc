"""Learners: DQN, DDPG, MADDPG, PPO and DAgger."""

from .common import epsilon_greedy
from .dagger import DaggerLearner, dagger_iterate
from .ddpg import DdpgLearner, ddpg_update
from .dqn import DqnLearner, EpsilonSchedule, dqn_update
from .maddpg import MaddpgLearner, maddpg_update
from .ppo import PpoLearner, RolloutRunner, clipped_surrogate, gae_advantages, ppo_update

LEARNERS = {
    "dqn": DqnLearner,
    "ddpg": DdpgLearner,
    "maddpg": MaddpgLearner,
    "ppo": PpoLearner,
    "dagger": DaggerLearner,
}

__all__ = [
    "LEARNERS", "DaggerLearner", "DdpgLearner", "DqnLearner", "EpsilonSchedule", "MaddpgLearner",
    "PpoLearner", "RolloutRunner", "clipped_surrogate", "dagger_iterate", "ddpg_update", "dqn_update",
    "epsilon_greedy", "gae_advantages", "maddpg_update", "ppo_update",
]
