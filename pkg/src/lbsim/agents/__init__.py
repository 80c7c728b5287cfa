from .common import EpisodeBuffer, RunningNorm, TransitionBuffer, observation_features
from .sac import DiscreteSac, SacPolicy
from .qmix import QmixLearner, QmixPolicy
from .train import RunConfig, train, load_policy

__all__ = [
    "DiscreteSac",
    "EpisodeBuffer",
    "QmixLearner",
    "QmixPolicy",
    "RunConfig",
    "RunningNorm",
    "SacPolicy",
    "TransitionBuffer",
    "load_policy",
    "observation_features",
    "train",
]
