"""Multi-task on-policy training: collection, standardization, GAE, losses."""

from .config import ALGOS, PAPER_PRESETS, TrainConfig, make_config, preset
from .gae import gae, gae_bruteforce, standardize_advantages
from .losses import combined_loss, imitation_mse, ppo_surrogate, ppo_surrogate_numpy
from .normalize import ReturnNormalizer, RunningStandardizer, standardize_observation
