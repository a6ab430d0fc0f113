"""Traffic-steering learner: features, Q-network, losses, training and inference."""

from .adam import AdamState, NonFiniteGradient, adam_step
from .dataset import (
    TRANSITION_DTYPE, DatasetError, ReplayBuffer, build_transitions, read_bin, write_bin,
)
from .features import (
    DEFAULT_NORMS, FEATURE_DIM, FeatureError, Normalization, compute_reward, encode_state,
)
from .losses import (
    Batch, LossError, cql_regularizer, dqn_loss, rem_combine, rem_cql_loss, sample_alpha,
    td_loss_rem, uniform_alpha,
)
from .network import FULL_SHAPE, NetShape, forward, init_params
from .train import DESK_HYPER, FULL_HYPER, Hyper, QModel, TrainingError, train_offline

__all__ = [
    "AdamState", "Batch", "DEFAULT_NORMS", "DESK_HYPER", "DatasetError", "FEATURE_DIM",
    "FeatureError", "Hyper", "LossError", "NetShape", "NonFiniteGradient", "Normalization",
    "QModel", "ReplayBuffer", "FULL_HYPER", "FULL_SHAPE", "TRANSITION_DTYPE",
    "TrainingError", "adam_step", "build_transitions", "compute_reward", "cql_regularizer",
    "dqn_loss", "encode_state", "forward", "init_params", "read_bin", "rem_combine",
    "rem_cql_loss", "sample_alpha", "td_loss_rem", "train_offline", "uniform_alpha",
    "write_bin",
]
