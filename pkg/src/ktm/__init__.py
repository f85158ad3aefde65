"""Predict distributions over future trajectories from observed partial ones."""

from .errors import InvalidConfigError, InvalidInputError, KtmError, ParseError, TrainingError
from .functional import ContinuousTrajectory, TimeBasis, discretise, evaluate, fit_weights, time_features
from .kernels import (
    RepresentativeSet,
    df_kernel,
    discrete_frechet,
    gram_matrix,
    projection_features,
    select_representatives,
)
from .mdn import MdnConfig, MdnParams, MixtureParams
from .pipeline import (
    KtmConfig,
    KtmModel,
    TrainingPair,
    TrajectorySample,
    ktm_closest_component,
    ktm_weighted_mean,
    predict_mixture,
    sample_trajectories,
    train_ktm,
)

__version__ = "0.1.0"
