"""Action-conditioned forecasters of future contact location."""
from .base import (ForecastContext, ForecastResult, Persistence, PhysicsOracle, Predictor, PredictorConfig,
                   predict)
from .image_tfm import ImageTfm, ImageTfmHyperparams, image_windows, train_image_tfm
from .state_tfm import StateTfm, StateTfmHyperparams, train_state_tfm
from .windows import dataset_windows
from ..errors import ValidationError

MIN_ROLLOUTS = 50


def train_tfm(kind, dataset, hyperparams=None, rng=None, *, config=PredictorConfig(), clm=None):
    """Train a forecaster of ``kind`` ("state" or "image") on stored push rollouts.

    The state model learns from CLM-measured locations when ``clm`` is given
    and from ground truth otherwise; the image model keeps ``clm`` for
    reading locations off its predicted frames.
    """
    if len(dataset) < MIN_ROLLOUTS:
        raise ValidationError(f"dataset: need at least {MIN_ROLLOUTS} rollouts, got {len(dataset)}")
    if kind == "state":
        hp = hyperparams or StateTfmHyperparams()
        return train_state_tfm(dataset_windows(dataset, config, clm), config, hp, rng)
    if kind == "image":
        hp = hyperparams or ImageTfmHyperparams()
        windows = image_windows(dataset, config, hp.stride, max_windows=hp.max_windows, rng=rng)
        return train_image_tfm(windows, config, hp, rng, clm)
    raise ValidationError(f"backend: cannot train {kind!r}; choose state or image")


__all__ = ["ForecastContext", "ForecastResult", "ImageTfm", "ImageTfmHyperparams", "Persistence",
           "PhysicsOracle", "Predictor", "PredictorConfig", "StateTfm", "StateTfmHyperparams", "predict",
           "train_tfm"]
