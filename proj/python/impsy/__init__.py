"""Python access to the impsy core: models, prediction, training and config checks."""

from ._impsy import (
    ConfigError,
    Model,
    Predictor,
    ShapeError,
    WeightFileError,
    api_schema,
    bench,
    feed_frame,
    feed_lead,
    idle_status,
    nll,
    osc_encode,
    parse_midi,
    preset,
    train,
    validate_config,
)

__all__ = [
    "ConfigError",
    "Model",
    "Predictor",
    "ShapeError",
    "WeightFileError",
    "api_schema",
    "bench",
    "feed_frame",
    "feed_lead",
    "idle_status",
    "nll",
    "osc_encode",
    "parse_midi",
    "preset",
    "train",
    "validate_config",
]
