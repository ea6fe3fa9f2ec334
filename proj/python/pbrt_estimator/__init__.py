"""Potential brake response time estimation from a linear mixed-effects model."""

from ._core import (
    BlupResult,
    DriverMismatch,
    DriverState,
    FitInfo,
    FitOptions,
    InvalidInput,
    InvalidObservation,
    InvalidQuantile,
    IoError,
    ModelSpec,
    NotPositiveDefinite,
    NotPositiveSemidefinite,
    Observation,
    PbrtError,
    PbrtEstimate,
    SimConfig,
    SimResult,
    StimulusRegistry,
    TrainedModel,
    TrainingSet,
    UnknownStimulus,
    compute_blup,
    default_config,
    density_curve,
    estimate_pbrt,
    feature_row,
    fit,
    generate,
    normal_quantile,
    percentile,
    population_pbrt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
