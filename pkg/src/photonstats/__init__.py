"""Simulation and analysis toolkit for pulsed single-photon sources.

The simulator produces timestamped detection streams for the single-input
(autocorrelation) and two-input (two-photon interference) splitter
topologies of a demultiplexed pulsed emitter; the analysis side turns any
such stream, simulated or measured, into the standard figures of merit.
"""

__version__ = "0.1.0"

from .model import (
    ConfigError,
    DataError,
    DetectorConfig,
    EmitterConfig,
    ExperimentConfig,
    FitError,
    Histogram,
    LossBudget,
    MetricError,
    MetricResult,
    OpticsConfig,
    PeakAreas,
    PhotonRecord,
    Photons,
    TagStream,
    TimeTag,
    TopologyError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "DetectorConfig",
    "EmitterConfig",
    "ExperimentConfig",
    "FitError",
    "Histogram",
    "LossBudget",
    "MetricError",
    "MetricResult",
    "OpticsConfig",
    "PeakAreas",
    "PhotonRecord",
    "Photons",
    "TagStream",
    "TimeTag",
    "TopologyError",
]
