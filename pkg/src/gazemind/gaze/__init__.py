"""Raw gaze ingestion, I-VT segmentation, per-second features and feature tables."""
from .events import EventKind, EventTable, GazeEvent, IVTConfig, detect_events
from .features import (
    FeatureSeries,
    FeatureVector,
    GazeFeatureExtractor,
    SampleSummary,
    extract_features,
    featurize,
    read_feature_series,
    time_partition,
    write_feature_series,
)
from .normalize import PopulationScaler, PopulationStats, denormalize, fit_population_stats, normalize
from .recording import (
    EmptyRecordingError,
    GazeParseError,
    GazeRecording,
    GazeSample,
    read_gaze_csv,
    write_gaze_csv,
)
from .table import FeatureTable, InsufficientHistoryError, build_table, parse_markdown, render_markdown

__all__ = [
    "EmptyRecordingError",
    "EventKind",
    "EventTable",
    "FeatureSeries",
    "FeatureTable",
    "FeatureVector",
    "GazeEvent",
    "GazeFeatureExtractor",
    "GazeParseError",
    "GazeRecording",
    "GazeSample",
    "IVTConfig",
    "InsufficientHistoryError",
    "PopulationScaler",
    "PopulationStats",
    "SampleSummary",
    "build_table",
    "denormalize",
    "detect_events",
    "extract_features",
    "featurize",
    "fit_population_stats",
    "normalize",
    "parse_markdown",
    "read_feature_series",
    "read_gaze_csv",
    "render_markdown",
    "time_partition",
    "write_feature_series",
    "write_gaze_csv",
]
