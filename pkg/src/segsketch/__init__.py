"""Subnet-aware super-host detection sketches and evaluation tooling."""

from .analysis import (
    BoundInputs,
    ErrorGap,
    NonPositiveEpsilonError,
    StrategyVariables,
    deviation_probability_bound,
    expected_error_gap,
    expected_set_bits,
    misclassification_prob,
    simulate_are,
    strategy_variables,
)
from .estimators import Bitmap, MultiScaleBitmap
from .prefix import (
    EmptyBitmapError,
    SegmentConfig,
    SubnetBitmap,
    host_suffix,
    segment_address,
)
from .sketch import (
    DetectionEntry,
    QueryResult,
    SegSketch,
    SketchConfig,
    UpdateOutcome,
    detection_threshold,
    replacement_probability,
)

__all__ = [
    "Bitmap",
    "BoundInputs",
    "DetectionEntry",
    "EmptyBitmapError",
    "ErrorGap",
    "MultiScaleBitmap",
    "NonPositiveEpsilonError",
    "QueryResult",
    "SegSketch",
    "SegmentConfig",
    "SketchConfig",
    "StrategyVariables",
    "SubnetBitmap",
    "UpdateOutcome",
    "detection_threshold",
    "deviation_probability_bound",
    "expected_error_gap",
    "expected_set_bits",
    "host_suffix",
    "misclassification_prob",
    "replacement_probability",
    "segment_address",
    "simulate_are",
    "strategy_variables",
]

__version__ = "0.1.0"
