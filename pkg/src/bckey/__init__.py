"""Secret-key agreement with a hidden identifier measured through a broadcast channel."""

from .bc_model import ClassificationReport, SourceBcModel, classify
from .info_core import (
    Channel,
    ProbVector,
    bayes_invert,
    binary_entropy,
    bsc,
    compose,
    entropy,
    mutual_information,
    product_channel,
)
from .region import (
    RateTuple,
    RegionBoundary,
    compare_boundaries,
    label_boundary,
    rate_tuple_cs,
    rate_tuple_gs,
    sweep_bsc,
    sweep_general,
)

__all__ = [
    "Channel",
    "ClassificationReport",
    "ProbVector",
    "RateTuple",
    "RegionBoundary",
    "SourceBcModel",
    "bayes_invert",
    "binary_entropy",
    "bsc",
    "classify",
    "compare_boundaries",
    "compose",
    "entropy",
    "label_boundary",
    "mutual_information",
    "product_channel",
    "rate_tuple_cs",
    "rate_tuple_gs",
    "sweep_bsc",
    "sweep_general",
]
