"""hocpdmp Utilities"""

from .stats import MergeableEstimate, batch_means, combined_se, ratio_se
from .testfns import Bump, TestFunction, default_suite

__all__ = [
    "MergeableEstimate",
    "batch_means",
    "combined_se",
    "ratio_se",
    "Bump",
    "TestFunction",
    "default_suite",
]
