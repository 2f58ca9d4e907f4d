from plunet.metrics.loss import LossResult, bce_loss
from plunet.metrics.scores import (
    DEFAULT_THRESHOLD,
    AggregateReport,
    ConfusionCounts,
    MetricsReport,
    aggregate,
    binarize,
    confusion,
    confusion_per_image,
    metrics,
)

__all__ = [
    "DEFAULT_THRESHOLD",
    "AggregateReport",
    "ConfusionCounts",
    "LossResult",
    "MetricsReport",
    "aggregate",
    "bce_loss",
    "binarize",
    "confusion",
    "confusion_per_image",
    "metrics",
]
