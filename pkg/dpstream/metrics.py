import logging
from typing import Optional

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

from dpstream.config import ENABLE_METRICS

# Setup logging
logger = logging.getLogger(__name__)

# Flag to track if metrics have been initialized
_metrics_initialized = False

# Metrics placeholders
MECHANISM_STEPS = None
SVT_POSITIVES = None
LADDER_SATURATIONS = None
CALIBRATION_SECONDS = None


def _existing_collector(name: str):
    for collector in REGISTRY._names_to_collectors.values():
        if getattr(collector, "_name", None) == name:
            return collector
    return None


def _get_or_create(factory, name: str, documentation: str, **kwargs):
    existing = _existing_collector(name)
    if existing is not None:
        return existing
    return factory(name, documentation, **kwargs)


def initialize_metrics():
    """Initialize Prometheus metrics if not already done"""
    global MECHANISM_STEPS, SVT_POSITIVES, LADDER_SATURATIONS, CALIBRATION_SECONDS
    global _metrics_initialized

    if _metrics_initialized or not ENABLE_METRICS:
        return

    MECHANISM_STEPS = _get_or_create(
        Counter,
        "dpstream_mechanism_steps",
        "Stream updates consumed by private mechanisms",
        labelnames=["mechanism"],
    )
    SVT_POSITIVES = _get_or_create(
        Counter, "dpstream_svt_positive", "Positive answers given by SVT instances"
    )
    LADDER_SATURATIONS = _get_or_create(
        Counter,
        "dpstream_ladder_saturations",
        "Ladder mechanisms frozen after their SVT halted",
    )
    CALIBRATION_SECONDS = _get_or_create(
        Histogram,
        "dpstream_calibration_seconds",
        "Time spent simulating noise paths for one horizon",
    )

    _metrics_initialized = True


def record_step(mechanism: str):
    if MECHANISM_STEPS is not None:
        MECHANISM_STEPS.labels(mechanism=mechanism).inc()


def record_svt_positive():
    if SVT_POSITIVES is not None:
        SVT_POSITIVES.inc()


def record_saturation():
    if LADDER_SATURATIONS is not None:
        LADDER_SATURATIONS.inc()


def record_calibration(seconds: float):
    if CALIBRATION_SECONDS is not None:
        CALIBRATION_SECONDS.observe(seconds)


def write_metrics(path: Optional[str]):
    """Dump the registry in Prometheus text format."""
    if not path:
        return
    write_to_textfile(path, REGISTRY)
    logger.info(f"Metrics written to {path}")


# Initialize metrics
initialize_metrics()
