"""Event-camera detection and multi-rate Kalman tracking.

Events are ``(n, 4)`` float arrays of ``[t, x, y, p]`` with ``p`` in {+1, -1};
groundtruth is an ``(m, 7)`` array of ``[t, cx, cy, xmin, ymin, xmax, ymax]``.
"""

import json

from ._evtrack import (
    PROTOCOL_VERSION,
    BackendError,
    ConfigError,
    ConnectionError,
    DomainError,
    Error,
    FilterError,
    KalmanFilter,
    MetricError,
    MotionModel,
    OrderingError,
    ParseError,
    ProtocolError,
    RangeError,
    StateEstimate,
    TrackResult,
    ValidationError,
    canonical_message,
    decode_events,
    encode_detect,
    event_tensor,
    events_per_window,
    iou,
    precision_recall,
    predict,
    process_noise,
    query,
    read_events,
    read_groundtruth,
    simulate,
    track,
    transition,
    update,
    window_events,
    write_events,
    write_groundtruth,
)


def encode(message):
    """One protocol line (no newline) for a message dict, validated."""
    return canonical_message(json.dumps(message))


def decode(line):
    """Message dict from one protocol line. Raises ProtocolError."""
    return json.loads(canonical_message(line))


def config_json(config):
    """Accepts a dict, a JSON string or a path to a JSON file."""
    if isinstance(config, dict):
        return json.dumps(config)
    text = str(config)
    if text.lstrip().startswith("{"):
        return text
    with open(text) as f:
        return f.read()


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
