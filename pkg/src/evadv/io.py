"""Event-stream file formats.

Two on-disk formats:

* csv: header line ``x,y,t,p``, one event per line, 17 significant digits.
* evt1: magic ``EVT1``, little-endian u64 event count, then N quadruples of
  little-endian f64 (x, y, t, p). Bit-exact round trips.
"""

from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np

from .events import EventStream

_MAGIC = b"EVT1"
_FORMATS = ("csv", "evt1")


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt not in _FORMATS:
        raise ValueError(f"unknown event file format {fmt!r}; expected one of {_FORMATS}")
    return fmt


def save_events(stream: EventStream, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write("x,y,t,p\n")
            for x, y, t, p in stream.events:
                fh.write(f"{x:.17g},{y:.17g},{t:.17g},{p:.17g}\n")
    else:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", stream.n))
            fh.write(np.ascontiguousarray(stream.events, dtype="<f8").tobytes())


def _check_events(events: np.ndarray, path: Path) -> np.ndarray:
    pol = events[:, 3]
    bad = ~np.isin(pol, (-1.0, 0.0, 1.0))
    if np.any(bad):
        raise ValueError(f"{path}: polarity values outside {{-1, 0, 1}}")
    zeros = pol == 0.0
    if np.any(zeros):
        warnings.warn(f"{path}: remapped {int(zeros.sum())} zero polarities to -1")
        events[zeros, 3] = -1.0
    t = events[:, 2]
    if np.any(np.diff(t) < 0):
        warnings.warn(f"{path}: timestamps not sorted; auto-sorting")
        events = events[np.argsort(t, kind="stable")]
    return events


def load_events(path, fmt: str | None = None,
                sensor_size: tuple[int, int] = (128, 128)) -> EventStream:
    """Load a raw-unit event stream; see module docstring for format details.

    Zero polarities are remapped to -1 with a warning; unsorted timestamps
    are auto-sorted with a warning.
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "x,y,t,p":
                raise ValueError(f"{path}: malformed header {header!r}; expected 'x,y,t,p'")
            try:
                events = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
            except ValueError as exc:
                raise ValueError(f"{path}: malformed csv body: {exc}") from exc
        if events.size == 0 or events.shape[1] != 4:
            raise ValueError(f"{path}: expected 4 columns of events")
    else:
        blob = path.read_bytes()
        if blob[:4] != _MAGIC:
            raise ValueError(f"{path}: malformed header, expected magic {_MAGIC!r}")
        (count,) = struct.unpack("<Q", blob[4:12])
        expected = 12 + count * 4 * 8
        if len(blob) != expected:
            raise ValueError(f"{path}: truncated evt1 payload ({len(blob)} bytes, expected {expected})")
        events = np.frombuffer(blob, dtype="<f8", offset=12).reshape(count, 4).astype(np.float64)
    events = _check_events(events.copy(), path)
    return EventStream(events, sensor_size)
