"""Binary probe-outcome traces and their on-disk formats.

Two formats are supported:

``csv``
    One ``0``/``1`` per line. Lines starting with ``#`` are comments; the
    writer stores metadata in ``# key: value`` comment lines which the reader
    picks up again, so a save/load cycle is lossless.

``packed``
    Little-endian binary layout::

        magic            4 bytes  b"FDRT"
        version          u16      1
        sample_period_us u32
        label_len        u16
        label            label_len bytes, UTF-8
        outcome_count    u64
        payload          ceil(count / 8) bytes, LSB-first, zero padded
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional

import numpy as np

MAGIC = b"FDRT"
VERSION = 1
DEFAULT_SAMPLE_PERIOD_US = 500_000

_HEAD = struct.Struct("<4sHIH")
_COUNT = struct.Struct("<Q")

Format = Literal["csv", "packed"]


class TraceFormatError(ValueError):
    """A trace file could not be parsed."""


@dataclass(frozen=True, eq=False)
class OutcomeTrace:
    """Ordered probe outcomes (1 = ACK received, 0 = lost) at a fixed period.

    ``outcomes`` is stored as a read-only ``uint8`` array.
    """

    outcomes: np.ndarray
    sample_period_us: int = DEFAULT_SAMPLE_PERIOD_US
    channel_label: str = ""
    origin: Literal["measured", "synthetic"] = "measured"
    seed: Optional[int] = None
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.outcomes)
        if arr.ndim != 1:
            raise ValueError("outcomes must be one-dimensional")
        if arr.size < 1:
            raise ValueError("trace must contain at least one outcome")
        if arr.dtype != np.uint8:
            if arr.dtype == bool:
                arr = arr.astype(np.uint8)
            else:
                bad = np.flatnonzero((arr != 0) & (arr != 1))
                if bad.size:
                    raise ValueError(
                        f"outcome at index {bad[0]} is {arr[bad[0]]!r}, expected 0 or 1")
                arr = arr.astype(np.uint8)
        elif not self._checked and arr.max() > 1:
            bad = int(np.flatnonzero(arr > 1)[0])
            raise ValueError(f"outcome at index {bad} is {arr[bad]}, expected 0 or 1")
        if not arr.flags.owndata or arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "outcomes", arr)

        if int(self.sample_period_us) <= 0:
            raise ValueError("sample_period_us must be positive")
        object.__setattr__(self, "sample_period_us", int(self.sample_period_us))
        if self.origin not in ("measured", "synthetic"):
            raise ValueError(f"unknown origin {self.origin!r}")

    def __len__(self) -> int:
        return int(self.outcomes.size)

    @property
    def sample_period(self) -> float:
        """Sampling period in seconds."""
        return self.sample_period_us * 1e-6

    @property
    def duration(self) -> float:
        return len(self) * self.sample_period

    def fdr(self) -> float:
        """Overall frame delivery ratio of the trace."""
        return float(self.outcomes.mean())

    def describe(self) -> dict:
        return {
            "length": len(self),
            "sample_period_us": self.sample_period_us,
            "duration_s": self.duration,
            "channel_label": self.channel_label,
            "origin": self.origin,
            "seed": self.seed,
            "fdr": self.fdr(),
        }

    def as_float(self) -> np.ndarray:
        return self.outcomes.astype(np.float64)

    def slice(self, start: int, end: int) -> "OutcomeTrace":
        return slice_trace(self, start, end)

    def __eq__(self, other):
        if not isinstance(other, OutcomeTrace):
            return NotImplemented
        return (
            self.sample_period_us == other.sample_period_us
            and self.channel_label == other.channel_label
            and np.array_equal(self.outcomes, other.outcomes)
        )

    __hash__ = None


def slice_trace(trace: OutcomeTrace, start: int, end: int) -> OutcomeTrace:
    """Contiguous sub-trace ``[start, end)`` keeping the metadata."""
    n = len(trace)
    if not (0 <= start < end <= n):
        raise IndexError(f"invalid slice [{start}, {end}) for trace of length {n}")
    return replace(trace, outcomes=trace.outcomes[start:end], _checked=True)


def _infer_format(path: Path) -> Format:
    return "csv" if path.suffix.lower() in (".csv", ".txt") else "packed"


def load_trace(path, format: Optional[Format] = None, *,
               sample_period_us: Optional[int] = None,
               channel_label: Optional[str] = None) -> OutcomeTrace:
    """Read a trace file.

    ``format`` defaults to ``csv`` for ``.csv``/``.txt`` files and ``packed``
    otherwise. For CSV files, ``sample_period_us`` and ``channel_label`` fill
    in metadata the file does not carry (explicit arguments win over header
    comments).
    """
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "csv":
        return _load_csv(path, sample_period_us, channel_label)
    if fmt == "packed":
        return _load_packed(path)
    raise ValueError(f"unknown trace format {fmt!r}")


def save_trace(trace: OutcomeTrace, path, format: Optional[Format] = None) -> None:
    path = Path(path)
    if len(trace) < 1:
        raise ValueError("cannot save an empty trace")
    fmt = format or _infer_format(path)
    if fmt == "csv":
        _save_csv(trace, path)
    elif fmt == "packed":
        path.write_bytes(encode_packed(trace))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def packed_size(n_outcomes: int, label: str = "") -> int:
    """Size in bytes of a packed file holding ``n_outcomes`` outcomes."""
    return _HEAD.size + len(label.encode("utf-8")) + _COUNT.size + (n_outcomes + 7) // 8


def encode_packed(trace: OutcomeTrace) -> bytes:
    label = trace.channel_label.encode("utf-8")
    if len(label) > 0xFFFF:
        raise ValueError("channel label too long for packed format")
    if trace.sample_period_us > 0xFFFFFFFF:
        raise ValueError("sample period does not fit in u32")
    head = _HEAD.pack(MAGIC, VERSION, trace.sample_period_us, len(label))
    payload = np.packbits(trace.outcomes, bitorder="little").tobytes()
    return head + label + _COUNT.pack(len(trace)) + payload


def decode_packed(data: bytes) -> OutcomeTrace:
    if len(data) < _HEAD.size:
        raise TraceFormatError("file too short for header")
    magic, version, period, label_len = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TraceFormatError(f"unsupported version {version}")
    pos = _HEAD.size
    if len(data) < pos + label_len + _COUNT.size:
        raise TraceFormatError("header truncated inside channel label / count")
    try:
        label = data[pos:pos + label_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TraceFormatError(f"channel label is not valid UTF-8: {exc}") from None
    pos += label_len
    (count,) = _COUNT.unpack_from(data, pos)
    pos += _COUNT.size
    if count < 1:
        raise TraceFormatError("outcome_count must be at least 1")
    if period == 0:
        raise TraceFormatError("sample_period_us must be positive")
    need = (count + 7) // 8
    have = len(data) - pos
    if have < need:
        raise TraceFormatError(
            f"truncated payload: {count} outcomes need {need} bytes, found {have}")
    if have > need:
        raise TraceFormatError(f"{have - need} trailing bytes after payload")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=need, offset=pos),
                         count=count, bitorder="little")
    return OutcomeTrace(bits, sample_period_us=period, channel_label=label, _checked=True)


def _load_packed(path: Path) -> OutcomeTrace:
    return decode_packed(path.read_bytes())


def _save_csv(trace: OutcomeTrace, path: Path) -> None:
    head = [
        "# fdr-trace csv v1",
        f"# sample_period_us: {trace.sample_period_us}",
        f"# channel_label: {json.dumps(trace.channel_label)}",
    ]
    body = np.where(trace.outcomes == 1, b"1", b"0").astype("S1")
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("utf-8"))
        fh.write(b"\n".join(body.tolist()))
        fh.write(b"\n")


def _load_csv(path: Path, sample_period_us, channel_label) -> OutcomeTrace:
    meta = {}
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line[0] == "#":
                key, sep, val = line[1:].partition(":")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            if line == "1":
                values.append(1)
            elif line == "0":
                values.append(0)
            else:
                raise TraceFormatError(
                    f"{path}:{lineno}: expected '0' or '1', got {line!r}")
    if not values:
        raise TraceFormatError(f"{path}: no outcomes found")

    if sample_period_us is None:
        raw_period = meta.get("sample_period_us")
        if raw_period is None:
            sample_period_us = DEFAULT_SAMPLE_PERIOD_US
        else:
            try:
                sample_period_us = int(raw_period)
            except ValueError:
                raise TraceFormatError(
                    f"{path}: malformed sample_period_us header {raw_period!r}") from None
    if channel_label is None:
        raw_label = meta.get("channel_label")
        if raw_label is None:
            channel_label = ""
        else:
            try:
                channel_label = json.loads(raw_label)
            except json.JSONDecodeError:
                channel_label = raw_label
    return OutcomeTrace(np.array(values, dtype=np.uint8), sample_period_us=sample_period_us,
                        channel_label=str(channel_label), _checked=True)
