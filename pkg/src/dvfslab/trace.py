"""Fixed-size binary trace records kept in a preallocated ring buffer.

One 42-byte record per governor decision (little-endian, packed)::

    timestamp_us u64 | freq_khz u32 | util_max_millis u16 | util_avg_millis u16
    per_core_util_millis 4 x u16 | state_q6 6 x u16 | action_idx u8
    reward_millis u16 | flags u8 | seq u16

``freq_khz`` is the frequency in force during the period that just ended and
``action_idx`` the level chosen for the next one. A trace file is a 16-byte
header (magic, version, core count, record count, dropped count) followed by
the packed records. The header byte after the core count names the state
layout of the governor that produced the trace (0 for governors without one).
"""

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import TraceFormatError

RECORD_DTYPE = np.dtype([
    ("timestamp_us", "<u8"),
    ("freq_khz", "<u4"),
    ("util_max_millis", "<u2"),
    ("util_avg_millis", "<u2"),
    ("per_core_util_millis", "<u2", (4,)),
    ("state_q6", "<u2", (6,)),
    ("action_idx", "u1"),
    ("reward_millis", "<u2"),
    ("flags", "u1"),
    ("seq", "<u2"),
])
RECORD_SIZE = RECORD_DTYPE.itemsize
assert RECORD_SIZE == 42

MAGIC = b"DVTR"
VERSION = 1
_HEADER = struct.Struct("<4sHBBII")
HEADER_SIZE = _HEADER.size

# header codes for the state layout of a learned governor
LAYOUT_CODES = {None: 0, "compact-v1": 1, "full-v1": 2}
_LAYOUT_NAMES = {v: k for k, v in LAYOUT_CODES.items()}

FLAG_RANDOM = 0x01  # action drawn by exploration
FLAG_TERMINAL = 0x02  # last decision before the deadline
FLAG_DEADLINE_MISS = 0x04
FLAG_IO = 0x08  # IO was outstanding during the period


def to_millis(x: float) -> int:
    return min(1000, max(0, int(round(x * 1000.0))))


class TraceBuffer:
    """Drop-oldest ring of trace records; recording never grows memory."""

    def __init__(self, capacity: int, cores: int = 4):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.cores = cores
        self.data = np.zeros(capacity, dtype=RECORD_DTYPE)
        self._cursor = 0
        self.count = 0
        self.dropped = 0
        self._seq = 0
        self.layout = None

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def __len__(self):
        return self.count

    def record(self, timestamp_us, freq_khz, util_max, util_avg, per_core=(), state_q6=(),
               action_idx=0, reward=0.0, flags=0) -> int:
        """Store one record; utilizations and reward are fractions in [0, 1]."""
        slot = self.data[self._cursor]
        slot["timestamp_us"] = timestamp_us
        slot["freq_khz"] = freq_khz
        slot["util_max_millis"] = to_millis(util_max)
        slot["util_avg_millis"] = to_millis(util_avg)
        cores = slot["per_core_util_millis"]
        for k in range(4):
            cores[k] = to_millis(per_core[k]) if k < len(per_core) else 0
        state = slot["state_q6"]
        for k in range(6):
            state[k] = min(65535, max(0, int(round(state_q6[k] * 65535)))) if k < len(state_q6) else 0
        slot["action_idx"] = action_idx
        slot["reward_millis"] = to_millis(reward)
        slot["flags"] = flags
        slot["seq"] = self._seq
        written = self._cursor
        self._seq = (self._seq + 1) & 0xFFFF
        self._cursor = (self._cursor + 1) % self.capacity
        if self.count == self.capacity:
            self.dropped += 1
        else:
            self.count += 1
        return written

    def annotate_last(self, reward=None, flags=0):
        """Attach the episode reward / extra flags to the newest record."""
        if self.count == 0:
            return
        slot = self.data[(self._cursor - 1) % self.capacity]
        if reward is not None:
            slot["reward_millis"] = to_millis(reward)
        slot["flags"] |= flags

    def records(self) -> np.ndarray:
        """Stored records, oldest first (a copy)."""
        if self.count < self.capacity:
            return self.data[:self.count].copy()
        return np.concatenate([self.data[self._cursor:], self.data[:self._cursor]])


class TraceFile:
    def __init__(self, records, cores=4, dropped=0, layout=None):
        self.records = records
        self.cores = cores
        self.dropped = dropped
        self.layout = layout

    def __len__(self):
        return len(self.records)


def export(buffer, path) -> Path:
    recs = buffer.records() if isinstance(buffer, TraceBuffer) else np.asarray(buffer, RECORD_DTYPE)
    cores = buffer.cores if isinstance(buffer, TraceBuffer) else 4
    dropped = buffer.dropped if isinstance(buffer, TraceBuffer) else 0
    layout = LAYOUT_CODES[getattr(buffer, "layout", None)]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, cores, layout, len(recs), dropped))
        fh.write(recs.tobytes())
    return path


def load(path) -> TraceFile:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise TraceFormatError(f"truncated header: file ends at byte offset {len(raw)}, header needs {HEADER_SIZE}")
    magic, version, cores, layout, count, dropped = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise TraceFormatError(f"unsupported trace version {version} (expected {VERSION})")
    body = len(raw) - HEADER_SIZE
    if body < count * RECORD_SIZE:
        complete = body // RECORD_SIZE
        offset = HEADER_SIZE + complete * RECORD_SIZE
        raise TraceFormatError(f"truncated record {complete} at byte offset {offset} "
                               f"(header announces {count} records)")
    if body > count * RECORD_SIZE:
        raise TraceFormatError(f"trailing bytes after byte offset {HEADER_SIZE + count * RECORD_SIZE}")
    records = np.frombuffer(raw, dtype=RECORD_DTYPE, count=count, offset=HEADER_SIZE).copy()
    if layout not in _LAYOUT_NAMES:
        raise TraceFormatError(f"unknown layout code {layout} at byte offset 7")
    return TraceFile(records, cores, dropped, _LAYOUT_NAMES[layout])


CSV_COLUMNS = (["seq", "timestamp_us", "freq_ghz", "util_max", "util_avg"]
               + [f"core{k}" for k in range(4)] + [f"s{k}" for k in range(6)]
               + ["action_idx", "reward", "flags"])


def to_csv(records) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in np.asarray(records, dtype=RECORD_DTYPE):
        writer.writerow(
            [int(r["seq"]), int(r["timestamp_us"]), f"{int(r['freq_khz']) / 1e6:.6f}",
             f"{r['util_max_millis'] / 1000:.3f}", f"{r['util_avg_millis'] / 1000:.3f}"]
            + [f"{c / 1000:.3f}" for c in r["per_core_util_millis"]]
            + [f"{s / 65535:.5f}" for s in r["state_q6"]]
            + [int(r["action_idx"]), f"{r['reward_millis'] / 1000:.3f}", int(r["flags"])])
    return out.getvalue()


def step_intervals(records):
    """``(start_s, end_s, freq_ghz)`` for each recorded period."""
    recs = np.asarray(records, dtype=RECORD_DTYPE)
    ends = recs["timestamp_us"].astype(np.float64) / 1e6
    starts = np.concatenate([[0.0], ends[:-1]])
    return starts, ends, recs["freq_khz"].astype(np.float64) / 1e6


def time_at_frequency(records, freq_ghz: float, window=(0.0, np.inf)) -> float:
    """Seconds spent at ``freq_ghz`` inside ``window`` according to a trace."""
    starts, ends, freqs = step_intervals(records)
    lo = np.maximum(starts, window[0])
    hi = np.minimum(ends, window[1])
    overlap = np.clip(hi - lo, 0.0, None)
    return float(overlap[np.abs(freqs - freq_ghz) < 5e-7].sum())


def segments_of(records, table):
    """``(level, util_avg, seconds)`` per record, ready for energy integration."""
    starts, ends, freqs = step_intervals(records)
    utils = np.asarray(records, dtype=RECORD_DTYPE)["util_avg_millis"] / 1000.0
    out = []
    for s, e, f, u in zip(starts, ends, freqs, utils):
        i = table.find(f)
        if i is None:
            raise TraceFormatError(f"trace frequency {f} GHz is not in the table")
        out.append((table[i], float(u), float(e - s)))
    return out
