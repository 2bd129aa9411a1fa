"""WFDB record parsing and windowed ECG dataset construction.

Covers the three on-disk inputs of an MIT-BIH style record:

* ``.hea`` text headers — first line ``name nsig fs nsamples``, then one
  line per signal: ``filename format gain baseline [description]``. Only
  signal format 212 is accepted.
* ``.dat`` format-212 signals — two signed 12-bit samples packed into
  three bytes; multi-signal records interleave samples across channels.
* ``.atr`` annotations — a stream of little-endian 16-bit words holding
  ``code = word >> 10`` and ``delta = word & 0x3FF``; code 0 with delta 0
  terminates. Code 59 (SKIP) is followed by a little-endian u32 that jumps
  the sample cursor to an absolute position, codes 60/61/62 (NUM/SUB/CHN
  modifiers) are consumed and ignored, and code 63 (AUX) is followed by
  ``delta`` payload bytes padded to an even count.

Dataset construction tiles each record into consecutive non-overlapping
256-sample windows aligned to sample 0. A window's label comes from the
annotations inside it, mapped through the task's symbol table with the
priority: task-specific anomaly class, then the catch-all anomaly class,
then Normal; among classes of equal priority the earliest annotation wins.
Windows containing no mapped annotation are dropped. Windows are then
shuffled with a seeded generator and split 70/10/20 by count.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng

logger = logging.getLogger(__name__)

WINDOW_SAMPLES = 256
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
SPLIT_NAMES = ("train", "val", "test")

# Standard annotation code table (code -> display symbol).
CODE_SYMBOLS = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T",
    20: "*", 21: "D", 22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t",
    28: "+", 29: "u", 30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n",
    36: "@", 37: "x", 38: "f", 39: "(", 40: ")", 41: "r",
}
SYMBOL_CODES = {symbol: code for code, symbol in CODE_SYMBOLS.items()}
UNKNOWN_SYMBOL = "?"

_SKIP, _NUM, _SUB, _CHN, _AUX = 59, 60, 61, 62, 63


class FormatError(Exception):
    """Malformed binary signal or annotation data."""


class HeaderParseError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"header line {line}: {message}")
        self.line = line


class UnsupportedFormatError(Exception):
    """Signal format other than 212."""


class EmptyDatasetError(Exception):
    """No labelled windows could be constructed."""


@dataclass(frozen=True)
class SignalInfo:
    name: str
    gain: float
    baseline: int


@dataclass
class Record:
    name: str
    sampling_rate: float
    channels: list[SignalInfo]
    samples: list[np.ndarray] = field(default_factory=list)
    expected_samples: int = 0

    @property
    def num_samples(self) -> int:
        return len(self.samples[0]) if self.samples else 0


@dataclass(frozen=True)
class Annotation:
    sample_index: int
    code: int
    aux: bytes = b""

    @property
    def symbol(self) -> str:
        return CODE_SYMBOLS.get(self.code, UNKNOWN_SYMBOL)


@dataclass(frozen=True)
class TaskSpec:
    """Output classes of one exploration and the annotation symbols feeding them."""

    task_id: str
    classes: tuple[str, ...]
    symbol_map: dict[str, str]
    normal_class: str = "Normal"
    other_class: str | None = None

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("a task needs at least two classes")
        bad = {c for c in self.symbol_map.values() if c not in self.classes}
        if bad:
            raise ValueError(f"symbol map targets unknown classes {sorted(bad)}")

    def priority(self, cls: str) -> int:
        """Lower value = stronger claim on the window label."""
        if cls == self.normal_class:
            return 3
        if cls == self.other_class:
            return 2
        return 1


# MIT-BIH beat symbols; everything else (rhythm/quality marks) is unannotated
# for labeling purposes unless a task maps it explicitly.
BEAT_SYMBOLS = ("N", "L", "R", "B", "A", "a", "J", "S", "V", "r",
                "F", "e", "j", "n", "E", "/", "f", "Q")


def _beat_map(specific: dict[str, str], other: str) -> dict[str, str]:
    mapping = {"N": "Normal"}
    mapping.update(specific)
    for symbol in BEAT_SYMBOLS:
        mapping.setdefault(symbol, other)
    return mapping


DEFAULT_TASKS = {
    "DNN1": TaskSpec("DNN1", ("Normal", "Anomaly"),
                     _beat_map({}, "Anomaly"), other_class="Anomaly"),
    "DNN2": TaskSpec("DNN2", ("Normal", "PVC", "Other"),
                     _beat_map({"V": "PVC"}, "Other"), other_class="Other"),
    "DNN3": TaskSpec("DNN3", ("Normal", "BundleBranch", "Other"),
                     _beat_map({"L": "BundleBranch", "R": "BundleBranch"}, "Other"),
                     other_class="Other"),
    "DNN4": TaskSpec("DNN4", ("Normal", "Atrial", "Ventricular", "Other"),
                     _beat_map({"A": "Atrial", "a": "Atrial", "J": "Atrial", "S": "Atrial",
                                "V": "Ventricular", "E": "Ventricular"}, "Other"),
                     other_class="Other"),
    "DNN5": TaskSpec("DNN5", ("Normal", "VFib", "Other"),
                     {**_beat_map({}, "Other"),
                      "[": "VFib", "!": "VFib", "]": "VFib"},
                     other_class="Other"),
}


def parse_header(text: str) -> Record:
    """Parse a header into a Record skeleton (no samples loaded)."""
    lines = [ln for ln in text.splitlines()]
    content = [(i + 1, ln.strip()) for i, ln in enumerate(lines)
               if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise HeaderParseError("empty header", 1)
    lineno, first = content[0]
    fields = first.split()
    if len(fields) < 4:
        raise HeaderParseError("expected 'name nsig fs nsamples'", lineno)
    name = fields[0]
    try:
        nsig = int(fields[1])
        fs = float(fields[2])
        nsamples = int(fields[3])
    except ValueError:
        raise HeaderParseError(f"non-numeric record fields in {first!r}", lineno) from None
    if nsig <= 0:
        raise HeaderParseError("record must declare at least one signal", lineno)
    if fs <= 0:
        raise HeaderParseError("sampling rate must be positive", lineno)

    signal_lines = content[1:]
    if len(signal_lines) < nsig:
        raise HeaderParseError(f"expected {nsig} signal lines, found {len(signal_lines)}",
                               lineno)
    channels = []
    for lineno, line in signal_lines[:nsig]:
        fields = line.split()
        if len(fields) < 4:
            raise HeaderParseError("expected 'filename format gain baseline [name]'", lineno)
        fmt_token = fields[1].split("x")[0].split(":")[0].split("+")[0]
        try:
            fmt = int(fmt_token)
        except ValueError:
            raise HeaderParseError(f"bad format code {fields[1]!r}", lineno) from None
        if fmt != 212:
            raise UnsupportedFormatError(f"signal format {fmt} not supported (only 212)")
        gain_token = fields[2].split("/")[0].split("(")[0]
        try:
            gain = float(gain_token)
            baseline = int(fields[3])
        except ValueError:
            raise HeaderParseError(f"bad gain/baseline in {line!r}", lineno) from None
        channels.append(SignalInfo(name=" ".join(fields[4:]) or fields[0],
                                   gain=gain, baseline=baseline))
    return Record(name=name, sampling_rate=fs, channels=channels,
                  expected_samples=nsamples)


def _sign_extend_12(value: int) -> int:
    return value - 4096 if value >= 2048 else value


def decode_212(data: bytes, count: int | None = None) -> np.ndarray:
    """Unpack format-212 bytes into a flat array of signed samples.

    ``count`` limits the output; an odd count consumes the final triplet's
    first sample only. Without it, the byte length must be a whole number
    of triplets.
    """
    full, tail = divmod(len(data), 3)
    capacity = 2 * full + (1 if tail == 2 else 0)
    if count is None:
        count = 2 * full
    if count > capacity or (tail and count % 2 == 0) or tail == 1:
        raise FormatError(
            f"truncated format-212 data: {len(data)} bytes cannot hold {count} samples")

    raw = np.frombuffer(data[: 3 * full], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    s0 = ((raw[:, 1] & 0x0F) << 8) | raw[:, 0]
    s1 = ((raw[:, 1] & 0xF0) << 4) | raw[:, 2]
    samples = np.empty(2 * full, dtype=np.int32)
    samples[0::2] = s0
    samples[1::2] = s1
    if tail == 2:
        b0, b1 = data[-2], data[-1]
        extra = ((b1 & 0x0F) << 8) | b0
        samples = np.append(samples, np.int32(extra))
    samples = np.where(samples >= 2048, samples - 4096, samples)
    return samples[:count]


def encode_212(samples) -> bytes:
    """Inverse of :func:`decode_212`; odd sample counts pad a zero final sample."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size and (samples.min() < -2048 or samples.max() > 2047):
        raise ValueError("format 212 holds signed 12-bit samples only")
    if samples.size % 2:
        samples = np.append(samples, 0)
    unsigned = np.where(samples < 0, samples + 4096, samples).astype(np.uint32)
    s0 = unsigned[0::2]
    s1 = unsigned[1::2]
    out = np.empty((s0.size, 3), dtype=np.uint8)
    out[:, 0] = s0 & 0xFF
    out[:, 1] = ((s0 >> 8) & 0x0F) | (((s1 >> 8) & 0x0F) << 4)
    out[:, 2] = s1 & 0xFF
    return out.tobytes()


def load_record(hea_path) -> Record:
    """Read the header and its format-212 signal file."""
    hea_path = Path(hea_path)
    record = parse_header(hea_path.read_text())
    dat_path = hea_path.with_suffix(".dat")
    data = dat_path.read_bytes()
    nsig = len(record.channels)
    total = record.expected_samples * nsig if record.expected_samples else None
    flat = decode_212(data, total)
    record.samples = [flat[i::nsig] for i in range(nsig)]
    return record


def parse_annotations(data: bytes) -> list[Annotation]:
    """Decode an annotation byte stream into cumulative-sample annotations."""
    annotations: list[Annotation] = []
    time = 0
    pos = 0
    n = len(data)
    pending_jump: int | None = None
    while True:
        if pos + 2 > n:
            raise FormatError("annotation stream ended without terminator")
        word = data[pos] | (data[pos + 1] << 8)
        pos += 2
        code = word >> 10
        delta = word & 0x3FF
        if code == 0 and delta == 0:
            break
        if code == _SKIP:
            if pos + 4 > n:
                raise FormatError("SKIP annotation missing its 4-byte target")
            pending_jump = struct.unpack_from("<I", data, pos)[0]
            pos += 4
            continue
        if code in (_NUM, _SUB, _CHN):
            continue  # modifier for the previous annotation; not retained
        if code == _AUX:
            aux = data[pos:pos + delta]
            if len(aux) < delta:
                raise FormatError("AUX annotation payload truncated")
            pos += delta + (delta & 1)  # payload padded to an even byte count
            if annotations:
                annotations[-1] = Annotation(annotations[-1].sample_index,
                                             annotations[-1].code, bytes(aux))
            continue
        if pending_jump is not None:
            time = pending_jump
            pending_jump = None
        time += delta
        if code not in CODE_SYMBOLS:
            logger.warning("unknown annotation code %d at sample %d", code, time)
        annotations.append(Annotation(sample_index=time, code=code))
    return annotations


def serialize_annotations(annotations) -> bytes:
    """Inverse of :func:`parse_annotations` for synthetic streams."""
    out = bytearray()
    time = 0
    for ann in annotations:
        if ann.sample_index < time:
            raise ValueError("annotation sample indices must be non-decreasing")
        delta = ann.sample_index - time
        if delta > 0x3FF:
            out += struct.pack("<H", _SKIP << 10)
            out += struct.pack("<I", ann.sample_index)
            delta = 0
        if not 0 <= ann.code < 64 or ann.code in (0, _SKIP, _NUM, _SUB, _CHN, _AUX):
            raise ValueError(f"cannot serialize annotation code {ann.code}")
        out += struct.pack("<H", (ann.code << 10) | delta)
        if ann.aux:
            if len(ann.aux) > 0x3FF:
                raise ValueError("aux payload too long")
            out += struct.pack("<H", (_AUX << 10) | len(ann.aux))
            out += ann.aux
            if len(ann.aux) & 1:
                out += b"\x00"
        time = ann.sample_index
    out += struct.pack("<H", 0)
    return bytes(out)


def load_annotations(atr_path) -> list[Annotation]:
    return parse_annotations(Path(atr_path).read_bytes())


@dataclass(frozen=True)
class Window:
    samples: np.ndarray  # (channels, 256) int16
    label: str


@dataclass
class WindowedDataset:
    task_id: str
    classes: tuple[str, ...]
    windows: list[Window]
    splits: dict[str, list[int]]
    seed: int
    channels: int

    def counts(self) -> dict[str, int]:
        return {name: len(self.splits[name]) for name in SPLIT_NAMES}


def _label_window(symbols_in_order: list[str], task: TaskSpec, unmapped: str) -> str | None:
    """Label from the window's symbols; None drops the window."""
    labels = []
    for symbol in symbols_in_order:
        cls = task.symbol_map.get(symbol)
        if cls is None:
            if unmapped == "drop":
                return None
            cls = task.other_class or task.classes[-1]
        labels.append(cls)
    if not labels:
        return None
    return min(labels, key=lambda cls: (task.priority(cls), labels.index(cls)))


def build_dataset(records_with_annotations, task: TaskSpec, seed: int = 0,
                  unmapped: str = "other") -> WindowedDataset:
    """Windowed, labelled, shuffled and split dataset from parsed records.

    ``records_with_annotations`` is a sequence of (Record, annotations)
    pairs. ``unmapped`` selects what an annotation symbol outside the task
    map does: ``"other"`` contributes the catch-all class if nothing else
    labels the window, ``"drop"`` discards the window entirely.
    """
    if unmapped not in ("other", "drop"):
        raise ValueError(f"unknown unmapped policy {unmapped!r}")
    pairs = list(records_with_annotations)
    rates = {record.sampling_rate for record, _ in pairs}
    if len(rates) > 1:
        logger.warning("mixing sampling rates %s; no resampling is performed",
                       sorted(rates))

    windows: list[Window] = []
    for record, annotations in pairs:
        n = record.num_samples
        channels = len(record.samples)
        if channels == 0:
            raise ValueError(f"record {record.name} has no loaded samples")
        by_window: dict[int, list[str]] = {}
        for ann in sorted(annotations, key=lambda a: a.sample_index):
            idx = ann.sample_index // WINDOW_SAMPLES
            by_window.setdefault(idx, []).append(ann.symbol)
        for idx in range(n // WINDOW_SAMPLES):
            symbols = by_window.get(idx, [])
            if not symbols:
                continue
            label = _label_window(symbols, task, unmapped)
            if label is None:
                continue
            start = idx * WINDOW_SAMPLES
            stack = np.stack([ch[start:start + WINDOW_SAMPLES] for ch in record.samples])
            windows.append(Window(stack.astype(np.int16), label))

    if not windows:
        raise EmptyDatasetError(
            f"no labelled {WINDOW_SAMPLES}-sample windows in {len(pairs)} record(s)")

    order = list(range(len(windows)))
    Rng(seed).shuffle(order)
    n = len(order)
    n_train = round(SPLIT_FRACTIONS[0] * n)
    n_val = round(SPLIT_FRACTIONS[1] * n)
    splits = {
        "train": order[:n_train],
        "val": order[n_train:n_train + n_val],
        "test": order[n_train + n_val:],
    }
    channels = windows[0].samples.shape[0]
    return WindowedDataset(task.task_id, task.classes, windows, splits, seed, channels)


def save_dataset(dataset: WindowedDataset, path) -> None:
    """One JSON header line, then fixed binary rows.

    Row layout: u8 split (0 train / 1 val / 2 test), u8 class index, then
    channels * 256 little-endian i16 samples.
    """
    split_of = {}
    for tag, name in enumerate(SPLIT_NAMES):
        for idx in dataset.splits[name]:
            split_of[idx] = tag
    header = {
        "task_id": dataset.task_id,
        "classes": list(dataset.classes),
        "counts": dataset.counts(),
        "seed": dataset.seed,
        "channels": dataset.channels,
        "window": WINDOW_SAMPLES,
    }
    class_index = {cls: i for i, cls in enumerate(dataset.classes)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for idx, window in enumerate(dataset.windows):
            fh.write(bytes([split_of[idx], class_index[window.label]]))
            fh.write(window.samples.astype("<i2").tobytes())


def load_dataset(path) -> WindowedDataset:
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline])
    channels = int(header["channels"])
    window_len = int(header["window"])
    classes = tuple(header["classes"])
    row_bytes = 2 + channels * window_len * 2
    body = raw[newline + 1:]
    if len(body) % row_bytes:
        raise FormatError("dataset body is not a whole number of rows")
    windows = []
    splits: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    for i in range(len(body) // row_bytes):
        row = body[i * row_bytes:(i + 1) * row_bytes]
        split_tag, label_idx = row[0], row[1]
        samples = np.frombuffer(row[2:], dtype="<i2").reshape(channels, window_len)
        windows.append(Window(samples.copy(), classes[label_idx]))
        splits[SPLIT_NAMES[split_tag]].append(i)
    return WindowedDataset(header["task_id"], classes, windows, splits,
                           int(header["seed"]), channels)
