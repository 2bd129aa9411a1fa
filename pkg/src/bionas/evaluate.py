"""Pluggable fitness evaluation: surrogate, lookup table, external trainer, cache.

An evaluator is any callable ``(ArchParams) -> QualityReport``. The search
engine only ever sees the returned report, so backends are interchangeable:

* :class:`SurrogateEvaluator` — closed-form stand-in for real training,
  deterministic and instant; used by tests and for dry-running searches.
* :class:`TableEvaluator` — replays previously recorded metric rows.
* :class:`ExternalEvaluator` — drives one or more trainer subprocesses over
  a line-delimited protocol (one UTF-8 JSON object per LF-terminated line):

      request   {"id": ..., "arch": {"B":, "x":, "z":}, "task": {"classes":
                [...], "dataset": "path"}, "hp": {"lr":, "batch":,
                "dropout":, "beta1":, "beta2":, "max_epochs":}}
      response  {"id": ..., "status": "ok"|"failed", "metrics": {"accuracy":,
                "per_class": [{"label":, "precision":, "recall":, "f1":}]},
                "reason": "..." (failed only)}

* :class:`CachedEvaluator` — wraps any backend with an in-memory map plus an
  append-only CSV file (with a trailing CRC32 column) so interrupted
  searches resume without re-training.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import queue
import shlex
import subprocess
import threading
import zlib
from dataclasses import dataclass, field

from .archspace import ArchParams, encode
from .metrics import ClassMetrics, QualityReport
from .netmodel import NetConfig, build
from .rng import MASK64, splitmix64

logger = logging.getLogger(__name__)


class EvaluationError(Exception):
    """Base class; carries the identity of the architecture being evaluated."""

    def __init__(self, message: str, arch: ArchParams | None = None):
        super().__init__(message)
        self.arch = arch


class EvalMiss(EvaluationError):
    """Lookup-table evaluator has no row for the requested architecture."""


class EvalTimeout(EvaluationError):
    """Trainer did not answer in time (or its stream closed mid-request)."""


class EvalProtocolError(EvaluationError):
    """Trainer answered with something other than a matching response."""


class EvalFailed(EvaluationError):
    """Trainer answered with status=failed."""


@dataclass(frozen=True)
class TrainerHyperparams:
    """Training defaults passed to external trainers."""

    learning_rate: float = 0.001
    batch_size: int = 128
    dropout: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    max_epochs: int = 50

    def to_wire(self) -> dict:
        return {
            "lr": self.learning_rate,
            "batch": self.batch_size,
            "dropout": self.dropout,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "max_epochs": self.max_epochs,
        }

    def stable_hash(self) -> str:
        blob = json.dumps(self.to_wire(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


@dataclass(frozen=True)
class EvalTask:
    """What the trainer should train on: class labels and the dataset file."""

    classes: tuple[str, ...] = ("Normal", "Anomaly")
    dataset: str = ""
    task_id: str = ""

    def stable_hash(self) -> str:
        blob = json.dumps([self.task_id, list(self.classes), self.dataset], sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


@dataclass(frozen=True)
class EvalRequest:
    request_id: str
    arch: ArchParams
    task: EvalTask
    hyperparams: TrainerHyperparams

    def to_wire_line(self) -> str:
        payload = {
            "id": self.request_id,
            "arch": {"B": self.arch.blocks, "x": self.arch.filter_interval, "z": self.arch.lstm_exp},
            "task": {"classes": list(self.task.classes), "dataset": self.task.dataset},
            "hp": self.hyperparams.to_wire(),
        }
        return json.dumps(payload, separators=(",", ":")) + "\n"


@dataclass(frozen=True)
class EvalResponse:
    request_id: str
    status: str
    quality: QualityReport | None = None
    reason: str = ""


def parse_response_line(line: str) -> EvalResponse:
    try:
        data = json.loads(line)
        request_id = str(data["id"])
        status = str(data["status"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise EvalProtocolError(f"malformed trainer response {line!r}: {exc}") from exc
    if status == "ok":
        try:
            quality = QualityReport.from_json_dict(data["metrics"])
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalProtocolError(f"malformed metrics in response {line!r}: {exc}") from exc
        return EvalResponse(request_id, "ok", quality=quality)
    return EvalResponse(request_id, status, reason=str(data.get("reason", "")))


class SurrogateEvaluator:
    """Deterministic closed-form quality: saturating in parameter count.

    quality = 0.80 + 0.15 * (1 - exp(-params / 1e6)) plus a +-0.01
    perturbation keyed by (seed, genome), so distinct architectures get
    distinct but reproducible scores.
    """

    P0 = 1e6

    def __init__(self, cfg: NetConfig | None = None, seed: int = 0,
                 classes: tuple[str, ...] = ("Normal", "Anomaly")):
        self.cfg = cfg or NetConfig()
        self.seed = seed
        self.classes = classes

    def __call__(self, arch: ArchParams) -> QualityReport:
        params = build(arch, self.cfg).param_count
        base = 0.80 + 0.15 * (1.0 - math.exp(-params / self.P0))
        key = splitmix64((self.seed & MASK64) ^ encode(arch).to_int())
        perturbation = (key / MASK64 * 2.0 - 1.0) * 0.01
        q = base + perturbation
        per_class = tuple(ClassMetrics(label, q, q, q) for label in self.classes)
        return QualityReport(accuracy=q, per_class=per_class)


class TableEvaluator:
    """Exact replay of recorded results, keyed by the "B,x,z" string."""

    def __init__(self, table: dict[str, QualityReport]):
        self.table = dict(table)

    @staticmethod
    def key(arch: ArchParams) -> str:
        return f"{arch.blocks},{arch.filter_interval},{arch.lstm_exp}"

    def __call__(self, arch: ArchParams) -> QualityReport:
        key = self.key(arch)
        if key not in self.table:
            raise EvalMiss(f"no recorded result for architecture {key}", arch=arch)
        return self.table[key]

    @classmethod
    def from_csv(cls, path) -> "TableEvaluator":
        """Load rows of ``B,x,z,accuracy[,per_class_json]``."""
        table = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] in ("B", "arch"):
                    continue
                key = f"{int(row[0])},{int(row[1])},{int(row[2])}"
                accuracy = float(row[3])
                per_class = ()
                if len(row) > 4 and row[4]:
                    per_class = tuple(
                        ClassMetrics(m["label"], m["precision"], m["recall"], m["f1"])
                        for m in json.loads(row[4])
                    )
                table[key] = QualityReport(accuracy=accuracy, per_class=per_class)
        return cls(table)


class _TrainerProcess:
    """One trainer subprocess with a reader thread feeding a line queue."""

    def __init__(self, command: str):
        self.command = command
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,  # trainer logs go to our stderr
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self.lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)  # EOF sentinel

    def request(self, req: EvalRequest, timeout: float | None) -> EvalResponse:
        try:
            self.proc.stdin.write(req.to_wire_line())
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise EvalTimeout(f"trainer stdin closed: {exc}", arch=req.arch) from exc
        try:
            line = self.lines.get(timeout=timeout)
        except queue.Empty:
            raise EvalTimeout(
                f"no trainer response within {timeout}s for {req.arch.text()}", arch=req.arch
            ) from None
        if line is None:
            raise EvalTimeout(f"trainer exited before answering {req.arch.text()}", arch=req.arch)
        response = parse_response_line(line)
        if response.request_id != req.request_id:
            raise EvalProtocolError(
                f"response id {response.request_id!r} does not match request {req.request_id!r}",
                arch=req.arch,
            )
        return response

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class ExternalEvaluator:
    """Evaluator backed by trainer subprocesses speaking the line protocol.

    Each process handles one request at a time; ``processes`` > 1 gives a
    bounded pool so independent evaluations can be in flight concurrently.
    """

    def __init__(self, command: str, task: EvalTask,
                 hyperparams: TrainerHyperparams | None = None,
                 timeout: float | None = 600.0, processes: int = 1):
        if processes < 1:
            raise ValueError("processes must be >= 1")
        self.command = command
        self.task = task
        self.hyperparams = hyperparams or TrainerHyperparams()
        self.timeout = timeout
        self._counter = 0
        self._counter_lock = threading.Lock()
        self._idle: queue.Queue[_TrainerProcess] = queue.Queue()
        self._procs = [_TrainerProcess(command) for _ in range(processes)]
        for proc in self._procs:
            self._idle.put(proc)

    def _next_id(self) -> str:
        with self._counter_lock:
            self._counter += 1
            return f"req-{self._counter:06d}"

    def __call__(self, arch: ArchParams) -> QualityReport:
        req = EvalRequest(self._next_id(), arch, self.task, self.hyperparams)
        proc = self._idle.get()
        try:
            response = proc.request(req, self.timeout)
        finally:
            self._idle.put(proc)
        if response.status != "ok":
            raise EvalFailed(
                f"trainer failed on {arch.text()}: {response.reason or response.status}",
                arch=arch,
            )
        return response.quality

    def close(self):
        for proc in self._procs:
            proc.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class CachedEvaluator:
    """Transparent result cache around any evaluator.

    Keyed by (architecture, task hash, hyperparameter hash). Results are
    appended to a CSV file as they arrive; each row carries a CRC32 of its
    payload so truncated or corrupted lines are skipped (with a warning) on
    reload instead of poisoning a resumed search.
    """

    def __init__(self, backend, path=None, task: EvalTask | None = None,
                 hyperparams: TrainerHyperparams | None = None):
        self.backend = backend
        self.path = path
        task = task or getattr(backend, "task", None) or EvalTask()
        hp = hyperparams or getattr(backend, "hyperparams", None) or TrainerHyperparams()
        self._task_hash = task.stable_hash()
        self._hp_hash = hp.stable_hash()
        self._memory: dict[tuple, QualityReport] = {}
        self._write_lock = threading.Lock()
        self.backend_calls = 0
        if path is not None:
            self._load()

    def _key(self, arch: ArchParams) -> tuple:
        return (arch.blocks, arch.filter_interval, arch.lstm_exp, self._task_hash, self._hp_hash)

    @staticmethod
    def _checksum(fields: list[str]) -> str:
        return format(zlib.crc32("\x1f".join(fields).encode()), "08x")

    def _load(self):
        try:
            fh = open(self.path, newline="")
        except FileNotFoundError:
            return
        with fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) != 7 or self._checksum(row[:-1]) != row[-1]:
                    logger.warning("skipping corrupt cache row %d in %s", lineno, self.path)
                    continue
                try:
                    key = (int(row[0]), int(row[1]), int(row[2]), row[3], row[4])
                    report = QualityReport.from_json_dict(json.loads(row[5]))
                except (ValueError, KeyError, json.JSONDecodeError):
                    logger.warning("skipping undecodable cache row %d in %s", lineno, self.path)
                    continue
                self._memory[key] = report

    def _append(self, key: tuple, report: QualityReport):
        fields = [str(key[0]), str(key[1]), str(key[2]), key[3], key[4],
                  json.dumps(report.to_json_dict(), sort_keys=True)]
        fields.append(self._checksum(fields))
        out = io.StringIO()
        csv.writer(out, lineterminator="\n").writerow(fields)
        with self._write_lock, open(self.path, "a", newline="") as fh:
            fh.write(out.getvalue())

    def __call__(self, arch: ArchParams) -> QualityReport:
        key = self._key(arch)
        hit = self._memory.get(key)
        if hit is not None:
            return hit
        report = self.backend(arch)
        self.backend_calls += 1
        self._memory[key] = report
        if self.path is not None:
            self._append(key, report)
        return report
