"""
Append-only audit trail.

One line-delimited JSON file per run: a schema header line, then one
record per line. Timestamps are simulation milliseconds, so a run with
scripted backends reproduces its file byte for byte.
"""

from __future__ import annotations

import io
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

AUDIT_SCHEMA = "symbiotic-ran/audit"
AUDIT_VERSION = 1
KINDS = frozenset({"control_step", "enforcement", "kp_decision", "negotiation_round",
                   "backend_exchange", "run_start", "phase", "trajectory", "report"})


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_default, allow_nan=False)


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    t_ms: int
    source: str
    kind: str
    run_id: str
    payload: Mapping[str, Any]

    def to_dict(self) -> dict:
        return {"seq": self.seq, "t_ms": self.t_ms, "source": self.source, "kind": self.kind,
                "run_id": self.run_id, "payload": self.payload}


def audit_path(out_dir: str | Path, run_id: str) -> Path:
    return Path(out_dir) / f"{run_id}.audit.jsonl"


def _header(run_id: str) -> str:
    return dumps({"schema": AUDIT_SCHEMA, "version": AUDIT_VERSION, "run_id": run_id})


class AuditLogger:
    """Single writer for one run; producers on any thread go through a lock.

    ``t_ms`` comes from the payload when present and is held monotone.
    With ``path=None`` the stream is kept in memory (see :attr:`text`).
    Existing files are never overwritten.
    """

    def __init__(self, path: str | Path | None, run_id: str):
        self.path = Path(path) if path is not None else None
        self.run_id = run_id
        if self.path is None:
            self._fh = io.StringIO()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "x", encoding="utf-8", newline="\n")
        self._buffer = self._fh if self.path is None else None
        self._lock = threading.Lock()
        self._seq = 0
        self._t = 0
        self.records: list[AuditRecord] = []
        self._fh.write(_header(run_id) + "\n")
        self._fh.flush()

    def emit(self, kind: str, payload: Mapping[str, Any], source: str = "harness") -> AuditRecord:
        if kind not in KINDS:
            raise ValueError(f"unknown audit kind {kind!r}")
        payload = dict(payload)
        with self._lock:
            if self._fh is None:
                raise RuntimeError("audit logger is closed")
            t = payload.pop("t_ms", None)
            if t is not None:
                self._t = max(self._t, int(t))
            rec = AuditRecord(self._seq, self._t, source, kind, self.run_id, payload)
            self._fh.write(dumps(rec.to_dict()) + "\n")
            self._fh.flush()
            self._seq += 1
            self.records.append(rec)
        return rec

    def hook(self, source: str):
        return lambda kind, payload: self.emit(kind, payload, source)

    @property
    def text(self) -> str:
        """Serialized stream written so far."""
        if self._buffer is None:
            return self.path.read_text(encoding="utf-8")
        return self._buffer.getvalue()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None and self.path is not None:
                self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_audit(path: str | Path, records: Iterable[AuditRecord], run_id: str) -> None:
    """Write a complete audit file from records (used for replays and copies)."""
    lines = [_header(run_id)] + [dumps(r.to_dict()) for r in records]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_audit(path: str | Path, run_id: str | None = None) -> list[AuditRecord]:
    """Records of an audit file, or of ``<dir>/<run_id>.audit.jsonl``.

    A torn final line (crash mid-write) is skipped with a warning; damage
    anywhere else raises.
    """
    path = Path(path)
    if path.is_dir():
        if run_id is None:
            raise ValueError("run_id needed when reading from a directory")
        path = audit_path(path, run_id)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    torn_tail = not text.endswith("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValueError(f"{path}: empty audit file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: bad header line") from exc
    if head.get("schema") != AUDIT_SCHEMA:
        raise ValueError(f"{path}: not an audit file")
    if head.get("version") != AUDIT_VERSION:
        raise ValueError(f"{path}: unsupported audit version {head.get('version')}")
    out = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            if n == len(lines) and torn_tail:
                log.warning("%s: skipping torn final line %d", path, n)
                break
            raise ValueError(f"{path}: corrupt record on line {n}") from None
        out.append(AuditRecord(d["seq"], d["t_ms"], d["source"], d["kind"], d["run_id"], d["payload"]))
    if run_id is not None and any(r.run_id != run_id for r in out):
        raise ValueError(f"{path}: records from another run")
    return out
