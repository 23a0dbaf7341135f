"""Evaluate an external model through subprocesses, with a persistent cache.

Exchange format: the model command receives a CSV file (header of parameter
names, one sample per row) and writes a text file holding one number per
row, in row order.  The default runs one row per invocation; ``batch_size``
larger than 1 sends several rows per invocation.

Cache layout: ``<cache_dir>/evals.log`` is an append-only log with one entry
per line, ``<key>\\t<value>\\t<crc32>``.  ``key`` hashes the model fingerprint
(command template, output column, parameter names) together with the exact
bytes of the input row.  Lines whose checksum does not match, e.g. a write
torn by a crash, are ignored on load.  The in-memory index is rebuilt from
the log when the cache is opened.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import shlex
import subprocess
import sys
import tempfile
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, ShapeMismatch

log = logging.getLogger(__name__)

LOG_NAME = "evals.log"


@dataclass(frozen=True)
class ModelSpec:
    command: str
    names: tuple[str, ...]
    workdir: str = "."
    timeout: float = 3600.0
    output_column: str = "y"
    batch_size: int = 1
    env_passthrough: tuple[str, ...] | None = None

    def __post_init__(self):
        if "{input}" not in self.command or "{output}" not in self.command:
            raise ConfigError("model command needs both {input} and {output} placeholders")
        if not self.timeout > 0:
            raise ConfigError("model timeout must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def fingerprint(self) -> str:
        text = "\x1f".join([self.command, self.output_column, *self.names])
        return hashlib.sha256(text.encode()).hexdigest()

    def argv(self, input_path, output_path) -> list[str]:
        cmd = self.command.format(input=shlex.quote(str(input_path)),
                                  output=shlex.quote(str(output_path)),
                                  python=shlex.quote(sys.executable))
        return shlex.split(cmd)

    def environment(self):
        if self.env_passthrough is None:
            return None
        return {k: os.environ[k] for k in self.env_passthrough if k in os.environ}


@dataclass(frozen=True)
class RowFailed:
    index: int
    cause: str  # "exit", "timeout", "parse", "launch"
    detail: str = ""


@dataclass
class BatchResult:
    values: np.ndarray
    failures: list[RowFailed] = field(default_factory=list)
    launches: int = 0
    cache_hits: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def _row_key(fingerprint: str, row) -> str:
    data = np.ascontiguousarray(row, dtype="<f8").tobytes()
    return hashlib.sha256(fingerprint.encode() + b"\0" + data).hexdigest()


def _entry(key: str, value) -> str:
    body = f"{key}\t{value}" if isinstance(value, str) else f"{key}\t{value!r}"
    return f"{body}\t{zlib.crc32(body.encode()):08x}\n"


class EvalCache:
    """Append-only on-disk store of model outputs keyed by input rows."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / LOG_NAME
        self._lock = threading.Lock()
        self._index: dict[str, float] = {}
        self.skipped = 0
        self._load()

    def _load(self):
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        for line in raw.split(b"\n"):
            parts = line.decode("utf-8", "replace").split("\t")
            if len(parts) != 3:
                self.skipped += bool(line)
                continue
            key, value, crc = parts
            if _entry(key, value)[:-1].rsplit("\t", 1)[1] != crc:
                self.skipped += 1
                continue
            try:
                self._index[key] = float(value)
            except ValueError:
                self.skipped += 1
        if raw and not raw.endswith(b"\n"):
            # terminate a torn tail so the next entry starts on a fresh line
            with open(self.path, "ab") as fh:
                fh.write(b"\n")
        if self.skipped:
            log.warning("ignored %d corrupt cache entries in %s", self.skipped, self.path)

    def __len__(self):
        return len(self._index)

    def __contains__(self, key):
        return key in self._index

    def get(self, key):
        return self._index.get(key)

    def put(self, key: str, value: float) -> None:
        with self._lock:
            if key in self._index:
                return
            with open(self.path, "a") as fh:
                fh.write(_entry(key, float(value)))
                fh.flush()
                os.fsync(fh.fileno())
            self._index[key] = float(value)


def _write_rows(path, names, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _read_outputs(path, n, output_column):
    tokens = Path(path).read_text().split()
    if tokens and tokens[0] == output_column:
        tokens = tokens[1:]
    if len(tokens) != n:
        raise ValueError(f"expected {n} output values, found {len(tokens)}")
    values = [float(t) for t in tokens]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite model output")
    return values


def _run_group(spec: ModelSpec, rows, counter):
    """Run one invocation for ``rows``; returns (values or None, cause, detail)."""
    with tempfile.TemporaryDirectory(prefix="gpsobol-") as tmp:
        inp, out = Path(tmp) / "input.csv", Path(tmp) / "output.txt"
        _write_rows(inp, spec.names, rows)
        counter()
        try:
            proc = subprocess.run(spec.argv(inp, out), cwd=spec.workdir, capture_output=True,
                                  text=True, timeout=spec.timeout, env=spec.environment())
        except subprocess.TimeoutExpired as exc:
            return None, "timeout", f"timed out after {spec.timeout:g}s: {exc.stderr or ''}"
        except OSError as exc:
            return None, "launch", str(exc)
        captured = (proc.stdout + proc.stderr)[-2000:]
        if proc.returncode != 0:
            return None, "exit", f"exit status {proc.returncode}: {captured}"
        try:
            return _read_outputs(out, len(rows), spec.output_column), "", ""
        except (OSError, ValueError) as exc:
            return None, "parse", f"{exc}; process output: {captured}"


def evaluate_batch(spec: ModelSpec, rows, cache: EvalCache | None = None,
                   parallelism: int = 1) -> BatchResult:
    """Evaluate ``rows`` (physical units, columns in ``spec.names`` order).

    Cached rows are not re-executed.  Failed rows come back as NaN with a
    :class:`RowFailed` record each; successful rows are cached.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(spec.names):
        raise ShapeMismatch(f"rows have {rows.shape[1]} columns, model takes {len(spec.names)}")
    fp = spec.fingerprint
    keys = [_row_key(fp, r) for r in rows]
    values = np.full(rows.shape[0], np.nan)
    pending: dict[str, list[int]] = {}
    hits = 0
    for n, key in enumerate(keys):
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            values[n] = cached
            hits += 1
        else:
            pending.setdefault(key, []).append(n)
    todo = list(pending)
    groups = [todo[s:s + spec.batch_size] for s in range(0, len(todo), spec.batch_size)]
    launches = 0
    lock = threading.Lock()

    def count():
        nonlocal launches
        with lock:
            launches += 1

    def run(group):
        return _run_group(spec, [rows[pending[k][0]] for k in group], count)

    if parallelism > 1 and len(groups) > 1:
        with ThreadPoolExecutor(parallelism) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(g) for g in groups]

    failures = []
    for group, (out, cause, detail) in zip(groups, results):
        for pos, key in enumerate(group):
            if out is None:
                failures.extend(RowFailed(n, cause, detail) for n in pending[key])
                continue
            values[pending[key]] = out[pos]
            if cache is not None:
                cache.put(key, out[pos])
    failures.sort(key=lambda f: f.index)
    return BatchResult(values, failures, launches, hits)


def write_training_csv(path, X, y, names, output_name="y", meta=None) -> None:
    """Write inputs and outputs with enough digits for a lossless round trip."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[1] != len(names):
        raise ShapeMismatch("training matrix, outputs and names disagree in size")
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh)
        writer.writerow([*names, output_name])
        for row, val in zip(X, y):
            writer.writerow([*(repr(float(v)) for v in row), repr(float(val))])


def read_training_csv(path, names, output_name=None):
    """Read a training CSV; returns ``(X, y, meta)`` in physical units."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None:
        raise SchemaError(f"{path}: missing header")
    if header[:-1] != list(names) or len(header) != len(names) + 1:
        raise SchemaError(f"{path}: header {header} does not match parameters {list(names)}")
    if output_name is not None and header[-1] != output_name:
        raise SchemaError(f"{path}: output column is {header[-1]!r}, expected {output_name!r}")
    data = []
    for r, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        vals = []
        for col, cell in zip(header, row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(r, col, repr(cell)) from None
        data.append(vals)
    if not data:
        raise SchemaError(f"{path}: empty training set")
    arr = np.array(data)
    return arr[:, :-1], arr[:, -1], meta
