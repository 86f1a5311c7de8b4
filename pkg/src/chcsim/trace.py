"""Request-trace ingestion, synthetic Zipf workload generation, and
empirical popularity estimation.

Canonical trace format: UTF-8 CSV with LF line endings and no quoting,
header ``seq,cell,file,user``, one request per line, ``seq`` strictly
increasing, ``user`` optional (may be empty).
"""

from __future__ import annotations

import io
from typing import Iterable, Iterator

import numpy as np

from .model import Catalog, Request, Topology

TRACE_HEADER = "seq,cell,file,user"


class TraceFormatError(ValueError):
    """Malformed or out-of-range trace content; message carries the
    1-based file line number."""


class RequestTrace:
    """Column-oriented request sequence.

    Stores seq/cell/file as int64 arrays (cheap for million-request
    traces) and yields :class:`Request` values on iteration.
    """

    __slots__ = ("seqs", "cells", "files", "users")

    def __init__(self, seqs, cells, files, users: list[str | None] | None = None):
        self.seqs = np.ascontiguousarray(seqs, dtype=np.int64)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.files = np.ascontiguousarray(files, dtype=np.int64)
        if not (len(self.seqs) == len(self.cells) == len(self.files)):
            raise ValueError("trace columns differ in length")
        if users is not None and len(users) != len(self.seqs):
            raise ValueError("trace columns differ in length")
        self.users = users

    @classmethod
    def from_requests(cls, requests: Iterable[Request]) -> "RequestTrace":
        seqs, cells, files, users = [], [], [], []
        for req in requests:
            seqs.append(req.seq)
            cells.append(req.cell)
            files.append(req.file)
            users.append(req.user)
        return cls(seqs, cells, files, users if any(u is not None for u in users) else None)

    def __len__(self) -> int:
        return int(self.seqs.shape[0])

    def __iter__(self) -> Iterator[Request]:
        users = self.users
        for i in range(len(self)):
            yield Request(
                int(self.seqs[i]),
                int(self.cells[i]),
                int(self.files[i]),
                users[i] if users is not None else None,
            )

    def __getitem__(self, i: int) -> Request:
        return Request(
            int(self.seqs[i]),
            int(self.cells[i]),
            int(self.files[i]),
            self.users[i] if self.users is not None else None,
        )

    def max_file(self) -> int:
        return int(self.files.max()) if len(self) else 0

    def split(self, fraction: float) -> tuple["RequestTrace", "RequestTrace"]:
        """(head, tail) split at ``fraction`` of the requests; the head is
        meant for popularity estimation, the tail for replay."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"split fraction must be in [0, 1], got {fraction}")
        cut = int(round(fraction * len(self)))
        head_users = self.users[:cut] if self.users is not None else None
        tail_users = self.users[cut:] if self.users is not None else None
        return (
            RequestTrace(self.seqs[:cut], self.cells[:cut], self.files[:cut], head_users),
            RequestTrace(self.seqs[cut:], self.cells[cut:], self.files[cut:], tail_users),
        )


def parse_trace(source, topology: Topology, catalog: Catalog | None = None) -> RequestTrace:
    """Read a canonical trace CSV from a path or text stream.

    Cells are validated against the topology; files against the catalog
    when one is given, otherwise the catalog is left to be inferred from
    the maximum file id.
    """
    if hasattr(source, "read"):
        return _parse_stream(source, topology, catalog)
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return _parse_stream(fh, topology, catalog)


def _parse_stream(fh, topology: Topology, catalog: Catalog | None) -> RequestTrace:
    header = fh.readline().rstrip("\r\n")
    if header != TRACE_HEADER:
        raise TraceFormatError(f"bad trace header at line 1: {header!r}")
    max_file = catalog.num_files if catalog is not None else None
    seqs: list[int] = []
    cells: list[int] = []
    files: list[int] = []
    users: list[str | None] = []
    prev_seq = None
    any_user = False
    for lineno, raw in enumerate(fh, start=2):
        line = raw.rstrip("\r\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceFormatError(f"expected 4 fields at line {lineno}: {line!r}")
        try:
            seq, cell, file = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise TraceFormatError(f"non-integer field at line {lineno}: {line!r}") from None
        if prev_seq is not None and seq <= prev_seq:
            raise TraceFormatError(f"seq not strictly increasing at line {lineno}")
        if not 1 <= cell <= topology.num_cells:
            raise TraceFormatError(f"cell out of range at line {lineno}")
        if file < 1 or (max_file is not None and file > max_file):
            raise TraceFormatError(f"file out of range at line {lineno}")
        prev_seq = seq
        seqs.append(seq)
        cells.append(cell)
        files.append(file)
        user = parts[3]
        users.append(user if user else None)
        any_user = any_user or bool(user)
    return RequestTrace(seqs, cells, files, users if any_user else None)


def save_trace(trace: RequestTrace, target) -> None:
    """Write a trace in canonical form; round-trips bit-exactly through
    :func:`parse_trace`."""
    if hasattr(target, "write"):
        _write_stream(trace, target)
        return
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        _write_stream(trace, fh)


def _write_stream(trace: RequestTrace, fh) -> None:
    fh.write(TRACE_HEADER + "\n")
    seqs = trace.seqs.tolist()
    cells = trace.cells.tolist()
    files = trace.files.tolist()
    users = trace.users
    for i in range(len(seqs)):
        user = users[i] if users is not None else None
        fh.write(f"{seqs[i]},{cells[i]},{files[i]},{user if user is not None else ''}\n")


def trace_to_text(trace: RequestTrace) -> str:
    buf = io.StringIO()
    _write_stream(trace, buf)
    return buf.getvalue()


def zipf_popularity(num_files: int, exponent: float) -> np.ndarray:
    """Normalized Zipf mass over ranks 1..F: p_i proportional to
    1 / i**exponent (exponent 0 gives the uniform distribution)."""
    if num_files < 1:
        raise ValueError("num_files must be >= 1")
    if exponent < 0:
        raise ValueError("zipf exponent must be >= 0")
    weights = np.arange(1, num_files + 1, dtype=np.float64) ** (-float(exponent))
    return weights / weights.sum()


def generate_zipf_trace(
    num_requests: int,
    num_files: int,
    zipf_exponent: float,
    topology: Topology,
    seed: int,
) -> RequestTrace:
    """Synthesize a request trace: file ids i.i.d. Zipf over 1..F by
    inverse-CDF sampling, cells i.i.d. uniform over 1..R.

    Randomness comes from numpy's PCG64 generator, so a seed fully
    determines the trace across platforms. Files are drawn first, then
    cells, each as one bulk draw.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cdf = np.cumsum(zipf_popularity(num_files, zipf_exponent))
    cdf[-1] = 1.0  # guard the top bin against accumulated rounding
    files = np.searchsorted(cdf, rng.random(num_requests), side="right") + 1
    cells = rng.integers(1, topology.num_cells + 1, size=num_requests)
    seqs = np.arange(1, num_requests + 1, dtype=np.int64)
    return RequestTrace(seqs, cells, files)


def trace_from_counts(counts, topology: Topology) -> RequestTrace:
    """Deterministic trace whose empirical file distribution equals
    counts/sum(counts) in every cell: each cell issues exactly
    ``counts[i]`` requests for file i+1, cells in ascending order.

    Used to check the simulator against the analytic expected delay.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("counts must be >= 0")
    per_cell_files = np.repeat(np.arange(1, len(counts) + 1, dtype=np.int64), counts)
    files = np.tile(per_cell_files, topology.num_cells)
    cells = np.repeat(
        np.arange(1, topology.num_cells + 1, dtype=np.int64), len(per_cell_files)
    )
    seqs = np.arange(1, len(files) + 1, dtype=np.int64)
    return RequestTrace(seqs, cells, files)


def estimate_popularity(trace: RequestTrace, num_files: int) -> np.ndarray:
    """Empirical popularity: request share per file id, zero for files
    the trace never touches. Sums to 1."""
    if len(trace) == 0:
        raise ValueError("cannot estimate popularity from an empty trace")
    if trace.max_file() > num_files:
        raise ValueError(
            f"trace references file {trace.max_file()} beyond catalog size {num_files}"
        )
    counts = np.bincount(trace.files, minlength=num_files + 1)[1:]
    return counts / float(len(trace))
