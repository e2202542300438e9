"""Regular power iteration (RPI), multiplication-avoiding power iteration
(MAPI), and convergence bookkeeping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .mavp import (
    DimensionMismatchError,
    MavpMatrix,
    MavpOperator,
    OpCounter,
    as_matrix,
    as_vector,
    l1_norm,
    l2_norm,
)
from .report import TRACE_COLUMNS, dumps, fmt


class DegenerateIterateError(ArithmeticError):
    """The iterate collapsed to the zero vector and cannot be normalized."""


@dataclass(frozen=True)
class PowerIterConfig:
    operator: MavpOperator = MavpOperator.MIN1
    max_iterations: int = 100
    tolerance: float = 0.0  # on ||w_t - w_{t-1}||_1; 0 runs all iterations
    final_l2_normalize: bool = False
    seed: int = 0
    positive_init: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "operator", MavpOperator.parse(self.operator))
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    def with_(self, **changes) -> "PowerIterConfig":
        return replace(self, **changes)


@dataclass
class IterationRecord:
    iteration: int
    delta_l1: float
    delta_l2: float
    alignment_error: float | None = None
    ops: OpCounter = field(default_factory=OpCounter)
    setup_ops: OpCounter | None = None

    def row(self) -> tuple:
        o = self.ops
        return (self.iteration, self.delta_l1, self.delta_l2, self.alignment_error,
                o.multiplications, o.divisions, o.additions, o.comparisons)

    def as_dict(self) -> dict:
        d = dict(zip(TRACE_COLUMNS, self.row()))
        d["sign_extractions"] = self.ops.sign_extractions
        if self.setup_ops is not None:
            d["setup_ops"] = self.setup_ops.as_dict()
        return d


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        idx = TRACE_COLUMNS.index(name)
        return np.array([np.nan if r.row()[idx] is None else r.row()[idx] for r in self.records],
                        dtype=float)

    def rows(self):
        return [r.row() for r in self.records]

    def to_csv(self, stream=None) -> str:
        buf = stream if stream is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows():
            writer.writerow([fmt(v) for v in row])
        return buf.getvalue() if stream is None else ""

    def to_list(self) -> list:
        return [r.as_dict() for r in self.records]

    def to_json(self) -> str:
        return dumps(self.to_list())


def initial_vector(n: int, seed: int, positive: bool = False) -> np.ndarray:
    """Seeded random start with unit l2 norm.

    Entries are uniform on (-1, 1), or on (0, 1) when ``positive``.
    """
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, n) if positive else rng.uniform(-1.0, 1.0, n)
    norm = np.linalg.norm(w)
    if norm == 0:
        raise DegenerateIterateError("random start vector is zero")
    return w / norm


def alignment_error(w, u) -> float:
    """``1 - (w.u / ||w||_2)^2`` for a unit reference ``u``."""
    w = as_vector(w, "w")
    u = as_vector(u, "u")
    if w.shape != u.shape:
        raise DimensionMismatchError(w.shape[0], u.shape[0])
    norm = np.linalg.norm(w)
    if norm == 0:
        raise DegenerateIterateError("alignment error of a zero vector")
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        raise ValueError("reference vector must have unit l2 norm")
    c = float(w @ u) / norm
    return 1.0 - c * c


def _square(a) -> np.ndarray:
    a = as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(a.shape[0], a.shape[1], "square matrix")
    return a


def _record(t, w_new, w_old, ops, reference):
    diff = w_new - w_old
    err = None if reference is None else alignment_error(w_new, reference)
    return IterationRecord(t, float(np.abs(diff).sum()), float(np.linalg.norm(diff)), err, ops)


def rpi(a, cfg: PowerIterConfig | None = None, reference=None, w0=None,
        counter: OpCounter | None = None):
    """Regular power iteration ``b <- A b / ||A b||_2``.

    Returns the final unit vector and its :class:`IterationTrace`.
    """
    cfg = cfg or PowerIterConfig(operator=MavpOperator.REGULAR_DOT)
    if cfg.operator is not MavpOperator.REGULAR_DOT:
        raise ValueError("rpi requires the regular dot product")
    a = _square(a)
    n = a.shape[0]
    b = initial_vector(n, cfg.seed, cfg.positive_init) if w0 is None else as_vector(w0, "w0")
    if b.shape[0] != n:
        raise DimensionMismatchError(n, b.shape[0])
    prepared = MavpMatrix(MavpOperator.REGULAR_DOT, a)
    trace = IterationTrace()
    for t in range(1, int(cfg.max_iterations) + 1):
        ops = OpCounter()
        y = prepared.apply(b, counter=ops, threads=cfg.threads)
        norm = l2_norm(y, counter=ops)
        if norm == 0:
            raise DegenerateIterateError(f"||A b|| = 0 at iteration {t}")
        ops.add(divisions=n)
        b_new = y / norm
        trace.append(_record(t, b_new, b, ops, reference))
        if counter is not None:
            counter.merge(ops)
        b = b_new
        if cfg.tolerance > 0 and trace[-1].delta_l1 <= cfg.tolerance:
            break
    return b, trace


def mapi(a, cfg: PowerIterConfig | None = None, reference=None, w0=None,
         counter: OpCounter | None = None):
    """Multiplication-avoiding power iteration ``w <- (A (+) w) / ||A (+) w||_1``.

    Iterates carry unit l1 norm. With ``cfg.final_l2_normalize`` the
    returned vector is rescaled to unit l2 norm after the last step.
    """
    cfg = cfg or PowerIterConfig()
    if not cfg.operator.multiplication_free:
        raise ValueError("mapi requires min1, min2 or diamond; use rpi for the dot product")
    a = _square(a)
    n = a.shape[0]
    w = initial_vector(n, cfg.seed, cfg.positive_init) if w0 is None else as_vector(w0, "w0")
    if w.shape[0] != n:
        raise DimensionMismatchError(n, w.shape[0])
    prepared = MavpMatrix(cfg.operator, a)
    trace = IterationTrace()
    for t in range(1, int(cfg.max_iterations) + 1):
        ops = OpCounter()
        y = prepared.apply(w, counter=ops, threads=cfg.threads)
        norm = l1_norm(y, counter=ops)
        if norm == 0:
            raise DegenerateIterateError(f"||A (+) w||_1 = 0 at iteration {t}")
        ops.add(divisions=n)
        w_new = y / norm
        trace.append(_record(t, w_new, w, ops, reference))
        if counter is not None:
            counter.merge(ops)
        w = w_new
        if cfg.tolerance > 0 and trace[-1].delta_l1 <= cfg.tolerance:
            break
    if cfg.final_l2_normalize:
        w = w / np.linalg.norm(w)
    return w, trace


def diamond_fixed_point(a) -> np.ndarray:
    """Closed-form limit of diamond-MAPI on a strictly positive matrix.

    Entry i is ``(1 + ||a_i||_1) / sum_j (1 + ||a_j||_1)`` with ``a_i`` the
    i-th row; the iteration reaches it after two steps from any positive
    start.
    """
    a = _square(a)
    if not np.all(a > 0):
        raise ValueError("diamond fixed point requires strictly positive entries")
    r = 1.0 + a.sum(axis=1)
    return r / r.sum()
