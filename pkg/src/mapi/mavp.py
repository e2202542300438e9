"""Multiplication-avoiding vector products (MAVPs) and their matrix extensions.

Three products are provided besides the ordinary dot product::

    min1:     sum_i sign(w_i x_i) min(|w_i|, |x_i|)
    min2:     sum_i 1[sign(w_i) == sign(x_i)] min(|w_i|, |x_i|)
    diamond:  sum_i sign(x_i) w_i + sign(w_i) x_i

The min kernels are evaluated by splitting each operand into its positive
and negative parts, so that only ``minimum`` and additions are executed::

    min2(w, x) = <min(w+, x+)> + <min(w-, x-)>
    min1(w, x) = min2(w, x) - <min(w+, x-)> - <min(w-, x+)>

where ``<.>`` is a plain sum. Zero components belong to neither part, which
is exactly the ``sign(0) == 0`` convention.

Every kernel accepts an optional :class:`OpCounter`. Counts are the
arithmetic cost of the algorithm being evaluated, computed from the operand
shapes; they do not depend on how numpy vectorizes the work.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "MavpMatrix",
    "MavpOperator",
    "OpCounter",
    "as_matrix",
    "as_vector",
    "l1_norm",
    "l2_norm",
    "mavp_dot",
    "mavp_matmat",
    "mavp_matvec",
    "mavp_outer",
    "mavp_outer_apply",
    "signum",
]


class MavpOperator(str, enum.Enum):
    MIN1 = "min1"
    MIN2 = "min2"
    DIAMOND = "diamond"
    REGULAR_DOT = "dot"

    @classmethod
    def parse(cls, value: "str | MavpOperator") -> "MavpOperator":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"regular-dot": "dot", "rpi": "dot", "regular": "dot", "l2": "dot"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown MAVP operator {value!r}; expected one of "
                         f"{[m.value for m in cls]}")

    @property
    def multiplication_free(self) -> bool:
        return self is not MavpOperator.REGULAR_DOT


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, left, right, what: str = "dimension"):
        self.left = left
        self.right = right
        super().__init__(f"{what} mismatch: {left} != {right}")


@dataclass
class OpCounter:
    """Tally of scalar operations performed inside a counting scope.

    Counters are plain accumulators handed to kernels explicitly. Parallel
    workers each own one and the results are merged with ``+``.
    """

    multiplications: int = 0
    divisions: int = 0
    additions: int = 0
    comparisons: int = 0
    sign_extractions: int = 0

    def add(self, **counts: int) -> None:
        for name, value in counts.items():
            if value < 0:
                raise ValueError(f"negative count for {name}: {value}")
            setattr(self, name, getattr(self, name) + int(value))

    def merge(self, other: "OpCounter") -> None:
        self.add(**asdict(other))

    def __add__(self, other: "OpCounter") -> "OpCounter":
        out = self.snapshot()
        out.merge(other)
        return out

    def __sub__(self, other: "OpCounter") -> "OpCounter":
        return OpCounter(**{f.name: getattr(self, f.name) - getattr(other, f.name)
                            for f in fields(self)})

    def snapshot(self) -> "OpCounter":
        return OpCounter(**asdict(self))

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def as_dict(self) -> dict:
        return asdict(self)


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Validate ``x`` as a finite 1-D float array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D float array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def signum(x):
    """Sign with ``signum(0) == 0``; works on scalars and arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if not np.isfinite(x):
            raise ValueError("signum of a non-finite value")
        return (x > 0) - (x < 0)
    return np.sign(np.asarray(x, dtype=np.float64))


def _dot_counts(op: MavpOperator, n: int, rows: int = 1) -> dict:
    adds = max(n - 1, 0)
    if op is MavpOperator.MIN1:
        counts = dict(sign_extractions=2 * n, comparisons=n, additions=adds)
    elif op is MavpOperator.MIN2:
        # one sign-equality test and one min per component
        counts = dict(sign_extractions=2 * n, comparisons=2 * n, additions=adds)
    elif op is MavpOperator.DIAMOND:
        counts = dict(sign_extractions=2 * n, additions=max(2 * n - 1, 0))
    else:
        counts = dict(multiplications=n, additions=adds)
    return {k: v * rows for k, v in counts.items()}


def _parts(a: np.ndarray):
    return np.maximum(a, 0.0), np.maximum(-a, 0.0)


def mavp_dot(op, w, x, counter: OpCounter | None = None) -> float:
    """MAVP of two equal-length vectors under operator ``op``."""
    op = MavpOperator.parse(op)
    w = as_vector(w, "w")
    x = as_vector(x, "x")
    if w.shape != x.shape:
        raise DimensionMismatchError(w.shape[0], x.shape[0])
    result = float(MavpMatrix(op, w[None, :]).apply(x)[0])
    if counter is not None:
        counter.add(**_dot_counts(op, w.shape[0]))
    return result


class MavpMatrix:
    """A matrix prepared for repeated row-wise MAVP products ``A (+) x``.

    The sign-split parts of ``A`` are cached, which is what power iteration
    needs: the matrix is fixed while the iterate changes every step.
    """

    def __init__(self, op, a, block_rows: int = 512):
        self.op = MavpOperator.parse(op)
        self.a = as_matrix(a, "A")
        self.block_rows = max(int(block_rows), 1)
        if self.op in (MavpOperator.MIN1, MavpOperator.MIN2):
            self._pos, self._neg = _parts(self.a)
            # all-zero parts contribute nothing; min2 covariances are non-negative
            self._has_pos = bool(self._pos.any())
            self._has_neg = bool(self._neg.any())
        elif self.op is MavpOperator.DIAMOND:
            self._sign = signum(self.a)

    @property
    def shape(self):
        return self.a.shape

    def _rows(self, lo: int, hi: int, x: np.ndarray) -> np.ndarray:
        op = self.op
        if op is MavpOperator.REGULAR_DOT:
            return self.a[lo:hi] @ x
        if op is MavpOperator.DIAMOND:
            return self.a[lo:hi] @ signum(x) + self._sign[lo:hi] @ x
        xp, xn = _parts(x)
        has_xp, has_xn = bool(xp.any()), bool(xn.any())
        terms = []
        if self._has_pos and has_xp:
            terms.append((self._pos, xp, 1.0))
        if self._has_neg and has_xn:
            terms.append((self._neg, xn, 1.0))
        if op is MavpOperator.MIN1:
            if self._has_pos and has_xn:
                terms.append((self._pos, xn, -1.0))
            if self._has_neg and has_xp:
                terms.append((self._neg, xp, -1.0))
        out = np.zeros(hi - lo)
        buf = np.empty((hi - lo, x.shape[0]))
        for part, xpart, sign in terms:
            np.minimum(part[lo:hi], xpart, out=buf)
            if sign > 0:
                out += buf.sum(axis=1)
            else:
                out -= buf.sum(axis=1)
        return out

    def apply(self, x, counter: OpCounter | None = None, threads: int = 1) -> np.ndarray:
        x = as_vector(x, "x")
        m, n = self.a.shape
        if n != x.shape[0]:
            raise DimensionMismatchError(n, x.shape[0], "cols(A) vs dim(x)")
        bounds = [(lo, min(lo + self.block_rows, m)) for lo in range(0, m, self.block_rows)]
        if threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda b: self._rows(b[0], b[1], x), bounds))
        else:
            parts = [self._rows(lo, hi, x) for lo, hi in bounds]
        out = np.concatenate(parts) if parts else np.zeros(0)
        if counter is not None:
            counter.add(**_dot_counts(self.op, n, rows=m))
        return out


def mavp_matvec(op, a, x, counter: OpCounter | None = None, threads: int = 1) -> np.ndarray:
    """Row-wise MAVP ``y_i = row_i(A) (+) x``."""
    return MavpMatrix(op, a).apply(x, counter=counter, threads=threads)


def mavp_matmat(op, w, x, counter: OpCounter | None = None, threads: int = 1) -> np.ndarray:
    """``W^T (+) X``: entry (i, j) is ``col_i(W) (+) col_j(X)``.

    ``W`` is n x m and ``X`` is n x p; the result is m x p.
    """
    op = MavpOperator.parse(op)
    w = as_matrix(w, "W")
    x = as_matrix(x, "X")
    if w.shape[0] != x.shape[0]:
        raise DimensionMismatchError(w.shape[0], x.shape[0], "row count")
    m, p = w.shape[1], x.shape[1]
    if op is MavpOperator.REGULAR_DOT:
        if counter is not None:
            counter.add(**_dot_counts(op, w.shape[0], rows=m * p))
        return w.T @ x
    prepared = MavpMatrix(op, w.T)
    out = np.empty((m, p))
    for j in range(p):
        out[:, j] = prepared.apply(x[:, j], counter=counter, threads=threads)
    return out


def l1_norm(x, counter: OpCounter | None = None) -> float:
    x = as_vector(x)
    if counter is not None:
        counter.add(additions=max(x.shape[0] - 1, 0))
    return float(np.abs(x).sum())


def l2_norm(x, counter: OpCounter | None = None) -> float:
    x = as_vector(x)
    if counter is not None:
        n = x.shape[0]
        counter.add(multiplications=n, additions=max(n - 1, 0))
    return float(np.sqrt(x @ x))


def mavp_outer(op, w, out: np.ndarray | None = None) -> np.ndarray:
    """Dense M x M matrix with entries ``[w_i] (+) [w_j]`` (scalar MAVPs).

    For the min kernels this is *not* rank one, so it has to be built
    entry by entry; see :func:`mavp_outer_apply` for products with it.
    ``out`` may supply a preallocated M x M buffer.
    """
    op = MavpOperator.parse(op)
    w = as_vector(w, "w")
    m = w.shape[0]
    if out is None:
        out = np.empty((m, m))
    if op is MavpOperator.REGULAR_DOT:
        return np.multiply.outer(w, w, out=out)
    if op is MavpOperator.DIAMOND:
        s = signum(w)
        np.multiply.outer(w, s, out=out)
        out += out.T.copy()
        return out
    wp, wn = _parts(w)
    tmp = np.empty_like(out)
    np.minimum.outer(wp, wp, out=out)
    out += np.minimum.outer(wn, wn, out=tmp)
    if op is MavpOperator.MIN1:
        out -= np.minimum.outer(wp, wn, out=tmp)
        out -= np.minimum.outer(wn, wp, out=tmp)
    return out


def _cumsum_rows(x: np.ndarray) -> np.ndarray:
    """In-place running sum down axis 0 (same result as ``np.cumsum``).

    A row loop beats ``np.cumsum(axis=0)`` by an order of magnitude on wide
    C-ordered arrays because each step is one contiguous vector add.
    """
    if x.shape[1] < 64:
        return np.cumsum(x, axis=0, out=x)
    for i in range(1, x.shape[0]):
        np.add(x[i - 1], x[i], out=x[i])
    return x


def _prefix_min_apply(a: np.ndarray, sb: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rows ``sum_j min(a_i, a_j) * sb_j * b_j`` for all i, via sorting.

    ``a`` holds non-negative magnitudes. Entries with a_j <= a_i contribute ``a_j`` and the others
    ``a_i``, so two running sums over the sorted order suffice.
    """
    m = a.shape[0]
    if m == 0:
        return np.zeros_like(b)
    order = np.argsort(a, kind="stable")
    a_sorted = a[order]
    terms = sb[order][:, None] * b[order]
    low = _cumsum_rows(a_sorted[:, None] * terms)
    high = _cumsum_rows(terms)
    np.subtract(high[-1], high, out=high)  # strict suffix sums
    high *= a_sorted[:, None]
    high += low
    out = np.empty_like(b)
    out[order] = high
    return out


def mavp_outer_apply(op, w, b) -> np.ndarray:
    """Regular product ``mavp_outer(op, w) @ B`` without forming the outer matrix.

    Runs in O(M log M + M K) for an M x K right-hand side; ``b`` may also be
    a vector.
    """
    op = MavpOperator.parse(op)
    w = as_vector(w, "w")
    b_arr = np.asarray(b, dtype=np.float64)
    vec = b_arr.ndim == 1
    bm = b_arr[:, None] if vec else as_matrix(b_arr, "B")
    if bm.shape[0] != w.shape[0]:
        raise DimensionMismatchError(w.shape[0], bm.shape[0], "dim(w) vs rows(B)")
    s = signum(w)
    if op is MavpOperator.REGULAR_DOT:
        out = np.outer(w, w @ bm)
    elif op is MavpOperator.DIAMOND:
        out = np.outer(w, s @ bm) + np.outer(s, w @ bm)
    else:
        a = np.abs(w)
        if op is MavpOperator.MIN1:
            out = s[:, None] * _prefix_min_apply(a, s, bm)
        else:
            out = np.zeros_like(bm)
            for mask in (s > 0, s < 0):
                if mask.any():
                    am = a[mask]
                    ones = np.ones_like(am)
                    out[mask] = _prefix_min_apply(am, ones, bm[mask])
    return out[:, 0] if vec else out
