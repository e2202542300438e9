"""PageRank by regular and multiplication-avoiding power iteration.

The Google matrix is ``G = alpha H + (1 - alpha)/N * ones``, with ``H``
column-stochastic: ``H[i, j] = 1/outdeg(j)`` for every edge ``j -> i`` and
``1/N`` down the column of a dangling node ``j``. ``G`` is never formed;
both products exploit that every entry outside the edge set equals the same
background value.
"""

from __future__ import annotations

import enum
import gzip
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mavp import MavpOperator, OpCounter, as_vector
from .power import IterationRecord, IterationTrace, initial_vector
from .stochastic import rank_order

GNUTELLA = {
    "gnutella08": ("https://snap.stanford.edu/data/p2p-Gnutella08.txt.gz", 6301, 20777),
    "gnutella09": ("https://snap.stanford.edu/data/p2p-Gnutella09.txt.gz", 8114, 26013),
}


class EdgeListParseError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class PageRankMethod(str, enum.Enum):
    RPI = "rpi"
    MAPI_MIN1 = "mapi-min1"
    MAPI_MIN2 = "mapi-min2"

    @classmethod
    def parse(cls, value) -> "PageRankMethod":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown PageRank method {value!r}")

    @property
    def operator(self) -> MavpOperator:
        return {"rpi": MavpOperator.REGULAR_DOT, "mapi-min1": MavpOperator.MIN1,
                "mapi-min2": MavpOperator.MIN2}[self.value]


@dataclass
class CsrGraph:
    """Directed graph with out-edges in compressed row form (row = source)."""

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    node_ids: np.ndarray  # dense index -> external id

    @classmethod
    def from_edges(cls, src, dst, node_ids=None) -> "CsrGraph":
        """Build from external-id edge arrays; duplicates are dropped."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have equal length")
        if node_ids is None:
            node_ids = np.unique(np.concatenate([src, dst]))
        else:
            node_ids = np.asarray(node_ids, dtype=np.int64)
        s = np.searchsorted(node_ids, src)
        d = np.searchsorted(node_ids, dst)
        n = node_ids.shape[0]
        if src.size and (np.any(s >= n) or np.any(node_ids[np.minimum(s, n - 1)] != src)
                         or np.any(d >= n) or np.any(node_ids[np.minimum(d, n - 1)] != dst)):
            raise ValueError("edge endpoint missing from node_ids")
        pairs = np.unique(np.stack([s, d], axis=1), axis=0) if src.size else np.zeros((0, 2), np.int64)
        counts = np.bincount(pairs[:, 0], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(n, indptr, pairs[:, 1].astype(np.int64), node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0])

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_nodes), self.out_degree)

    @property
    def dangling(self) -> np.ndarray:
        return self.out_degree == 0


def load_snap_edgelist(path) -> CsrGraph:
    """Parse a SNAP edge list: ``#`` comments, then ``FromNodeId ToNodeId`` lines."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    src, dst = [], []
    with opener(path, "rt") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise EdgeListParseError(path, line_no, f"expected 2 fields, got {len(parts)}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(path, line_no, f"non-integer node id in {text!r}") from None
            src.append(a)
            dst.append(b)
    if not src:
        raise EdgeListParseError(path, 0, "no edges found")
    return CsrGraph.from_edges(src, dst)


def google_matrix_dense(g: CsrGraph, alpha: float) -> np.ndarray:
    """Materialized ``G``; only for small graphs and cross-checks."""
    n = g.n_nodes
    h = np.zeros((n, n))
    deg = g.out_degree
    src = g.sources()
    h[g.indices, src] = 1.0 / deg[src]
    h[:, g.dangling] = 1.0 / n
    return alpha * h + (1.0 - alpha) / n


def google_matvec(g: CsrGraph, alpha: float, w, method, counter: OpCounter | None = None) -> np.ndarray:
    """``G w`` (RPI) or the row-wise MAVP ``G (+) w`` (MAPI) in O(N + E).

    For ``w >= 0`` every entry of ``G`` is positive, so min1 and min2 reduce
    to ``sum_j min(G_ij, w_j)``. Off-edge entries share the background
    value ``c`` (or ``alpha/N + c`` in dangling columns), so one sum over
    all columns is shared by every row and only edge entries need a
    per-row correction.
    """
    method = PageRankMethod.parse(method)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    w = as_vector(w, "w")
    n = g.n_nodes
    if w.shape[0] != n:
        raise ValueError(f"dim(w)={w.shape[0]} does not match {n} nodes")
    c = (1.0 - alpha) / n
    deg = g.out_degree
    dangling = g.dangling
    src = g.sources()
    e = g.n_edges
    if method is PageRankMethod.RPI:
        inv = np.zeros(n)
        inv[~dangling] = 1.0 / deg[~dangling]
        y = alpha * np.bincount(g.indices, weights=(w * inv)[src], minlength=n)
        y += alpha * w[dangling].sum() / n + c * w.sum()
        if counter is not None:
            counter.add(multiplications=n + 2 * n, divisions=n, additions=e + 2 * n)
        return y
    if np.any(w < 0):
        raise ValueError("MAPI PageRank requires a non-negative iterate")
    col_bg = np.where(dangling, alpha / n + c, c)
    base = np.minimum(col_bg, w).sum()
    edge_val = alpha / deg[src] + c
    corr = np.minimum(edge_val, w[src]) - np.minimum(c, w[src])
    y = base + np.bincount(g.indices, weights=corr, minlength=n)
    if counter is not None:
        counter.add(comparisons=n + 2 * e, additions=n + 2 * e, divisions=e)
    return y


@dataclass(frozen=True)
class PageRankConfig:
    alpha: float = 0.85
    iterations: int = 10
    method: PageRankMethod = PageRankMethod.MAPI_MIN1
    seed: int = 0
    perturb: float = 0.0  # relative seeded jitter of the uniform start

    def __post_init__(self):
        object.__setattr__(self, "method", PageRankMethod.parse(self.method))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def pagerank(g: CsrGraph, cfg: PageRankConfig | None = None):
    """Power iteration on ``G`` from a positive start.

    RPI iterates are l2-normalized, MAPI iterates l1-normalized; one final
    l2 normalization makes the two score vectors comparable.
    """
    cfg = cfg or PageRankConfig()
    n = g.n_nodes
    w = np.full(n, 1.0 / n)
    if cfg.perturb:
        w = w * (1.0 + cfg.perturb * initial_vector(n, cfg.seed, positive=True))
    mapi_track = cfg.method is not PageRankMethod.RPI
    w = w / (w.sum() if mapi_track else np.linalg.norm(w))
    trace = IterationTrace()
    for t in range(1, cfg.iterations + 1):
        ops = OpCounter()
        y = google_matvec(g, cfg.alpha, w, cfg.method, counter=ops)
        if mapi_track:
            norm = y.sum()  # y > 0
            ops.add(additions=n - 1)
        else:
            norm = np.linalg.norm(y)
            ops.add(multiplications=n, additions=n - 1)
        ops.add(divisions=n)
        w_new = y / norm
        diff = w_new - w
        trace.append(IterationRecord(t, float(np.abs(diff).sum()), float(np.linalg.norm(diff)),
                                     None, ops))
        w = w_new
    return w / np.linalg.norm(w), trace


def topk_overlap(a, b, k: int) -> int:
    """Number of items shared by the first ``k`` entries of two rankings."""
    a, b = list(a), list(b)
    if k > len(a) or k > len(b) or k < 0:
        raise ValueError("k exceeds ranking length")
    return len(set(a[:k]) & set(b[:k]))


@dataclass
class PageRankResult:
    method: PageRankMethod
    scores: np.ndarray
    trace: IterationTrace
    ranking: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ranking = rank_order(self.scores)

    def top(self, g: CsrGraph, k: int) -> list:
        return [{"node": int(g.node_ids[i]), "score": float(self.scores[i])}
                for i in self.ranking[:k]]


def run_pagerank(g: CsrGraph, cfg: PageRankConfig) -> PageRankResult:
    scores, trace = pagerank(g, cfg)
    return PageRankResult(cfg.method, scores, trace)
