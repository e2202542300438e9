"""Synthetic eigen-gap data and mini-batch power iteration with momentum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mavp import MavpMatrix, MavpOperator, OpCounter, as_matrix, as_vector, l1_norm, l2_norm
from .power import (
    DegenerateIterateError,
    IterationRecord,
    IterationTrace,
    alignment_error,
    initial_vector,
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 10**6
    dim: int = 10
    eigen_gap: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < self.dim or self.dim < 1:
            raise ValueError("need n_samples >= dim >= 1")
        if not 0.0 <= self.eigen_gap < 1.0:
            raise ValueError("eigen_gap must lie in [0, 1)")


@dataclass(frozen=True)
class MomentumConfig:
    batch_size: int = 128
    momentum: float = 0.225
    iterations: int = 100
    seed: int = 0
    final_l2_normalize: bool = True
    switch_at: int | None = None  # iteration after which the dot product takes over

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def synth_dataset(spec: SyntheticSpec):
    """``X = U S V^T`` with singular values ``{1, sqrt(1-gap), ...}``.

    ``U`` (n x d) and ``V`` (d x d) come from QR factorizations of Gaussian
    matrices, so ``X^T X = V S^2 V^T`` has eigenvalues 1 and ``1 - gap``.
    Returns ``X`` and the dominant eigenvector ``u1 = V[:, 0]``.
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_samples, spec.dim
    u, _ = np.linalg.qr(rng.standard_normal((n, d)))
    v, _ = np.linalg.qr(rng.standard_normal((d, d)))
    sigma = np.full(d, np.sqrt(1.0 - spec.eigen_gap))
    sigma[0] = 1.0
    x = (u * sigma) @ v.T
    return x, v[:, 0].copy()


def rank_order(w) -> np.ndarray:
    """Indices sorted by descending value; ties keep ascending index order."""
    w = as_vector(w)
    return np.argsort(-w, kind="stable")


def orient(w, reference) -> np.ndarray:
    """Flip ``w`` so that it points into the half-space of ``reference``."""
    w = as_vector(w)
    return -w if float(w @ as_vector(reference)) < 0 else w


def _batch_matrix(x, idx, counter):
    # rows scaled by sqrt(n) so the batch average estimates X^T X itself
    n, d = x.shape
    b = x[idx]
    s = b.shape[0]
    counter.add(multiplications=s * d * d + d * d, additions=(s - 1) * d * d)
    return (b.T @ b) * (n / s)


def minibatch_mapi_momentum(x, cfg: MomentumConfig, op=MavpOperator.MIN1, u1=None):
    """Mini-batch power iteration with momentum.

    Each step draws ``s`` rows i.i.d. with replacement, forms the batch
    estimate ``A`` of ``X^T X``, and updates::

        w_next = A (+) w - beta * w_prev
        w, w_next = w / ||w_next||, w_next / ||w_next||

    ``(+)`` is min1 with l1 norms, or the dot product with l2 norms (the
    regular stochastic power method). When ``batch_size == n`` the batch is
    the full data set. Batch formation costs are recorded as ``setup_ops``
    on each trace record, separate from the iteration product.
    """
    op = MavpOperator.parse(op)
    if op not in (MavpOperator.MIN1, MavpOperator.REGULAR_DOT):
        raise ValueError("mini-batch MAPI supports min1 (and the dot product as baseline); "
                         "min2 cannot produce negative entries")
    x = as_matrix(x, "X")
    n, d = x.shape
    if cfg.batch_size > n:
        raise ValueError("batch size exceeds the number of samples")
    ref = None if u1 is None else as_vector(u1, "u1")
    w = initial_vector(d, cfg.seed)
    w_prev = np.zeros(d)
    batch_rng = np.random.default_rng((cfg.seed, 1))
    full = cfg.batch_size == n
    trace = IterationTrace()
    for t in range(1, cfg.iterations + 1):
        step_op = op
        if cfg.switch_at is not None and t > cfg.switch_at:
            step_op = MavpOperator.REGULAR_DOT
        setup = OpCounter()
        idx = np.arange(n) if full else batch_rng.integers(0, n, cfg.batch_size)
        a = _batch_matrix(x, idx, setup)
        ops = OpCounter()
        y = MavpMatrix(step_op, a).apply(w, counter=ops)
        if cfg.momentum:
            ops.add(multiplications=d, additions=d)
            y = y - cfg.momentum * w_prev
        if step_op is MavpOperator.REGULAR_DOT:
            norm = l2_norm(y, counter=ops)
        else:
            norm = l1_norm(y, counter=ops)
        if norm == 0:
            raise DegenerateIterateError(f"zero iterate at step {t}")
        ops.add(divisions=2 * d)
        w_new = y / norm
        diff = w_new - w
        err = None if ref is None else alignment_error(w_new, ref)
        trace.append(IterationRecord(t, float(np.abs(diff).sum()), float(np.linalg.norm(diff)),
                                     err, ops, setup))
        w_prev = w / norm
        w = w_new
    if cfg.final_l2_normalize:
        w = w / np.linalg.norm(w)
    return w, trace
