"""Self-check suites run by ``mapi kernel-check``.

Each check returns ``(passed, detail)``. Expected values are either frozen
hand-computed numbers or scalar-loop oracles that share no code with the
vectorized kernels.
"""

from __future__ import annotations

import numpy as np

from . import mavp
from .mavp import MavpOperator
from .pagerank import CsrGraph, google_matrix_dense, google_matvec
from .power import PowerIterConfig, diamond_fixed_point, initial_vector, mapi


def _scalar_sign(v: float) -> int:
    return 1 if v > 0 else (-1 if v < 0 else 0)


def scalar_mavp(op, w, x) -> float:
    """Loop-over-components reference, independent of the kernels."""
    op = MavpOperator.parse(op)
    total = 0.0
    for a, b in zip(w, x):
        a, b = float(a), float(b)
        if op is MavpOperator.MIN1:
            total += _scalar_sign(a) * _scalar_sign(b) * min(abs(a), abs(b))
        elif op is MavpOperator.MIN2:
            if _scalar_sign(a) == _scalar_sign(b):
                total += min(abs(a), abs(b))
        elif op is MavpOperator.DIAMOND:
            total += _scalar_sign(b) * a + _scalar_sign(a) * b
        else:
            total += a * b
    return total


def _random_vectors(rng, count, max_dim=256):
    for _ in range(count):
        n = int(rng.integers(1, max_dim + 1))
        x = rng.normal(size=n) * rng.choice([1e-3, 1.0, 1e3])
        x[rng.random(n) < 0.2] = 0.0
        yield x


def check_signum() -> tuple:
    got = [mavp.signum(v) for v in (3.5, 0.0, -0.1)]
    arr = mavp.signum(np.array([3.5, 0.0, -0.1])).tolist()
    ok = got == [1, 0, -1] and arr == [1.0, 0.0, -1.0]
    return ok, f"scalar {got}, array {arr}"


def check_frozen_values() -> tuple:
    cases = [
        ("min1", [1, -2], [3, -1], 2.0),
        ("min2", [1], [-1], 0.0),
        ("min1", [1], [-1], -1.0),
        ("min1", [1, -2, 3], [1, -2, 3], 6.0),
        ("diamond", [1, 2], [3, 4], 10.0),
        # zero components must contribute nothing to diamond
        ("diamond", [0.0, 1.0], [2.0, 0.0], 0.0),
        ("diamond", [0.0, -1.0], [5.0, 0.0], 0.0),
    ]
    bad = [(op, w, x, exp, mavp.mavp_dot(op, w, x)) for op, w, x, exp in cases
           if mavp.mavp_dot(op, w, x) != exp]
    return not bad, f"{len(cases) - len(bad)}/{len(cases)} frozen values" + (f"; bad {bad}" if bad else "")


def check_l1_induction(seed: int = 0, count: int = 1000) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in _random_vectors(rng, count):
        ref = mavp.l1_norm(x)
        for op in ("min1", "min2"):
            got = mavp.mavp_dot(op, x, x)
            worst = max(worst, abs(got - ref) / max(ref, 1e-300))
    return worst <= 1e-12, f"max relative error {worst:.3g} over {count} vectors"


def check_symmetry(seed: int = 1, count: int = 300) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for w in _random_vectors(rng, count, 64):
        x = rng.normal(size=w.shape[0])
        x[rng.random(w.shape[0]) < 0.2] = 0.0
        for op in ("min1", "min2", "diamond"):
            a, b = mavp.mavp_dot(op, w, x), mavp.mavp_dot(op, x, w)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst <= 1e-12, f"max asymmetry {worst:.3g}"


def check_scalar_oracle(seed: int = 2, count: int = 200) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for w in _random_vectors(rng, count, 40):
        x = rng.normal(size=w.shape[0])
        x[rng.random(w.shape[0]) < 0.2] = 0.0
        for op in MavpOperator:
            got = mavp.mavp_dot(op, w, x)
            ref = scalar_mavp(op, w, x)
            scale = 1.0 + np.abs(w).sum() + np.abs(x).sum()
            worst = max(worst, abs(got - ref) / scale)
    ok = worst <= 1e-12
    a = rng.integers(-5, 6, size=(3, 3)).astype(float)
    b = rng.integers(-5, 6, size=(3, 3)).astype(float)
    mm = mavp.mavp_matmat("min1", a, b)
    ref = np.array([[scalar_mavp("min1", a[:, i], b[:, j]) for j in range(3)] for i in range(3)])
    ok = ok and np.array_equal(mm, ref)
    return ok, f"max deviation from scalar loop {worst:.3g}; 3x3 min1 matmat exact={np.array_equal(mm, ref)}"


def check_diamond_fixed_point(seed: int = 3, count: int = 100) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(count):
        n = int(rng.integers(2, 51))
        a = rng.uniform(0.01, 10.0, size=(n, n))
        target = diamond_fixed_point(a)
        w0 = initial_vector(n, seed * 1000 + k, positive=True)
        for t in (2, 3, 4, 5):
            w, _ = mapi(a, PowerIterConfig(operator="diamond", max_iterations=t), w0=w0)
            worst = max(worst, float(np.abs(w - target).max()))
    return worst <= 1e-12, f"max |w_t - fixed point| for t=2..5: {worst:.3g} over {count} matrices"


def check_outer_fast_path(seed: int = 4, count: int = 40) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        m = int(rng.integers(1, 80))
        w = rng.normal(size=m)
        w[rng.random(m) < 0.2] = 0.0
        b = rng.normal(size=(m, int(rng.integers(1, 100))))
        for op in MavpOperator:
            dense = np.array([[scalar_mavp(op, [w[i]], [w[j]]) for j in range(m)] for i in range(m)])
            worst = max(worst, float(np.abs(mavp.mavp_outer_apply(op, w, b) - dense @ b).max()))
    return worst <= 1e-10, f"max |fast - dense| {worst:.3g}"


def check_pagerank_oracle(seed: int = 5, count: int = 50) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 201))
        adj = rng.random((n, n)) < 0.05
        adj[rng.choice(n, max(1, n // 10), replace=False)] = False
        s, d = np.nonzero(adj)
        g = CsrGraph.from_edges(s, d, node_ids=np.arange(n))
        w = rng.random(n)
        w /= w.sum()
        dense = google_matrix_dense(g, 0.85)
        for method in ("mapi-min1", "mapi-min2"):
            op = "min1" if method.endswith("1") else "min2"
            ref = mavp.mavp_matvec(op, dense, w)
            worst = max(worst, float(np.abs(google_matvec(g, 0.85, w, method) - ref).max()))
        worst = max(worst, float(np.abs(google_matvec(g, 0.85, w, "rpi") - dense @ w).max()))
    return worst <= 1e-14, f"max |fast - dense| {worst:.3g} over {count} graphs"


SUITES = {
    "signum-convention": check_signum,
    "frozen-values": check_frozen_values,
    "l1-induction": check_l1_induction,
    "symmetry": check_symmetry,
    "scalar-oracle": check_scalar_oracle,
    "diamond-fixed-point": check_diamond_fixed_point,
    "outer-fast-path": check_outer_fast_path,
    "pagerank-oracle": check_pagerank_oracle,
}


def run_all() -> list:
    results = []
    for name, fn in SUITES.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append({"check": name, "passed": bool(ok), "detail": detail})
    return results
