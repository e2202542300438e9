"""Min-covariance PCA and reconstruction of occluded grayscale images.

Images are 2-D float arrays (height x width) with pixels in [0, 1]. The
reconstruction pipeline vectorizes a stack of corrupted copies, centers
them, extracts two dominant (pseudo-)eigenvectors of the covariance built
with the chosen product, and projects a centered copy back onto them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mavp import (
    DimensionMismatchError,
    MavpOperator,
    as_matrix,
    as_vector,
    mavp_outer,
    mavp_outer_apply,
)
from .power import DegenerateIterateError, IterationTrace, PowerIterConfig, mapi, rpi

log = logging.getLogger(__name__)

LARGE_DIMENSION = 8192
SAMPLE_DIR = Path(__file__).with_name("data")


class IdenticalImagesError(ValueError):
    """PSNR is infinite because the two images are identical."""


def check_image(img, name: str = "image") -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} pixels must lie in [0, 1]")
    return arr


# -- PGM I/O -----------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or raw (P5) PGM file into [0, 1] floats."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4, 0)
    width, height, maxval = int(w), int(h), int(maxval)
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad PGM header")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        raw = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
    elif magic == b"P2":
        raw = np.array(data[pos:].split()[:n], dtype=np.int64)
        if raw.size != n:
            raise ValueError(f"{path}: expected {n} pixels, found {raw.size}")
    else:
        raise ValueError(f"{path}: not a P2/P5 PGM file")
    if raw.max(initial=0) > maxval:
        raise ValueError(f"{path}: pixel value exceeds maxval {maxval}")
    return raw.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, img, binary: bool = True) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    q = np.rint(img * 255).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(q.tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n255\n".encode())
            for row in q:
                fh.write((" ".join(map(str, row)) + "\n").encode())


def sample_images() -> dict:
    """The bundled 64 x 64 test images, keyed by name."""
    return {p.stem: read_pgm(p) for p in sorted(SAMPLE_DIR.glob("*.pgm"))}


def downsample(img, factor: int) -> np.ndarray:
    """Block-average by an integer factor."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h % factor or w % factor:
        raise ValueError("image size must be divisible by the factor")
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


# -- covariance ----------------------------------------------------------------

def l2_covariance(x) -> np.ndarray:
    """Sample covariance ``X X^T / N`` of the columns of a D x N matrix."""
    x = as_matrix(x, "X")
    if x.shape[1] < 1:
        raise ValueError("need at least one sample column")
    return (x @ x.T) / x.shape[1]


def min_covariance(v, op, divisor: str = "n-1") -> np.ndarray:
    """Covariance of the rows of ``V`` (M x N) built with the product ``op``.

    Entry (i, j) is ``row_i(V) (+) row_j(V)`` scaled by ``1/(N-1)`` (or
    ``1/N`` with ``divisor="n"``). Accumulated one sample column at a time
    since each column contributes one scalar-MAVP outer matrix.
    """
    op = MavpOperator.parse(op)
    v = as_matrix(v, "V")
    m, n = v.shape
    if n < 2:
        raise ValueError("min_covariance needs at least two samples")
    scale = {"n-1": n - 1, "n": n}[divisor]
    if op is MavpOperator.REGULAR_DOT:
        return (v @ v.T) / scale
    c = np.zeros((m, m))
    buf = np.empty((m, m))
    for k in range(n):
        c += mavp_outer(op, v[:, k], out=buf)
    c /= scale
    return c


def deflate(c, w1, op, check_unit: bool = True) -> np.ndarray:
    """``C - P C`` where ``P`` is the scalar-MAVP outer matrix of ``w1``."""
    op = MavpOperator.parse(op)
    c = as_matrix(c, "C")
    w1 = as_vector(w1, "w1")
    if c.shape[0] != c.shape[1] or c.shape[0] != w1.shape[0]:
        raise DimensionMismatchError(c.shape, w1.shape[0])
    if check_unit and abs(np.linalg.norm(w1) - 1.0) > 1e-9:
        raise ValueError("deflation vector must have unit l2 norm")
    return c - mavp_outer_apply(op, w1, c)


# -- corruption and quality -------------------------------------------------------

def occlude(img, tile: int, n_tiles: int, rng_seed: int) -> np.ndarray:
    """Replace ``n_tiles`` distinct random tiles with uniform [0, 1] noise."""
    img = check_image(img)
    h, w = img.shape
    if tile <= 0 or h % tile or w % tile:
        raise ValueError(f"image {w}x{h} is not divisible into {tile}x{tile} tiles")
    rows, cols = h // tile, w // tile
    if not 0 <= n_tiles <= rows * cols:
        raise ValueError(f"cannot occlude {n_tiles} of {rows * cols} tiles")
    out = img.copy()
    rng = np.random.default_rng(rng_seed)
    for t in rng.choice(rows * cols, size=n_tiles, replace=False):
        r, c = divmod(int(t), cols)
        out[r * tile:(r + 1) * tile, c * tile:(c + 1) * tile] = rng.uniform(0.0, 1.0, (tile, tile))
    return out


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images (peak 1)."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise DimensionMismatchError(reference.shape, test.shape, "image shape")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        raise IdenticalImagesError("images are identical; PSNR is infinite")
    return 10.0 * np.log10(1.0 / mse)


# -- reconstruction ----------------------------------------------------------------

@dataclass
class ReconstructionReport:
    operator: MavpOperator
    psnr_occluded_db: float | None
    psnr_reconstructed_db: float | None
    traces: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "operator": self.operator.value,
            "psnr_occluded_db": self.psnr_occluded_db,
            "psnr_reconstructed_db": self.psnr_reconstructed_db,
            "traces": [t.to_list() for t in self.traces],
        }


@dataclass
class ReconstructionModel:
    """Mean image plus two components, ready to project any copy."""

    operator: MavpOperator
    shape: tuple
    mean: np.ndarray
    components: np.ndarray  # M x 2, columns scaled for projection
    traces: tuple

    def project(self, img) -> np.ndarray:
        v = np.asarray(img, dtype=np.float64).reshape(-1)
        if v.shape[0] != self.mean.shape[0]:
            raise DimensionMismatchError(self.mean.shape[0], v.shape[0], "pixel count")
        d = v - self.mean
        out = self.mean.copy()
        for k in range(self.components.shape[1]):
            out += mavp_outer_apply(self.operator, self.components[:, k], d)
        return np.clip(out, 0.0, 1.0).reshape(self.shape)


def _leading_vector(c, op, cfg):
    if op is MavpOperator.REGULAR_DOT:
        return rpi(c, cfg.with_(operator=op, final_l2_normalize=False))
    return mapi(c, cfg.with_(operator=op, final_l2_normalize=False))


def fit_reconstruction(images, op, cfg: PowerIterConfig | None = None,
                       divisor: str = "n-1", projection_norm: str = "l1") -> ReconstructionModel:
    """Steps 1-7 of the reconstruction: centre, covariance, two components.

    The first component is l2-normalized before deflation. If the
    iteration on the deflated matrix collapses to zero the second component
    is zero and its trace empty. For the
    multiplication-free products the projection uses the components as
    the power iteration returns them (unit l1 norm) unless
    ``projection_norm="l2"``; with the dot product both are unit l2, which
    is ordinary PCA.
    """
    op = MavpOperator.parse(op)
    cfg = cfg or PowerIterConfig(operator=op, max_iterations=20)
    imgs = [np.asarray(i, dtype=np.float64) for i in images]
    if len(imgs) < 2:
        raise ValueError("need at least two images")
    shape = imgs[0].shape
    for i in imgs:
        if i.shape != shape:
            raise DimensionMismatchError(shape, i.shape, "image shape")
    v = np.stack([i.reshape(-1) for i in imgs], axis=1)
    m = v.shape[0]
    if m > LARGE_DIMENSION:
        log.warning("pixel dimension %d > %d: the %dx%d covariance and its deflation "
                    "are expensive", m, LARGE_DIMENSION, m, m)
    mean = v.mean(axis=1)
    centered = v - mean[:, None]
    c = min_covariance(centered, op, divisor=divisor)
    if not np.any(c):
        # zero variance: every copy equals the mean
        return ReconstructionModel(op, shape, mean, np.zeros((m, 0)), ())
    w1, t1 = _leading_vector(c, op, cfg)
    w1_unit = w1 / np.linalg.norm(w1)
    c2 = deflate(c, w1_unit, op)
    try:
        w2, t2 = _leading_vector(c2, op, cfg.with_(seed=cfg.seed + 1))
    except DegenerateIterateError as exc:
        # min2 on a deflated matrix with no sign-agreeing entries maps every
        # iterate to zero; there is no second direction to add
        log.warning("second component degenerate (%s); reconstructing with one", exc)
        w2, t2 = np.zeros(m), IterationTrace()
    comps = [w1, w2]
    if op is MavpOperator.REGULAR_DOT or projection_norm == "l2":
        comps = [w / np.linalg.norm(w) if np.any(w) else w for w in comps]
    elif projection_norm != "l1":
        raise ValueError("projection_norm must be 'l1' or 'l2'")
    return ReconstructionModel(op, shape, mean, np.stack(comps, axis=1), (t1, t2))


def reconstruct(images, op, cfg: PowerIterConfig | None = None, target_index: int = 0,
                reference=None, **kwargs):
    """Reconstruct ``images[target_index]`` from the whole stack.

    Returns the reconstructed image and a :class:`ReconstructionReport`;
    PSNR fields are filled when a clean ``reference`` is given.
    """
    model = fit_reconstruction(images, op, cfg, **kwargs)
    target = np.asarray(images[target_index], dtype=np.float64)
    out = model.project(target)
    p_occ = p_rec = None
    if reference is not None:
        p_occ = psnr(reference, target)
        p_rec = psnr(reference, out)
    return out, ReconstructionReport(model.operator, p_occ, p_rec, model.traces)
