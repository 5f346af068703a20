"""Dithered quantized random mapping and its distance estimators.

A frozen projector holds a Gaussian (or uniform-on-sphere) random matrix, a
uniform dither, and a bin width; embedding a point floors the dithered
projection onto the lattice delta*Z and keeps the integer codes.  Distances
between two sketches are estimated from the l1 or l2 norm of the code
differences, or from sign patterns for the binary variant.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import gammaln

from .rng import make_rng, polar_gaussian

ROW_MODELS = ("gaussian", "uniform_sphere")
_CODE_LIMIT = 2.0**62
_L1_SCALE = math.sqrt(math.pi) / math.sqrt(2.0)


def _lattice_floor(y: np.ndarray, delta: float) -> np.ndarray:
    """Largest float integer k (per entry) with k*delta <= y < (k+1)*delta.

    Two correction passes repair the rare cases where y/delta rounds across
    an integer, so the quantization error stays in [0, delta) in float
    comparisons for every representable input.
    """
    k = np.floor(y / delta)
    for _ in range(2):
        k = np.where(k * delta > y, k - 1.0, k)
        k = np.where((k + 1.0) * delta <= y, k + 1.0, k)
    return k


def quantize(lam: float, delta: float) -> float:
    """Floor ``lam`` onto the lattice delta*Z (toward minus infinity).

    Idempotent, with quantization error in [0, delta).
    """
    delta = float(delta)
    if not math.isfinite(delta) or delta <= 0.0:
        raise ValueError(f"bin width must be finite and > 0, got {delta}")
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValueError(f"input must be finite, got {lam}")
    k = _lattice_floor(np.asarray([lam]), delta)[0]
    return float(k * delta)


@dataclass(frozen=True, eq=False)
class Projector:
    """Frozen random embedding state, reconstructible from its parameters.

    ``phi`` is m x dim with i.i.d. standard normal entries (rows rescaled to
    norm sqrt(dim) under the uniform_sphere model) and ``xi`` is a dither
    drawn once from U[0, delta)^m.
    """

    m: int
    dim: int
    delta: float
    seed: int
    row_model: str
    phi: np.ndarray
    xi: np.ndarray
    projector_id: str

    @classmethod
    def create(cls, m: int, dim: int, delta: float, seed: int,
               row_model: str = "gaussian") -> "Projector":
        if m < 1:
            raise ValueError(f"embedded dimension must be >= 1, got {m}")
        if dim < 1:
            raise ValueError(f"ambient dimension must be >= 1, got {dim}")
        delta = float(delta)
        if not math.isfinite(delta) or delta <= 0.0:
            raise ValueError(f"bin width must be finite and > 0, got {delta}")
        if row_model not in ROW_MODELS:
            raise ValueError(f"row_model must be one of {ROW_MODELS}, got {row_model!r}")
        rng = make_rng(seed)
        phi = polar_gaussian(rng, (m, dim))
        if row_model == "uniform_sphere":
            norms = np.linalg.norm(phi, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            phi = phi / norms * math.sqrt(dim)
        xi = rng.random(m) * delta
        ident = f"{m}:{dim}:{delta!r}:{seed}:{row_model}"
        pid = hashlib.blake2s(ident.encode()).hexdigest()[:16]
        return cls(m=m, dim=dim, delta=delta, seed=int(seed),
                   row_model=row_model, phi=phi, xi=xi, projector_id=pid)


@dataclass(frozen=True, eq=False)
class Sketch:
    """Image of one point: integer codes on the lattice plus bin width.

    The embedded vector is exactly ``delta * codes``; ``projector_id`` binds
    the sketch to the projector that produced it.
    """

    codes: np.ndarray
    delta: float
    projector_id: str

    def values(self) -> np.ndarray:
        return self.delta * self.codes.astype(float)


def _codes_from_projection(y: np.ndarray, delta: float) -> np.ndarray:
    scaled_max = float(np.max(np.abs(y))) / delta if y.size else 0.0
    if not math.isfinite(scaled_max) or scaled_max >= _CODE_LIMIT:
        raise OverflowError(
            f"projected magnitude {scaled_max:.3e} bins exceeds the signed "
            "62-bit code guard"
        )
    return _lattice_floor(y, delta).astype(np.int64)


def embed(proj: Projector, x: np.ndarray) -> Sketch:
    """Quantize the dithered projection of ``x``; bit-reproducible per seed."""
    x = np.asarray(x, dtype=float)
    if x.shape != (proj.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({proj.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    y = proj.phi @ x + proj.xi
    return Sketch(codes=_codes_from_projection(y, proj.delta),
                  delta=proj.delta, projector_id=proj.projector_id)


def embed_many(proj: Projector, points: np.ndarray) -> np.ndarray:
    """Codes matrix (len(points) x m) for a batch of points; same path as embed."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != proj.dim:
        raise ValueError(f"points have shape {points.shape}, expected (*, {proj.dim})")
    if not np.all(np.isfinite(points)):
        raise ValueError("point coordinates must be finite")
    y = points @ proj.phi.T + proj.xi[None, :]
    return _codes_from_projection(y, proj.delta)


@dataclass(frozen=True, eq=False)
class PointSet:
    """S >= 2 points in R^dim with cached extreme pairwise distances."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError(f"need at least 2 points in a 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def pairwise(self) -> np.ndarray:
        """Condensed pairwise distance vector (same order as triu indices)."""
        return pdist(self.points)

    @property
    def nu(self) -> float:
        return float(self.pairwise().min())

    @property
    def diam(self) -> float:
        return float(self.pairwise().max())


def _require_same_projector(su: Sketch, sv: Sketch):
    if su.projector_id != sv.projector_id:
        raise ValueError(
            f"sketches come from different projectors "
            f"({su.projector_id} vs {sv.projector_id})"
        )


def l1_estimate(su: Sketch, sv: Sketch) -> float:
    """Unbiased Euclidean distance estimate from the code-difference l1 norm.

    Returns sqrt(pi)/(sqrt(2) m) * delta * sum_j |codes_u - codes_v|; its
    expectation over the projector draw is exactly ||u - v||.
    """
    _require_same_projector(su, sv)
    diff = np.abs(su.codes - sv.codes).astype(float)
    return _L1_SCALE / su.codes.size * su.delta * float(diff.sum())


def l2_raw(su: Sketch, sv: Sketch) -> float:
    """Root mean square of the embedded difference, delta/sqrt(m) * ||codes_u - codes_v||."""
    _require_same_projector(su, sv)
    diff = (su.codes - sv.codes).astype(float)
    return su.delta / math.sqrt(su.codes.size) * float(np.linalg.norm(diff))


def l2_estimate(su: Sketch, sv: Sketch, table) -> float:
    """Euclidean distance estimate: the calibrated inverse map applied to l2_raw.

    The table must be built for the sketches' bin width; a raw value of zero
    maps to zero.
    """
    _require_same_projector(su, sv)
    if not math.isclose(table.delta, su.delta, rel_tol=1e-9):
        raise ValueError(
            f"distance table bin width {table.delta} does not match sketch "
            f"bin width {su.delta}"
        )
    raw = l2_raw(su, sv)
    if raw == 0.0:
        return 0.0
    return float(table.inverse(raw))


# ---------------------------------------------------------------------------
# binary (sign) mapping

def binary_embed(proj: Projector, x: np.ndarray) -> np.ndarray:
    """Sign pattern of the undithered projection (+1 at zero), as int8."""
    x = np.asarray(x, dtype=float)
    if x.shape != (proj.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({proj.dim},)")
    return np.where(proj.phi @ x >= 0.0, 1, -1).astype(np.int8)


def hamming(b1: np.ndarray, b2: np.ndarray) -> float:
    """Fraction of positions where two sign patterns differ."""
    b1 = np.asarray(b1)
    b2 = np.asarray(b2)
    if b1.shape != b2.shape:
        raise ValueError(f"sign patterns differ in shape: {b1.shape} vs {b2.shape}")
    return float(np.mean(b1 != b2))


def angular(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two nonzero vectors, in radians.

    The expected normalized Hamming distance of the sign mapping is this
    angle divided by pi; callers compare d_H against angular(u, v)/pi.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("angular distance is undefined for the zero vector")
    c = float(np.dot(u, v) / (nu * nv))
    return math.acos(min(1.0, max(-1.0, c)))


# ---------------------------------------------------------------------------
# analytic moments and diagnostics

def chi_moment(dim: int, q: int) -> float:
    """Raw q-th moment of the norm of a standard normal dim-vector.

    2^(q/2) * Gamma((dim+q)/2) / Gamma(dim/2), via log-gamma.
    """
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {dim!r}")
    if not isinstance(q, (int, np.integer)) or q < 0:
        raise ValueError(f"moment order must be an integer >= 0, got {q!r}")
    return math.exp(
        0.5 * q * math.log(2.0) + gammaln((dim + q) / 2.0) - gammaln(dim / 2.0)
    )


@dataclass(frozen=True)
class SubgaussianReport:
    """Diagnostics of the quantized one-coordinate difference magnitude Z.

    ``max_abs_dev`` is the observed maximum of |Z - Y| against the unquantized
    magnitude Y (deterministically below twice the bin width); ``tail`` holds
    (t, empirical P(|Z - mean_z| > t)) rows.
    """

    mean_z: float
    mean_y: float
    std_z: float
    max_abs_dev: float
    samples: int
    tail: tuple


def subgaussian_diag(proj: Projector, u: np.ndarray, v: np.ndarray,
                     samples: int, seed: int = 0, t_grid=None) -> SubgaussianReport:
    """Sample fresh (row, dither) pairs and check the quantized difference law.

    Z = delta * |floor((r.u + xi)/delta) - floor((r.v + xi)/delta)| and
    Y = |r.(u - v)| always satisfy |Z - Y| <= 2 delta; the report carries the
    empirical mean of Z and its deviation tail on ``t_grid``.
    """
    if samples < 10_000:
        raise ValueError(f"need at least 10^4 samples, got {samples}")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (proj.dim,) or v.shape != (proj.dim,):
        raise ValueError(f"points must have shape ({proj.dim},)")
    delta = proj.delta
    if t_grid is None:
        t_grid = (0.5 * delta, delta, 2.0 * delta, 4.0 * delta)

    rng = make_rng(seed)
    chunk = max(1, 4_000_000 // proj.dim)
    z_parts = []
    y_parts = []
    left = int(samples)
    while left > 0:
        b = min(chunk, left)
        rows = polar_gaussian(rng, (b, proj.dim))
        if proj.row_model == "uniform_sphere":
            norms = np.linalg.norm(rows, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            rows = rows / norms * math.sqrt(proj.dim)
        xi = rng.random(b) * delta
        pu = rows @ u + xi
        pv = rows @ v + xi
        z = delta * np.abs(_lattice_floor(pu, delta) - _lattice_floor(pv, delta))
        y = np.abs(rows @ (u - v))
        z_parts.append(z)
        y_parts.append(y)
        left -= b
    z = np.concatenate(z_parts)
    y = np.concatenate(y_parts)
    max_dev = float(np.max(np.abs(z - y)))
    if max_dev > 2.0 * delta:
        raise RuntimeError(
            f"|Z - Y| = {max_dev} exceeds twice the bin width {delta}: "
            "quantizer bug"
        )
    mean_z = float(z.mean())
    tail = tuple(
        (float(t), float(np.mean(np.abs(z - mean_z) > t))) for t in t_grid
    )
    return SubgaussianReport(
        mean_z=mean_z,
        mean_y=float(y.mean()),
        std_z=float(z.std(ddof=1)),
        max_abs_dev=max_dev,
        samples=int(samples),
        tail=tail,
    )
