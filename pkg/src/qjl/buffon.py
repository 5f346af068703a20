"""Exact crossing law of a random needle against equispaced parallel hyperplanes.

A needle of normalized length ``a`` (needle length over grid spacing) thrown
uniformly at random in dimension ``dim`` crosses a random number of the
(dim-1)-dimensional grid hyperplanes.  That count is a discrete random
variable on {0, ..., floor(a)+1}; this module computes its exact pmf, its
moments with analytic two-sided bounds, and provides two independent
samplers (a geometric Monte Carlo throw and an inverse-CDF sampler) used to
cross-validate the analytic path.

All gamma ratios go through log-gamma so large ``dim`` cannot overflow, and
all integrals use adaptive Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .rng import make_rng, polar_gaussian

_HALF_PI = 0.5 * math.pi

# tolerance knobs shared with the test suite
PMF_NEGATIVE_CLAMP = -1e-12
PMF_NORMALIZATION_TOL = 1e-10
MOMENT_PATH_TOL = 1e-9
KAPPA_CONSISTENCY_TOL = 1e-10
QUADRATURE_TOL = 1e-13


def _check_dim(dim) -> int:
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool):
        raise ValueError(f"dimension must be an integer >= 2, got {dim!r}")
    if dim < 2:
        raise ValueError(f"dimension must be >= 2, got {dim}")
    return int(dim)


def tau(dim: int) -> float:
    """Expected crossings per unit of normalized needle length.

    Equals Gamma(dim/2) / (sqrt(pi) * Gamma((dim+1)/2)); lies between
    sqrt(2/pi)/sqrt(dim+1) and sqrt(2/pi)/sqrt(dim-1).
    """
    dim = _check_dim(dim)
    return math.exp(gammaln(dim / 2.0) - gammaln((dim + 1) / 2.0)) / math.sqrt(math.pi)


def chi(dim: int, x: float) -> float:
    """Gamma-ratio family Gamma(x+1/2)Gamma(dim/2) / (sqrt(pi)Gamma(dim/2+x)).

    Special values: chi(dim, 0) = 1, chi(dim, 1/2) = tau(dim),
    chi(dim, 1) = 1/dim.
    """
    dim = _check_dim(dim)
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise ValueError(f"x must be finite and >= 0, got {x}")
    return math.exp(
        gammaln(x + 0.5) + gammaln(dim / 2.0) - gammaln(dim / 2.0 + x)
    ) / math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# adaptive Gauss-Legendre quadrature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _gl_panel(f, lo: float, hi: float) -> float:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return half * float(np.dot(f(mid + half * _GL_NODES), _GL_WEIGHTS))


def adaptive_gauss_legendre(f, lo: float, hi: float, tol: float = QUADRATURE_TOL) -> float:
    """Integrate a vectorized ``f`` over [lo, hi] to absolute tolerance ``tol``.

    A panel is accepted when bisecting it moves the estimate by less than its
    width-proportional share of the budget; otherwise both halves are pushed
    back on the stack.
    """
    if hi <= lo:
        return 0.0
    width = hi - lo
    stack = [(lo, hi, _gl_panel(f, lo, hi), 0)]
    total = 0.0
    while stack:
        a, b, coarse, depth = stack.pop()
        m = 0.5 * (a + b)
        left = _gl_panel(f, a, m)
        right = _gl_panel(f, m, b)
        if abs(left + right - coarse) <= tol * (b - a) / width:
            total += left + right
        elif depth >= 52:
            raise RuntimeError(
                f"adaptive quadrature failed to converge on [{a}, {b}] "
                f"(residual {abs(left + right - coarse):.3e})"
            )
        else:
            stack.append((a, m, left, depth + 1))
            stack.append((m, b, right, depth + 1))
    return total


def j_n(dim: int, alpha: float) -> float:
    """Angular crossing measure (dim-1) * integral_0^alpha sin(t)^(dim-2) dt.

    Nondecreasing on [0, pi/2] with j_n(dim, 0) = 0 and
    j_n(dim, pi/2) = 1/tau(dim).
    """
    dim = _check_dim(dim)
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0.0 or alpha > _HALF_PI + 1e-12:
        raise ValueError(f"alpha must lie in [0, pi/2], got {alpha}")
    alpha = min(alpha, _HALF_PI)
    if alpha == 0.0:
        return 0.0
    power = dim - 2
    return (dim - 1) * adaptive_gauss_legendre(
        lambda t: np.sin(t) ** power, 0.0, alpha
    )


# ---------------------------------------------------------------------------
# pmf construction

@dataclass(frozen=True)
class BuffonParams:
    """Normalized needle length ``a`` > 0 and ambient dimension ``dim`` >= 2."""

    a: float
    dim: int

    def __post_init__(self):
        if not isinstance(self.a, (int, float, np.floating)) or isinstance(self.a, bool):
            raise ValueError(f"needle length must be a real number, got {self.a!r}")
        object.__setattr__(self, "a", float(self.a))
        if not math.isfinite(self.a) or self.a <= 0.0:
            raise ValueError(f"needle length must be finite and > 0, got {self.a}")
        object.__setattr__(self, "dim", _check_dim(self.dim))

    @property
    def n(self) -> int:
        """Support bound floor(a).

        Lengths within 1e-12 below an integer round up to it, so the pmf is
        continuous in ``a`` at integer boundaries (the extra outcome n+1 then
        carries zero probability).
        """
        return int(math.floor(self.a + 1e-12))


@dataclass(frozen=True)
class BuffonPmf:
    """Exact crossing-count distribution on {0, ..., n+1}.

    ``theta`` holds the crossing angles theta_0..theta_n, ``kappa`` the
    cumulative-measure values kappa_{-1}..kappa_{n+1} (index shifted by one),
    and ``p`` the probabilities p_0..p_{n+1}.
    """

    params: BuffonParams
    n: int
    theta: np.ndarray
    kappa: np.ndarray
    p: np.ndarray

    def kappa_at(self, k: int) -> float:
        """kappa_k for -1 <= k <= n+1 (zero beyond the support)."""
        if k < -1:
            raise ValueError(f"kappa index must be >= -1, got {k}")
        if k > self.n + 1:
            return 0.0
        return float(self.kappa[k + 1])

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.n + 2)

    def mean(self) -> float:
        return float(np.dot(self.support, self.p))


def build_pmf(params: BuffonParams) -> BuffonPmf:
    """Assemble the exact pmf from the crossing angles.

    theta_k = arccos(min(k/a, 1)); kappa_k combines the angular crossing
    measure with the boundary terms; p_k is the second difference
    kappa_{k+1} + kappa_{k-1} - 2 kappa_k.  Round-off negatives down to
    -1e-12 are clamped to zero and the pmf renormalized; anything worse is a
    hard error (it would mean the quadrature is broken).
    """
    a, dim, n = params.a, params.dim, params.n
    t = tau(dim)
    k_idx = np.arange(n + 1)
    theta = np.arccos(np.minimum(k_idx / a, 1.0))
    j_vals = np.array([j_n(dim, th) for th in theta])

    # kap[i] holds kappa_{i-1}; kappa_{-1} = tau*a + tau*J(pi/2) = tau*a + 1,
    # kappa_k = 0 for k > n (two zero pads close the second difference).
    kap = np.zeros(n + 4)
    kap[0] = t * a + t * j_n(dim, _HALF_PI)
    kap[1 : n + 2] = t * a * np.sin(theta) ** (dim - 1) - k_idx * t * j_vals

    p = kap[2:] + kap[:-2] - 2.0 * kap[1:-1]
    worst = p.min()
    if worst < PMF_NEGATIVE_CLAMP:
        raise RuntimeError(
            f"pmf probability {worst:.3e} below clamp threshold for "
            f"a={a}, dim={dim}: quadrature bug"
        )
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > PMF_NORMALIZATION_TOL:
        raise RuntimeError(
            f"pmf normalization off by {total - 1.0:.3e} for a={a}, dim={dim}: "
            "quadrature bug"
        )
    p = p / total
    return BuffonPmf(params=params, n=n, theta=theta, kappa=kap[: n + 3], p=p)


def kappa_alt(params: BuffonParams, k: int) -> float:
    """Independent integral route to kappa_k, the module's consistency oracle.

    Evaluates tau * a * (dim-1) * integral_0^1 (1-u^2)^((dim-3)/2) (u-k/a)_+ du
    through the substitution u = cos(phi), which turns the kink at u = k/a
    into the upper integration limit and removes the endpoint singularity of
    the weight at u = 1 for dim = 2.
    """
    a, dim = params.a, params.dim
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ValueError(f"k must be an integer, got {k!r}")
    if k < 0 or k > params.n:
        raise ValueError(f"k must lie in [0, {params.n}], got {k}")
    theta_k = math.acos(min(k / a, 1.0))
    if theta_k == 0.0:
        return 0.0
    power = dim - 2
    integrand = lambda ph: np.sin(ph) ** power * (a * np.cos(ph) - k)
    return tau(dim) * (dim - 1) * adaptive_gauss_legendre(integrand, 0.0, theta_k)


def second_difference(f, k: int) -> float:
    """Centered second difference f(k+1) - 2 f(k) + f(k-1) of a sequence."""
    return f(k + 1) - 2.0 * f(k) + f(k - 1)


def moment_bounds(params: BuffonParams, q: int) -> tuple:
    """Two-sided analytic bounds on the q-th crossing moment.

    Combines the exact value tau*a for a < 1, the second- and third-moment
    envelopes, the technical bound for q >= 4 and a >= 1, and the weak upper
    bound valid for every a; returns their intersection (lo, hi).
    """
    a, dim = params.a, params.dim
    if q < 1:
        raise ValueError(f"moment order must be >= 1, got {q}")
    t = tau(dim)
    if a < 1.0 or q == 1:
        return (t * a, t * a)

    lo, hi = t * a, math.inf
    if q == 2:
        lo = max(lo, a * a / dim)
        hi = t * a + max(a * a - 1.0, 0.0) / dim
    elif q == 3:
        center = t * a + chi(dim, 1.5) * a**3
        radius = 3.0 * a * a / dim
        lo = max(lo, center - radius)
        hi = center + radius
    else:
        center = t * a + chi(dim, q / 2.0) * a**q
        radius = (
            q * chi(dim, (q - 1) / 2.0) * a ** (q - 1)
            + math.comb(q, 2) / 24.0 * chi(dim, (q - 2) / 2.0) * (2.0 * a) ** (q - 2)
            + math.comb(q, 3) / 12.0 * chi(dim, (q - 3) / 2.0) * (2.0 * a) ** (q - 3)
        )
        lo = max(lo, center - radius)
        hi = center + radius
    if q >= 2:
        weak = (
            t * a
            + 2.0 ** (q - 2) * chi(dim, q / 2.0) * a**q
            + 2.0 ** (q - 2) * q * chi(dim, (q - 1) / 2.0) * a ** (q - 1)
        )
        hi = min(hi, weak)
    return (lo, hi)


def moment(pmf: BuffonPmf, q: int) -> float:
    """q-th moment of the crossing count, computed two ways and cross-checked.

    The direct sum over the pmf must match the summation-by-parts form
    c_0(kappa_{-1} - 2 kappa_0) + c_1 kappa_0 + sum_k D2(c_{k-1}) kappa_k
    (c_k = k^q) to 1e-9 relative, and the result must respect the analytic
    bounds of :func:`moment_bounds`; either failure raises.
    """
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool) or q < 1:
        raise ValueError(f"moment order must be an integer >= 1, got {q!r}")
    q = int(q)
    direct = float(np.dot(pmf.support.astype(float) ** q, pmf.p))

    by_parts = pmf.kappa_at(0)  # c_0 = 0, c_1 = 1 for q >= 1
    for k in range(1, pmf.n + 1):
        by_parts += second_difference(lambda j: float(j) ** q, k) * pmf.kappa_at(k)

    scale = max(1.0, abs(direct))
    if abs(direct - by_parts) > MOMENT_PATH_TOL * scale:
        raise RuntimeError(
            f"moment paths disagree for a={pmf.params.a}, dim={pmf.params.dim}, "
            f"q={q}: direct={direct!r}, by_parts={by_parts!r}"
        )
    lo, hi = moment_bounds(pmf.params, q)
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if direct < lo - slack or direct > hi + slack:
        raise RuntimeError(
            f"moment {direct!r} violates analytic bounds [{lo!r}, {hi!r}] "
            f"for a={pmf.params.a}, dim={pmf.params.dim}, q={q}"
        )
    return direct


# ---------------------------------------------------------------------------
# samplers

def mc_sample(params: BuffonParams, count: int, seed: int) -> np.ndarray:
    """Histogram of crossing counts from geometric Monte Carlo throws.

    Each throw draws the needle direction's grid-normal component as the
    first coordinate of a normalized standard-normal vector (exactly uniform
    on the sphere) and a position offset u ~ U[0, 1); the crossing count is
    |floor(u + a z)|.  Deterministic given ``seed``; returns counts indexed
    0..n+1.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    a, dim, n = params.a, params.dim, params.n
    rng = make_rng(seed)
    hist = np.zeros(n + 2, dtype=np.int64)
    chunk = max(1, 8_000_000 // dim)
    left = int(count)
    while left > 0:
        m = min(chunk, left)
        g = polar_gaussian(rng, (m, dim))
        norms = np.linalg.norm(g, axis=1)
        norms[norms == 0.0] = np.inf
        z = g[:, 0] / norms
        u = rng.random(m)
        crossings = np.abs(np.floor(u + a * z)).astype(np.int64)
        counts = np.bincount(crossings, minlength=hist.size)
        if counts.size > hist.size:
            raise RuntimeError(
                f"observed crossing count {counts.size - 1} beyond support "
                f"bound {n + 1}"
            )
        hist += counts
        left -= m
    return hist


def sample(pmf: BuffonPmf, seed: int, count: int) -> np.ndarray:
    """i.i.d. draws from the exact pmf by inverse CDF."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    cdf = np.cumsum(pmf.p)
    cdf[-1] = 1.0
    rng = make_rng(seed)
    u = rng.random(int(count))
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two pmfs (shorter one zero-padded)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    size = max(p.size, q.size)
    pp = np.zeros(size)
    qq = np.zeros(size)
    pp[: p.size] = p
    qq[: q.size] = q
    return 0.5 * float(np.abs(pp - qq).sum())
