"""Calibration of the nonlinear distance map of the squared-distance estimator.

For a pair at distance lambda, the expected squared code-difference per
coordinate is g(lambda/delta)^2 where g(alpha)^2 is the second moment of the
crossing count of a needle of length r*alpha with r distributed as the norm
of a standard normal dim-vector.  Because the grid-normal component of such
a random row is exactly a standard normal scalar, that mixture collapses to
a single Gaussian integral, which this module evaluates to near machine
precision; the two-stage (norm times direction) quadrature and the
polynomial-fit route survive as cross-checks.

g is strictly increasing and satisfies
max(sqrt(sqrt(2/pi) delta lambda), lambda) <= g_delta(lambda)
<= sqrt(sqrt(2/pi) delta lambda) + lambda; the table stores it on a
geometric grid and inverts it by monotone cubic interpolation plus
bisection, switching to the asymptotic quadratic form beyond the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .buffon import _check_dim, tau
from .embedding import chi_moment

_SQRT_2_PI = math.sqrt(2.0 / math.pi)
_GAUSS_CUTOFF = 12.0  # mass beyond 12 sigma ~ 2e-33, far under the 1e-10 budget
_GL16_NODES, _GL16_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panel_nodes(edges: np.ndarray):
    """Gauss-Legendre nodes/weights for a batch of panels given by edges."""
    lo = edges[:-1, None]
    hi = edges[1:, None]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return (mid + half * _GL16_NODES).ravel(), (half * _GL16_WEIGHTS).ravel()


def _subdivide(edges: np.ndarray, h_max: float) -> np.ndarray:
    """Refine a sorted edge list so no panel is wider than h_max."""
    out = [edges[:1]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        parts = max(1, int(math.ceil((hi - lo) / h_max)))
        out.append(np.linspace(lo, hi, parts + 1)[1:])
    return np.concatenate(out)


def mixture_second_moment(alpha: float) -> float:
    """E[crossing count^2] at normalized distance alpha, exactly.

    Conditionally on the projected gap c = alpha*|G| (G standard normal) and
    a uniform dither, the mean squared crossing count is
    h(c) = m^2 + (2m+1)(c - m) with m = floor(c); kink-aligned panels make
    the Gaussian quadrature exact to round-off.
    """
    alpha = float(alpha)
    if alpha < 0.0 or not math.isfinite(alpha):
        raise ValueError(f"normalized distance must be finite and >= 0, got {alpha}")
    if alpha == 0.0:
        return 0.0
    n_kinks = int(math.floor(alpha * _GAUSS_CUTOFF))
    kinks = np.arange(1, n_kinks + 1) / alpha
    edges = np.unique(np.concatenate([[0.0], kinks, [_GAUSS_CUTOFF]]))
    edges = _subdivide(edges, 0.25)
    x, w = _panel_nodes(edges)
    c = alpha * x
    m = np.floor(c)
    h = m * m + (2.0 * m + 1.0) * (c - m)
    density = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return 2.0 * float(np.dot(w, density * h))


def sandwich_bounds(alpha):
    """Lower/upper envelope of g at normalized distance alpha (delta = 1)."""
    alpha = np.asarray(alpha, dtype=float)
    root = np.sqrt(_SQRT_2_PI * alpha)
    return np.maximum(root, alpha), root + alpha


@dataclass(frozen=True, eq=False)
class GDeltaTable:
    """Tabulated strictly increasing distance map and its inverse.

    ``grid`` runs from 0 to ``tail_switch``; beyond it the map follows the
    asymptotic form g^2 = lambda^2 + c delta^2, where c is pinned at the
    switch point for continuity (the squared map approaches
    lambda^2 + delta^2/6 exponentially fast, the 1/6 being the variance of
    the two independent dither offsets).
    """

    dim: int
    delta: float
    grid: np.ndarray
    values: np.ndarray
    tail_switch: float
    _interp: PchipInterpolator = field(repr=False, default=None)
    _tail_c: float = field(repr=False, default=0.0)

    def __post_init__(self):
        if np.any(np.diff(self.values) <= 0.0):
            raise RuntimeError(
                "tabulated distance map is not strictly increasing; "
                "refusing to build an invertible table"
            )
        object.__setattr__(self, "_interp", PchipInterpolator(self.grid, self.values))
        a_max = self.tail_switch / self.delta
        g_max = self.values[-1] / self.delta
        object.__setattr__(self, "_tail_c", g_max * g_max - a_max * a_max)

    def value(self, lam):
        """Forward map g_delta(lambda) for scalar or array input."""
        lam_arr = np.asarray(lam, dtype=float)
        if np.any(lam_arr < 0.0):
            raise ValueError("distance must be >= 0")
        inside = lam_arr <= self.tail_switch
        out = np.empty_like(lam_arr)
        if np.any(inside):
            out[inside] = self._interp(lam_arr[inside])
        if np.any(~inside):
            a = lam_arr[~inside] / self.delta
            out[~inside] = self.delta * np.sqrt(a * a + self._tail_c)
        out = np.maximum(out, 0.0)
        return float(out) if np.isscalar(lam) or lam_arr.ndim == 0 else out

    def inverse(self, y):
        """Inverse map: the lambda with g_delta(lambda) = y, to 1e-10 relative."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y_arr < 0.0):
            raise ValueError("estimator value must be >= 0")
        out = np.zeros_like(y_arr)
        g_top = self.values[-1]

        tail = y_arr > g_top
        if np.any(tail):
            rhs = (y_arr[tail] / self.delta) ** 2 - self._tail_c
            out[tail] = self.delta * np.sqrt(np.maximum(rhs, 0.0))

        body = (~tail) & (y_arr > 0.0)
        if np.any(body):
            yb = y_arr[body]
            hi_idx = np.searchsorted(self.values, yb, side="left")
            hi_idx = np.clip(hi_idx, 1, self.grid.size - 1)
            lo = self.grid[hi_idx - 1]
            hi = self.grid[hi_idx]
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                below = self._interp(mid) < yb
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
                if np.all(hi - lo <= 1e-12 * np.maximum(hi, self.delta)):
                    break
            out[body] = 0.5 * (lo + hi)
        return float(out[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else out

    def bounds(self, lam):
        """Analytic sandwich (lower, upper) around g_delta at ``lam``."""
        lo, hi = sandwich_bounds(np.asarray(lam, dtype=float) / self.delta)
        return self.delta * lo, self.delta * hi


def build_gdelta(dim: int, delta: float, grid_size: int,
                 lambda_max: float = None) -> GDeltaTable:
    """Tabulate the distance map on a geometric grid and verify its envelope.

    The grid spans lambda/delta in [1e-3, lambda_max/delta] (default
    lambda_max = 50 delta) plus lambda = 0, resolving both the square-root
    and the linear regime.  Every grid point is checked against the analytic
    sandwich; a violation means the quadrature or the crossing pmf is broken
    and raises.
    """
    dim = _check_dim(dim)
    delta = float(delta)
    if not math.isfinite(delta) or delta <= 0.0:
        raise ValueError(f"bin width must be finite and > 0, got {delta}")
    if grid_size < 64:
        raise ValueError(f"grid size must be >= 64, got {grid_size}")
    if lambda_max is None:
        lambda_max = 50.0 * delta
    alpha_max = lambda_max / delta
    if alpha_max <= 1e-3:
        raise ValueError("lambda_max must exceed 1e-3 * delta")

    alphas = np.concatenate([[0.0], np.geomspace(1e-3, alpha_max, grid_size - 1)])
    g_norm = np.array([math.sqrt(mixture_second_moment(a)) for a in alphas])

    lower, upper = sandwich_bounds(alphas)
    slack = 1e-9 * (1.0 + alphas)
    bad = (g_norm < lower - slack) | (g_norm > upper + slack)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RuntimeError(
            f"distance map violates its analytic envelope at alpha="
            f"{alphas[i]}: g={g_norm[i]!r} not in [{lower[i]!r}, {upper[i]!r}]"
        )
    return GDeltaTable(
        dim=dim,
        delta=delta,
        grid=delta * alphas,
        values=delta * g_norm,
        tail_switch=float(lambda_max),
    )


def g_inverse(table: GDeltaTable, y: float) -> float:
    """Distance whose forward map equals ``y`` (monotone inversion)."""
    return table.inverse(y)


# ---------------------------------------------------------------------------
# cross-check routes (kept independent of the production path)

def chi_density(dim: int, r):
    """Density of the norm of a standard normal dim-vector."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0.0
    out[pos] = np.exp(
        (1.0 - dim / 2.0) * math.log(2.0)
        - gammaln(dim / 2.0)
        + (dim - 1.0) * np.log(r[pos])
        - 0.5 * r[pos] ** 2
    )
    return out


def needle_second_moment(a: float, dim: int) -> float:
    """Second crossing moment for a fixed needle length ``a``.

    Uses the cumulative-measure sum tau*a + 2*sum_k kappa_k written as one
    kink-aligned integral of T(a sin t) = m*a*sin(t) - m(m+1)/2 against
    (cos t)^(dim-2); agrees with the pmf-sum moment.
    """
    if a < 0.0:
        raise ValueError(f"needle length must be >= 0, got {a}")
    if a == 0.0:
        return 0.0
    t = tau(dim)
    n = int(math.floor(a))
    kink_t = np.arcsin(np.minimum(np.arange(1, n + 1) / a, 1.0))
    edges = np.unique(np.concatenate([[0.0], kink_t, [0.5 * math.pi]]))
    edges = _subdivide(edges, 0.5 / math.sqrt(max(dim, 4)))
    x, w = _panel_nodes(edges)
    s = a * np.sin(x)
    m = np.floor(s)
    big_t = m * s - 0.5 * m * (m + 1.0)
    kappa_sum = t * (dim - 1) * float(np.dot(w, np.cos(x) ** (dim - 2) * big_t))
    return t * a + 2.0 * kappa_sum


def mixture_second_moment_two_stage(dim: int, alpha: float,
                                    r_panels: int = 96) -> float:
    """Cross-check route: integrate the fixed-length second moment against
    the row-norm density over [max(0, mu-10 sigma), mu+10 sigma]."""
    if alpha == 0.0:
        return 0.0
    mu = chi_moment(dim, 1)
    sigma = math.sqrt(max(dim - mu * mu, 1e-12))
    r_lo = max(0.0, mu - 10.0 * sigma)
    r_hi = mu + 10.0 * sigma
    edges = np.linspace(r_lo, r_hi, r_panels + 1)
    r, w = _panel_nodes(edges)
    m2 = np.array([needle_second_moment(alpha * ri, dim) for ri in r])
    return float(np.dot(w, m2 * chi_density(dim, r)))


def polyfit_crosscheck(dim: int, delta: float, lambdas, degree: int = 12) -> np.ndarray:
    """Cross-check route: polynomial fit of the fixed-length second moment,
    then term-wise row-norm moments.

    Fits m2(a) on [0, a_max] with a Chebyshev basis, converts to a power
    series sum_j d_j a^j, and evaluates E m2(r alpha) = sum_j d_j alpha^j E r^j.
    Approximate by construction; used only as a consistency probe.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    alphas = lambdas / delta
    mu = chi_moment(dim, 1)
    sigma = math.sqrt(max(dim - mu * mu, 1e-12))
    a_max = float(alphas.max()) * (mu + 10.0 * sigma)
    nodes = 0.5 * a_max * (1.0 - np.cos(np.linspace(0.0, math.pi, 4 * degree)))
    m2_nodes = np.array([needle_second_moment(a, dim) for a in nodes])
    cheb = np.polynomial.Chebyshev.fit(nodes, m2_nodes, degree, domain=[0.0, a_max])
    power = cheb.convert(kind=np.polynomial.Polynomial)
    coeffs = power.coef
    r_moments = np.array([chi_moment(dim, j) for j in range(coeffs.size)])
    second = np.array(
        [float(np.dot(coeffs * r_moments, a ** np.arange(coeffs.size)))
         for a in alphas]
    )
    return delta * np.sqrt(np.maximum(second, 0.0))
