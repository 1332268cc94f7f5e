"""Special functions, quadrature, interpolation and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

__all__ = [
    "DomainError",
    "QuadratureError",
    "RngStream",
    "Grid1D",
    "marcum_q1",
    "bessel_i0",
    "bessel_i0e",
    "gaussian_q",
    "integrate_semiinf",
]

# Bessel series is used up to this value of a*b, the Poisson-gamma mixture above it.
_SERIES_AB_MAX = 30.0
_SERIES_TERM_TOL = 1e-14
_SERIES_MAX_TERMS = 400


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, abserr: float):
        super().__init__(f"{message} (partial estimate {estimate!r}, error {abserr:.3g})")
        self.estimate = estimate
        self.abserr = abserr


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Philox is keyed with the 128-bit concatenation of both ids, so distinct
    stream ids give non-overlapping, independent sequences.  Instances are
    single-owner; use :meth:`substream` to hand a stream to another worker.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")
        key = (int(self.seed) << 64) | int(self.stream_id)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def complex_normal(self, size) -> np.ndarray:
        """Unit-power circular complex Gaussian draws via Box-Muller.

        ``r = sqrt(-ln(1 - u1))``, ``phi = 2 pi u2``; E|z|^2 = 1.
        """
        shape = (size,) if np.ndim(size) == 0 else tuple(size)
        # interleaved pairs keep a stream independent of how requests are chunked
        u = self._gen.random(shape + (2,))
        u1, u2 = u[..., 0], u[..., 1]
        r = np.sqrt(-np.log1p(-u1))
        return r * np.exp(2j * np.pi * u2)

    def choice(self, n: int, p: Sequence[float]) -> int:
        return int(self._gen.choice(n, p=p))


# --------------------------------------------------------------------------
# special functions
# --------------------------------------------------------------------------


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("bessel_i0 requires finite input")
    ax = np.abs(x)
    # i0 overflows near 713; the scaled form keeps the mantissa meaningful up to there
    out = np.where(ax > 700.0, special.i0e(ax) * np.exp(np.minimum(ax, 709.0)), special.i0(ax))
    out = np.where(ax > 709.0, np.inf, out)
    return out[()] if out.ndim == 0 else out


def bessel_i0e(x):
    """Exponentially scaled ``I0(x) * exp(-|x|)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("bessel_i0e requires finite input")
    out = special.i0e(x)
    return out[()] if out.ndim == 0 else out


def gaussian_q(x):
    """Standard normal tail probability ``P[N(0,1) > x]``."""
    out = special.ndtr(-np.asarray(x, dtype=float))
    return out[()] if np.ndim(out) == 0 else out


def _marcum_series(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Q1 = e^{-(a-b)^2/2} sum_{k>=0} (a/b)^k Ive_k(ab)          for a < b
    # Q1 = 1 - e^{-(a-b)^2/2} sum_{k>=1} (b/a)^k Ive_k(ab)      for a >= b
    # Ive_k(x) = Ive_0(x) prod_{j<=k} rho_j with rho_j = I_j/I_{j-1} < 1 obtained by
    # the stable backward continued-fraction recurrence rho_j = 1/(2j/x + rho_{j+1}).
    x = a * b
    lower = a < b
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ratio = np.where(lower, a / b, b / a)  # the unused branch may divide by ~0
    kmax = int(np.ceil(np.max(x) + 12.0 * np.sqrt(np.max(x)) + 40.0))
    kmax = min(kmax, _SERIES_MAX_TERMS)
    rho = np.empty((kmax + 1, x.size))
    nxt = np.zeros_like(x)
    with np.errstate(divide="ignore", over="ignore"):  # x -> 0 gives rho -> 0, as it should
        for j in range(kmax, 0, -1):
            nxt = 1.0 / (2.0 * j / x + nxt)
            rho[j] = nxt
    term = special.ive(0, x)
    acc = np.where(lower, term, 0.0)
    for k in range(1, kmax + 1):
        term = term * ratio * rho[k]
        acc += term
        if np.all(term <= _SERIES_TERM_TOL * acc):
            break
    pref = np.exp(-0.5 * (a - b) ** 2)
    return np.where(lower, pref * acc, 1.0 - pref * acc)


def _marcum_poisson(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Q1(a,b) = sum_k Pois(k; a^2/2) * P[Pois(b^2/2) <= k]: noncentral chi^2_2 as a
    # Poisson mixture of central chi^2 laws, truncated to +-12 sd of the mixing weight.
    # Both factors advance by log-space recurrences from a single special-function call.
    lam = 0.5 * a * a
    y = 0.5 * b * b
    lo = np.maximum(0.0, np.floor(lam - 12.0 * np.sqrt(lam) - 10.0))
    width = np.ceil(24.0 * np.sqrt(lam) + 50.0).astype(np.int64)
    order = np.argsort(width, kind="stable")
    out = np.empty_like(a)
    pos = 0
    ws = width[order]
    while pos < order.size:
        # widths ascend, so a chunk's widest row is its last; keep rows x width <= 2e6
        cost = np.arange(1, order.size - pos + 1) * ws[pos:]
        n = max(1, int(np.searchsorted(cost, 2_000_000, side="right")))
        idx = order[pos:pos + n]
        w_max = int(width[idx].max())
        pos += n
        k0, lam_s, y_s = lo[idx, None], lam[idx, None], y[idx, None]
        j = np.arange(1, w_max)[None, :]
        log_step = np.log(k0 + j)
        with np.errstate(divide="ignore", invalid="ignore"):
            logw0 = special.xlogy(k0, lam_s) - lam_s - special.gammaln(k0 + 1.0)
            logp0 = special.xlogy(k0, y_s) - y_s - special.gammaln(k0 + 1.0)
            logw = logw0 + np.cumsum(np.log(lam_s) - log_step, axis=1)
            logp = logp0 + np.cumsum(np.log(y_s) - log_step, axis=1)
        weights = np.concatenate([np.exp(logw0), np.exp(logw)], axis=1)
        # truncated mass is < 1e-30; renormalizing cancels rounding in the log baseline
        weights /= weights.sum(axis=1, keepdims=True)
        cdf0 = special.gammaincc(k0 + 1.0, y_s)
        cdf_end = special.gammaincc(k0 + w_max, y_s)
        inc = np.cumsum(np.exp(logp), axis=1)
        # pin the running sum to the exact right endpoint, again cancelling baseline rounding
        scale = np.where(inc[:, -1:] > 0, (cdf_end - cdf0) / np.where(inc[:, -1:] > 0, inc[:, -1:], 1.0), 1.0)
        cdf = np.concatenate([cdf0, cdf0 + inc * scale], axis=1)
        out[idx] = np.sum(weights * np.minimum(cdf, 1.0), axis=1)
    return out


def marcum_q1(a, b):
    """First-order Marcum Q function ``Q1(a, b)``.

    Tail probability ``P[R > b]`` of a Rician amplitude with unit per-dimension
    variance and LOS amplitude ``a``.  Vectorized over broadcast inputs.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("marcum_q1 requires finite arguments")
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("marcum_q1 requires a >= 0 and b >= 0")
    shape = a.shape
    a = a.ravel().copy()
    b = b.ravel().copy()
    out = np.empty_like(a)

    zero_b = b == 0
    zero_a = (a == 0) & ~zero_b
    out[zero_b] = 1.0
    out[zero_a] = np.exp(-0.5 * b[zero_a] ** 2)
    # Q1 <= exp(-(b-a)^2/2) for b > a and 1 - Q1 <= exp(-(a-b)^2/2) for a > b, so
    # beyond |a - b| = 39 the value is 0 or 1 to double precision
    far_hi = ~zero_b & (a - b > 39.0)
    far_lo = ~(zero_a | zero_b) & (b - a > 39.0)
    out[far_hi] = 1.0
    out[far_lo] = 0.0
    rest = ~(zero_a | zero_b | far_hi | far_lo)
    small = rest & (a * b <= _SERIES_AB_MAX)
    large = rest & ~small
    if np.any(small):
        # the ratio table is (terms x elements); chunking bounds it to ~50 MB
        idx = np.flatnonzero(small)
        for c0 in range(0, idx.size, 16384):
            sl = idx[c0:c0 + 16384]
            out[sl] = _marcum_series(a[sl], b[sl])
    if np.any(large):
        out[large] = _marcum_poisson(a[large], b[large])
    out = np.clip(out, 0.0, 1.0).reshape(shape)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def integrate_semiinf(
    f: Callable[[float], float],
    points: Sequence[float] = (),
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-13,
    limit: int = 200,
) -> float:
    """Integrate ``f`` over ``[0, inf)``.

    The half-line is split at the optional interior ``points`` (use them to
    point the integrator at narrow peaks).  The last piece is mapped to a
    finite interval by QUADPACK's ``x = a + (1-t)/t`` substitution; finite
    pieces use adaptive Gauss-Kronrod, which copes with an integrable
    logarithmic singularity at 0.

    Raises :class:`QuadratureError` carrying the partial estimate when any
    piece fails to converge within ``limit`` subdivisions.
    """
    edges = [0.0] + sorted(float(p) for p in points if p > 0.0)
    edges = list(dict.fromkeys(edges))
    total = 0.0
    total_err = 0.0
    for lo, hi in zip(edges, edges[1:] + [math.inf]):
        val, err, info, *msg = integrate.quad(
            f, lo, hi, epsabs=abs_tol, epsrel=rel_tol, limit=limit, full_output=1
        )
        total += val
        total_err += err
        if msg and err > max(abs_tol, 10 * rel_tol * abs(val)):
            raise QuadratureError(f"no convergence on [{lo}, {hi}]: {msg[0]}", total, total_err)
    if not math.isfinite(total):
        raise QuadratureError("non-finite integral", total, total_err)
    return total


# --------------------------------------------------------------------------
# tabulated functions
# --------------------------------------------------------------------------


class Grid1D:
    """Tabulated monotone-friendly function with clamped PCHIP evaluation."""

    def __init__(self, abscissae, ordinates):
        x = np.asarray(abscissae, dtype=float)
        y = np.asarray(ordinates, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("abscissae and ordinates must be 1-D of equal length")
        if x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        self.abscissae = x
        self.ordinates = y
        self._interp = PchipInterpolator(x, y, extrapolate=False)

    @property
    def lo(self) -> float:
        return float(self.abscissae[0])

    @property
    def hi(self) -> float:
        return float(self.abscissae[-1])

    def __call__(self, x):
        xc = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        out = self._interp(xc)
        return out[()] if np.ndim(out) == 0 else out

    def invert(self, y, tol: float = 1e-12, increasing: bool = True):
        """Solve ``self(x) = y`` by vectorized bisection on the tabulated range.

        Targets beyond the range of the ordinates return the nearest endpoint.
        """
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, self.lo)
        hi = np.full(y.shape, self.hi)
        n_iter = int(math.ceil(math.log2((self.hi - self.lo) / tol))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self._interp(mid) < y
            if not increasing:
                below = ~below
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return out[()] if out.ndim == 0 else out
