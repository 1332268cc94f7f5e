"""Return-link open-loop ACM.

Three predictors of the per-burst effective SNR, all exposing
``outage(gamma_th) = P[gamma_eff < gamma_th]``:

* :class:`BlockFadingPredictor` - the burst sees one Rician SNR sample;
* :class:`LognormalEsm` with closed-form moments - CLT model of the
  exponential-ESM average ``xi = mean(exp(-beta gamma_i))``;
* :class:`LognormalEsm` with sample moments of past bursts' ``gamma_eff``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .mathx import integrate_semiinf, marcum_q1
from .modcod import ModCod

DEFAULT_WINDOW = 123
TRUNCATION_LIMIT = 1e-3

METHODS = ("block-fading", "lognormal-closed", "lognormal-empirical")


class InsufficientHistory(ValueError):
    """Too few past bursts for sample moments; use block fading."""


class NoJensenGap(ValueError):
    """m2 <= m1^2: no log-normal fit possible; use block fading."""


class UnreliableGaussianModel(ValueError):
    """The Gaussian CLT model of xi is not trustworthy at these parameters."""


@dataclass(frozen=True)
class RicianLinkParams:
    """Constant-LOS Rician link: ``h = mu + NLOS`` with NLOS power ``2 theta^2``."""

    mu: float
    theta2: float
    noise_power: float

    def __post_init__(self):
        if self.mu < 0 or not self.theta2 > 0 or not self.noise_power > 0:
            raise ValueError("need mu >= 0, theta^2 > 0 and noise power > 0")

    @property
    def theta(self) -> float:
        return math.sqrt(self.theta2)

    @property
    def zeta(self) -> float:
        return math.sqrt(self.theta2 / self.noise_power)

    @property
    def lam(self) -> float:
        return self.mu**2 / self.theta2

    @property
    def mean_snr(self) -> float:
        return (self.mu**2 + 2.0 * self.theta2) / self.noise_power

    @classmethod
    def from_mean_snr(cls, mu: float, theta2: float, mean_snr_db: float) -> "RicianLinkParams":
        return cls(mu, theta2, (mu**2 + 2.0 * theta2) / 10.0 ** (mean_snr_db / 10.0))


# --------------------------------------------------------------------------
# block fading
# --------------------------------------------------------------------------


def snr_cdf_rician(p: RicianLinkParams, x):
    """``P[gamma <= x] = 1 - Q1(sqrt(lambda), sqrt(x)/zeta)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("SNR must be >= 0")
    out = 1.0 - marcum_q1(math.sqrt(p.lam), np.sqrt(x) / p.zeta)
    return np.clip(out, 0.0, 1.0)[()] if np.ndim(out) == 0 else np.clip(out, 0.0, 1.0)


def blockfading_threshold(p: RicianLinkParams, p_out: float, rel_tol: float = 1e-10) -> float:
    """SNR whose block-fading outage equals ``p_out`` (bisection on the CDF)."""
    if not 0.0 < p_out < 1.0:
        raise ValueError("target outage must lie in (0, 1)")
    lo, hi = 0.0, max(p.mean_snr, 1e-300)
    while snr_cdf_rician(p, hi) < p_out:
        lo, hi = hi, 2.0 * hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if snr_cdf_rician(p, mid) < p_out:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def noise_for_threshold(mu: float, theta2: float, p_out: float, gamma_target: float) -> float:
    """Noise power placing the block-fading threshold exactly at ``gamma_target``.

    The threshold scales as ``1/sigma^2`` at fixed (mu, theta), so one
    reference inversion at ``sigma^2 = 1`` suffices.
    """
    ref = blockfading_threshold(RicianLinkParams(mu, theta2, 1.0), p_out, rel_tol=1e-13)
    return ref / gamma_target


@dataclass(frozen=True)
class BlockFadingPredictor:
    params: RicianLinkParams
    method: str = "block-fading"

    def outage(self, gamma_th: float) -> float:
        return float(snr_cdf_rician(self.params, gamma_th))


# --------------------------------------------------------------------------
# closed-form CLT moments
# --------------------------------------------------------------------------


def exp_mi_moments(p: RicianLinkParams, beta: float) -> tuple[float, float]:
    """(E[exp(-beta gamma)], E[exp(-2 beta gamma)]) from the noncentral chi^2 MGF."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    z2 = p.zeta**2
    a1 = 1.0 + 2.0 * beta * z2
    a2 = 1.0 + 4.0 * beta * z2
    e1 = math.exp(-beta * p.lam * z2 / a1) / a1
    e2 = math.exp(-2.0 * beta * p.lam * z2 / a2) / a2
    return e1, e2


@dataclass(frozen=True)
class GaussianXi:
    mean: float
    var: float
    reliable: bool


def mi_gaussian_params(
    p: RicianLinkParams, beta: float, doppler: float, symbol_period: float, burst_length: int = 1
) -> GaussianXi:
    """CLT parameters of ``xi``, the burst average of ``exp(-beta gamma)``.

    The burst holds about ``2 f_D T L`` independent fading samples; the
    variance of one sample is divided by that count (never by less than one,
    since an average cannot be more variable than a single sample).
    """
    dt = doppler * symbol_period
    if not dt > 0:
        raise ValueError("f_D * T_symb must be > 0")
    e1, e2 = exp_mi_moments(p, beta)
    var1 = max(e2 - e1 * e1, 0.0)
    var = var1 / max(1.0, 2.0 * dt * burst_length)
    if not var > 0:
        raise ValueError("degenerate exponential variance")
    return GaussianXi(e1, var, math.sqrt(var) < e1 / 3.0)


def esm_moments_closed(
    p: RicianLinkParams,
    beta: float,
    doppler: float,
    symbol_period: float,
    burst_length: int = 1,
    *,
    xi: GaussianXi | None = None,
    strict: bool = True,
) -> tuple[float, float]:
    """(m1, m2) of ``gamma_eff = -(1/beta) log xi`` with xi ~ N(mu, s^2) truncated to (0, inf)."""
    if xi is None:
        xi = mi_gaussian_params(p, beta, doppler, symbol_period, burst_length)
    if strict and not xi.reliable:
        raise UnreliableGaussianModel("Gaussian model unreliable: sigma_xi >= mu_xi / 3")
    return _log_moments(xi.mean, math.sqrt(xi.var), beta, strict)


def _log_moments(mu: float, s: float, beta: float, strict: bool = True) -> tuple[float, float]:
    lost = float(special.ndtr(-mu / s))
    if strict and lost > TRUNCATION_LIMIT:
        raise UnreliableGaussianModel(f"truncated Gaussian mass {lost:.3g} exceeds {TRUNCATION_LIMIT}")
    z = 1.0 - lost
    lo = max(0.0, mu - 12.0 * s)
    hi = mu + 12.0 * s
    pts = tuple(x for x in (lo, mu - 3 * s, mu, mu + 3 * s, hi) if x > 0)

    def dens(x):
        return np.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi) * z)

    def cut(f):
        return lambda x: f(x) if lo <= x <= hi else 0.0

    lg = lambda x: -math.log(x) / beta if x > 0 else 0.0
    m1 = integrate_semiinf(cut(lambda x: lg(x) * dens(x)), points=pts)
    m2 = integrate_semiinf(cut(lambda x: lg(x) ** 2 * dens(x)), points=pts)
    return m1, max(m2, m1 * m1)


# --------------------------------------------------------------------------
# log-normal predictor
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LognormalEsm:
    M: float
    omega: float
    provenance: str
    m1: float
    m2: float

    @property
    def method(self) -> str:
        return "lognormal-closed" if self.provenance == "closed-form" else "lognormal-empirical"

    def outage(self, gamma_th: float) -> float:
        """``P[gamma_eff < gamma_th] = Q(-(log gamma_th - M)/Omega)``."""
        if gamma_th <= 0:
            return 0.0
        return float(special.ndtr((math.log(gamma_th) - self.M) / self.omega))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return special.ndtr((np.log(x) - self.M) / self.omega)


def lognormal_from_moments(m1: float, m2: float, provenance: str = "closed-form") -> LognormalEsm:
    if not m1 > 0:
        raise ValueError("m1 must be > 0")
    ratio = m2 / (m1 * m1)
    if not ratio > 1.0:
        raise NoJensenGap(f"m2 <= m1^2 (m1={m1:.6g}, m2={m2:.6g})")
    omega = math.sqrt(math.log(ratio))
    return LognormalEsm(math.log(m1) - 0.5 * omega * omega, omega, provenance, m1, m2)


def sample_esm_moments(history, window: int = DEFAULT_WINDOW) -> tuple[float, float]:
    """Sample moments (mean of x, mean of x^2) over the last ``window`` values."""
    if window < 2:
        raise ValueError("window must be >= 2")
    h = np.asarray(history, dtype=float)
    if h.size < window:
        raise InsufficientHistory(f"{h.size} bursts of history, need {window}; use block fading")
    w = h[-window:]
    return float(np.mean(w)), float(np.mean(w * w))


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AcmRlDecision:
    modcod: ModCod
    index: int
    predicted_outage: float
    method: str
    penalization_steps: int
    feasible: bool


def select_modcod_rl(
    predictor,
    table: list[ModCod],
    p_out: float,
    penalization: int = 0,
    margin_db: float = 0.0,
) -> AcmRlDecision:
    """Highest-R MODCOD with predicted outage <= target, stepped down by ``penalization``.

    ``predictor`` is one object with ``outage(gamma_th)`` or a mapping from
    constellation name to such objects (the exponential ESM is per
    constellation).  ``margin_db`` raises every threshold by a fixed margin.
    """
    if not table:
        raise ValueError("empty MODCOD table")
    if penalization < 0:
        raise ValueError("penalization must be >= 0")

    def pred_for(m: ModCod):
        return predictor[m.constellation] if hasattr(predictor, "__getitem__") else predictor

    def outage(m: ModCod) -> float:
        return pred_for(m).outage(m.threshold * 10.0 ** (margin_db / 10.0))

    chosen = None
    for i in range(len(table) - 1, -1, -1):
        if outage(table[i]) <= p_out:
            chosen = i
            break
    if chosen is None:
        m = table[0]
        return AcmRlDecision(m, 0, outage(m), _method(pred_for(m)), 0, False)
    idx = max(chosen - penalization, 0)
    m = table[idx]
    return AcmRlDecision(m, idx, outage(m), _method(pred_for(m)), chosen - idx, True)


def _method(pred) -> str:
    return getattr(pred, "method", "custom")


def write_decision_log(path: str | Path, rows, header_comment: str | None = None) -> None:
    """Rows of (burst_index, method, modcod, predicted_outage, realized_ok)."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["burst_index", "method", "modcod", "predicted_outage", "realized_ok"])
        for b, meth, mc, po, ok in rows:
            w.writerow([b, meth, mc, f"{po:.10g}", int(bool(ok))])
