"""Forward-link multi-layer coding (MLC): layer SNRs, decodability, ASE and
the outage-constrained power-split optimizer.

The H layer carries a fraction ``alpha`` of the power and is decoded treating
the L layer as Gaussian noise; the L layer is decoded after H cancellation
and only counts when H also decodes.  Both layers share one MODCOD.

Analytic (block-fading) quantities only need the law of ``|h|^2``.  They take a
*power law* object: any callable returning ``P[|h|^2 < k]`` (for continuous
laws such as :class:`~lmsacm.channel.PowerCdf` the strictness is immaterial).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelTrace, EnvironmentModel, PowerCdf
from .esm import MiTable
from .modcod import ModCod

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ALPHA_TOL = 1e-6
GOLDEN_TOL = 1e-5
COARSE_POINTS = 101
# relative slack on the threshold complement so that gamma_eff == gamma_th
# decodes despite rounding in the layer-SNR algebra
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class MlcConfig:
    alpha: float
    modcod: ModCod
    noise_power: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.noise_power > 0:
            raise ValueError("noise power must be > 0")


@dataclass(frozen=True)
class MlcDecision:
    modcod: ModCod
    alpha: float
    predicted_outage: float
    predicted_ase: float
    feasible: bool
    slc_ase: float = 0.0
    candidates: tuple = field(default=(), repr=False)


class DeterministicPower:
    """Power law of a non-fading channel with ``|h|^2 = g``."""

    def __init__(self, g: float):
        self.g = float(g)

    def __call__(self, k):
        out = np.where(np.asarray(k, dtype=float) > self.g, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out


def power_law(env_or_law):
    """Accept an environment (tabulated once) or an existing power-law callable."""
    if isinstance(env_or_law, EnvironmentModel):
        return PowerCdf(env_or_law)
    if not callable(env_or_law):
        raise TypeError("expected an EnvironmentModel or a callable P[|h|^2 < k]")
    return env_or_law


# --------------------------------------------------------------------------
# per-symbol quantities and decodability
# --------------------------------------------------------------------------


def layer_snrs(h, alpha: float, noise_power: float):
    """(gamma_H, gamma_L) for complex gains ``h``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if not noise_power > 0:
        raise ValueError("noise power must be > 0")
    p = np.abs(np.asarray(h)) ** 2
    g_h = p * alpha / (noise_power + (1.0 - alpha) * p)
    g_l = p * (1.0 - alpha) / noise_power
    if np.ndim(g_h) == 0:
        return float(g_h), float(g_l)
    return g_h, g_l


def decodable_codewords(gains, cfg: MlcConfig, mapper: MiTable):
    """Per-codeword (H_ok, L_ok) for a (codewords x L) matrix of gains.

    The comparison ``gamma_eff >= gamma_th`` is made in mutual-information
    space (mean complement against the threshold's complement), which is the
    same event without a table inversion.  The comparison is inclusive.
    """
    g = np.atleast_2d(gains)
    g_h, g_l = layer_snrs(g, cfg.alpha, cfg.noise_power)
    c_th = float(mapper.complement(cfg.modcod.threshold)) * (1.0 + BOUNDARY_RTOL)
    h_ok = np.mean(mapper.complement(g_h), axis=1) <= c_th
    if cfg.alpha >= 1.0:
        l_ok = np.zeros_like(h_ok)
    else:
        l_ok = h_ok & (np.mean(mapper.complement(g_l), axis=1) <= c_th)
    return h_ok, l_ok


def decodable(trace, cfg: MlcConfig, mapper: MiTable) -> tuple[bool, bool]:
    """Decodability of the two layers over one codeword."""
    gains = trace.gains if isinstance(trace, ChannelTrace) else np.asarray(trace)
    h_ok, l_ok = decodable_codewords(np.ravel(gains)[None, :], cfg, mapper)
    return bool(h_ok[0]), bool(l_ok[0])


def monte_carlo_performance(gains, cfg: MlcConfig, mapper: MiTable) -> tuple[float, float, int]:
    """(ASE, H-layer outage, codewords) estimated from a gain matrix."""
    h_ok, l_ok = decodable_codewords(gains, cfg, mapper)
    n = h_ok.size
    ase = cfg.modcod.R * (np.count_nonzero(h_ok) + np.count_nonzero(l_ok)) / n
    return float(ase), float(1.0 - np.count_nonzero(h_ok) / n), n


# --------------------------------------------------------------------------
# block-fading analytics
# --------------------------------------------------------------------------


def infeasibility_bound(gamma_th: float) -> float:
    """H cannot reach ``gamma_th`` at any channel power when alpha <= this value."""
    return gamma_th / (1.0 + gamma_th)


def joint_bound(gamma_th: float) -> float:
    """From this alpha up the L threshold on |h|^2 dominates the H threshold."""
    return (gamma_th + 1.0) / (gamma_th + 2.0)


def h_power_threshold(cfg: MlcConfig) -> float:
    g = cfg.modcod.threshold
    den = cfg.alpha - (1.0 - cfg.alpha) * g
    return cfg.noise_power * g / den if den > 0 else math.inf


def l_power_threshold(cfg: MlcConfig) -> float:
    if cfg.alpha >= 1.0:
        return math.inf
    return cfg.modcod.threshold * cfg.noise_power / (1.0 - cfg.alpha)


def _law_at(law, k: float) -> float:
    return 1.0 if math.isinf(k) else float(law(k))


def outage_probability(cfg: MlcConfig, law) -> float:
    """Block-fading H-layer outage ``P[|h|^2 < k_H]``; 1 when alpha is infeasible."""
    return _law_at(law, h_power_threshold(cfg))


def ase(cfg: MlcConfig, law) -> float:
    """Block-fading ASE ``R (P[H] + P[H and L])``; 0 when alpha is infeasible.

    Both decodability events are threshold events on |h|^2, so the joint event
    is the larger of the two thresholds; for alpha >= (g+1)/(g+2) that is the
    L threshold.
    """
    k_h = h_power_threshold(cfg)
    if math.isinf(k_h):
        return 0.0
    k_l = l_power_threshold(cfg)
    p_h = 1.0 - _law_at(law, k_h)
    p_hl = 1.0 - _law_at(law, max(k_h, k_l))
    return cfg.modcod.R * (p_h + p_hl)


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


def _alpha_out(law, modcod: ModCod, noise_power: float, p_out: float) -> float:
    """Smallest alpha meeting the outage target (bisection on the monotone g)."""
    lo = infeasibility_bound(modcod.threshold)
    hi = 1.0
    if p_out >= 1.0:
        return lo
    while hi - lo > ALPHA_TOL:
        mid = 0.5 * (lo + hi)
        if outage_probability(MlcConfig(mid, modcod, noise_power), law) <= p_out:
            hi = mid
        else:
            lo = mid
    return hi


def _maximize_ase(law, modcod: ModCod, noise_power: float, a_min: float) -> tuple[float, float]:
    """Coarse grid scan on [a_min, 1], then golden section around the best bracket."""

    def eta(a):
        return ase(MlcConfig(a, modcod, noise_power), law)

    grid = np.linspace(a_min, 1.0, COARSE_POINTS)
    vals = np.array([eta(a) for a in grid])
    i = int(np.argmax(vals))
    best_a, best_v = float(grid[i]), float(vals[i])
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, COARSE_POINTS - 1)])
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = eta(x1), eta(x2)
    while hi - lo > GOLDEN_TOL:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = eta(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = eta(x2)
    for a, v in ((x1, f1), (x2, f2)):
        if v > best_v:
            best_a, best_v = a, v
    return best_a, best_v


def optimize_mlc(env_or_law, noise_power: float, modcods: list[ModCod], p_out: float) -> MlcDecision:
    """Maximize block-fading ASE over (MODCOD, alpha) subject to H outage <= p_out."""
    if not modcods:
        raise ValueError("empty MODCOD table")
    if not 0.0 < p_out <= 1.0:
        raise ValueError("target outage must lie in (0, 1]")
    law = power_law(env_or_law)
    table = sorted(modcods, key=lambda m: m.threshold_db)
    candidates = []
    best = None
    slc_best = 0.0
    for m in table:
        slc = MlcConfig(1.0, m, noise_power)
        g1 = outage_probability(slc, law)
        if g1 > p_out:
            candidates.append((m, math.nan, g1, 0.0, False))
            continue
        slc_best = max(slc_best, ase(slc, law))
        a_min = max(_alpha_out(law, m, noise_power, p_out), joint_bound(m.threshold))
        a, v = _maximize_ase(law, m, noise_power, min(a_min, 1.0))
        v1 = ase(slc, law)
        if v1 >= v:  # single-layer end point is always admissible
            a, v = 1.0, v1
        g = outage_probability(MlcConfig(a, m, noise_power), law)
        candidates.append((m, a, g, v, True))
        # strict improvement required: ties go to the lower threshold seen first
        if best is None or v > best[3]:
            best = (m, a, g, v)
    if best is None:
        m = table[0]
        g = outage_probability(MlcConfig(1.0, m, noise_power), law)
        return MlcDecision(m, 1.0, g, 0.0, False, 0.0, tuple(candidates))
    assert best[3] >= slc_best - 1e-12, "MLC optimum below the single-layer optimum"
    return MlcDecision(best[0], best[1], best[2], best[3], True, slc_best, tuple(candidates))


def optimize_slc(env_or_law, noise_power: float, modcods: list[ModCod], p_out: float) -> MlcDecision:
    """Single-layer baseline: best MODCOD at alpha = 1 under the same outage target."""
    law = power_law(env_or_law)
    table = sorted(modcods, key=lambda m: m.threshold_db)
    best = None
    for m in table:
        cfg = MlcConfig(1.0, m, noise_power)
        g = outage_probability(cfg, law)
        if g <= p_out:
            v = ase(cfg, law)
            if best is None or v > best[2]:
                best = (m, g, v)
    if best is None:
        m = table[0]
        return MlcDecision(m, 1.0, outage_probability(MlcConfig(1.0, m, noise_power), law), 0.0, False)
    return MlcDecision(best[0], 1.0, best[1], best[2], True, best[2])
