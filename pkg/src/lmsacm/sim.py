"""Monte Carlo campaigns for the forward (MLC) and return (open-loop ACM) links.

Every sweep point draws from its own :class:`RngStream` (stream id = point
index + 1), so results are identical whatever the thread count.  Within a
point all schemes are scored on the same channel realization.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import esm, fwdlink, rtnlink
from .channel import (
    ConfigError,
    EnvironmentModel,
    MobilityConfig,
    PowerCdf,
    RicianProcess,
    builtin_environment,
    generate_codewords,
)
from .mathx import RngStream
from .modcod import ModCod, resolve_table

Z95 = 1.959963984540054
CHUNK_SYMBOLS = 1_000_000


@dataclass
class Campaign:
    link: str
    env: EnvironmentModel
    speeds: list
    los_snr_db: list
    p_out: float = 0.01
    codewords: int = 20_000
    codeword_length: int = 8100
    seed: int = 1
    modcods: list = field(default_factory=list)
    carrier_freq: float = 2.2e9
    symbol_period: float = 2.7e-6
    # return link
    rl_state: int = 2
    window: int = rtnlink.DEFAULT_WINDOW
    methods: tuple = rtnlink.METHODS
    penalizations: tuple = (0, 1)
    channel: str = "continuous"
    threads: int = 1
    config_hash: str = ""

    def __post_init__(self):
        self.link = self.link.lower()
        if self.link not in ("fl", "rl"):
            raise ConfigError(f"link: expected 'fl' or 'rl', got {self.link!r}")
        if self.codewords < 100:
            raise ConfigError("codewords: must be >= 100")
        if self.codeword_length < 1:
            raise ConfigError("codeword_length: must be >= 1")
        for name in ("speeds", "los_snr_db"):
            vals = [float(v) for v in getattr(self, name)]
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"{name}: need a nonempty list of finite values")
            setattr(self, name, vals)
        if any(v <= 0 for v in self.speeds):
            raise ConfigError("speeds: must be > 0")
        if not 0.0 < self.p_out < 1.0:
            raise ConfigError("p_out: must lie in (0, 1)")
        if not self.modcods:
            self.modcods = resolve_table(None, self.link)
        unknown = set(self.methods) - set(rtnlink.METHODS)
        if unknown:
            raise ConfigError(f"methods: unknown {sorted(unknown)}")
        if self.channel not in ("continuous", "block-constant"):
            raise ConfigError("channel: expected 'continuous' or 'block-constant'")
        if not 1 <= self.rl_state <= self.env.num_states:
            raise ConfigError(f"rl_state: must be in 1..{self.env.num_states}")
        if self.window < 2:
            raise ConfigError("window: must be >= 2")

    def points(self) -> list[tuple[float, float]]:
        return [(v, s) for v in self.speeds for s in self.los_snr_db]

    def mobility(self, speed: float) -> MobilityConfig:
        return MobilityConfig(speed, self.carrier_freq, self.symbol_period)

    @classmethod
    def from_mapping(cls, doc: dict, base_dir: Path | None = None, seed: int | None = None) -> "Campaign":
        if not isinstance(doc, dict):
            raise ConfigError("campaign file must hold a mapping")
        doc = dict(doc)
        known = {
            "link", "env", "speeds", "los_snr_db", "p_out", "codewords", "codeword_length", "seed",
            "modcods", "carrier_freq", "symbol_period", "rl_state", "window", "methods",
            "penalizations", "channel",
        }
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown campaign field(s): {sorted(extra)}")
        for req in ("link", "env", "speeds", "los_snr_db"):
            if req not in doc:
                raise ConfigError(f"missing campaign field: {req}")
        if seed is not None:
            doc["seed"] = int(seed)
        canon = json.dumps(doc, sort_keys=True, default=str)
        env = _resolve_env(doc.pop("env"), base_dir)
        link = str(doc.get("link", "")).lower()
        mc = doc.pop("modcods", None)
        if isinstance(mc, str) and mc.lower() not in ("fl", "rl") and base_dir is not None:
            mc = str((base_dir / mc))
        modcods = resolve_table(mc, link if link in ("fl", "rl") else "fl")
        for key in ("methods", "penalizations"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(env=env, modcods=modcods, config_hash=_hash(canon), **doc)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"campaign: {exc}") from None

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "Campaign":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"campaign file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        return cls.from_mapping(doc, p.parent, seed)


def _hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _resolve_env(ref, base_dir: Path | None) -> EnvironmentModel:
    if isinstance(ref, dict):
        return EnvironmentModel.from_mapping(ref)
    ref = str(ref)
    if ref.endswith((".yaml", ".yml", ".json")):
        path = Path(ref)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return EnvironmentModel.load(path)
    try:
        return builtin_environment(ref)
    except ConfigError:
        raise ConfigError(f"env: unknown built-in environment {ref!r}") from None


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass
class PointResult:
    speed: float
    los_snr_db: float
    method: str
    penalization: int
    achieved_outage: float
    outage_ci: float
    achieved_ase: float
    ase_ci: float
    n: int
    decisions: dict
    modcod: str = ""
    alpha: float = math.nan
    predicted_outage: float = math.nan
    predicted_ase: float = math.nan
    wall_time: float = 0.0


def binomial_ci(failures: int, n: int) -> tuple[float, float]:
    """Point estimate and 95% normal-approximation half-width."""
    p = failures / n
    return p, Z95 * math.sqrt(p * (1.0 - p) / n)


def mean_ci(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return float(np.mean(x)), Z95 * sd / math.sqrt(x.size)


RESULT_COLUMNS = [
    "speed", "los_snr_db", "method", "penalization", "modcod", "alpha", "predicted_outage",
    "predicted_ase", "achieved_outage", "outage_ci", "ase", "ase_ci", "n", "decisions",
]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def write_results_csv(path: str | Path, results: list[PointResult], header_comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            dec = ";".join(f"{k}:{v}" for k, v in sorted(r.decisions.items()))
            w.writerow([_fmt(x) for x in (
                r.speed, r.los_snr_db, r.method, r.penalization, r.modcod, r.alpha, r.predicted_outage,
                r.predicted_ase, r.achieved_outage, r.outage_ci, r.achieved_ase, r.ase_ci, r.n,
            )] + [dec])


# --------------------------------------------------------------------------
# forward link
# --------------------------------------------------------------------------


def run_fl_point(
    env: EnvironmentModel,
    law,
    mob: MobilityConfig,
    noise_power: float,
    modcods: list[ModCod],
    p_out: float,
    codewords: int,
    codeword_length: int,
    rng: RngStream,
    los_snr_db: float = math.nan,
) -> list[PointResult]:
    """Optimize once under block-fading analytics, then simulate MLC and SLC."""
    t0 = time.perf_counter()
    mlc = fwdlink.optimize_mlc(law, noise_power, modcods, p_out)
    slc = fwdlink.optimize_slc(law, noise_power, modcods, p_out)
    plans = [("mlc", mlc), ("slc", slc)]
    rate_sum = {k: np.zeros(codewords) for k, _ in plans}
    fails = {k: 0 for k, _ in plans}
    chunk = max(1, CHUNK_SYMBOLS // codeword_length)
    done = 0
    while done < codewords:
        n = min(chunk, codewords - done)
        gains = generate_codewords(env, mob, noise_power, n, codeword_length, rng).gains
        gains = gains.reshape(n, codeword_length)
        for key, dec in plans:
            if not dec.feasible:
                continue
            cfg = fwdlink.MlcConfig(dec.alpha, dec.modcod, noise_power)
            h_ok, l_ok = fwdlink.decodable_codewords(gains, cfg, esm.load_mi_table(dec.modcod.constellation))
            rate_sum[key][done:done + n] = dec.modcod.R * (h_ok.astype(float) + l_ok)
            fails[key] += int(np.count_nonzero(~h_ok))
        done += n
    out = []
    for key, dec in plans:
        if dec.feasible:
            po, pci = binomial_ci(fails[key], codewords)
            a, aci = mean_ci(rate_sum[key])
        else:  # infeasible: nothing is transmitted
            po, pci, a, aci = math.nan, math.nan, 0.0, 0.0
        out.append(PointResult(
            mob.speed, los_snr_db, key, 0, po, pci, a, aci, codewords,
            {dec.modcod.name if dec.feasible else "infeasible": codewords},
            dec.modcod.name if dec.feasible else "infeasible", dec.alpha,
            dec.predicted_outage, dec.predicted_ase,
        ))
    wall = time.perf_counter() - t0
    for r in out:
        r.wall_time = wall
    return out


def run_fl_campaign(c: Campaign) -> list[PointResult]:
    if c.link != "fl":
        raise ConfigError("run_fl_campaign needs a forward-link campaign")
    law = PowerCdf(c.env)

    def work(i_point):
        i, (speed, snr) = i_point
        return run_fl_point(
            c.env, law, c.mobility(speed), 10.0 ** (-snr / 10.0), c.modcods, c.p_out,
            c.codewords, c.codeword_length, RngStream(c.seed, i + 1), snr,
        )

    return _run_points(c, work)


def _run_points(c: Campaign, work) -> list[PointResult]:
    items = list(enumerate(c.points()))
    if c.threads > 1:
        with ThreadPoolExecutor(max_workers=c.threads) as ex:
            nested = list(ex.map(work, items))
    else:
        nested = [work(it) for it in items]
    return [r for group in nested for r in group]


# --------------------------------------------------------------------------
# return link
# --------------------------------------------------------------------------


def rl_state_params(env: EnvironmentModel, state: int) -> tuple[float, float]:
    """(LOS amplitude, theta^2) of a 1-based environment state.

    The LOS is frozen at the median of the state's log-normal shadowing,
    ``exp(mu_loo)``; the multipath half-power ``b0`` is theta^2.
    """
    loo = env.states[state - 1]
    return math.exp(loo.mu_loo), loo.b0


def burst_effective_snrs(
    params: rtnlink.RicianLinkParams,
    mob: MobilityConfig,
    bursts: int,
    burst_length: int,
    betas: dict[str, float],
    rng: RngStream,
    channel: str = "continuous",
) -> dict[str, np.ndarray]:
    """Exponential-ESM effective SNR of consecutive bursts, per constellation."""
    out = {k: np.empty(bursts) for k in betas}
    amp = math.sqrt(2.0 * params.theta2)
    if channel == "block-constant":
        h = params.mu + amp * rng.complex_normal(bursts)
        g = np.abs(h) ** 2 / params.noise_power
        return {k: g.copy() for k in betas}
    proc = RicianProcess(params.mu, params.theta2, mob.normalized_doppler, rng)
    chunk = max(1, CHUNK_SYMBOLS // burst_length)
    done = 0
    while done < bursts:
        n = min(chunk, bursts - done)
        g = (np.abs(proc.take(n * burst_length)) ** 2 / params.noise_power).reshape(n, burst_length)
        for k, b in betas.items():
            out[k][done:done + n] = esm.exp_esm_rows(g, b)
        done += n
    return out


def _closed_predictors(params, betas, mob, burst_length) -> dict:
    """Closed-form log-normal predictor per constellation; None where the Gaussian model is unreliable."""
    preds = {}
    for k, b in betas.items():
        try:
            m1, m2 = rtnlink.esm_moments_closed(params, b, mob.doppler, mob.symbol_period, burst_length)
            preds[k] = rtnlink.lognormal_from_moments(m1, m2, "closed-form")
        except (rtnlink.UnreliableGaussianModel, rtnlink.NoJensenGap):
            preds[k] = None
    return preds


class _Mixed:
    """Per-constellation predictor map that reports the methods it mixes."""

    def __init__(self, preds: dict):
        self.preds = preds
        self.method = "+".join(sorted({p.method for p in preds.values()}))

    def __getitem__(self, k):
        return self.preds[k]


def run_rl_point(
    params: rtnlink.RicianLinkParams,
    mob: MobilityConfig,
    modcods: list[ModCod],
    p_out: float,
    bursts: int,
    burst_length: int,
    rng: RngStream,
    *,
    methods=rtnlink.METHODS,
    penalizations=(0, 1),
    window: int = rtnlink.DEFAULT_WINDOW,
    channel: str = "continuous",
    los_snr_db: float = math.nan,
    decision_log: dict | None = None,
) -> list[PointResult]:
    """Stream bursts, select a MODCOD per burst and method, score decodability.

    ``window`` extra bursts run first so the empirical moment window is full
    from the first scored burst.  Fallbacks follow the ladder
    lognormal-closed -> lognormal-empirical -> block-fading.
    """
    t0 = time.perf_counter()
    table = sorted(modcods, key=lambda m: m.spectral_efficiency)
    consts = sorted({m.constellation for m in table})
    betas = {k: esm.load_exp_approx(k).beta for k in consts}
    geff = burst_effective_snrs(params, mob, bursts + window, burst_length, betas, rng, channel)
    bf = rtnlink.BlockFadingPredictor(params)
    closed = _closed_predictors(params, betas, mob, burst_length) if "lognormal-closed" in methods else {}
    # empirical predictors per burst (None -> fall back to block fading)
    emp = [None] * bursts
    if "lognormal-empirical" in methods or any(v is None for v in closed.values()):
        cs = {k: np.concatenate([[0.0], np.cumsum(v)]) for k, v in geff.items()}
        cs2 = {k: np.concatenate([[0.0], np.cumsum(v * v)]) for k, v in geff.items()}
        for b in range(bursts):
            lo, hi = b, b + window  # the window bursts preceding scored burst b
            preds = {}
            for k in consts:
                m1 = (cs[k][hi] - cs[k][lo]) / window
                m2 = (cs2[k][hi] - cs2[k][lo]) / window
                try:
                    preds[k] = rtnlink.lognormal_from_moments(m1, m2, "sample-moments")
                except ValueError:  # includes NoJensenGap
                    preds[k] = None
            emp[b] = preds
    scored = {k: v[window:] for k, v in geff.items()}
    static = {}
    if "block-fading" in methods:
        static["block-fading"] = bf
    if closed and all(v is not None for v in closed.values()):
        static["lognormal-closed"] = closed
    out = []
    for method in methods:
        for pen in penalizations:
            choice = np.empty(bursts, dtype=np.int64)
            pred_out = np.empty(bursts)
            used = []
            fixed = None
            if method in static:
                fixed = rtnlink.select_modcod_rl(static[method], table, p_out, pen)
            for b in range(bursts):
                if fixed is not None:
                    d = fixed
                else:
                    ladder = []
                    if method == "lognormal-closed":
                        ladder.append(closed)
                    ladder.append(emp[b])
                    pred = _Mixed({
                        k: next((lv[k] for lv in ladder if lv is not None and lv.get(k) is not None), bf)
                        for k in consts
                    })
                    d = rtnlink.select_modcod_rl(pred, table, p_out, pen)
                choice[b] = d.index
                pred_out[b] = d.predicted_outage
                used.append(d.method)
            thr = np.array([table[i].threshold for i in choice])
            realized = np.array([scored[table[i].constellation][b] for b, i in enumerate(choice)])
            ok = realized >= thr
            rate = np.where(ok, [table[i].R for i in choice], 0.0)
            po, pci = binomial_ci(int(np.count_nonzero(~ok)), bursts)
            a, aci = mean_ci(rate)
            names, counts = np.unique(choice, return_counts=True)
            hist = {table[i].name: int(c) for i, c in zip(names, counts)}
            top = table[int(names[np.argmax(counts)])].name
            out.append(PointResult(
                mob.speed, los_snr_db, method, int(pen), po, pci, a, aci, bursts, hist, top,
                math.nan, float(np.mean(pred_out)), math.nan,
            ))
            if decision_log is not None:
                decision_log[(method, int(pen))] = [
                    (b, used[b], table[choice[b]].name, pred_out[b], ok[b]) for b in range(bursts)
                ]
    wall = time.perf_counter() - t0
    for r in out:
        r.wall_time = wall
    return out


def run_rl_campaign(c: Campaign) -> list[PointResult]:
    if c.link != "rl":
        raise ConfigError("run_rl_campaign needs a return-link campaign")
    mu, theta2 = rl_state_params(c.env, c.rl_state)

    def work(i_point):
        i, (speed, snr) = i_point
        params = rtnlink.RicianLinkParams.from_mean_snr(mu, theta2, snr)
        return run_rl_point(
            params, c.mobility(speed), c.modcods, c.p_out, c.codewords, c.codeword_length,
            RngStream(c.seed, i + 1), methods=c.methods, penalizations=c.penalizations,
            window=c.window, channel=c.channel, los_snr_db=snr,
        )

    return _run_points(c, work)


def run_campaign(c: Campaign) -> list[PointResult]:
    return run_fl_campaign(c) if c.link == "fl" else run_rl_campaign(c)
