"""Land-mobile-satellite channel: Fontan Markov chain with Loo-distributed states.

Amplitudes are normalized so that an unshadowed LOS ray has unit amplitude;
the noise power then sets the LOS SNR as ``1 / noise_power``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy import signal

from .mathx import RngStream, marcum_q1

SPEED_OF_LIGHT = 2.99792458e8
FIR_TAPS = 512
# below this normalized Doppler the shaping runs on a coarse grid (see FadingProcess)
_COARSE_CUTOFF = 1.0 / 16.0
_NP_PER_DB = math.log(10.0) / 20.0


class ConfigError(ValueError):
    """Invalid environment or campaign description; message names the field."""


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LooParams:
    """Loo state: log-normal LOS amplitude plus Rayleigh multipath.

    ``mu_loo`` and ``d0`` are the mean and *variance* of the natural log of
    the LOS amplitude; ``b0`` is the per-dimension multipath variance, so the
    multipath power is ``2 * b0``.
    """

    b0: float
    d0: float
    mu_loo: float

    def __post_init__(self):
        if not self.b0 > 0:
            raise ConfigError(f"b0 must be > 0, got {self.b0}")
        if not self.d0 >= 0:
            raise ConfigError(f"d0 must be >= 0, got {self.d0}")
        if math.isnan(self.mu_loo):
            raise ConfigError("mu_loo must be a number")

    @classmethod
    def from_db(cls, alpha_db: float, psi_db: float, mp_db: float) -> "LooParams":
        """Build from the dB triplet used in LMS measurement tables.

        alpha_db / psi_db: mean and standard deviation of the LOS amplitude in dB;
        mp_db: average multipath power in dB, all relative to the unshadowed LOS.
        """
        return cls(
            b0=0.5 * 10.0 ** (mp_db / 10.0),
            d0=(psi_db * _NP_PER_DB) ** 2,
            mu_loo=alpha_db * _NP_PER_DB,
        )

    @property
    def mean_power(self) -> float:
        return math.exp(2.0 * self.mu_loo + 2.0 * self.d0) + 2.0 * self.b0


@dataclass(frozen=True)
class EnvironmentModel:
    """Fontan-style environment: N Loo states driven by a Markov chain."""

    states: tuple[LooParams, ...]
    state_probs: np.ndarray
    transition_matrix: np.ndarray
    state_frame_length_m: float = 1.0
    shadowing_corr_length_m: float = 3.5
    name: str = "custom"

    def __post_init__(self):
        n = len(self.states)
        if n == 0:
            raise ConfigError("states: at least one state is required")
        p = np.asarray(self.state_probs, dtype=float)
        P = np.asarray(self.transition_matrix, dtype=float)
        object.__setattr__(self, "state_probs", p)
        object.__setattr__(self, "transition_matrix", P)
        if p.shape != (n,):
            raise ConfigError(f"p: expected {n} probabilities, got shape {p.shape}")
        if P.shape != (n, n):
            raise ConfigError(f"P: expected a {n}x{n} matrix, got shape {P.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigError(f"p: probabilities must be >= 0 and sum to 1 (sum = {p.sum():.12g})")
        rows = P.sum(axis=1)
        if np.any(P < 0) or np.any(np.abs(rows - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(rows - 1.0)))
            raise ConfigError(f"P[{bad}]: transition rows must be >= 0 and sum to 1 (sum = {rows[bad]:.12g})")
        pi = stationary_distribution(P)
        if np.max(np.abs(pi - p)) > 1e-6:
            raise ConfigError(f"p: inconsistent with the stationary distribution of P {np.round(pi, 8).tolist()}")
        if not self.state_frame_length_m > 0:
            raise ConfigError("frame_length_m must be > 0")
        if not self.shadowing_corr_length_m > 0:
            raise ConfigError("shadow_corr_m must be > 0")

    @property
    def num_states(self) -> int:
        return len(self.states)

    @classmethod
    def single_state(cls, loo: LooParams, **kw) -> "EnvironmentModel":
        return cls(states=(loo,), state_probs=np.ones(1), transition_matrix=np.ones((1, 1)), **kw)

    # ---- file interface -------------------------------------------------

    @classmethod
    def from_mapping(cls, doc: dict, name: str | None = None) -> "EnvironmentModel":
        if not isinstance(doc, dict):
            raise ConfigError("environment document must be a mapping")
        units = doc.get("units", "natural")
        raw_states = doc.get("states")
        if not isinstance(raw_states, list) or not raw_states:
            raise ConfigError("states: must be a non-empty list")
        states = []
        for i, st in enumerate(raw_states):
            try:
                if units == "dB":
                    states.append(LooParams.from_db(float(st["alpha_db"]), float(st["psi_db"]), float(st["mp_db"])))
                elif units == "natural":
                    states.append(LooParams(b0=float(st["b0"]), d0=float(st["d0"]), mu_loo=float(st["mu"])))
                else:
                    raise ConfigError(f"units: expected 'natural' or 'dB', got {units!r}")
            except KeyError as exc:
                raise ConfigError(f"states[{i}].{exc.args[0]}: missing") from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"states[{i}]: {exc}") from None
        for key in ("p", "P"):
            if key not in doc:
                raise ConfigError(f"{key}: missing")
        n = len(states)
        P = np.asarray(doc["P"], dtype=float)
        if P.ndim == 1:
            P = P.reshape(n, n) if P.size == n * n else P
        return cls(
            states=tuple(states),
            state_probs=np.asarray(doc["p"], dtype=float),
            transition_matrix=P,
            state_frame_length_m=float(doc.get("frame_length_m", 1.0)),
            shadowing_corr_length_m=float(doc.get("shadow_corr_m", 3.5)),
            name=str(doc.get("name", name or "custom")),
        )

    @classmethod
    def load(cls, path: str | Path) -> "EnvironmentModel":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"environment file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        try:
            return cls.from_mapping(doc, name=path.stem)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_mapping(self) -> dict:
        return {
            "name": self.name,
            "units": "natural",
            "frame_length_m": self.state_frame_length_m,
            "shadow_corr_m": self.shadowing_corr_length_m,
            "states": [{"b0": s.b0, "d0": s.d0, "mu": s.mu_loo} for s in self.states],
            "p": self.state_probs.tolist(),
            "P": self.transition_matrix.ravel().tolist(),
        }


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left eigenvector of a row-stochastic matrix for eigenvalue 1."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return pi


@dataclass(frozen=True)
class MobilityConfig:
    speed: float
    carrier_freq: float = 2.2e9
    symbol_period: float = 2.7e-6

    def __post_init__(self):
        if not (self.speed > 0 and self.carrier_freq > 0 and self.symbol_period > 0):
            raise ConfigError("speed, carrier_freq and symbol_period must be > 0")
        fd = self.normalized_doppler
        if not 0 < fd <= 0.5:
            raise ConfigError(f"normalized Doppler f_D*T_symb = {fd:.4g} outside (0, 0.5]")

    @property
    def doppler(self) -> float:
        return self.speed * self.carrier_freq / SPEED_OF_LIGHT

    @property
    def normalized_doppler(self) -> float:
        return self.doppler * self.symbol_period

    def symbols_per_meter(self) -> float:
        return 1.0 / (self.speed * self.symbol_period)


@dataclass(frozen=True)
class ChannelTrace:
    gains: np.ndarray
    snr: np.ndarray
    noise_power: float
    state_sequence: np.ndarray

    def __len__(self) -> int:
        return self.gains.size

    @classmethod
    def from_gains(cls, gains, noise_power: float, states=None) -> "ChannelTrace":
        gains = np.asarray(gains, dtype=complex)
        if not noise_power > 0:
            raise ValueError("noise_power must be > 0")
        if states is None:
            states = np.zeros(gains.size, dtype=np.int64)
        snr = (gains.real**2 + gains.imag**2) / noise_power
        return cls(gains, snr, float(noise_power), np.asarray(states, dtype=np.int64))

    def codewords(self, length: int) -> np.ndarray:
        """SNR samples reshaped to (num_codewords, length)."""
        if self.snr.size % length:
            raise ValueError(f"trace of {self.snr.size} symbols is not a multiple of {length}")
        return self.snr.reshape(-1, length)

    def to_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "state", "re_h", "im_h", "gamma"])
            for i, (s, h, g) in enumerate(zip(self.state_sequence, self.gains, self.snr)):
                w.writerow([i, int(s), repr(float(h.real)), repr(float(h.imag)), repr(float(g))])


# --------------------------------------------------------------------------
# Doppler-shaped Gaussian process
# --------------------------------------------------------------------------


def doppler_taps(cutoff: float, ntaps: int = FIR_TAPS) -> np.ndarray:
    """Hamming windowed-sinc low-pass, scaled to unit energy (power preserving)."""
    if cutoff >= 0.5:
        taps = np.zeros(ntaps)
        taps[ntaps // 2] = 1.0
        return taps
    taps = signal.firwin(ntaps, 2.0 * cutoff, window="hamming")
    return taps / np.sqrt(np.sum(taps**2))


def filter_autocorrelation(taps: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation of the FIR output for unit white input, lags 0..max_lag."""
    full = np.correlate(taps, taps, mode="full")
    mid = taps.size - 1
    out = np.zeros(max_lag + 1)
    m = min(max_lag, mid)
    out[: m + 1] = full[mid: mid + m + 1]
    return out


class FadingProcess:
    """Stream of unit-power complex Gaussian samples with spectrum limited to f_D.

    White noise is shaped by a 512-tap windowed sinc.  A 512-tap filter cannot
    realize cutoffs much below 1/100 cycles/sample, so for slow fading the
    filter runs on a coarse grid where the cutoff is 1/16 and the output is
    brought to the symbol rate by 4-point Lagrange interpolation; the process
    is oversampled 16x there, so the interpolation error is below 1e-3 in power.

    Consecutive :meth:`take` calls continue the same realization.
    """

    def __init__(self, normalized_doppler: float, rng: RngStream, ntaps: int = FIR_TAPS):
        if not 0 < normalized_doppler <= 0.5:
            raise ConfigError(f"normalized Doppler {normalized_doppler:.4g} outside (0, 0.5]")
        self.normalized_doppler = float(normalized_doppler)
        self._rng = rng
        if normalized_doppler >= _COARSE_CUTOFF:
            self.step = 1.0
            self.taps = doppler_taps(normalized_doppler, ntaps)
        else:
            self.step = _COARSE_CUTOFF / normalized_doppler
            self.taps = doppler_taps(_COARSE_CUTOFF, ntaps)
        # priming the delay line with noise is the steady state; the explicit warm-up
        # below additionally discards 4/(f_D T) symbols as a settling margin
        self._hist = rng.complex_normal(ntaps - 1)
        self._buf = np.empty(0, dtype=complex)  # filtered grid samples
        self._buf_start = 0  # grid index of _buf[0]
        self._t = 0  # next symbol index
        warm = int(math.ceil(4.0 / normalized_doppler))
        if self.step == 1.0:
            self._filter_more(warm)
            self._buf = np.empty(0, dtype=complex)
            self._buf_start = 0
        else:
            self._t = warm

    def _filter_more(self, n: int) -> None:
        x = np.concatenate([self._hist, self._rng.complex_normal(n)])
        y = signal.oaconvolve(x, self.taps, mode="valid")
        self._hist = x[-(self.taps.size - 1):]
        self._buf = np.concatenate([self._buf, y])

    def take(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0, dtype=complex)
        if self.step == 1.0:
            if self._buf.size < n:
                self._filter_more(n - self._buf.size)
            out, self._buf = self._buf[:n], self._buf[n:]
            return out
        t = self._t + np.arange(n)
        u = t / self.step + 1.0  # grid index, offset so that the left neighbor exists
        base = np.floor(u).astype(np.int64)
        need_hi = int(base[-1]) + 2
        have_hi = self._buf_start + self._buf.size - 1
        if need_hi > have_hi:
            self._filter_more(need_hi - have_hi)
        mu = u - base
        idx = base - self._buf_start
        b = self._buf
        w_m1 = -mu * (mu - 1.0) * (mu - 2.0) / 6.0
        w_0 = (mu + 1.0) * (mu - 1.0) * (mu - 2.0) / 2.0
        w_1 = -(mu + 1.0) * mu * (mu - 2.0) / 2.0
        w_2 = (mu + 1.0) * mu * (mu - 1.0) / 6.0
        out = w_m1 * b[idx - 1] + w_0 * b[idx] + w_1 * b[idx + 1] + w_2 * b[idx + 2]
        self._t += n
        drop = int(np.floor(self._t / self.step + 1.0)) - 1 - self._buf_start
        if drop > 0:
            self._buf = self._buf[drop:]
            self._buf_start += drop
        return out


# --------------------------------------------------------------------------
# trace generation
# --------------------------------------------------------------------------


class LmsProcess:
    """Continuous LMS channel stream (Markov state, shadowing segments, fading).

    State transitions happen every ``state_frame_length_m`` of travel; the
    log-normal LOS amplitude is redrawn at every shadowing segment and takes
    the parameters of the state active at each symbol.  Frame and segment
    boundaries start at random phases so every codeword offset is equally likely.
    """

    def __init__(self, env: EnvironmentModel, mob: MobilityConfig, rng: RngStream, initial_state: int | None = None):
        self.env = env
        self.mob = mob
        self._rng = rng
        spm = mob.symbols_per_meter()
        self.frame_symbols = env.state_frame_length_m * spm
        self.segment_symbols = env.shadowing_corr_length_m * spm
        if self.segment_symbols < 1.0:
            raise ConfigError(
                f"shadowing segment of {self.segment_symbols:.3g} symbols is shorter than one symbol"
            )
        if self.frame_symbols < 1.0:
            raise ConfigError(f"state frame of {self.frame_symbols:.3g} symbols is shorter than one symbol")
        self._mu = np.array([s.mu_loo for s in env.states])
        self._sd = np.sqrt([s.d0 for s in env.states])
        self._nlos_amp = np.sqrt([2.0 * s.b0 for s in env.states])
        self._frame_phase = rng.uniform() * self.frame_symbols
        self._seg_phase = rng.uniform() * self.segment_symbols
        s0 = rng.choice(env.num_states, env.state_probs) if initial_state is None else int(initial_state)
        self._frames = [s0]  # state of frame 0, 1, ...
        self._frame_base = 0
        self._segs = np.empty(0)
        self._seg_base = 0
        self._fading = FadingProcess(mob.normalized_doppler, rng)
        self._t = 0

    def _state_of_frames(self, f_lo: int, f_hi: int) -> np.ndarray:
        P = self.env.transition_matrix
        cum = np.cumsum(P, axis=1)
        while self._frame_base + len(self._frames) <= f_hi:
            u = self._rng.uniform()
            prev = self._frames[-1]
            self._frames.append(int(min(np.searchsorted(cum[prev], u, side="right"), P.shape[0] - 1)))
        drop = f_lo - self._frame_base
        if drop > 0:
            del self._frames[:drop]
            self._frame_base = f_lo
        return np.asarray(self._frames, dtype=np.int64)

    def _segment_draws(self, s_lo: int, s_hi: int) -> np.ndarray:
        have = self._seg_base + self._segs.size
        if s_hi >= have:
            self._segs = np.concatenate([self._segs, self._rng.normal(s_hi - have + 1)])
        drop = s_lo - self._seg_base
        if drop > 0:
            self._segs = self._segs[drop:]
            self._seg_base = s_lo
        return self._segs

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` complex gains and their state indices."""
        t = self._t + np.arange(n)
        fidx = np.floor((t + self._frame_phase) / self.frame_symbols).astype(np.int64)
        frames = self._state_of_frames(int(fidx[0]), int(fidx[-1]))
        states = frames[fidx - self._frame_base]
        sidx = np.floor((t + self._seg_phase) / self.segment_symbols).astype(np.int64)
        segs = self._segment_draws(int(sidx[0]), int(sidx[-1]))
        g = segs[sidx - self._seg_base]
        los = np.exp(self._mu[states] + self._sd[states] * g)
        h = los + self._nlos_amp[states] * self._fading.take(n)
        self._t += n
        return h, states


def generate_trace(
    env: EnvironmentModel,
    mob: MobilityConfig,
    noise_power: float,
    num_codewords: int,
    codeword_length: int,
    rng: RngStream,
) -> ChannelTrace:
    """Continuous LMS trace of ``num_codewords * codeword_length`` symbols."""
    n = int(num_codewords) * int(codeword_length)
    if n < 1:
        raise ValueError("num_codewords * codeword_length must be >= 1")
    h, states = LmsProcess(env, mob, rng).take(n)
    return ChannelTrace.from_gains(h, noise_power, states)


def generate_codewords(
    env: EnvironmentModel,
    mob: MobilityConfig,
    noise_power: float,
    num_codewords: int,
    codeword_length: int,
    rng: RngStream,
) -> ChannelTrace:
    """Independent codeword snapshots of the stationary LMS process.

    Each codeword is a fresh stretch of the continuous process (state drawn
    from the stationary law, fresh shadowing and fading), so a modest number
    of codewords samples the Markov chain ergodically even at walking speed.
    """
    gains = np.empty((num_codewords, codeword_length), dtype=complex)
    states = np.empty((num_codewords, codeword_length), dtype=np.int64)
    for k in range(num_codewords):
        gains[k], states[k] = LmsProcess(env, mob, rng).take(codeword_length)
    return ChannelTrace.from_gains(gains.ravel(), noise_power, states.ravel())


class RicianProcess:
    """Constant-LOS Rician stream ``h = mu + sqrt(2 theta^2) w`` with Doppler-shaped ``w``."""

    def __init__(self, mu: float, theta2: float, normalized_doppler: float, rng: RngStream):
        if mu < 0 or not theta2 > 0:
            raise ConfigError("Rician state needs mu >= 0 and theta^2 > 0")
        self.mu = float(mu)
        self.nlos_amp = math.sqrt(2.0 * theta2)
        self._fading = FadingProcess(normalized_doppler, rng)

    def take(self, n: int) -> np.ndarray:
        return self.mu + self.nlos_amp * self._fading.take(n)


def rician_state_trace(
    mu: float,
    theta2: float,
    noise_power: float,
    doppler: float,
    symbol_period: float,
    n: int,
    rng: RngStream,
) -> ChannelTrace:
    h = RicianProcess(mu, theta2, doppler * symbol_period, rng).take(int(n))
    return ChannelTrace.from_gains(h, noise_power)


# --------------------------------------------------------------------------
# analytic amplitude law
# --------------------------------------------------------------------------

# Gauss-Legendre rule used on every panel of the ln(z) integration
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_LOGN_SPAN = 9.0  # standard deviations of ln z covered


def _graded_panels(center: np.ndarray, first: np.ndarray, lo: float, hi: float, levels: int):
    """Panel edges on ``[lo, hi]`` geometrically refined towards ``center``."""
    offsets = first[:, None] * 2.0 ** np.arange(levels)[None, :]
    c = np.clip(center, lo, hi)[:, None]
    uniform = np.linspace(lo, hi, 7)[None, :].repeat(c.shape[0], axis=0)
    edges = np.concatenate([uniform, c - offsets, c, c + offsets], axis=1)
    return np.sort(np.clip(edges, lo, hi), axis=1)


def loo_amplitude_cdf(loo: LooParams, x) -> np.ndarray:
    """``P[|h| <= x]`` for one Loo state.

    Conditional on the LOS amplitude z the envelope is Rician, so the CDF is
    the log-normal average of ``1 - Q1(z/sqrt(b0), x/sqrt(b0))``.  The average
    is taken over ``t = (ln z - mu)/sqrt(d0)`` with Gauss-Legendre panels
    graded towards ``z = x``, where the Rician CDF steps over a width of about
    ``sqrt(b0)/(x sqrt(d0))`` in t.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("amplitude must be >= 0")
    s = math.sqrt(loo.b0)
    if loo.d0 == 0.0:
        z = math.exp(loo.mu_loo)
        return 1.0 - marcum_q1(z / s, x / s)
    sd = math.sqrt(loo.d0)
    with np.errstate(divide="ignore"):
        center = (np.log(np.maximum(x, 1e-300)) - loo.mu_loo) / sd
        width = s / (np.maximum(x, 1e-300) * sd)
    first = np.clip(width / 4.0, 1e-9, 1.0)
    levels = int(np.ceil(np.log2(2 * _LOGN_SPAN / first.min()))) if first.min() < 1.0 else 0
    levels = max(levels, 1)
    out = np.empty(x.size)
    chunk = max(1, 40_000 // (levels * 2 + 8))
    for c0 in range(0, x.size, chunk):
        sl = slice(c0, c0 + chunk)
        edges = _graded_panels(center[sl], first[sl], -_LOGN_SPAN, _LOGN_SPAN, levels)
        a, b = edges[:, :-1, None], edges[:, 1:, None]
        half = 0.5 * (b - a)
        t = 0.5 * (a + b) + half * _GL_X  # (nx, panels, nodes)
        w = half * _GL_W * np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
        z = np.exp(loo.mu_loo + sd * t)
        nz = w > 0
        cdf = np.zeros_like(z)
        xs = np.broadcast_to(x[sl, None, None] / s, z.shape)
        cdf[nz] = 1.0 - marcum_q1(z[nz] / s, xs[nz])
        out[sl] = np.sum(w * cdf, axis=(1, 2))
    return np.clip(out, 0.0, 1.0)


def loo_mixture_cdf(env: EnvironmentModel, x):
    """Stationary amplitude CDF ``P[|h| <= x]`` of the Loo mixture."""
    xa = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xa).ravel()
    out = np.zeros(flat.shape)
    for p, loo in zip(env.state_probs, env.states):
        if p > 0:
            out += p * loo_amplitude_cdf(loo, flat)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def loo_pdf(loo: LooParams, x: float) -> float:
    """Loo amplitude density by direct integration over the LOS amplitude."""
    from .mathx import bessel_i0e, integrate_semiinf

    if x <= 0:
        return 0.0
    if loo.d0 == 0:
        z = math.exp(loo.mu_loo)
        return x / loo.b0 * math.exp(-((x - z) ** 2) / (2 * loo.b0)) * float(bessel_i0e(x * z / loo.b0))

    def integrand(z):
        if z <= 0:
            return 0.0
        lz = math.log(z)
        return (
            math.exp(-((lz - loo.mu_loo) ** 2) / (2 * loo.d0) - (x - z) ** 2 / (2 * loo.b0))
            * float(bessel_i0e(x * z / loo.b0))
            / z
        )

    peak = math.exp(loo.mu_loo)
    val = integrate_semiinf(integrand, points=(min(peak, x), max(peak, x)))
    return x / (loo.b0 * math.sqrt(2 * math.pi * loo.d0)) * val


class PowerCdf:
    """Tabulated CDF of the channel power ``|h|^2`` for repeated evaluation.

    Built once per environment on a log-spaced grid and interpolated with a
    monotone cubic in log-power; used by the forward-link optimizer, which
    evaluates thousands of thresholds.
    """

    def __init__(self, env: EnvironmentModel, lo: float = 1e-9, hi: float | None = None, points: int = 1200):
        from .mathx import Grid1D

        if hi is None:
            hi = 1.0
            while loo_mixture_cdf(env, math.sqrt(hi)) < 1.0 - 1e-13:
                hi *= 4.0
        self.env = env
        self.lo, self.hi = lo, hi
        k = np.geomspace(lo, hi, points)
        self._grid = Grid1D(np.log(k), loo_mixture_cdf(env, np.sqrt(k)))
        self._at_lo = float(self._grid.ordinates[0])

    def __call__(self, k):
        """``P[|h|^2 <= k]``."""
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            lk = np.log(np.maximum(k, 1e-300))
        out = self._grid(lk)
        # below the grid the CDF of a smooth density vanishes linearly in k
        out = np.where(k < self.lo, self._at_lo * np.maximum(k, 0.0) / self.lo, out)
        out = np.where(k >= self.hi, 1.0, out)
        out = np.where(np.isinf(k), 1.0, out)
        return out[()] if out.ndim == 0 else out

    def sf(self, k):
        return 1.0 - self(k)


# --------------------------------------------------------------------------
# bundled environments
# --------------------------------------------------------------------------


def data_dir() -> Path:
    import os

    override = os.environ.get("LMS_ACM_DATA_DIR")
    return Path(override) if override else Path(__file__).parent / "data"


def builtin_environment(name: str) -> EnvironmentModel:
    path = data_dir() / "envs" / f"{name.lower()}.yaml"
    if not path.is_file():
        path = Path(__file__).parent / "data" / "envs" / f"{name.lower()}.yaml"
    return EnvironmentModel.load(path)


def builtin_environment_names() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "data" / "envs").glob("*.yaml"))
