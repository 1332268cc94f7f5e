"""Mutual-information effective SNR mapping and its exponential approximations.

Phi(gamma) is the constellation-constrained (coded-modulation) mutual
information of an AWGN channel, normalized by log2|M| to [0, 1].  Tables keep
``log(1 - Phi)`` next to Phi: the complement stays strictly decreasing far
past the SNR where Phi itself rounds to 1.0, so the inverse map is well posed
across the whole grid.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .mathx import Grid1D

SNR_DB_MIN = -20.0
SNR_DB_MAX = 30.0
SNR_DB_STEP = 0.1
GH_NODES = 64
EXP_APPROX_VERSION = 1


class EsmClampWarning(UserWarning):
    """Mean mutual information fell outside the tabulated range."""


# --------------------------------------------------------------------------
# constellations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Constellation:
    name: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        object.__setattr__(self, "points", pts)
        if pts.size not in (4, 8, 16):
            raise ValueError(f"unsupported constellation size {pts.size}")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-12:
            raise ValueError("constellation must have unit average power")

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.order)))


def _qpsk():
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


def _psk8():
    return np.exp(2j * np.pi * np.arange(8) / 8)


def _qam16():
    lv = np.array([-3.0, -1.0, 1.0, 3.0])
    pts = (lv[:, None] + 1j * lv[None, :]).ravel()
    return pts / np.sqrt(10.0)


_BUILDERS = {"QPSK": _qpsk, "8PSK": _psk8, "16QAM": _qam16}
CONSTELLATION_NAMES = tuple(_BUILDERS)


def constellation(name: str) -> Constellation:
    key = name.upper()
    if key not in _BUILDERS:
        raise ValueError(f"unknown constellation {name!r}; expected one of {CONSTELLATION_NAMES}")
    return Constellation(key, _BUILDERS[key]())


# --------------------------------------------------------------------------
# mutual information
# --------------------------------------------------------------------------


def _log_softplus(x: np.ndarray) -> np.ndarray:
    """``log(log(1 + e^x))`` without underflow for very negative x."""
    out = np.empty_like(x)
    small = x < -30.0
    out[small] = x[small]  # log1p(e^x) = e^x (1 - e^x / 2 ...) to double precision
    out[~small] = np.log(np.logaddexp(0.0, x[~small]))
    return out


def _mi_log_complement(points: np.ndarray, snr: float, nodes: int = GH_NODES) -> float:
    """``log(1 - I/log2|M|)`` at linear SNR ``snr`` by tensor Gauss-Hermite quadrature.

    Per symbol x, ``log(1 + sum_{x' != x} exp(-snr|d|^2 - 2 sqrt(snr) Re(d* t)))``
    with ``d = x - x'`` and t the normalized complex noise.  The whole sum is
    carried in the log domain so the complement keeps full relative precision
    long after it drops below machine epsilon.
    """
    t, w = special.roots_hermite(nodes)
    tc = (t[:, None] + 1j * t[None, :]).ravel()
    logw = np.log((w[:, None] * w[None, :]).ravel() / np.pi)
    m = points.size
    rs = math.sqrt(snr)
    parts = []
    for i in range(m):
        d = points[i] - np.delete(points, i)
        expo = -snr * np.abs(d)[:, None] ** 2 - 2.0 * rs * np.real(np.conj(d)[:, None] * tc[None, :])
        lse = special.logsumexp(expo, axis=0)
        parts.append(special.logsumexp(logw + _log_softplus(lse)))
    return float(special.logsumexp(parts) - math.log(m) - math.log(math.log(m)))


def _mi_complement(points: np.ndarray, snr: float, nodes: int = GH_NODES) -> float:
    return math.exp(_mi_log_complement(points, snr, nodes))


class MiTable:
    """Tabulated normalized mutual information of one constellation."""

    def __init__(self, name: str, snr_db, log_complement):
        snr_db = np.asarray(snr_db, dtype=float)
        logc = np.asarray(log_complement, dtype=float)
        if np.any(np.diff(logc) >= 0):
            raise ValueError(f"{name}: 1 - Phi must be strictly decreasing in SNR")
        self.name = name
        self.snr_db = snr_db
        self.log_complement = logc
        self._grid = Grid1D(snr_db, logc)
        # uniform dB grids get a direct-index evaluator of the same PCHIP pieces
        steps = np.diff(snr_db)
        self._uniform = bool(np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12))
        self._coef = self._grid._interp.c
        self._step = float(steps[0])
        self.gamma_min = 10.0 ** (snr_db[0] / 10.0)
        self.gamma_max = 10.0 ** (snr_db[-1] / 10.0)
        self.phi_min = -math.expm1(logc[0])
        self.c_min = math.exp(logc[-1])

    @property
    def phi(self) -> np.ndarray:
        return -np.expm1(self.log_complement)

    @property
    def snr_grid(self) -> Grid1D:
        """Phi as a function of SNR in dB."""
        return Grid1D(self.snr_db, self.phi)

    # ---- forward map ----------------------------------------------------

    def complement(self, gamma):
        """``1 - Phi(gamma)`` for linear SNR; linear in gamma below the grid, saturated above."""
        g = np.asarray(gamma, dtype=float)
        if np.any(g < 0):
            raise ValueError("SNR must be >= 0")
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(np.maximum(g, 1e-300))
        out = np.exp(self._log_complement_db(db))
        low = g < self.gamma_min
        if np.any(low):
            out = np.where(low, 1.0 - self.phi_min * g / self.gamma_min, out)
        return out[()] if out.ndim == 0 else out

    def _log_complement_db(self, db):
        if not self._uniform:
            return self._grid(db)
        x = np.clip(db, self.snr_db[0], self.snr_db[-1]) - self.snr_db[0]
        idx = np.minimum((x / self._step).astype(np.int64), self._coef.shape[1] - 1)
        dx = x - idx * self._step
        c = self._coef
        return ((c[0, idx] * dx + c[1, idx]) * dx + c[2, idx]) * dx + c[3, idx]

    def __call__(self, gamma):
        """Normalized mutual information Phi(gamma)."""
        return 1.0 - self.complement(gamma)

    # ---- inverse map ----------------------------------------------------

    def inverse_complement(self, c):
        """SNR whose complement equals ``c``; returns (snr, clamped_mask)."""
        c = np.asarray(c, dtype=float)
        clamped = c <= self.c_min
        c_top = math.exp(self.log_complement[0])
        low = c > c_top
        with np.errstate(divide="ignore"):
            target = np.log(np.clip(c, self.c_min, c_top))
        db = self._grid.invert(target, tol=1e-12, increasing=False)
        out = 10.0 ** (db / 10.0)
        out = np.where(low, self.gamma_min * (1.0 - c) / self.phi_min, out)
        out = np.where(clamped, self.gamma_max, out)
        return out, clamped

    def inverse(self, phi):
        """Phi^{-1} (clamped to the grid, with the linear law below it)."""
        out, _ = self.inverse_complement(1.0 - np.asarray(phi, dtype=float))
        return out[()] if out.ndim == 0 else out

    # ---- persistence ----------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# constellation={self.name} normalization=log2(M) quadrature=gauss-hermite-{GH_NODES}x{GH_NODES}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_db", "phi", "log_one_minus_phi"])
        for s, lc in zip(self.snr_db, self.log_complement):
            w.writerow([f"{s:.1f}", f"{-math.expm1(lc):.17g}", f"{lc:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, name: str | None = None) -> "MiTable":
        lines = text.splitlines()
        if lines and lines[0].startswith("#"):
            meta = dict(kv.split("=", 1) for kv in lines[0][1:].split() if "=" in kv)
            name = name or meta.get("constellation")
            lines = lines[1:]
        rows = list(csv.DictReader(lines))
        snr = [float(r["snr_db"]) for r in rows]
        if "log_one_minus_phi" in rows[0]:
            logc = [float(r["log_one_minus_phi"]) for r in rows]
        else:
            logc = [math.log1p(-float(r["phi"])) for r in rows]
        return cls(name or "custom", snr, logc)


def build_mi_table(c: Constellation, step_db: float = SNR_DB_STEP) -> MiTable:
    n = int(round((SNR_DB_MAX - SNR_DB_MIN) / step_db)) + 1
    snr_db = np.round(np.linspace(SNR_DB_MIN, SNR_DB_MAX, n), 10)
    logc = np.array([_mi_log_complement(c.points, 10.0 ** (s / 10.0)) for s in snr_db])
    return MiTable(c.name, snr_db, logc)


# --------------------------------------------------------------------------
# effective SNR
# --------------------------------------------------------------------------


def effective_snr_rows(gammas, table: MiTable):
    """Row-wise MIESM: returns (gamma_eff per row, clamped mask)."""
    g = np.atleast_2d(np.asarray(gammas, dtype=float))
    if g.shape[1] == 0:
        raise ValueError("empty SNR vector")
    return table.inverse_complement(np.mean(table.complement(g), axis=1))


def effective_snr(gammas, table: MiTable) -> float:
    """``Phi^{-1}(mean Phi(gamma_i))`` for one codeword."""
    g = np.asarray(gammas, dtype=float).ravel()
    if g.size == 0:
        raise ValueError("empty SNR vector")
    val, clamped = effective_snr_rows(g[None, :], table)
    if clamped[0]:
        warnings.warn("mean mutual information above the table range; effective SNR clamped", EsmClampWarning)
    return float(val[0])


def effective_snr_exp(gammas, beta: float) -> float:
    """Exponential ESM ``-(1/beta) log(mean exp(-beta gamma_i))``."""
    g = np.asarray(gammas, dtype=float)
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return float(exp_esm_rows(g.ravel()[None, :], beta)[0])


def exp_esm_rows(gammas, beta: float) -> np.ndarray:
    """Row-wise exponential ESM, stable for large SNR via log-mean-exp."""
    g = np.atleast_2d(np.asarray(gammas, dtype=float))
    n = g.shape[1]
    return -(special.logsumexp(-beta * g, axis=1) - math.log(n)) / beta


# --------------------------------------------------------------------------
# exponential approximation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpApprox:
    """``Phi ~ 1 - exp(-beta g)`` (one-term) or
    ``Phi ~ 1 - a1 exp(-b1 g) - (1 - a1) exp(-b2 g)`` (two-term)."""

    constellation: str
    variant: str
    beta: float | None = None
    alpha1: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    max_abs_error: float = float("nan")
    rms_error: float = float("nan")

    def __post_init__(self):
        if self.variant == "one-term":
            if not (self.beta and self.beta > 0):
                raise ValueError("one-term approximation needs beta > 0")
        elif self.variant == "two-term":
            if not (self.beta1 and self.beta1 > 0 and self.beta2 and self.beta2 > 0):
                raise ValueError("two-term approximation needs beta1, beta2 > 0")
            if not 0.0 <= self.alpha1 <= 1.0:
                raise ValueError("alpha1 must lie in [0, 1]")
        else:
            raise ValueError(f"unknown variant {self.variant!r}")

    def __call__(self, gamma):
        g = np.asarray(gamma, dtype=float)
        if self.variant == "one-term":
            return -np.expm1(-self.beta * g)
        return 1.0 - self.alpha1 * np.exp(-self.beta1 * g) - (1.0 - self.alpha1) * np.exp(-self.beta2 * g)


class CalibrationError(RuntimeError):
    pass


def _fit_report(table: MiTable, model) -> tuple[float, float]:
    g = 10.0 ** (table.snr_db / 10.0)
    r = model(g) - table.phi
    return float(np.max(np.abs(r))), float(np.sqrt(np.mean(r * r)))


def calibrate_exp_approx(table: MiTable, variant: str = "one-term") -> ExpApprox:
    """Least-squares fit to Phi on the table grid, uniform weight per dB step."""
    g = 10.0 ** (table.snr_db / 10.0)
    target = table.phi

    def one(p):
        return -np.expm1(-np.exp(p[0]) * g) - target

    # start from the small-SNR slope, where Phi ~ beta * g
    beta0 = max(table.phi[0] / g[0], 1e-3)
    sol = optimize.least_squares(one, [math.log(beta0)], xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    if not sol.success:
        raise CalibrationError(f"one-term fit failed: {sol.message}; residual {np.max(np.abs(sol.fun)):.3g}")
    beta = float(np.exp(sol.x[0]))
    fit1 = ExpApprox(table.name, "one-term", beta=beta)
    mx, rms = _fit_report(table, fit1)
    fit1 = ExpApprox(table.name, "one-term", beta=beta, max_abs_error=mx, rms_error=rms)
    if variant == "one-term":
        return fit1
    if variant != "two-term":
        raise ValueError(f"unknown variant {variant!r}")

    def two(p):
        a1, lb1, lb2 = p
        return 1.0 - a1 * np.exp(-np.exp(lb1) * g) - (1.0 - a1) * np.exp(-np.exp(lb2) * g) - target

    best = None
    lb = math.log(beta)
    # the one-term optimum is a feasible point of the two-term family; several
    # starts around it keep the search from stalling on the degenerate ridge
    for a_start, s1, s2 in ((0.999, 0.0, 0.0), (0.7, -0.5, 0.7), (0.5, -1.0, 1.0), (0.3, 0.5, -0.7)):
        x0 = [a_start, lb + s1, lb + s2]
        sol = optimize.least_squares(
            two, x0, bounds=([0.0, -30.0, -30.0], [1.0, 30.0, 30.0]), xtol=1e-15, ftol=1e-15, gtol=1e-15
        )
        cost = float(np.sum(sol.fun**2))
        if best is None or cost < best[0]:
            best = (cost, sol.x)
    one_cost = float(np.sum(one([lb]) ** 2))
    if best[0] > one_cost:
        a1, b1, b2 = 1.0, beta, beta
    else:
        a1, b1, b2 = float(best[1][0]), float(np.exp(best[1][1])), float(np.exp(best[1][2]))
    fit2 = ExpApprox(table.name, "two-term", alpha1=a1, beta1=b1, beta2=b2)
    mx, rms = _fit_report(table, fit2)
    return ExpApprox(table.name, "two-term", alpha1=a1, beta1=b1, beta2=b2, max_abs_error=mx, rms_error=rms)


# --------------------------------------------------------------------------
# bundled data
# --------------------------------------------------------------------------


def _data_dir() -> Path:
    from .channel import data_dir

    return data_dir()


def mi_table_path(name: str, base: Path | None = None) -> Path:
    return (base or _data_dir()) / f"mi_{name.upper()}.csv"


def exp_approx_path(base: Path | None = None) -> Path:
    return (base or _data_dir()) / "exp_approx.json"


_TABLE_CACHE: dict[tuple[str, str], MiTable] = {}


def load_mi_table(name: str) -> MiTable:
    """Stored table for ``name``; built on the fly if no data file exists."""
    path = mi_table_path(name)
    key = (name.upper(), str(path))
    if key not in _TABLE_CACHE:
        if path.is_file():
            _TABLE_CACHE[key] = MiTable.from_csv(path.read_text(), name.upper())
        else:
            _TABLE_CACHE[key] = build_mi_table(constellation(name))
    return _TABLE_CACHE[key]


def exp_approx_to_json(fits: list[ExpApprox]) -> str:
    doc = {
        "version": EXP_APPROX_VERSION,
        "fit": "least squares on the MI table grid, uniform weight per dB, -20..30 dB",
        "approximations": [{k: v for k, v in asdict(f).items() if v is not None} for f in fits],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_exp_approx(name: str, variant: str = "one-term") -> ExpApprox:
    path = exp_approx_path()
    if path.is_file():
        doc = json.loads(path.read_text())
        for item in doc["approximations"]:
            if item["constellation"] == name.upper() and item["variant"] == variant:
                return ExpApprox(**item)
    return calibrate_exp_approx(load_mi_table(name), variant)


def exp_betas() -> dict[str, float]:
    """One-term beta per constellation."""
    return {n: load_exp_approx(n).beta for n in CONSTELLATION_NAMES}
