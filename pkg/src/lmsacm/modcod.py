"""MODCOD tables: (constellation, code rate) pairs with decoding thresholds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .channel import ConfigError


@dataclass(frozen=True)
class ModCod:
    name: str
    constellation: str
    spectral_efficiency: float
    threshold_db: float

    def __post_init__(self):
        if not self.spectral_efficiency > 0:
            raise ValueError(f"{self.name}: spectral efficiency must be > 0")

    @property
    def R(self) -> float:
        return self.spectral_efficiency

    @property
    def threshold(self) -> float:
        """Static-channel decoding threshold, linear SNR."""
        return 10.0 ** (self.threshold_db / 10.0)


# Forward link: QPSK only (both MLC layers share constellation and code).
_FL_ROWS = [
    ("QPSK 1/4", "QPSK", 0.357, -1.5),
    ("QPSK 1/3", "QPSK", 0.616, -0.3),
    ("QPSK 2/5", "QPSK", 0.745, 0.6),
    ("QPSK 1/2", "QPSK", 0.831, 1.9),
    ("QPSK 3/5", "QPSK", 1.132, 3.1),
    ("QPSK 2/3", "QPSK", 1.261, 4.0),
    ("QPSK 3/4", "QPSK", 1.390, 4.9),
    ("QPSK 4/5", "QPSK", 1.476, 5.6),
    ("QPSK 5/6", "QPSK", 1.562, 6.1),
    ("QPSK 8/9", "QPSK", 1.691, 7.1),
]

_RL_ROWS = [
    ("QPSK 1/3", "QPSK", 0.563, 1.7),
    ("QPSK 1/2", "QPSK", 0.874, 4.0),
    ("QPSK 2/3", "QPSK", 1.259, 5.9),
    ("QPSK 3/4", "QPSK", 1.422, 7.0),
    ("QPSK 5/6", "QPSK", 1.600, 8.3),
    ("8PSK 2/3", "8PSK", 1.704, 9.9),
    ("8PSK 3/4", "8PSK", 1.926, 11.5),
    ("8PSK 5/6", "8PSK", 2.197, 13.1),
    ("16QAM 3/4", "16QAM", 2.593, 13.7),
    ("16QAM 5/6", "16QAM", 2.874, 15.2),
]


def _check_table(rows: list[ModCod], where: str) -> list[ModCod]:
    if not rows:
        raise ConfigError(f"{where}: empty MODCOD table")
    rows = sorted(rows, key=lambda m: (m.spectral_efficiency, m.threshold_db))
    for a, b in zip(rows, rows[1:]):
        if b.threshold_db < a.threshold_db:
            raise ConfigError(f"{where}: thresholds must increase with spectral efficiency ({a.name} vs {b.name})")
    return rows


def fl_table() -> list[ModCod]:
    return [ModCod(*r) for r in _FL_ROWS]


def rl_table() -> list[ModCod]:
    return [ModCod(*r) for r in _RL_ROWS]


def parse_table(text: str, where: str = "<string>") -> list[ModCod]:
    """Parse CSV with columns name, constellation, R, gamma_th_db ('#' lines skipped)."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    need = {"name", "constellation", "R", "gamma_th_db"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ConfigError(f"{where}: header must contain {sorted(need)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            r = float(row["R"])
            th = float(row["gamma_th_db"])
            if not (math.isfinite(r) and math.isfinite(th)):
                raise ValueError("non-finite value")
            out.append(ModCod(row["name"], row["constellation"].upper(), r, th))
        except ValueError as exc:
            raise ConfigError(f"{where}: line {lineno}: {exc}") from None
    return _check_table(out, where)


def load_table(path: str | Path) -> list[ModCod]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"MODCOD table not found: {p}")
    return parse_table(p.read_text(), str(p))


def table_to_csv(rows: list[ModCod]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "constellation", "R", "gamma_th_db"])
    for m in rows:
        w.writerow([m.name, m.constellation, m.spectral_efficiency, m.threshold_db])
    return buf.getvalue()


def resolve_table(spec, default: str) -> list[ModCod]:
    """``None``/'fl'/'rl' select a built-in table; anything else is a CSV path."""
    key = (spec or default)
    if isinstance(key, str) and key.lower() in ("fl", "rl"):
        return fl_table() if key.lower() == "fl" else rl_table()
    return load_table(key)
