"""Profile and tariff files, plus a seeded synthetic profile generator.

Profile CSV: ``slot,household_id,demand_kwh,pv_kwh`` (one row per household
per slot). Tariff CSV: ``slot,import_price,export_price``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import AgentError, TariffSchedule

PROFILE_COLUMNS = ("slot", "household_id", "demand_kwh", "pv_kwh")
TARIFF_COLUMNS = ("slot", "import_price", "export_price")
INJECTION_COLUMNS = ("node", "p_kw", "q_kvar")


class DataFileError(ValueError):
    """Malformed input file; message carries file and line."""


@dataclass(frozen=True)
class RawProfile:
    demand: np.ndarray
    pv: np.ndarray


def _reader(path: Path, columns: tuple[str, ...]):
    fh = path.open(newline="")
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip().lower() for h in header) != columns:
        fh.close()
        raise DataFileError(f"{path}:1: expected header {','.join(columns)}")
    return fh, reader


def load_profiles(path: str | Path, n_slots: int | None = None) -> dict[str, RawProfile]:
    path = Path(path)
    fh, reader = _reader(path, PROFILE_COLUMNS)
    data: dict[str, dict[int, tuple[float, float]]] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(PROFILE_COLUMNS):
                raise DataFileError(f"{path}:{lineno}: expected {len(PROFILE_COLUMNS)} fields")
            try:
                slot = int(row[0])
                hid = row[1].strip()
                d, g = float(row[2]), float(row[3])
            except ValueError:
                raise DataFileError(f"{path}:{lineno}: malformed profile row") from None
            if not hid:
                raise DataFileError(f"{path}:{lineno}: empty household id")
            if d < 0 or g < 0 or not np.isfinite(d) or not np.isfinite(g):
                raise DataFileError(f"{path}:{lineno}: demand and pv must be finite and >= 0")
            if slot < 0 or (n_slots is not None and slot >= n_slots):
                raise DataFileError(f"{path}:{lineno}: slot {slot} outside the horizon")
            slots = data.setdefault(hid, {})
            if slot in slots:
                raise DataFileError(f"{path}:{lineno}: duplicate slot {slot} for {hid}")
            slots[slot] = (d, g)
    out = {}
    for hid, slots in data.items():
        T = n_slots if n_slots is not None else max(slots) + 1
        if sorted(slots) != list(range(T)):
            raise DataFileError(f"{path}: household {hid} does not cover slots 0..{T - 1}")
        arr = np.array([slots[t] for t in range(T)])
        out[hid] = RawProfile(arr[:, 0].copy(), arr[:, 1].copy())
    return out


def write_profiles(profiles: dict[str, RawProfile], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_COLUMNS)
        T = next(iter(profiles.values())).demand.size if profiles else 0
        for t in range(T):
            for hid, p in profiles.items():
                w.writerow([t, hid, repr(float(p.demand[t])), repr(float(p.pv[t]))])


def load_tariffs(path: str | Path) -> TariffSchedule:
    path = Path(path)
    fh, reader = _reader(path, TARIFF_COLUMNS)
    rows: dict[int, tuple[float, float]] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                slot, imp, exp = int(row[0]), float(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise DataFileError(f"{path}:{lineno}: malformed tariff row") from None
            if slot in rows:
                raise DataFileError(f"{path}:{lineno}: duplicate slot {slot}")
            if exp < 0 or imp < exp:
                raise DataFileError(f"{path}:{lineno}: need import >= export >= 0")
            rows[slot] = (imp, exp)
    if sorted(rows) != list(range(len(rows))):
        raise DataFileError(f"{path}: slots must be contiguous from 0")
    arr = np.array([rows[t] for t in range(len(rows))])
    try:
        return TariffSchedule(arr[:, 0].copy(), arr[:, 1].copy())
    except AgentError as exc:
        raise DataFileError(f"{path}: {exc}") from None


def write_tariffs(tariffs: TariffSchedule, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TARIFF_COLUMNS)
        for t in range(tariffs.n_slots):
            w.writerow([t, repr(float(tariffs.import_price[t])), repr(float(tariffs.export_price[t]))])


def default_tariffs(n_slots: int = 96, slot_hours: float = 0.25) -> TariffSchedule:
    """Three-rate ToU (cents/kWh) with a flat FiT."""
    hours = np.arange(n_slots) * slot_hours
    imp = np.full(n_slots, 15.0)
    imp[hours < 7.0] = 9.0
    imp[(hours >= 16.0) & (hours < 20.0)] = 28.0
    imp[hours >= 20.0] = 12.0
    exp = np.full(n_slots, 6.0)
    return TariffSchedule(imp, exp)


def load_injections(path: str | Path, n_nodes: int, base_kva: float) -> np.ndarray:
    """Per-node complex injections in pu from ``node,p_kw,q_kvar`` rows
    (generation positive; missing nodes inject nothing)."""
    path = Path(path)
    fh, reader = _reader(path, INJECTION_COLUMNS)
    out = np.zeros(n_nodes, dtype=complex)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                node, p, q = int(row[0]), float(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise DataFileError(f"{path}:{lineno}: malformed injection row") from None
            if not 1 <= node < n_nodes:
                raise DataFileError(f"{path}:{lineno}: node {node} is not a non-slack node")
            out[node] += complex(p, q) / base_kva
    return out


# ------------------------------------------------------------ synthetic data

def _demand_shape(hours: np.ndarray) -> np.ndarray:
    """Mean household demand in kW: night base, morning and evening peaks."""
    base = 0.28
    morning = 0.45 * np.exp(-0.5 * ((hours - 7.75) / 1.0) ** 2)
    midday = 0.15 * np.exp(-0.5 * ((hours - 13.0) / 2.5) ** 2)
    evening = 0.75 * np.exp(-0.5 * ((hours - 18.75) / 1.6) ** 2)
    return base + morning + midday + evening


def clear_sky_pv(hours: np.ndarray, kwp: float, sunrise: float = 5.0, sunset: float = 21.0,
                 derate: float = 0.95) -> np.ndarray:
    """Clear-sky PV output in kW (bell between sunrise and sunset)."""
    x = (hours - sunrise) / (sunset - sunrise)
    bell = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 2, 0.0)
    return kwp * derate * bell


def generate_profiles(household_ids: list[str], with_pv: set[str], seed: int,
                      n_slots: int = 96, slot_hours: float = 0.25, pv_kwp: float = 5.0
                      ) -> dict[str, RawProfile]:
    """Seeded synthetic profiles (kWh per slot).

    Demand: diurnal double-peak shape scaled per household (lognormal) with
    per-slot multiplicative noise. PV: clear-sky bell of ``pv_kwp`` with a
    per-household orientation factor and slight irradiance noise.
    """
    rng = np.random.default_rng(seed)
    hours = (np.arange(n_slots) + 0.5) * slot_hours
    shape = _demand_shape(hours)
    sky = clear_sky_pv(hours, pv_kwp)
    out = {}
    for hid in household_ids:
        scale = rng.lognormal(0.0, 0.25)
        noise = rng.lognormal(-0.5 * 0.3**2, 0.3, size=n_slots)
        demand_kw = np.clip(shape * scale * noise, 0.05, 4.0)
        if hid in with_pv:
            orient = rng.uniform(0.85, 1.0)
            pv_kw = sky * orient * np.clip(rng.normal(1.0, 0.02, size=n_slots), 0.9, 1.05)
        else:
            pv_kw = np.zeros(n_slots)
        out[hid] = RawProfile(demand_kw * slot_hours, pv_kw * slot_hours)
    return out
