"""System constants, geometry and large-scale fading for the RIS-assisted downlink."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np

SPEED_OF_LIGHT = 3e8  # rounded value; reproduces f_d = 50 Hz at 18 km/h, 3 GHz


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Scalar system constants. Powers are stored in watts, gains as linear ratios."""

    n_bs_antennas: int = 12
    ris_elements_total: int = 225
    ris_groups: int = 15
    n_users: int = 2
    pilot_slots: int = 16
    train_intervals: int = 25
    predict_intervals: int = 20
    ar_order: int = 24
    pilot_power: float = 1e-3
    data_power: float = float(dbm_to_watts(5.0))
    noise_variance: float = float(dbm_to_watts(-174.0))
    carrier_freq: float = 3e9
    loading: float = 0.1
    pathloss_ref: float = 1e-3
    # (BS-UE, RIS-UE, BS-RIS)
    pathloss_exponents: tuple[float, float, float] = (3.0, 3.0, 2.0)
    shadowing_loss: float = 10.0
    sample_interval: float = 1e-3
    doppler_grid: tuple[float, ...] = tuple(float(f) for f in range(10, 101, 10))
    rng_seed: int = 0

    def __post_init__(self):
        counts = ("n_bs_antennas", "ris_elements_total", "ris_groups", "n_users",
                  "pilot_slots", "train_intervals", "predict_intervals", "ar_order")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.ris_groups ** 2 != self.ris_elements_total:
            raise ValueError(
                f"ris_groups**2 must equal ris_elements_total "
                f"({self.ris_groups}**2 != {self.ris_elements_total})")
        if self.pilot_slots < self.ris_groups + 1:
            raise ValueError("pilot_slots must be >= ris_groups + 1 for identifiability")
        if self.ar_order > self.train_intervals:
            raise ValueError("ar_order must not exceed train_intervals")
        for name in ("pilot_power", "data_power", "noise_variance", "carrier_freq",
                     "pathloss_ref", "sample_interval", "loading"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if len(self.pathloss_exponents) != 3:
            raise ValueError("pathloss_exponents needs three entries (BS-UE, RIS-UE, BS-RIS)")
        if list(self.doppler_grid) != sorted(set(self.doppler_grid)):
            raise ValueError("doppler_grid must be strictly increasing")

    @property
    def shadowing_gain(self) -> float:
        return float(db_to_linear(-self.shadowing_loss))

    @property
    def group_size(self) -> int:
        """RIS elements sharing one reflection coefficient."""
        return self.ris_elements_total // self.ris_groups

    def doppler_fn(self, f_d) -> np.ndarray:
        return np.asarray(f_d, dtype=float) * self.sample_interval

    def replace(self, **changes) -> "SystemConfig":
        data = asdict(self)
        data.update(changes)
        return SystemConfig(**data)


@dataclass(frozen=True)
class Geometry:
    """2-D layout: BS at the origin, RIS at (d_bs_ris, 0), users offset by (d_h, d_v)."""

    d_bs_ris: float = 51.0
    d_h: tuple[float, ...] = (25.0, 25.0)
    d_v: tuple[float, ...] = (2.0, 3.0)

    def __post_init__(self):
        if self.d_bs_ris <= 0:
            raise ValueError("d_bs_ris must be positive")
        if len(self.d_h) != len(self.d_v):
            raise ValueError("d_h and d_v must have one entry per user")
        for dh, dv in zip(self.d_h, self.d_v):
            if not 0 < dh <= self.d_bs_ris:
                raise ValueError(f"horizontal offset {dh} outside (0, {self.d_bs_ris}]")
            if dv <= 0:
                raise ValueError(f"vertical offset {dv} must be positive")

    @property
    def n_users(self) -> int:
        return len(self.d_h)


def path_loss(d, alpha, l0):
    """Large-scale power gain ``l0 * d**(-alpha)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if l0 <= 0:
        raise ValueError("reference gain must be positive")
    out = l0 * d ** (-float(alpha))
    return float(out) if out.ndim == 0 else out


def user_distances(geom: Geometry, k: int) -> tuple[float, float]:
    """Return ``(d_BU, d_RU)`` for user ``k``."""
    if not 0 <= k < geom.n_users:
        raise IndexError(f"user index {k} out of range for {geom.n_users} users")
    dh, dv = geom.d_h[k], geom.d_v[k]
    return math.hypot(dh, dv), math.hypot(geom.d_bs_ris - dh, dv)


def normalized_doppler(velocity: float, cfg: SystemConfig) -> float:
    if velocity < 0:
        raise ValueError("velocity must be non-negative")
    f_d = velocity * cfg.carrier_freq / SPEED_OF_LIGHT
    f_n = f_d * cfg.sample_interval
    if f_n >= 0.5:
        raise ValueError(f"normalized Doppler {f_n:.3f} >= 0.5 aliases at T_s={cfg.sample_interval}")
    return f_n


def link_variances(cfg: SystemConfig, geom: Geometry, k: int) -> tuple[float, float, float]:
    """Average per-coefficient power of the (direct, RIS-user, BS-RIS) links of user ``k``.

    The RIS-user variance carries the coherent aperture gain of one sub-surface
    (``group_size**2``), since all elements of a group share one coefficient.
    """
    a_bu, a_ru, a_br = cfg.pathloss_exponents
    d_bu, d_ru = user_distances(geom, k)
    shadow = cfg.shadowing_gain
    var_d = path_loss(d_bu, a_bu, cfg.pathloss_ref) * shadow
    var_g = path_loss(d_ru, a_ru, cfg.pathloss_ref) * shadow * cfg.group_size ** 2
    var_h = path_loss(geom.d_bs_ris, a_br, cfg.pathloss_ref)
    return var_d, var_g, var_h


# -- configuration file -----------------------------------------------------

_INT_KEYS = ("n_bs_antennas", "ris_elements_total", "ris_groups", "n_users", "pilot_slots",
             "train_intervals", "predict_intervals", "ar_order", "rng_seed")
_DBM_KEYS = {"pilot_power_dbm": "pilot_power", "data_power_dbm": "data_power",
             "noise_variance_dbm": "noise_variance"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def load_config(path) -> tuple[SystemConfig, Geometry]:
    """Read an INI-style file with ``[system]`` and ``[geometry]`` sections.

    Powers are given in dBm (``pilot_power_dbm`` etc.), the reference path
    loss in dB (``pathloss_ref_db``, e.g. -30) and shadowing in dB.
    """
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    return config_from_parser(parser)


def config_from_parser(parser: configparser.ConfigParser) -> tuple[SystemConfig, Geometry]:
    kwargs = {}
    if parser.has_section("system"):
        sec = parser["system"]
        for key, raw in sec.items():
            if key in _INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _DBM_KEYS:
                kwargs[_DBM_KEYS[key]] = float(dbm_to_watts(float(raw)))
            elif key == "pathloss_ref_db":
                kwargs["pathloss_ref"] = float(db_to_linear(float(raw)))
            elif key == "shadowing_db":
                kwargs["shadowing_loss"] = float(raw)
            elif key == "pathloss_exponents":
                kwargs[key] = _floats(raw)
            elif key == "doppler_grid_hz":
                kwargs["doppler_grid"] = _floats(raw)
            elif key in ("carrier_freq", "loading", "sample_interval"):
                kwargs[key] = float(raw)
            else:
                raise KeyError(f"unknown [system] key: {key}")
    geo = {}
    if parser.has_section("geometry"):
        sec = parser["geometry"]
        for key, raw in sec.items():
            if key == "d_bs_ris":
                geo[key] = float(raw)
            elif key in ("d_h", "d_v"):
                geo[key] = _floats(raw)
            else:
                raise KeyError(f"unknown [geometry] key: {key}")
    cfg = SystemConfig(**kwargs)
    geom = Geometry(**geo)
    if geom.n_users != cfg.n_users:
        raise ValueError(f"geometry lists {geom.n_users} users, config says {cfg.n_users}")
    return cfg, geom


def dump_config(cfg: SystemConfig, geom: Geometry) -> str:
    """Serialize back to the INI format read by :func:`load_config`."""
    fmt = lambda values: ", ".join(repr(float(v)) for v in values)  # noqa: E731
    lines = ["[system]"]
    for key in _INT_KEYS:
        lines.append(f"{key} = {getattr(cfg, key)}")
    for key, attr in _DBM_KEYS.items():
        lines.append(f"{key} = {float(watts_to_dbm(getattr(cfg, attr)))!r}")
    lines.append(f"pathloss_ref_db = {10 * math.log10(cfg.pathloss_ref)!r}")
    lines.append(f"shadowing_db = {cfg.shadowing_loss!r}")
    lines.append(f"pathloss_exponents = {fmt(cfg.pathloss_exponents)}")
    lines.append(f"doppler_grid_hz = {fmt(cfg.doppler_grid)}")
    for key in ("carrier_freq", "loading", "sample_interval"):
        lines.append(f"{key} = {getattr(cfg, key)!r}")
    lines += ["", "[geometry]", f"d_bs_ris = {geom.d_bs_ris!r}",
              f"d_h = {fmt(geom.d_h)}", f"d_v = {fmt(geom.d_v)}", ""]
    return "\n".join(lines)


def config_hash(cfg: SystemConfig, geom: Geometry) -> str:
    return hashlib.sha256(dump_config(cfg, geom).encode("utf-8")).hexdigest()[:16]
