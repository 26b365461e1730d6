"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Values given later (command-line
overrides after the file) replace earlier ones. Every key is checked against
its domain; a problem raises :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .link_abstraction import RicianLink
from .phy_model import LinkParams
from .scenarios import ADDRESS_MODELS, FREE_PARAMETERS, AddressModel

SWEEP_PARAMS = ("sigma_v2", "channel_gain", "noise_power", "eps_cross")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"config error: {where}{key}: {message}")
        self.key = key
        self.line = line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.replace(" ", "").split(",") if p)


def _names(s: str) -> tuple:
    return tuple(p for p in s.replace(" ", "").split(",") if p)


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


@dataclass(frozen=True)
class RunConfig:
    address_model: str = "branch-split"
    address_bits: int = 3
    users: tuple = (2, 3, 4)
    gamma: float = 1.0
    channel_gain: float | None = None  # |h|; overrides gamma as |h|^2 * tx_power
    tx_power: float = 1.0
    sigma_v2: float = 0.001
    eps_self: float = 0.001
    eps_cross: float = 0.2
    noise_power: float = 0.1
    user_gamma: tuple = ()  # optional per-user received powers
    k_factor: float = 4.0
    packet_len_bits: int = 1024
    sweep_param: str = "sigma_v2"
    sweep_from: float = 0.0
    sweep_to: float = 0.1
    sweep_steps: int = 21
    ideal_noise_power: float = 1e-9
    calibrate_free: tuple = ("snr", "sigma_v2")
    n_symbols: int = 100_000
    mc_trials: int = 0
    workers: int = 1
    seed: int = 1
    out: str = "out"
    eq3_as_printed: bool = False
    mgf_as_printed: bool = False
    count_idle_slots: bool = True

    # -------------------------------------------------------------- views

    def link(self) -> LinkParams:
        gamma = self.gamma if self.channel_gain is None else self.channel_gain ** 2 * self.tx_power
        return LinkParams(gamma, self.sigma_v2, self.eps_self, self.eps_cross, self.noise_power)

    def links_for(self, M: int):
        """One shared link, or a per-user list when ``user_gamma`` is set."""
        base = self.link()
        if not self.user_gamma:
            return base
        if len(self.user_gamma) < M:
            raise ConfigError("user_gamma", f"needs at least {M} entries, got {len(self.user_gamma)}")
        return [base.with_(gamma=g) for g in self.user_gamma[:M]]

    def rician(self) -> RicianLink:
        return RicianLink(self.k_factor, self.packet_len_bits, self.mgf_as_printed)

    def address(self, M: int) -> AddressModel:
        return AddressModel(self.address_model, self.address_bits, M)

    def sweep_values(self) -> list[float]:
        if self.sweep_steps == 1:
            return [self.sweep_from]
        step = (self.sweep_to - self.sweep_from) / (self.sweep_steps - 1)
        return [self.sweep_from + i * step for i in range(self.sweep_steps)]


_PARSERS = {
    "address_model": str.strip,
    "address_bits": int,
    "users": _ints,
    "gamma": float,
    "channel_gain": _opt_float,
    "tx_power": float,
    "sigma_v2": float,
    "eps_self": float,
    "eps_cross": float,
    "noise_power": float,
    "user_gamma": _floats,
    "k_factor": float,
    "packet_len_bits": int,
    "sweep_param": str.strip,
    "sweep_from": float,
    "sweep_to": float,
    "sweep_steps": int,
    "ideal_noise_power": float,
    "calibrate_free": _names,
    "n_symbols": int,
    "mc_trials": int,
    "workers": int,
    "seed": int,
    "out": str.strip,
    "eq3_as_printed": _bool,
    "mgf_as_printed": _bool,
    "count_idle_slots": _bool,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}

KEYS = tuple(_PARSERS)


def _check(cfg: RunConfig) -> None:
    """Raise ConfigError for the first out-of-domain field."""
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(key, msg)

    need(cfg.address_model in ADDRESS_MODELS, "address_model", f"must be one of {ADDRESS_MODELS}")
    need(1 <= cfg.address_bits <= 12, "address_bits", "must be in 1..12")
    need(len(cfg.users) > 0 and all(m >= 1 for m in cfg.users), "users", "must list integers >= 1")
    if cfg.address_model != "iid-bits":
        need(max(cfg.users) <= 2 ** cfg.address_bits, "users",
             f"cannot exceed 2^address_bits = {2 ** cfg.address_bits}")
    for key in ("gamma", "tx_power", "sigma_v2"):
        v = getattr(cfg, key)
        need(math.isfinite(v) and v >= 0, key, "must be a finite value >= 0")
    if cfg.channel_gain is not None:
        need(math.isfinite(cfg.channel_gain) and cfg.channel_gain >= 0, "channel_gain", "must be >= 0")
    need(0 <= cfg.eps_self < 1, "eps_self", "must be in [0, 1)")
    need(0 <= cfg.eps_cross < 1, "eps_cross", "must be in [0, 1)")
    need(cfg.eps_self <= cfg.eps_cross, "eps_self", "must not exceed eps_cross")
    need(math.isfinite(cfg.noise_power) and cfg.noise_power > 0, "noise_power", "must be > 0")
    need(all(math.isfinite(g) and g >= 0 for g in cfg.user_gamma), "user_gamma", "entries must be >= 0")
    need(math.isfinite(cfg.k_factor) and cfg.k_factor >= 0, "k_factor", "must be >= 0")
    need(cfg.packet_len_bits >= 1, "packet_len_bits", "must be >= 1")
    need(cfg.sweep_param in SWEEP_PARAMS, "sweep_param", f"must be one of {SWEEP_PARAMS}")
    need(cfg.sweep_steps >= 1, "sweep_steps", "must be >= 1")
    lo, hi = sorted((cfg.sweep_from, cfg.sweep_to))
    need(math.isfinite(lo) and math.isfinite(hi), "sweep_from", "range must be finite")
    need(lo >= 0, "sweep_from", "sweep values must be >= 0")
    if cfg.sweep_param == "noise_power":
        need(lo > 0, "sweep_from", "noise_power sweep values must be > 0")
    if cfg.sweep_param == "eps_cross":
        need(hi < 1, "sweep_to", "eps_cross sweep values must be < 1")
    need(cfg.ideal_noise_power > 0, "ideal_noise_power", "must be > 0")
    need(len(cfg.calibrate_free) >= 1 and set(cfg.calibrate_free) <= set(FREE_PARAMETERS),
         "calibrate_free", f"must list names from {FREE_PARAMETERS}")
    need(cfg.n_symbols >= 2, "n_symbols", "must be >= 2")
    need(cfg.mc_trials >= 0, "mc_trials", "must be >= 0")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    need(bool(cfg.out), "out", "must not be empty")


def apply_overrides(cfg: RunConfig, pairs, lines=None) -> RunConfig:
    """Apply ``(key, raw_value)`` pairs in order; ``lines`` gives file line numbers."""
    changes = {}
    for idx, (key, raw) in enumerate(pairs):
        line = lines[idx] if lines else None
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key", line)
        try:
            changes[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(key, f"bad value {raw!r} ({exc})", line) from None
    out = replace(cfg, **changes)
    _check(out)
    return out


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    pairs, lines = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(s.split()[0], "expected 'key = value'", n)
        key, value = s.split("=", 1)
        pairs.append((key.strip(), value.strip()))
        lines.append(n)
    return apply_overrides(base or RunConfig(), pairs, lines)


def load(path) -> RunConfig:
    return parse_text(Path(path).read_text())


def dump(cfg: RunConfig) -> str:
    """Text that :func:`parse_text` turns back into ``cfg``."""
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif v is None:
            s = "none"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"
