"""
Two-tier HetNet scenarios: topology drop, pathloss/shadowing channels,
SINR, per-user Shannon rates and dBm/Hz <-> Watt conversions.

All logarithms are natural; rates are in nats/s.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MACRO = "macro"
SMALL = "small"

SCENARIO_FORMAT = "uee-hetnet-scenario/1"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Experiment and scenario parameters.

    Defaults reproduce the two-tier setup used throughout: 10 MHz, 500 m
    cell, one macro BS, three small BSs, 30 users, -27/-47 dBm/Hz power
    limits and 1 W circuit power.  Noise density and placement guards are
    not part of that table and are local choices.
    """

    bandwidth_hz: float = 10e6
    cell_radius_m: float = 500.0
    n_macro: int = 1
    n_small: int = 3
    n_users: int = 30
    macro_power_dbm_per_hz: float = -27.0
    small_power_dbm_per_hz: float = -47.0
    circuit_power_w: float = 1.0
    noise_density_dbm_per_hz: float = -174.0
    shadowing_std_db: float = 8.0
    small_guard_m: float = 40.0
    min_distance_m: float = 10.0
    rayleigh: bool = False
    n_drops: int = 200
    seed: int = 0
    algorithms: tuple = ("proposed", "maxsinr_pc", "maxsinr_maxpower")
    rate_unit: str = "nats"
    # solver tolerances
    assoc_tol: float = 1e-3
    assoc_max_iter: int = 2000
    power_tol: float = 1e-4
    power_max_iter: int = 5000
    inner_tol: float = 1e-4
    max_inner: int = 20
    max_outer: int = 20
    varsigma_per_user: float = 1e-3
    # oracle-check settings
    oracle_instances: int = 50
    oracle_levels: int = 12
    output_dir: str = "results"

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        self.validate()

    def validate(self):
        if self.n_macro < 1 and self.n_small < 1:
            raise ConfigError("need at least one base station")
        if self.n_macro < 0 or self.n_small < 0:
            raise ConfigError("BS counts must be nonnegative")
        if self.n_macro > 1:
            raise ConfigError("only a single macro BS (at the origin) is supported")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.cell_radius_m <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("cell_radius_m and bandwidth_hz must be positive")
        if self.circuit_power_w < 0:
            raise ConfigError("circuit_power_w must be nonnegative")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing_std_db must be nonnegative")
        if self.min_distance_m <= 0 or self.small_guard_m < 0:
            raise ConfigError("invalid placement guards")
        if max(self.small_guard_m, self.min_distance_m) >= self.cell_radius_m:
            raise ConfigError("placement guards exceed the cell radius")
        if self.n_drops < 1:
            raise ConfigError("n_drops must be >= 1")
        unknown = set(self.algorithms) - {"proposed", "maxsinr_pc", "maxsinr_maxpower"}
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown or empty algorithm list: {sorted(unknown)}")
        if self.rate_unit not in ("nats", "bits"):
            raise ConfigError("rate_unit must be 'nats' or 'bits'")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (json.JSONDecodeError, FileNotFoundError, IsADirectoryError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["algorithms"] = list(self.algorithms)
        return d


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str
    position: tuple
    max_power: float
    power_density_dbm_per_hz: float


@dataclass(frozen=True)
class User:
    id: int
    position: tuple


@dataclass(frozen=True)
class ChannelMatrix:
    """Linear power gains, users x BSs.

    ``largescale_gains`` holds pathloss and shadowing only; it equals
    ``gains`` unless Rayleigh fading is switched on.
    """

    gains: np.ndarray
    largescale_gains: np.ndarray

    def __post_init__(self):
        for g in (self.gains, self.largescale_gains):
            if g.ndim != 2 or not np.all(np.isfinite(g)) or np.any(g <= 0):
                raise ValueError("channel gains must be a finite, strictly positive matrix")
        if self.gains.shape != self.largescale_gains.shape:
            raise ValueError("gain matrices differ in shape")


@dataclass(frozen=True)
class Scenario:
    bss: tuple
    users: tuple
    channel: ChannelMatrix
    bandwidth_hz: float
    noise_power: float
    circuit_power: float
    seed: int = 0

    def __post_init__(self):
        if len(self.bss) < 1 or len(self.users) < 1:
            raise ValueError("scenario needs at least one BS and one user")
        if self.channel.gains.shape != (len(self.users), len(self.bss)):
            raise ValueError("channel shape does not match users x BSs")
        if self.bandwidth_hz <= 0 or self.noise_power <= 0:
            raise ValueError("bandwidth and noise power must be positive")

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_bs(self):
        return len(self.bss)

    @property
    def gains(self):
        return self.channel.gains

    @property
    def max_power(self):
        return np.array([bs.max_power for bs in self.bss], dtype=float)

    @property
    def macro_mask(self):
        return np.array([bs.kind == MACRO for bs in self.bss])

    def checksum(self):
        """Short content hash, used to prove algorithms saw the same drop."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.channel.gains).tobytes())
        h.update(np.ascontiguousarray(self.channel.largescale_gains).tobytes())
        h.update(np.array([self.bandwidth_hz, self.noise_power, self.circuit_power]).tobytes())
        h.update(self.max_power.tobytes())
        return h.hexdigest()[:16]


def pathloss_db(d_km):
    """Macro-cell pathloss ``128.1 + 37.6 log10(d)`` with ``d`` in km."""
    d_km = np.asarray(d_km, dtype=float)
    if np.any(d_km <= 0):
        raise ValueError("distance must be positive")
    out = 128.1 + 37.6 * np.log10(d_km)
    return float(out) if out.ndim == 0 else out


def power_from_density(dbm_per_hz, bandwidth_hz):
    """Total power in W for a flat PSD given in dBm/Hz."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return 10.0 ** (dbm_per_hz / 10.0) / 1000.0 * bandwidth_hz


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def _uniform_disc(rng, n, radius, r_min=0.0):
    # area-uniform radius on the annulus [r_min, radius]
    u = rng.uniform(size=n)
    r = np.sqrt(r_min**2 + u * (radius**2 - r_min**2))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def generate_scenario(config, seed):
    """Drop one scenario.

    The macro BS sits at the origin.  Small BSs are uniform in the disc
    outside a guard ring around the macro; users are uniform in the disc
    and are redrawn until they keep ``min_distance_m`` from every BS.
    Gains are pathloss times i.i.d. log-normal shadowing per user-BS link,
    optionally times a unit-mean exponential (Rayleigh power) factor.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    W = config.bandwidth_hz

    bs_pos = [np.zeros(2)] * config.n_macro
    if config.n_small:
        bs_pos += list(_uniform_disc(rng, config.n_small, config.cell_radius_m, config.small_guard_m))
    bs_pos = np.array(bs_pos).reshape(-1, 2)
    kinds = [MACRO] * config.n_macro + [SMALL] * config.n_small
    dens = [config.macro_power_dbm_per_hz] * config.n_macro + [config.small_power_dbm_per_hz] * config.n_small
    bss = tuple(
        BaseStation(j, kinds[j], (float(bs_pos[j, 0]), float(bs_pos[j, 1])),
                    power_from_density(dens[j], W), float(dens[j]))
        for j in range(len(kinds))
    )

    ue_pos = np.empty((config.n_users, 2))
    todo = np.arange(config.n_users)
    while todo.size:
        ue_pos[todo] = _uniform_disc(rng, todo.size, config.cell_radius_m)
        d = np.linalg.norm(ue_pos[todo, None, :] - bs_pos[None, :, :], axis=2)
        todo = todo[np.any(d < config.min_distance_m, axis=1)]
    users = tuple(User(i, (float(p[0]), float(p[1]))) for i, p in enumerate(ue_pos))

    dist_km = np.linalg.norm(ue_pos[:, None, :] - bs_pos[None, :, :], axis=2) / 1000.0
    shadow_db = rng.normal(0.0, config.shadowing_std_db, size=dist_km.shape)
    largescale = db_to_linear(-pathloss_db(dist_km) + shadow_db)
    gains = largescale * rng.exponential(1.0, size=dist_km.shape) if config.rayleigh else largescale.copy()

    noise = power_from_density(config.noise_density_dbm_per_hz, W)
    return Scenario(bss, users, ChannelMatrix(gains, largescale), W, noise, config.circuit_power_w, int(seed))


def make_scenario(gains, max_power, bandwidth_hz=1.0, noise_power=1.0, circuit_power=1.0,
                  kinds=None, largescale_gains=None):
    """Build a scenario straight from a gain matrix (tests, toy problems)."""
    gains = np.atleast_2d(np.asarray(gains, dtype=float))
    n_u, n_b = gains.shape
    max_power = np.broadcast_to(np.asarray(max_power, dtype=float), (n_b,))
    if kinds is None:
        kinds = [MACRO] + [SMALL] * (n_b - 1)
    bss = tuple(BaseStation(j, kinds[j], (0.0, 0.0), float(max_power[j]), float("nan")) for j in range(n_b))
    users = tuple(User(i, (0.0, 0.0)) for i in range(n_u))
    ls = gains.copy() if largescale_gains is None else np.asarray(largescale_gains, dtype=float)
    return Scenario(bss, users, ChannelMatrix(gains.copy(), ls), float(bandwidth_hz), float(noise_power),
                    float(circuit_power))


def sinr_matrix(scenario, p, gains=None):
    """SINR of every user towards every BS, shape (N_u, N_B).

    ``SINR_ij = h_ij p_j / (sum_{q != j} h_iq p_q + noise)``.
    """
    h = scenario.channel.gains if gains is None else gains
    rx = h * np.asarray(p, dtype=float)[None, :]
    return rx / (rx.sum(axis=1, keepdims=True) - rx + scenario.noise_power)


def sinr(i, j, p, scenario):
    return float(sinr_matrix(scenario, p)[i, j])


def rate(k, sinr_value, bandwidth_hz):
    """Shannon rate in nats/s of a user sharing ``bandwidth_hz`` with ``k - 1`` others."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("load must be >= 1 for a served user")
    return bandwidth_hz / k * np.log1p(sinr_value)


def user_rates(scenario, x, p):
    """Rates (nats/s) of all users under association matrix ``x`` and power ``p``."""
    x = np.asarray(x)
    serving = np.argmax(x, axis=1)
    k = x.sum(axis=0)
    s = sinr_matrix(scenario, p)[np.arange(scenario.n_users), serving]
    return rate(k[serving], s, scenario.bandwidth_hz)


# ---------------------------------------------------------------- serialization

def scenario_to_dict(scenario):
    return {
        "format": SCENARIO_FORMAT,
        "seed": scenario.seed,
        "bandwidth_hz": scenario.bandwidth_hz,
        "noise_power_w": scenario.noise_power,
        "circuit_power_w": scenario.circuit_power,
        "base_stations": [
            {"id": b.id, "kind": b.kind, "position_m": list(b.position), "max_power_w": b.max_power,
             "power_density_dbm_per_hz": None if np.isnan(b.power_density_dbm_per_hz) else b.power_density_dbm_per_hz}
            for b in scenario.bss
        ],
        "users": [{"id": u.id, "position_m": list(u.position)} for u in scenario.users],
        "gains": scenario.channel.gains.tolist(),
        "largescale_gains": scenario.channel.largescale_gains.tolist(),
    }


def scenario_from_dict(d):
    if d.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"unsupported scenario format {d.get('format')!r}")
    bss = tuple(
        BaseStation(b["id"], b["kind"], tuple(b["position_m"]), float(b["max_power_w"]),
                    float("nan") if b["power_density_dbm_per_hz"] is None else float(b["power_density_dbm_per_hz"]))
        for b in d["base_stations"]
    )
    users = tuple(User(u["id"], tuple(u["position_m"])) for u in d["users"])
    ch = ChannelMatrix(np.array(d["gains"], dtype=float), np.array(d["largescale_gains"], dtype=float))
    return Scenario(bss, users, ch, float(d["bandwidth_hz"]), float(d["noise_power_w"]),
                    float(d["circuit_power_w"]), int(d["seed"]))


def save_scenario(scenario, path):
    """Write a scenario as JSON.  Floats are written with ``repr`` precision
    (17 significant digits), so loading gives back identical arrays."""
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1))


def load_scenario(path):
    return scenario_from_dict(json.loads(Path(path).read_text()))
