"""Network geometry, large-scale fading and channel realizations.

One macro base station (MBS) in the middle of a square region feeds N
small base stations (SBS) over a wireless in-band backhaul while the
SBSs serve K single-antenna users on the access link.  Everything here
is a pure function of an explicit numpy Generator, so trials can run
concurrently on independent streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

LN10 = math.log(10.0)

# field names of the plain-text (JSON) config file, in canonical order
CONFIG_FIELDS = (
    "region_side_m", "n_sbs", "n_users_scheduled", "mbs_antennas",
    "sbs_tx_antennas", "mbs_exclusion_m", "sbs_exclusion_m", "bandwidth_hz",
    "noise_psd_dbm_hz", "si_cancellation_db", "mbs_power_dbm",
    "sbs_power_dbm", "antenna_gain_mbs_dbi", "antenna_gain_sbs_dbi",
    "shadow_std_macro_db", "shadow_std_small_db", "weights", "seed",
)

REJECTION_CAP = 10_000


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) * 1e-3


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass
class NetworkConfig:
    """Scenario parameters (defaults are the desk-scale preset)."""

    region_side_m: float = 600.0
    n_sbs: int = 4
    n_users_scheduled: int = 2
    mbs_antennas: int = 8
    sbs_tx_antennas: int = 2
    mbs_exclusion_m: float = 100.0
    sbs_exclusion_m: float = 30.0
    bandwidth_hz: float = 1e7
    noise_psd_dbm_hz: float = -174.0
    si_cancellation_db: float = 100.0
    mbs_power_dbm: float = 40.0
    sbs_power_dbm: float = 30.0
    antenna_gain_mbs_dbi: float = 15.0
    antenna_gain_sbs_dbi: float = 5.0
    shadow_std_macro_db: float = 8.0
    shadow_std_small_db: float = 10.0
    weights: tuple = ()          # empty -> all ones
    seed: int = 0

    def __post_init__(self):
        if not self.weights:
            self.weights = tuple(1.0 for _ in range(self.n_users_scheduled))
        else:
            self.weights = tuple(float(w) for w in self.weights)
        self.validate()

    def validate(self):
        for name in ("n_sbs", "n_users_scheduled", "mbs_antennas",
                     "sbs_tx_antennas"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.region_side_m <= 0:
            raise ValueError("region_side_m must be positive")
        half = self.region_side_m / 2.0
        if self.mbs_exclusion_m >= half or self.sbs_exclusion_m >= half:
            raise ValueError("exclusion radii must be < region_side_m/2")
        if len(self.weights) != self.n_users_scheduled:
            raise ValueError("weights length must equal n_users_scheduled")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if not any(w > 0 for w in self.weights):
            raise ValueError("weights must not be all zero")

    # -- unit helpers -------------------------------------------------
    @property
    def noise_w(self) -> float:
        """Receiver noise power in Watts: PSD integrated over the band."""
        psd_w_per_hz = dbm_to_watts(self.noise_psd_dbm_hz)
        return psd_w_per_hz * self.bandwidth_hz

    @property
    def beta_si_linear(self) -> float:
        return db_to_linear(-self.si_cancellation_db)

    @property
    def p_mbs_w(self) -> float:
        return dbm_to_watts(self.mbs_power_dbm)

    @property
    def p_sbs_w(self) -> float:
        return dbm_to_watts(self.sbs_power_dbm)

    # -- (de)serialization --------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        unknown = set(d) - set(CONFIG_FIELDS)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "NetworkConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class Topology:
    """Positions in meters; MBS at region center."""

    mbs_pos: np.ndarray          # (2,)
    sbs_pos: np.ndarray          # (N, 2)
    user_pos: np.ndarray         # (K, 2)


def _grid_positions(n_sbs: int, side: float) -> np.ndarray:
    """Cell centers of a g-by-g grid, skipping the center cell when g is odd.

    For n_sbs=8 this is the classic 3x3 layout with the macro cell in the
    middle; for n_sbs=4 it degenerates to the 2x2 grid.
    """
    g = max(1, math.ceil(math.sqrt(n_sbs)))
    while True:
        n_cells = g * g - (1 if g % 2 == 1 else 0)
        if n_cells >= n_sbs:
            break
        g += 1
    centers = []
    mid = (g - 1) / 2.0
    for row in range(g):
        for col in range(g):
            if g % 2 == 1 and row == mid and col == mid:
                continue  # center cell belongs to the MBS
            centers.append(((col + 0.5) * side / g, (row + 0.5) * side / g))
    return np.asarray(centers[:n_sbs], dtype=np.float64)


def generate_topology(cfg: NetworkConfig, rng: np.random.Generator) -> Topology:
    """Place the MBS, the SBS grid, and K uniform users outside the
    exclusion circles (rejection sampling, capped)."""
    side = cfg.region_side_m
    mbs = np.array([side / 2.0, side / 2.0])
    sbs = _grid_positions(cfg.n_sbs, side)

    users = np.empty((cfg.n_users_scheduled, 2))
    for k in range(cfg.n_users_scheduled):
        for _ in range(REJECTION_CAP):
            p = rng.uniform(0.0, side, size=2)
            if np.linalg.norm(p - mbs) < cfg.mbs_exclusion_m:
                continue
            if np.min(np.linalg.norm(sbs - p, axis=1)) < cfg.sbs_exclusion_m:
                continue
            users[k] = p
            break
        else:
            raise RuntimeError(
                "user placement failed after %d rejections; exclusion "
                "geometry leaves too little room" % REJECTION_CAP)
    return Topology(mbs_pos=mbs, sbs_pos=sbs, user_pos=users)


@dataclass
class LargeScale:
    """Linear power gains per link (path loss + shadowing + tx gain).

    beta_sbs_sbs[n][j] is the gain from transmitter SBS j to receiver
    SBS n; the diagonal is unused (residual self-interference is a
    scalar power factor, not a channel) and kept at 0.
    """

    beta_user_mbs: np.ndarray    # (K,)
    beta_user_sbs: np.ndarray    # (K, N)
    beta_sbs_mbs: np.ndarray     # (N,)
    beta_sbs_sbs: np.ndarray     # (N, N), diagonal 0

    def validate(self):
        offdiag = self.beta_sbs_sbs[~np.eye(len(self.beta_sbs_mbs), dtype=bool)]
        for arr in (self.beta_user_mbs, self.beta_user_sbs,
                    self.beta_sbs_mbs, offdiag):
            if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
                raise ValueError("large-scale gains must be positive finite")


# path-loss laws in dB with distance in km
def _pl_mbs_user(d_km):
    return 128.1 + 37.6 * np.log10(d_km)


def _pl_sbs_user(d_km):
    return 140.7 + 36.7 * np.log10(d_km)


def _pl_mbs_sbs(d_km):
    return 103.4 + 24.2 * np.log10(d_km)


def _pl_sbs_sbs(d_km):
    return 103.8 + 20.9 * np.log10(d_km)


def _beta(pl_db, shadow_db, gain_dbi):
    return 10.0 ** (-(pl_db + shadow_db - gain_dbi) / 10.0)


def compute_large_scale(topo: Topology, cfg: NetworkConfig,
                        rng: np.random.Generator) -> LargeScale:
    """Large-scale gain of every link.

    beta = 10^(-(PL(d_km) + shadow - G_tx)/10) with log-normal shadowing
    drawn per link (macro std for MBS transmitters, small-cell std for
    SBS transmitters) and the transmitter-tier antenna gain.
    """
    K = cfg.n_users_scheduled
    N = cfg.n_sbs
    d_um = np.linalg.norm(topo.user_pos - topo.mbs_pos, axis=1) / 1000.0
    d_us = np.linalg.norm(
        topo.user_pos[:, None, :] - topo.sbs_pos[None, :, :], axis=2) / 1000.0
    d_sm = np.linalg.norm(topo.sbs_pos - topo.mbs_pos, axis=1) / 1000.0
    d_ss = np.linalg.norm(
        topo.sbs_pos[:, None, :] - topo.sbs_pos[None, :, :], axis=2) / 1000.0

    sh_um = rng.normal(0.0, cfg.shadow_std_macro_db, size=K)
    sh_us = rng.normal(0.0, cfg.shadow_std_small_db, size=(K, N))
    sh_sm = rng.normal(0.0, cfg.shadow_std_macro_db, size=N)
    sh_ss = rng.normal(0.0, cfg.shadow_std_small_db, size=(N, N))

    g_m = cfg.antenna_gain_mbs_dbi
    g_s = cfg.antenna_gain_sbs_dbi
    beta_um = _beta(_pl_mbs_user(d_um), sh_um, g_m)
    beta_us = _beta(_pl_sbs_user(d_us), sh_us, g_s)
    beta_sm = _beta(_pl_mbs_sbs(d_sm), sh_sm, g_m)
    with np.errstate(divide="ignore"):
        pl_ss = _pl_sbs_sbs(np.where(d_ss > 0, d_ss, 1.0))
    beta_ss = _beta(pl_ss, sh_ss, g_s)
    np.fill_diagonal(beta_ss, 0.0)

    ls = LargeScale(beta_user_mbs=beta_um, beta_user_sbs=beta_us,
                    beta_sbs_mbs=beta_sm, beta_sbs_sbs=beta_ss)
    ls.validate()
    return ls


@dataclass
class ChannelSet:
    """One small-scale realization: h = sqrt(beta) * g, g ~ CN(0, I).

    The SBS self-interference channel is not drawn; the residual SI
    power enters the backhaul interference directly through beta_si.
    """

    h_user_mbs: np.ndarray       # (K, M)
    h_user_sbs: np.ndarray       # (K, N, L)
    h_sbs_mbs: np.ndarray        # (N, M)
    h_sbs_sbs: np.ndarray        # (N, N, L), h_sbs_sbs[n, j] = SBS j -> SBS n
    large_scale: LargeScale
    noise_user: np.ndarray       # (K,) Watts
    noise_sbs: np.ndarray        # (N,) Watts
    beta_si: float

    @property
    def dims(self):
        K, N, L = self.h_user_sbs.shape
        M = self.h_user_mbs.shape[1]
        return K, N, L, M

    def copy(self) -> "ChannelSet":
        return ChannelSet(
            h_user_mbs=self.h_user_mbs.copy(),
            h_user_sbs=self.h_user_sbs.copy(),
            h_sbs_mbs=self.h_sbs_mbs.copy(),
            h_sbs_sbs=self.h_sbs_sbs.copy(),
            large_scale=self.large_scale,
            noise_user=self.noise_user.copy(),
            noise_sbs=self.noise_sbs.copy(),
            beta_si=self.beta_si,
        )


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with unit variance per entry."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return (re + 1j * im) / math.sqrt(2.0)


def sample_channels(ls: LargeScale, cfg: NetworkConfig,
                    rng: np.random.Generator) -> ChannelSet:
    """Draw one i.i.d. realization of every link."""
    ls.validate()
    K = cfg.n_users_scheduled
    N = cfg.n_sbs
    L = cfg.sbs_tx_antennas
    M = cfg.mbs_antennas

    h_um = complex_normal(rng, (K, M)) * np.sqrt(ls.beta_user_mbs)[:, None]
    h_us = complex_normal(rng, (K, N, L)) * np.sqrt(ls.beta_user_sbs)[:, :, None]
    h_sm = complex_normal(rng, (N, M)) * np.sqrt(ls.beta_sbs_mbs)[:, None]
    h_ss = complex_normal(rng, (N, N, L)) * np.sqrt(ls.beta_sbs_sbs)[:, :, None]
    for n in range(N):
        h_ss[n, n, :] = 0.0

    noise = cfg.noise_w
    return ChannelSet(
        h_user_mbs=h_um, h_user_sbs=h_us, h_sbs_mbs=h_sm, h_sbs_sbs=h_ss,
        large_scale=ls,
        noise_user=np.full(K, noise), noise_sbs=np.full(N, noise),
        beta_si=cfg.beta_si_linear,
    )
