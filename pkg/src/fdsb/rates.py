"""Rate model: clusterings, beamformers, SIC ordering and exact rates.

The downlink has two hops.  The MBS multicasts one backhaul stream per
user to that user's SBS cluster while the clustered SBSs jointly
beamform the access signal, transmitting and receiving in-band at the
same time (residual self-interference enters the backhaul noise floor
as a power leak proportional to the SBS transmit power).  A user's
end-to-end rate is the minimum of its access rate and the worst
backhaul rate across its cluster; empty clusters mean rate zero.

Heavy lifting is delegated to the selected kernel backend.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import get_kernels
from .network import ChannelSet, NetworkConfig, complex_normal


@dataclass
class Clustering:
    """Binary user/SBS association: ``active[k, n]`` means SBS n serves
    user k.  Users with an all-zero row are allowed (rate zero)."""

    active: np.ndarray

    def __post_init__(self):
        self.active = np.ascontiguousarray(self.active, dtype=bool)
        if self.active.ndim != 2:
            raise ValueError("clustering matrix must be 2-D (users x SBSs)")

    @classmethod
    def full(cls, n_users, n_sbs):
        return cls(np.ones((n_users, n_sbs), dtype=bool))

    @property
    def shape(self):
        return self.active.shape

    @property
    def has_cluster(self):
        """Per-user flag: at least one serving SBS."""
        return self.active.any(axis=1)

    def sbs_of(self, k):
        """Indices of the SBSs serving user k."""
        return np.nonzero(self.active[k])[0]

    def users_of(self, n):
        """Indices of the users served by SBS n."""
        return np.nonzero(self.active[:, n])[0]

    @property
    def n_links(self):
        return int(self.active.sum())

    def copy(self):
        return Clustering(self.active.copy())

    def __eq__(self, other):
        return isinstance(other, Clustering) \
            and np.array_equal(self.active, other.active)


@dataclass
class PowerBudgets:
    """Transmit power caps in Watts: one for the MBS, one per SBS."""

    p_mbs: float
    p_sbs: np.ndarray

    def __post_init__(self):
        self.p_sbs = np.ascontiguousarray(self.p_sbs, dtype=np.float64)
        if self.p_mbs <= 0 or np.any(self.p_sbs <= 0):
            raise ValueError("power budgets must be positive")

    @classmethod
    def from_config(cls, cfg: NetworkConfig):
        return cls(cfg.p_mbs_w, np.full(cfg.n_sbs, cfg.p_sbs_w))


@dataclass
class BeamformerSet:
    """Access beams ``w[k, n]`` (length L) and backhaul multicast beams
    ``v[k]`` (length M)."""

    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.complex128)
        self.v = np.ascontiguousarray(self.v, dtype=np.complex128)

    @classmethod
    def zeros(cls, dims):
        K, N, L, M = dims
        return cls(np.zeros((K, N, L), np.complex128),
                   np.zeros((K, M), np.complex128))

    def copy(self):
        return BeamformerSet(self.w.copy(), self.v.copy())

    def sbs_powers(self):
        """Per-SBS spent power, summed over served users."""
        return (np.abs(self.w) ** 2).sum(axis=(0, 2))

    def mbs_power(self):
        return float((np.abs(self.v) ** 2).sum())

    def link_powers(self):
        """Per-(user, SBS) access beam power, shape (K, N)."""
        return (np.abs(self.w) ** 2).sum(axis=2)

    def is_zero(self, tol=0.0):
        return bool((np.abs(self.w) <= tol).all()
                    and (np.abs(self.v) <= tol).all())


@dataclass
class DecodingOrder:
    """Common SIC decoding order used by every SBS on the backhaul.

    Users are decoded by descending aggregate access-channel gain;
    on ties, the lower index decodes later.  ``later[k, i]`` is True
    when i's message is still undecoded while k's is being decoded
    (so i interferes with k wherever both are served)."""

    h_aggregate: np.ndarray
    order: np.ndarray
    later: np.ndarray

    @classmethod
    def from_aggregate(cls, h_aggregate):
        h = np.asarray(h_aggregate, dtype=np.float64)
        K = h.shape[0]
        order = np.array(sorted(range(K), key=lambda k: (-h[k], -k)),
                         dtype=np.int64)
        idx = np.arange(K)
        later = (h[None, :] < h[:, None]) \
            | ((h[None, :] == h[:, None]) & (idx[None, :] < idx[:, None]))
        return cls(h, order, np.ascontiguousarray(later))

    def interferers(self, k, n, cl: Clustering):
        """SIC interference set of (user k, SBS n): users whose backhaul
        messages SBS n cannot cancel when decoding k's."""
        K = self.later.shape[0]
        return [i for i in range(K)
                if (not cl.active[i, n]) or self.later[k, i]]


def decoding_order(ch: ChannelSet) -> DecodingOrder:
    """Order from the true aggregate access gains."""
    h_agg = (np.abs(ch.h_user_sbs) ** 2).sum(axis=(1, 2))
    return DecodingOrder.from_aggregate(h_agg)


def expected_decoding_order(ch_known, ls, cl: Clustering) -> DecodingOrder:
    """Order from expected aggregate gains when only serving-link access
    channels are known: unknown links contribute mean power L*beta."""
    act = cl.active
    L = ch_known.shape[2]
    known = (np.abs(ch_known) ** 2).sum(axis=2) * act
    h_agg = known.sum(axis=1) + (ls.beta_user_sbs * L * (~act)).sum(axis=1)
    return DecodingOrder.from_aggregate(h_agg)


@dataclass
class RateReport:
    """Per-user rates in bits/s/Hz plus the weighted sum objective."""

    access: np.ndarray
    backhaul_per_sbs: np.ndarray
    backhaul: np.ndarray
    end_to_end: np.ndarray
    weighted_sum: float
    weights: np.ndarray = field(default=None)

    def mbps(self, bandwidth_hz):
        """End-to-end user throughputs scaled by the bandwidth."""
        return self.end_to_end * bandwidth_hz / 1e6


def _ch_args(ch: ChannelSet):
    return (ch.h_user_mbs, ch.h_user_sbs, ch.h_sbs_mbs, ch.h_sbs_sbs)


def interference_access(k, x: BeamformerSet, ch: ChannelSet, cl: Clustering):
    """Received interference power at user k: every backhaul beam plus
    the other users' access signals."""
    kern = get_kernels()
    ordr = decoding_order(ch)
    _, _, phi, _, _, _ = kern.rates_core(
        x.w, x.v, *_ch_args(ch), cl.active, ordr.later, ch.beta_si,
        ch.noise_user, ch.noise_sbs)
    return float(phi[k])


def access_rate(k, x: BeamformerSet, ch: ChannelSet, cl: Clustering):
    """Access-hop rate of user k (0 when unserved)."""
    kern = get_kernels()
    ordr = decoding_order(ch)
    access, _, _, _, _, _ = kern.rates_core(
        x.w, x.v, *_ch_args(ch), cl.active, ordr.later, ch.beta_si,
        ch.noise_user, ch.noise_sbs)
    return float(access[k])


def interference_backhaul(k, n, x: BeamformerSet, ch: ChannelSet,
                          cl: Clustering, ordr: DecodingOrder):
    """Interference-plus-leakage power at SBS n while decoding user k's
    backhaul message: undecodable backhaul beams, access signals of
    SBSs outside the cluster, and residual self-interference."""
    if not cl.active[k, n]:
        raise ValueError(f"user {k} is not served by SBS {n}")
    kern = get_kernels()
    _, _, _, delta, _, _ = kern.rates_core(
        x.w, x.v, *_ch_args(ch), cl.active, ordr.later, ch.beta_si,
        ch.noise_user, ch.noise_sbs)
    return float(delta[k, n])


def backhaul_rate_per_sbs(k, n, x: BeamformerSet, ch: ChannelSet,
                          cl: Clustering, ordr: DecodingOrder):
    """Rate at which SBS n decodes user k's backhaul message."""
    if not cl.active[k, n]:
        raise ValueError(f"user {k} is not served by SBS {n}")
    kern = get_kernels()
    _, bkh, _, _, _, _ = kern.rates_core(
        x.w, x.v, *_ch_args(ch), cl.active, ordr.later, ch.beta_si,
        ch.noise_user, ch.noise_sbs)
    return float(bkh[k, n])


def end_to_end_rates(x: BeamformerSet, ch: ChannelSet, cl: Clustering,
                     ordr: DecodingOrder, weights) -> RateReport:
    """Full rate report: access, per-SBS and bottleneck backhaul,
    end-to-end min, and the weighted sum objective."""
    kern = get_kernels()
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    access, bkh, _, _, _, _ = kern.rates_core(
        x.w, x.v, *_ch_args(ch), cl.active, ordr.later, ch.beta_si,
        ch.noise_user, ch.noise_sbs)
    act = cl.active
    backhaul = np.where(act.any(axis=1),
                        np.where(act, bkh, np.inf).min(axis=1), 0.0)
    end = np.minimum(access, backhaul)
    return RateReport(access=access, backhaul_per_sbs=bkh, backhaul=backhaul,
                      end_to_end=end,
                      weighted_sum=float(np.dot(weights, end)),
                      weights=weights)


def project_feasible(x: BeamformerSet, cl: Clustering,
                     budgets: PowerBudgets) -> BeamformerSet:
    """Euclidean projection onto the feasible set: zero out inactive
    beams, then radially rescale each over-budget transmitter."""
    kern = get_kernels()
    w2, v2 = kern.project(x.w, x.v, cl.active, budgets.p_mbs, budgets.p_sbs)
    return BeamformerSet(w2, v2)


def is_feasible(x: BeamformerSet, cl: Clustering, budgets: PowerBudgets,
                tol=1e-9):
    """Check the zero-pattern and the power caps (with slack tol)."""
    act = cl.active
    if np.any(np.abs(x.w[~act]) > 0):
        return False
    if np.any(np.abs(x.v[~cl.has_cluster]) > 0):
        return False
    if x.mbs_power() > budgets.p_mbs * (1 + tol):
        return False
    return bool(np.all(x.sbs_powers() <= budgets.p_sbs * (1 + tol)))


def random_feasible(dims, cl: Clustering, budgets: PowerBudgets, rng,
                    fraction=0.5) -> BeamformerSet:
    """Random interior starting point: complex-Gaussian directions with
    the zero-pattern applied, scaled so each transmitter spends the
    given fraction of its budget."""
    K, N, L, M = dims
    w = complex_normal(rng, (K, N, L)) * cl.active[:, :, None]
    v = complex_normal(rng, (K, M)) * cl.has_cluster[:, None]
    pw = (np.abs(w) ** 2).sum(axis=(0, 2))
    for n in range(N):
        if pw[n] > 0:
            w[:, n, :] *= np.sqrt(fraction * budgets.p_sbs[n] / pw[n])
    pv = (np.abs(v) ** 2).sum()
    if pv > 0:
        v *= np.sqrt(fraction * budgets.p_mbs / pv)
    return BeamformerSet(w, v)
