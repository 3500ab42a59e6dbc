"""Alamouti-coded common stream: mapping, combining and rates.

Conventions: the received signal is ``y = h^H x + n``.  Rates are per
two-symbol space-time block per Hz, i.e. the two-slot sum written as a
single log term; divide by 2 for a per-slot figure.

For more than two feeds the common stream rides on a selected feed pair
``(m, n)`` (0-based indices here), embedded through an ``N_t x 2`` selection
matrix.  The common-signal energy then only sees ``h[m]`` and ``h[n]`` while
the private streams interfere through the full channel.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet


@dataclass(frozen=True)
class StBlock:
    slot1: np.ndarray
    slot2: np.ndarray


@dataclass(frozen=True)
class FeedPair:
    m: int
    n: int
    n_t: int

    def __post_init__(self):
        if not 0 <= self.m < self.n < self.n_t:
            raise ValueError(f"invalid feed pair ({self.m}, {self.n}) for N_t={self.n_t}")

    @property
    def embed(self) -> np.ndarray:
        pi = np.zeros((self.n_t, 2))
        pi[self.m, 0] = 1.0
        pi[self.n, 1] = 1.0
        return pi

    @property
    def index(self) -> list[int]:
        return [self.m, self.n]


def default_pair(n_t: int) -> FeedPair:
    return FeedPair(0, 1, n_t)


def alamouti_encode(s1: complex, s2: complex) -> StBlock:
    return StBlock(slot1=np.array([s1, s2], dtype=complex),
                   slot2=np.array([-np.conj(s2), np.conj(s1)], dtype=complex))


def embed_common(pair: FeedPair, st: StBlock) -> tuple[np.ndarray, np.ndarray]:
    pi = pair.embed
    return pi @ st.slot1, pi @ st.slot2


def stacked_matrix(h_pair) -> np.ndarray:
    """Effective 2x2 channel seen by ``[y(t), y(t+T)^*]``."""
    h1, h2 = np.asarray(h_pair, dtype=complex)
    return np.array([[np.conj(h1), np.conj(h2)], [h2, -h1]])


def combining_matrix(h_pair) -> np.ndarray:
    h1, h2 = np.asarray(h_pair, dtype=complex)
    return np.array([[h1, np.conj(h2)], [h2, -np.conj(h1)]])


def effective_matrix(h_pair) -> np.ndarray:
    """Combining matrix times stacked channel; equals ``||h||^2 I``."""
    return combining_matrix(h_pair) @ stacked_matrix(h_pair)


def combine(y1, y2, h_pair):
    """Separate the two common symbols from two received slots.

    ``y1`` and ``y2`` may be arrays of blocks.  A zero channel simply gives
    zero outputs.
    """
    h1, h2 = np.asarray(h_pair, dtype=complex)
    y1 = np.asarray(y1, dtype=complex)
    y2c = np.conj(np.asarray(y2, dtype=complex))
    return h1 * y1 + np.conj(h2) * y2c, h2 * y1 - np.conj(h1) * y2c


def _pair_energy(h: np.ndarray, pair: FeedPair | None) -> np.ndarray:
    h = np.asarray(h)
    if pair is None:
        if h.shape[-1] != 2:
            raise ValueError("a feed pair is required when N_t > 2")
        return np.sum(np.abs(h) ** 2, axis=-1)
    return np.sum(np.abs(h[..., pair.index]) ** 2, axis=-1)


def _gains(h, P) -> np.ndarray:
    # |h^H p_j|^2 for every stream j, shape (..., K)
    P = np.asarray(P, dtype=complex)
    if P.size == 0:
        return np.zeros(np.shape(h)[:-1] + (0,))
    return np.abs(np.conj(np.asarray(h)) @ P) ** 2


def common_rate_st(h, p_c: float, P, sigma_n2: float = 1.0,
                   pair: FeedPair | None = None):
    """Common-stream rate with Alamouti transmission over ``pair``.

    ``log2(1 + ||h_pair||^2 P_c / 2 / (sum_j |h^H p_j|^2 + sigma^2))``.
    Broadcasts over leading axes of ``h``.
    """
    if p_c < 0:
        raise ValueError("common power must be nonnegative")
    interf = _gains(h, P).sum(axis=-1) + sigma_n2
    return np.log2(1.0 + _pair_energy(h, pair) * p_c / 2.0 / interf)


def common_rate_bf(h, p_c_vec, P, sigma_n2: float = 1.0):
    """Common rate of a conventional beamformed common stream."""
    sig = np.abs(np.conj(np.asarray(h)) @ np.asarray(p_c_vec, dtype=complex)) ** 2
    interf = _gains(h, P).sum(axis=-1) + sigma_n2
    return np.log2(1.0 + sig / interf)


def private_rate(h, P, k: int, sigma_n2: float = 1.0):
    """Rate of private stream ``k`` after the common stream is cancelled."""
    P = np.asarray(P, dtype=complex)
    if not 0 <= k < P.shape[1]:
        raise IndexError(f"user index {k} out of range")
    g = _gains(h, P)
    own = g[..., k]
    return np.log2(1.0 + own / (g.sum(axis=-1) - own + sigma_n2))


def private_rates(h_users, P, sigma_n2: float = 1.0) -> np.ndarray:
    """Private rates for all users at once.

    ``h_users`` has shape (K, ..., N_t) with user ``k`` along axis 0; the
    result has shape (K, ...).
    """
    h_users = np.asarray(h_users)
    g = _gains(h_users, P)
    k = g.shape[-1]
    own = np.stack([g[i, ..., i] for i in range(k)])
    return np.log2(1.0 + own / (g.sum(axis=-1) - own + sigma_n2))


def select_feed_pair(channels: ChannelSet) -> FeedPair:
    """Pair maximising the worst user's expected pair-channel energy.

    Score of ``(m, n)``: ``min_k ||h_est[k, (m,n)]||^2 + Phi_k[m,m] + Phi_k[n,n]``.
    Ties go to the lexicographically smallest pair.
    """
    n_t = channels.n_t
    if n_t < 2:
        raise ValueError("feed-pair selection needs N_t >= 2")
    h = channels.h_est if channels.h_est is not None else channels.h_true
    energy = np.abs(h) ** 2
    if channels.error_cov is not None:
        energy = energy + np.real(np.diagonal(channels.error_cov, axis1=1, axis2=2))
    best, best_score = None, -np.inf
    for m, n in itertools.combinations(range(n_t), 2):
        score = np.min(energy[:, m] + energy[:, n])
        if score > best_score:
            best, best_score = (m, n), score
    return FeedPair(*best, n_t)


@dataclass
class RateReport:
    """Per-user rates over a set of channel samples.

    ``common`` and ``private`` hold per-sample rates of shape (K, S).
    ``portions`` are the common-rate shares C_k (zeros when the scheme has
    no common stream).
    """

    common: np.ndarray
    private: np.ndarray
    portions: np.ndarray

    @property
    def common_mean(self) -> np.ndarray:
        return self.common.mean(axis=1)

    @property
    def private_mean(self) -> np.ndarray:
        return self.private.mean(axis=1)

    @property
    def min_common(self) -> float:
        return float(self.common_mean.min())

    @property
    def common_scale(self) -> float:
        # shrink the portions when the worst user cannot decode sum(C)
        total = float(np.sum(self.portions))
        if total <= 0:
            return 1.0
        return min(1.0, max(self.min_common, 0.0) / total)

    @property
    def per_user(self) -> np.ndarray:
        return self.private_mean + self.common_scale * self.portions

    @property
    def min_rate(self) -> float:
        return float(self.per_user.min())


@dataclass
class LinkMeasurement:
    common_sinr: np.ndarray
    private_sinr: np.ndarray
    saturated: bool


def _project(z: np.ndarray, s: np.ndarray) -> float:
    a = np.vdot(s, z) / np.vdot(s, s)
    resid = z - a * s
    num = np.abs(a) ** 2 * np.mean(np.abs(s) ** 2)
    den = np.mean(np.abs(resid) ** 2)
    if den <= num * 1e-28:
        return math.inf
    return float(num / den)


def simulate_link(channels: ChannelSet, solution, n_blocks: int, seed: int,
                  sigma_n2: float = 1.0, h: np.ndarray | None = None) -> LinkMeasurement:
    """Signal-level Monte-Carlo run of the ST-RSMA transmit/receive chain.

    Gaussian common and private symbols and noise go through the Alamouti
    mapping, the channel, stacking/combining and ideal SIC.  The SINR of each
    decoding stage is measured by projecting the detector output onto the
    transmitted symbols (signal = projection, everything else = noise).

    ``solution`` needs ``p_c`` (common power), ``P`` and ``pair`` attributes.
    ``h`` defaults to ``channels.h_true``.
    """
    if n_blocks < 1000:
        raise ValueError("n_blocks must be at least 1000")
    h = channels.h_true if h is None else np.asarray(h)
    k_users, n_t = h.shape
    P = np.asarray(solution.P, dtype=complex)
    if P.shape[0] != n_t:
        raise ValueError("precoder does not match the channel dimension")
    pair = getattr(solution, "pair", None) or default_pair(n_t)
    pc = float(solution.p_c)
    rng = np.random.default_rng([int(seed), 23])

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)

    sc = cn(2, n_blocks)
    sp = cn(2, P.shape[1], n_blocks)
    noise = cn(k_users, 2, n_blocks) * math.sqrt(sigma_n2)
    pi = pair.embed
    amp = math.sqrt(pc / 2)
    common_tx = [amp * pi @ np.vstack([sc[0], sc[1]]),
                 amp * pi @ np.vstack([-np.conj(sc[1]), np.conj(sc[0])])]
    private_tx = [P @ sp[0], P @ sp[1]]

    c_sinr = np.empty(k_users)
    p_sinr = np.empty(k_users)
    saturated = False
    for k in range(k_users):
        hk = np.conj(h[k])
        y = [hk @ (common_tx[i] + private_tx[i]) + noise[k, i] for i in range(2)]
        z1, z2 = combine(y[0], y[1], h[k, pair.index])
        vals = [_project(z1, sc[0]), _project(z2, sc[1])]
        if math.inf in vals:
            saturated = True
            c_sinr[k] = math.inf
        else:
            # both branches share one SINR; pool their power estimates
            c_sinr[k] = _project(np.concatenate([z1, z2]), np.concatenate([sc[0], sc[1]]))
        if P.shape[1] > k:
            sic = [y[i] - hk @ common_tx[i] for i in range(2)]
            p_sinr[k] = _project(np.concatenate(sic), np.concatenate([sp[0, k], sp[1, k]]))
        else:
            p_sinr[k] = 0.0
    return LinkMeasurement(c_sinr, p_sinr, saturated)
