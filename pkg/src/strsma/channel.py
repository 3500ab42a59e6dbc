"""Multibeam LEO satellite downlink channels.

Channel entries follow the single-feed-per-beam link budget: Bessel beam
pattern, free-space loss, receive gain and a uniform random phase.  The
thermal noise power ``kappa * T_sys * B`` is folded into the channel so that
everything downstream works with unit noise variance.

Imperfect CSIT is modelled additively, ``h_est = h_true - e`` with
``e ~ CN(0, Phi)``, and the robust designs average over channel samples
``h_est + e_s`` drawn from the same error law.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import jv

BOLTZMANN = 1.380649e-23
SPEED_OF_LIGHT = 299_792_458.0
# mu = MU_3DB * sin(theta) / sin(theta_3db) puts the -3 dB point at theta_3db
MU_3DB = 2.07123
# Clarke's model: T_coh = sqrt(9 / (16 pi)) / f_D  (~0.423 / f_D)
CLARKE_COHERENCE = math.sqrt(9.0 / (16.0 * math.pi))

# stream tags so that placement, phases, CSIT error and SAA draws never share
# a random stream for the same seed
_TAG_PLACEMENT = 11
_TAG_PHASE = 13
_TAG_ERROR = 17
_TAG_SAMPLES = 19


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def dbm_to_watts(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class SatelliteGeometry:
    """Satellite, beam and link-budget parameters (SI units, linear gains)."""

    altitude: float = 600e3
    beam_radius: float = 25e3
    theta_3db: float = math.radians(4.4127)
    carrier_frequency: float = 20e9
    bandwidth: float = 400e6
    max_tx_gain: float = float(db_to_linear(30.5))
    rx_gain: float = float(db_to_linear(39.7))
    system_noise_temp: float = 150.0

    def __post_init__(self):
        if self.altitude <= 0 or self.beam_radius <= 0:
            raise ValueError("altitude and beam_radius must be positive")
        if not 0 < self.theta_3db < math.pi / 2:
            raise ValueError("theta_3db must lie in (0, pi/2)")
        for name in ("carrier_frequency", "bandwidth", "max_tx_gain",
                     "rx_gain", "system_noise_temp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_power(self) -> float:
        return BOLTZMANN * self.system_noise_temp * self.bandwidth

    @classmethod
    def from_dict(cls, d: dict) -> "SatelliteGeometry":
        """Build from a config block.

        Gains may be given in dBi (``max_tx_gain_dbi``, ``rx_gain_dbi``) and
        the beamwidth in degrees (``theta_3db_deg``).
        """
        d = dict(d)
        kw = {}
        if "max_tx_gain_dbi" in d:
            kw["max_tx_gain"] = float(db_to_linear(d.pop("max_tx_gain_dbi")))
        if "rx_gain_dbi" in d:
            kw["rx_gain"] = float(db_to_linear(d.pop("rx_gain_dbi")))
        if "theta_3db_deg" in d:
            kw["theta_3db"] = math.radians(d.pop("theta_3db_deg"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown geometry keys: {sorted(unknown)}")
        kw.update({k: float(v) for k, v in d.items()})
        return cls(**kw)


@dataclass
class UserPlacement:
    """Per-user distance, off-boresight angles and phases.

    ``distance`` has shape (K,), ``angles`` and ``phases`` shape (K, N_t).
    """

    distance: np.ndarray
    angles: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.distance = np.asarray(self.distance, dtype=float)
        self.angles = np.atleast_2d(np.asarray(self.angles, dtype=float))
        self.phases = np.atleast_2d(np.asarray(self.phases, dtype=float))
        if self.angles.shape != self.phases.shape:
            raise ValueError("angles and phases must have the same shape")
        if self.distance.shape != (self.angles.shape[0],):
            raise ValueError("one distance per user required")

    @property
    def k_users(self) -> int:
        return self.angles.shape[0]

    @property
    def n_t(self) -> int:
        return self.angles.shape[1]


@dataclass
class ChannelSet:
    """True/estimated channels, error covariances and SAA samples.

    Shapes: ``h_true`` and ``h_est`` (K, N_t), ``error_cov`` (K, N_t, N_t),
    ``samples`` (K, S, N_t).
    """

    h_true: np.ndarray
    h_est: np.ndarray | None = None
    error_cov: np.ndarray | None = None
    samples: np.ndarray | None = None
    seeds: dict = field(default_factory=dict)

    @property
    def k_users(self) -> int:
        return self.h_true.shape[0]

    @property
    def n_t(self) -> int:
        return self.h_true.shape[1]

    @property
    def n_samples(self) -> int:
        return 0 if self.samples is None else self.samples.shape[1]


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys])


def beam_gain(theta, theta_3db: float, max_tx_gain: float):
    """Bessel beam-pattern gain at off-boresight angle ``theta``.

    ``G = G_max * (J1(mu)/(2 mu) + 36 J3(mu)/mu^3)^2`` with
    ``mu = 2.07123 sin(theta)/sin(theta_3db)``.  The bracket tends to 1 as
    mu -> 0; below mu = 1e-4 the two-term Taylor expansion is used instead
    of dividing small numbers.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    if theta_3db <= 0 or max_tx_gain <= 0:
        raise ValueError("theta_3db and max_tx_gain must be positive")
    mu = MU_3DB * np.sin(theta) / np.sin(theta_3db)
    small = np.abs(mu) < 1e-4
    mu_safe = np.where(small, 1.0, mu)
    bracket = jv(1, mu_safe) / (2 * mu_safe) + 36.0 * jv(3, mu_safe) / mu_safe**3
    # J1(x)/(2x) = 1/4 - x^2/32 + ..., 36 J3(x)/x^3 = 3/4 - 3 x^2/32 + ...
    bracket = np.where(small, 1.0 - mu**2 / 8.0, bracket)
    out = max_tx_gain * bracket**2
    return float(out) if out.ndim == 0 else out


def hex_beam_centers(n_beams: int, beam_radius: float) -> np.ndarray:
    """Ground-plane centres of the first ``n_beams`` cells of a hex grid.

    Neighbouring centres are ``sqrt(3) * beam_radius`` apart; cells are
    taken ring by ring around the origin.
    """
    spacing = math.sqrt(3.0) * beam_radius
    a1 = np.array([spacing, 0.0])
    a2 = np.array([spacing / 2, spacing * math.sqrt(3.0) / 2])
    ring = 0
    pts = []
    while len(pts) < n_beams:
        ring += 1
        pts = []
        for i in range(-ring, ring + 1):
            for j in range(-ring, ring + 1):
                pts.append(i * a1 + j * a2)
        pts = [p for p in pts if np.linalg.norm(p) <= ring * spacing + 1e-6]
    pts = np.array(pts)
    order = np.lexsort((np.arctan2(pts[:, 1], pts[:, 0]),
                        np.round(np.linalg.norm(pts, axis=1), 6)))
    return pts[order[:n_beams]]


def place_users(geometry: SatelliteGeometry, n_t: int, k_users: int,
                seed: int) -> UserPlacement:
    """Drop users uniformly inside the beam discs and compute angles.

    User ``k`` lands in beam ``k % n_t``.  The satellite sits at
    ``altitude`` above the centroid of the used beam centres; angles are
    measured between the user direction and each feed boresight on a flat
    ground plane.  Phases are i.i.d. uniform on [0, 2 pi).
    """
    if n_t < 1 or k_users < 1:
        raise ValueError("need at least one feed and one user")
    centers = hex_beam_centers(n_t, geometry.beam_radius)
    centers = centers - centers.mean(axis=0)
    rng = _stream(seed, _TAG_PLACEMENT)
    beam = np.arange(k_users) % n_t
    r = geometry.beam_radius * np.sqrt(rng.uniform(size=k_users))
    ang = rng.uniform(0.0, 2 * math.pi, size=k_users)
    users = centers[beam] + np.column_stack([r * np.cos(ang), r * np.sin(ang)])

    sat = np.array([0.0, 0.0, geometry.altitude])
    u3 = np.column_stack([users, np.zeros(k_users)]) - sat
    c3 = np.column_stack([centers, np.zeros(n_t)]) - sat
    dist = np.linalg.norm(u3, axis=1)
    cosang = (u3 @ c3.T) / (dist[:, None] * np.linalg.norm(c3, axis=1)[None, :])
    angles = np.arccos(np.clip(cosang, -1.0, 1.0))

    phases = _stream(seed, _TAG_PHASE).uniform(0.0, 2 * math.pi, size=(k_users, n_t))
    return UserPlacement(distance=dist, angles=angles, phases=phases)


def synth_channel(geometry: SatelliteGeometry, placement: UserPlacement,
                  n_t: int | None = None, seed: int | None = None) -> ChannelSet:
    """Noise-normalised channel matrix (K, N_t) for a user placement.

    All randomness lives in ``placement`` (see :func:`place_users`); ``seed``
    is only recorded for provenance.
    """
    if n_t is not None and placement.n_t != n_t:
        raise ValueError(f"placement has {placement.n_t} feeds, expected {n_t}")
    gain = beam_gain(placement.angles, geometry.theta_3db, geometry.max_tx_gain)
    fspl = 4 * math.pi * placement.distance / geometry.wavelength
    amp = np.sqrt(gain * geometry.rx_gain) / (fspl[:, None] * math.sqrt(geometry.noise_power))
    h = amp * np.exp(-1j * placement.phases)
    seeds = {} if seed is None else {"channel": int(seed)}
    return ChannelSet(h_true=h, seeds=seeds)


def _error_covariance(sigma_e, k_users: int, n_t: int) -> np.ndarray:
    arr = np.asarray(sigma_e)
    if arr.ndim == 3:
        cov = arr.astype(complex)
        if cov.shape != (k_users, n_t, n_t):
            raise ValueError("covariance stack must have shape (K, N_t, N_t)")
    elif arr.ndim == 2 and arr.shape == (n_t, n_t) and n_t > 1:
        cov = np.broadcast_to(arr.astype(complex), (k_users, n_t, n_t)).copy()
    else:
        sig = np.broadcast_to(np.asarray(sigma_e, dtype=float), (k_users,))
        if np.any(sig < 0):
            raise ValueError("sigma_e must be nonnegative")
        cov = sig[:, None, None] ** 2 * np.eye(n_t)[None].astype(complex)
    if not np.allclose(cov, np.conj(np.swapaxes(cov, 1, 2)), atol=1e-12):
        raise ValueError("error covariance must be Hermitian")
    if np.min(np.linalg.eigvalsh(cov)) < -1e-9 * max(1.0, np.abs(cov).max()):
        raise ValueError("error covariance must be positive semidefinite")
    return cov


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def impair_csit(channels: ChannelSet, sigma_e, seed: int) -> ChannelSet:
    """Fill ``h_est = h_true - e`` with ``e ~ CN(0, Phi_k)``.

    ``sigma_e`` is a scalar or per-user standard deviation (``Phi = s^2 I``),
    or a full covariance (N_t, N_t) / stack (K, N_t, N_t).
    """
    k, n = channels.h_true.shape
    cov = _error_covariance(sigma_e, k, n)
    fac = _cov_factor(cov)
    err = np.empty((k, n), dtype=complex)
    for i in range(k):
        err[i] = fac[i] @ _cn(_stream(seed, _TAG_ERROR, i), n)
    return replace(channels, h_est=channels.h_true - err, error_cov=cov,
                   seeds={**channels.seeds, "csit": int(seed)})


def draw_saa_samples(channels: ChannelSet, n_samples: int, seed: int) -> ChannelSet:
    """Draw ``h_est + e_s``, one independent stream per (user, sample)."""
    if channels.h_est is None or channels.error_cov is None:
        raise ValueError("impair_csit must run before drawing SAA samples")
    if n_samples < 1:
        raise ValueError("need at least one SAA sample")
    k, n = channels.h_est.shape
    fac = _cov_factor(channels.error_cov)
    z = np.empty((k, n_samples, n), dtype=complex)
    for i in range(k):
        for s in range(n_samples):
            z[i, s] = _cn(_stream(seed, _TAG_SAMPLES, i, s), n)
    samples = channels.h_est[:, None, :] + np.einsum("kij,ksj->ksi", fac, z)
    return replace(channels, samples=samples,
                   seeds={**channels.seeds, "saa": int(seed)})


@dataclass(frozen=True)
class FeasibilityReport:
    symbol_duration: float
    total_symbol_duration: float
    coherence_time: float
    st_block_feasible: bool

    def as_dict(self) -> dict:
        return {
            "symbol_duration_us": round(self.symbol_duration * 1e6, 2),
            "total_symbol_duration_us": round(self.total_symbol_duration * 1e6, 2),
            "coherence_time_us": round(self.coherence_time * 1e6, 2),
            "st_block_us": round(2 * round(self.total_symbol_duration * 1e6, 2), 2),
            "st_block_feasible": self.st_block_feasible,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def to_text(self) -> str:
        d = self.as_dict()
        rows = [
            ("OFDM symbol duration", f"{d['symbol_duration_us']:.2f} us"),
            ("symbol duration incl. CP", f"{d['total_symbol_duration_us']:.2f} us"),
            ("two-symbol ST block", f"{d['st_block_us']:.2f} us"),
            ("coherence time (Clarke)", f"{d['coherence_time_us']:.2f} us"),
            ("ST block feasible", "yes" if self.st_block_feasible else "no"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{width}}  {b}" for a, b in rows)


def ntn_feasibility(scs: float, cp_fraction: float, residual_doppler: float,
                    resolution: float = 1e-8) -> FeasibilityReport:
    """Check that one Alamouti block (two OFDM symbols) fits the coherence time.

    The useful symbol duration is quantised to ``resolution`` seconds (10 ns
    by default, the usual two-decimal microsecond grid) before the cyclic
    prefix is added.  Pass ``resolution=0`` for unquantised arithmetic.
    """
    if scs <= 0 or residual_doppler <= 0:
        raise ValueError("scs and residual_doppler must be positive")
    if not 0 <= cp_fraction < 1:
        raise ValueError("cp_fraction must lie in [0, 1)")
    if resolution < 0:
        raise ValueError("resolution must be nonnegative")
    sym = 1.0 / scs
    if resolution:
        sym = round(sym / resolution) * resolution
    total = sym * (1.0 + cp_fraction)
    coh = CLARKE_COHERENCE / residual_doppler
    return FeasibilityReport(sym, total, coh, bool(2 * total <= coh))
