"""SAA-robust WMMSE max-min precoder design and baseline schemes.

The rate of every stream is tied to a weighted MSE through

    xi = 1 + (u * eps - 1) / ln 2 - log2(u)

whose minimum over the equaliser ``g`` and weight ``u`` is reached at the
MMSE equaliser and ``u = 1 / eps_mmse`` and equals ``1 - R`` (rates in bits).
For fixed ``(g, u)``, ``1 - xi`` is a concave quadratic lower bound on the
rate that is tight at the point the weights were computed from, so the
alternating scheme (weights, then one convex QCQP in the precoders) ascends
monotonically.

Schemes (``Mode``):

* ``ST_RSMA`` - Alamouti common stream with power ``P_c`` on a feed pair,
  private precoders ``P``.
* ``RSMA`` - conventional rate splitting with a common beamformer ``p_c``.
* ``SDMA`` - private streams only.
* ``MULTICAST`` - a single beamformed common stream, no private streams.
* ``FRR`` - fractional resource reuse, closed form (no optimisation).
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import qcqp
from .channel import ChannelSet, draw_saa_samples
from .spacetime import (FeedPair, RateReport, common_rate_bf, common_rate_st,
                        default_pair, private_rates, select_feed_pair)

logger = logging.getLogger(__name__)

INV_LN2 = 1.0 / math.log(2.0)
SHRINK = 0.999


class Mode(str, enum.Enum):
    ST_RSMA = "ST_RSMA"
    RSMA = "RSMA"
    SDMA = "SDMA"
    MULTICAST = "MULTICAST"
    FRR = "FRR"

    @property
    def has_common(self) -> bool:
        return self in (Mode.ST_RSMA, Mode.RSMA, Mode.MULTICAST)

    @property
    def has_private(self) -> bool:
        return self in (Mode.ST_RSMA, Mode.RSMA, Mode.SDMA)

    @property
    def beamformed_common(self) -> bool:
        return self in (Mode.RSMA, Mode.MULTICAST)


class WmmseError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# per-sample MSE machinery

def mse_terms(h, p_c, P, sigma_n2: float = 1.0, pair: FeedPair | None = None):
    """Received powers ``(T_c, T_p)`` for the common and private detectors.

    ``p_c`` is either the Alamouti common power (scalar) or a common
    beamformer (complex vector, conventional RSMA).  Broadcasts over the
    leading axes of ``h``.
    """
    h = np.asarray(h)
    P = np.asarray(P, dtype=complex)
    gains = np.abs(np.conj(h) @ P) ** 2 if P.size else np.zeros(h.shape[:-1] + (0,))
    t_p = gains.sum(axis=-1) + sigma_n2
    t_c = t_p + _common_signal(h, p_c, pair)
    return t_c, t_p


def _common_signal(h, p_c, pair):
    # received common-signal power: ||h_pair||^2 P_c / 2 or |h^H p_c|^2
    if np.ndim(p_c) == 0:
        if float(p_c) < 0:
            raise ValueError("common power must be nonnegative")
        idx = pair.index if pair is not None else slice(None)
        return np.sum(np.abs(h[..., idx]) ** 2, axis=-1) * float(p_c) / 2.0
    return np.abs(np.conj(h) @ np.asarray(p_c, dtype=complex)) ** 2


def mse(g, t, amp):
    """``E|g (amp s + interference + noise) - s|^2`` for power ``t``."""
    return np.abs(g) ** 2 * t - 2.0 * np.real(g * amp) + 1.0


def wmse(eps, u):
    """Augmented weighted MSE, bits-normalised (see module docstring)."""
    return 1.0 + (u * eps - 1.0) * INV_LN2 - np.log2(u)


@dataclass
class EqualizerWeights:
    """MMSE equalisers and weights per (user, sample), arrays of shape (K, S)."""

    g_c: np.ndarray
    g_p: np.ndarray
    u_c: np.ndarray
    u_p: np.ndarray
    amp_c: np.ndarray
    amp_p: np.ndarray
    t_c: np.ndarray
    t_p: np.ndarray

    @property
    def eps_c(self) -> np.ndarray:
        return mse(self.g_c, self.t_c, self.amp_c)

    @property
    def eps_p(self) -> np.ndarray:
        return mse(self.g_p, self.t_p, self.amp_p)

    @property
    def xi_c(self) -> np.ndarray:
        return wmse(self.eps_c, self.u_c)

    @property
    def xi_p(self) -> np.ndarray:
        return wmse(self.eps_p, self.u_p)


def mmse_update(h, p_c, P, sigma_n2: float = 1.0,
                pair: FeedPair | None = None) -> EqualizerWeights:
    """Optimal equalisers and weights for channels ``h`` of shape (K, S, N_t).

    User ``k`` decodes private stream ``k``.  ``P`` may have zero columns
    (no private streams), in which case the private weights are trivial.
    """
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[:, None, :]
    P = np.asarray(P, dtype=complex)
    k_users = h.shape[0]
    t_c, t_p = mse_terms(h, p_c, P, sigma_n2, pair)
    # effective common amplitude: ||h_pair|| sqrt(P_c/2) or h^H p_c
    if np.ndim(p_c) == 0:
        idx = pair.index if pair is not None else slice(None)
        amp_c = np.linalg.norm(h[..., idx], axis=-1) * math.sqrt(float(p_c) / 2.0)
        amp_c = amp_c.astype(complex)
    else:
        amp_c = np.conj(h) @ np.asarray(p_c, dtype=complex)
    if P.shape[-1] == k_users:
        amp_p = np.stack([np.conj(h[k]) @ P[:, k] for k in range(k_users)])
    else:
        amp_p = np.zeros(h.shape[:2], dtype=complex)
    g_c = np.conj(amp_c) / t_c
    g_p = np.conj(amp_p) / t_p
    u_c = t_c / (t_c - np.abs(amp_c) ** 2)
    u_p = t_p / (t_p - np.abs(amp_p) ** 2)
    return EqualizerWeights(g_c, g_p, u_c, u_p, amp_c, amp_p, t_c, t_p)


@dataclass
class SampleAveragedTerms:
    """Sample means of the per-sample WMMSE coefficients, per user.

    Scalars have shape (K,), matrices (K, N_t, N_t).  ``w_c`` is (K,) for the
    Alamouti common stream and (K, N_t) for a beamformed one.
    """

    tau_c: np.ndarray
    tau_p: np.ndarray
    psi_c: np.ndarray
    Psi_c: np.ndarray
    Psi_p: np.ndarray
    w_c: np.ndarray
    w_p: np.ndarray
    v_c: np.ndarray
    v_p: np.ndarray
    u_c: np.ndarray
    u_p: np.ndarray
    sigma_n2: float = 1.0

    @property
    def k_users(self) -> int:
        return self.tau_c.shape[0]

    @property
    def n_t(self) -> int:
        return self.Psi_c.shape[-1]


def per_sample_terms(h, weights: EqualizerWeights, beamformed: bool = False,
                     pair: FeedPair | None = None) -> dict:
    """Per-(user, sample) coefficients before averaging."""
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[:, None, :]
    idx = pair.index if pair is not None else slice(None)
    pair_norm = np.linalg.norm(h[..., idx], axis=-1)
    tau_c = weights.u_c * np.abs(weights.g_c) ** 2
    tau_p = weights.u_p * np.abs(weights.g_p) ** 2
    outer = h[..., :, None] * np.conj(h[..., None, :])
    if beamformed:
        w_c = (weights.u_c * np.conj(weights.g_c))[..., None] * h
    else:
        w_c = weights.u_c * weights.g_c * pair_norm
    return {
        "tau_c": tau_c,
        "tau_p": tau_p,
        "psi_c": tau_c * pair_norm**2,
        "Psi_c": tau_c[..., None, None] * outer,
        "Psi_p": tau_p[..., None, None] * outer,
        "w_c": w_c,
        "w_p": (weights.u_p * np.conj(weights.g_p))[..., None] * h,
        "v_c": np.log2(weights.u_c),
        "v_p": np.log2(weights.u_p),
        "u_c": weights.u_c,
        "u_p": weights.u_p,
    }


def average_terms(h, weights: EqualizerWeights, beamformed: bool = False,
                  pair: FeedPair | None = None, sigma_n2: float = 1.0) -> SampleAveragedTerms:
    """Average the per-sample coefficients over the SAA samples (axis 1)."""
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[:, None, :]
    if weights.g_c.shape != h.shape[:2]:
        raise ValueError("weights and samples disagree in shape")
    terms = per_sample_terms(h, weights, beamformed, pair)
    means = {k: v.mean(axis=1) for k, v in terms.items()}
    for key in ("Psi_c", "Psi_p"):
        means[key] = 0.5 * (means[key] + np.conj(np.swapaxes(means[key], 1, 2)))
    return SampleAveragedTerms(sigma_n2=sigma_n2, **means)


# ---------------------------------------------------------------------------
# Step II: convex subproblem in real-lifted variables

def lift_hermitian(A: np.ndarray) -> np.ndarray:
    """Real 2N x 2N matrix with ``[x;y]^T L [x;y] = p^H A p`` for ``p = x + jy``."""
    re, im = A.real, A.imag
    return np.block([[re, -im], [im, re]])


def lift_vector(v: np.ndarray) -> np.ndarray:
    """Real coefficients with ``lift_vector(w) @ [x;y] = Re{w^H p}``."""
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


@dataclass(frozen=True)
class Layout:
    """Index map of the real decision vector for a given scheme."""

    mode: Mode
    k_users: int
    n_t: int

    def _sizes(self):
        k, n = self.k_users, self.n_t
        m = self.mode
        return [
            ("y", 1 if m == Mode.ST_RSMA else 0),
            ("pc", 2 * n if m.beamformed_common else 0),
            ("P", 2 * n * k if m.has_private else 0),
            ("c", k if m.has_common else 0),
            ("alpha", k if m.has_private else 0),
            ("q", 1),
        ]

    @property
    def slices(self) -> dict[str, slice]:
        out, pos = {}, 0
        for name, size in self._sizes():
            out[name] = slice(pos, pos + size)
            pos += size
        return out

    @property
    def n_vars(self) -> int:
        return sum(s for _, s in self._sizes())

    def p_block(self, j: int) -> slice:
        start = self.slices["P"].start + 2 * self.n_t * j
        return slice(start, start + 2 * self.n_t)

    def pack(self, y=0.0, pc=None, P=None, c=None, alpha=None, q=0.0) -> np.ndarray:
        sl = self.slices
        x = np.zeros(self.n_vars)
        if sl["y"].stop > sl["y"].start:
            x[sl["y"]] = y
        if sl["pc"].stop > sl["pc"].start and pc is not None:
            x[sl["pc"]] = lift_vector(pc)
        if sl["P"].stop > sl["P"].start and P is not None:
            for j in range(self.k_users):
                x[self.p_block(j)] = lift_vector(np.asarray(P)[:, j])
        if sl["c"].stop > sl["c"].start and c is not None:
            x[sl["c"]] = c
        if sl["alpha"].stop > sl["alpha"].start and alpha is not None:
            x[sl["alpha"]] = alpha
        x[sl["q"]] = q
        return x

    def unpack(self, x: np.ndarray) -> dict:
        sl, n, k = self.slices, self.n_t, self.k_users

        def cplx(v):
            return v[:n] + 1j * v[n:]

        P = np.zeros((n, k), dtype=complex)
        if self.mode.has_private:
            for j in range(k):
                P[:, j] = cplx(x[self.p_block(j)])
        return {
            "y": float(x[sl["y"]][0]) if self.mode == Mode.ST_RSMA else 0.0,
            "pc": cplx(x[sl["pc"]]) if self.mode.beamformed_common else None,
            "P": P,
            "c": x[sl["c"]].copy() if self.mode.has_common else np.zeros(k),
            "alpha": x[sl["alpha"]].copy() if self.mode.has_private else np.zeros(k),
            "q": float(x[sl["q"]][0]),
        }


@dataclass
class Subproblem:
    problem: qcqp.QcqpProblem
    layout: Layout
    private_rows: np.ndarray
    common_rows: np.ndarray


def build_subproblem(terms: SampleAveragedTerms, p_t: float, mode: Mode | str) -> Subproblem:
    """Convex QCQP of one WMMSE iteration.

    Variables: ``y = sqrt(P_c / 2)`` (Alamouti mode) or a lifted common
    beamformer, lifted private precoders, common portions ``c``, private
    rate floors ``alpha`` and the max-min level ``q``.  Constraints, in
    order: per-user private rate bound, per-user common decodability, total
    power, per-user epigraph ``q <= alpha_k + C_k``; nonnegativity of
    ``y``, ``c`` and ``alpha`` is carried by the ``lower`` bounds.
    """
    mode = Mode(mode)
    if mode == Mode.FRR:
        raise ValueError("FRR has no optimisation subproblem")
    if p_t <= 0:
        raise ValueError("power budget must be positive")
    k, n = terms.k_users, terms.n_t
    lay = Layout(mode, k, n)
    sl = lay.slices
    nv = lay.n_vars
    sig2 = terms.sigma_n2
    Qs, As, Bs = [], [], []
    private_rows, common_rows = [], []

    def new():
        return np.zeros((nv, nv)), np.zeros(nv)

    if mode.has_private:
        for i in range(k):
            Q, a = new()
            L = INV_LN2 * lift_hermitian(terms.Psi_p[i])
            for j in range(k):
                b_j = lay.p_block(j)
                Q[b_j, b_j] = L
            a[lay.p_block(i)] = 2.0 * INV_LN2 * lift_vector(terms.w_p[i])
            a[sl["alpha"].start + i] = -1.0
            b = -(INV_LN2 * (1.0 - terms.u_p[i] - terms.tau_p[i] * sig2) + terms.v_p[i])
            private_rows.append(len(Bs))
            Qs.append(Q), As.append(a), Bs.append(b)

    if mode.has_common:
        for i in range(k):
            Q, a = new()
            L = INV_LN2 * lift_hermitian(terms.Psi_c[i])
            if mode.has_private:
                for j in range(k):
                    b_j = lay.p_block(j)
                    Q[b_j, b_j] = L
            if mode == Mode.ST_RSMA:
                iy = sl["y"].start
                Q[iy, iy] = INV_LN2 * terms.psi_c[i]
                a[iy] = 2.0 * INV_LN2 * np.real(terms.w_c[i])
            else:
                Q[sl["pc"], sl["pc"]] = L
                a[sl["pc"]] = 2.0 * INV_LN2 * lift_vector(terms.w_c[i])
            a[sl["c"]] = -1.0
            b = -(INV_LN2 * (1.0 - terms.u_c[i] - terms.tau_c[i] * sig2) + terms.v_c[i])
            common_rows.append(len(Bs))
            Qs.append(Q), As.append(a), Bs.append(b)

    Q, a = new()
    if mode == Mode.ST_RSMA:
        Q[sl["y"], sl["y"]] = 2.0
    if mode.beamformed_common:
        Q[sl["pc"], sl["pc"]] = np.eye(2 * n)
    if mode.has_private:
        Q[sl["P"], sl["P"]] = np.eye(2 * n * k)
    Qs.append(Q), As.append(a), Bs.append(-float(p_t))

    for i in range(k):
        Q, a = new()
        a[sl["q"]] = -1.0
        if mode.has_private:
            a[sl["alpha"].start + i] = 1.0
        if mode.has_common:
            a[sl["c"].start + i] = 1.0
        Qs.append(Q), As.append(a), Bs.append(0.0)

    lower = np.full(nv, -np.inf)
    for name in ("y", "c", "alpha"):
        lower[sl[name]] = 0.0
    objective = np.zeros(nv)
    objective[sl["q"]] = 1.0
    prob = qcqp.QcqpProblem(objective, np.array(Qs), np.array(As), np.array(Bs), lower)
    return Subproblem(prob, lay, np.array(private_rows, dtype=int),
                      np.array(common_rows, dtype=int))


def conventional_rsma_subproblem(terms: SampleAveragedTerms, p_t: float) -> Subproblem:
    """Subproblem of WMMSE-based RSMA with a common beamforming vector."""
    return build_subproblem(terms, p_t, Mode.RSMA)


# ---------------------------------------------------------------------------
# Algorithm

@dataclass(frozen=True)
class WmmseParams:
    p_t: float = 1.0
    eps: float = 1e-4
    max_iter: int = 200
    sigma_n2: float = 1.0
    seed: int | None = None
    solver: qcqp.BarrierParams = field(default_factory=qcqp.BarrierParams)


@dataclass
class PrecoderSolution:
    mode: Mode
    p_c: float
    P: np.ndarray
    c: np.ndarray
    alpha_p: np.ndarray
    q: float
    trace: list[float]
    pair: FeedPair | None = None
    common_beam: np.ndarray | None = None
    converged: bool = False
    in_sample: RateReport | None = None
    held_out: RateReport | None = None
    params: WmmseParams | None = None
    seeds: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def total_power(self) -> float:
        return float(self.p_c + np.sum(np.abs(self.P) ** 2))

    def to_dict(self) -> dict:
        flat = np.asarray(self.P, dtype=complex).ravel()
        inter = np.empty(2 * flat.size)
        inter[0::2], inter[1::2] = flat.real, flat.imag
        out = {
            "mode": self.mode.value,
            "P_c": self.p_c,
            "P_shape": list(np.shape(self.P)),
            "P": inter.tolist(),
            "c": np.asarray(self.c).tolist(),
            "alpha_p": np.asarray(self.alpha_p).tolist(),
            "q": self.q,
            "trace": list(self.trace),
            "converged": self.converged,
            "pair": None if self.pair is None else [self.pair.m, self.pair.n],
            "seeds": dict(self.seeds),
        }
        if self.common_beam is not None:
            cb = np.asarray(self.common_beam)
            out["common_beam"] = np.column_stack([cb.real, cb.imag]).ravel().tolist()
        if self.params is not None:
            out["params"] = {"p_t": self.params.p_t, "eps": self.params.eps,
                             "max_iter": self.params.max_iter,
                             "sigma_n2": self.params.sigma_n2, "seed": self.params.seed}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _dominant_direction(h: np.ndarray) -> np.ndarray:
    hn = h / np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-300)
    _, v = np.linalg.eigh(hn.T @ np.conj(hn))
    return v[:, -1]


def initial_point(h_est: np.ndarray, mode: Mode, p_t: float):
    """Matched-filter private precoders, half the power to the common stream.

    Returns ``(p_c, P)`` with ``p_c`` a power (Alamouti, SDMA) or a vector.
    """
    k, n = h_est.shape
    dirs = h_est / np.maximum(np.linalg.norm(h_est, axis=1, keepdims=True), 1e-300)
    common_share = 0.5 if mode in (Mode.ST_RSMA, Mode.RSMA) else (1.0 if mode == Mode.MULTICAST else 0.0)
    private_power = SHRINK * p_t * (1.0 - common_share)
    P = (dirs.T * math.sqrt(private_power / k)) if mode.has_private else np.zeros((n, k), complex)
    if mode == Mode.ST_RSMA:
        p_c = SHRINK * p_t * common_share
    elif mode.beamformed_common:
        p_c = _dominant_direction(h_est) * math.sqrt(SHRINK * p_t * common_share)
    else:
        p_c = 0.0
    return p_c, P.astype(complex)


def _interior_start(sub: Subproblem, y, pc, P) -> np.ndarray:
    """Strictly feasible start: shrink powers, then fit c, alpha, q inside."""
    lay = sub.layout
    k = lay.k_users
    amp = math.sqrt(SHRINK)
    x = lay.pack(y=y * amp, pc=None if pc is None else pc * amp, P=P * amp)
    g = sub.problem.constraint_values(x)
    alpha = np.zeros(k)
    c = np.zeros(k)
    ok = True
    if sub.private_rows.size:
        f_p = -g[sub.private_rows]
        ok &= bool(np.all(f_p > 0))
        alpha = 0.5 * f_p
    if sub.common_rows.size:
        f_c = -g[sub.common_rows]
        ok &= bool(np.min(f_c) > 0)
        c = np.full(k, 0.5 * np.min(f_c) / k)
    q = float(np.min(alpha + c)) - 1e-3
    x = lay.pack(y=y * amp, pc=None if pc is None else pc * amp, P=P * amp,
                 c=c, alpha=alpha, q=q)
    if ok and np.all(sub.problem.constraint_values(x) < 0):
        return x
    return qcqp.find_strictly_feasible(sub.problem, guess=x)


def evaluate_rates(samples: np.ndarray, mode: Mode, p_c, P, c,
                   pair: FeedPair | None = None, sigma_n2: float = 1.0) -> RateReport:
    """Per-sample common/private rates of a fixed precoder, shape (K, S)."""
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[:, None, :]
    k = samples.shape[0]
    P = np.asarray(P, dtype=complex)
    if mode == Mode.ST_RSMA:
        common = common_rate_st(samples, float(p_c), P, sigma_n2, pair)
    elif mode.beamformed_common:
        common = common_rate_bf(samples, p_c, P, sigma_n2)
    else:
        common = np.zeros(samples.shape[:2])
    if mode.has_private:
        private = private_rates(samples, P, sigma_n2)
    else:
        private = np.zeros(samples.shape[:2])
    portions = np.asarray(c, dtype=float) if mode.has_common else np.zeros(k)
    return RateReport(common=common, private=private, portions=portions)


def solve_maxmin(channels: ChannelSet, mode: Mode | str,
                 params: WmmseParams | None = None) -> PrecoderSolution:
    """Alternate MMSE weight updates and the convex subproblem until
    ``|q[n] - q[n-1]| <= eps``.

    Uses ``channels.samples`` for the robust averages.  When
    ``params.seed`` is set, rates are also evaluated on a fresh sample set
    drawn with that seed (``held_out``).
    """
    mode = Mode(mode)
    params = params or WmmseParams()
    if mode == Mode.FRR:
        return frr_solution(channels, params)
    if channels.samples is None or channels.h_est is None:
        raise ValueError("channels need h_est and SAA samples")
    samples = channels.samples
    k, n = channels.k_users, channels.n_t
    pair = None
    if mode == Mode.ST_RSMA:
        pair = select_feed_pair(channels) if n > 2 else default_pair(n)

    pc, P = initial_point(channels.h_est, mode, params.p_t)
    trace: list[float] = []
    q_prev = 0.0
    converged = False
    state = None
    for it in range(1, params.max_iter + 1):
        common_arg = pc if mode != Mode.SDMA else 0.0
        weights = mmse_update(samples, common_arg, P if mode.has_private else np.zeros((n, 0)),
                              params.sigma_n2, pair)
        terms = average_terms(samples, weights, mode.beamformed_common, pair, params.sigma_n2)
        sub = build_subproblem(terms, params.p_t, mode)
        y = math.sqrt(pc / 2.0) if mode == Mode.ST_RSMA else 0.0
        try:
            x0 = _interior_start(sub, y, pc if mode.beamformed_common else None, P)
        except qcqp.QcqpError as exc:
            raise WmmseError(f"{mode.value} iteration {it}: no interior start ({exc})") from exc
        sol = qcqp.solve(sub.problem, x0, params.solver)
        if sol.status == "infeasible_start":
            raise WmmseError(f"{mode.value} iteration {it}: infeasible start")
        state = sub.layout.unpack(sol.x)
        P = state["P"]
        pc = 2.0 * state["y"] ** 2 if mode == Mode.ST_RSMA else state["pc"]
        if mode == Mode.SDMA:
            pc = 0.0
        trace.append(state["q"])
        logger.debug("%s it %d q=%.6f (%s, %d newton)", mode.value, it, state["q"],
                     sol.status, sol.newton_steps)
        if abs(state["q"] - q_prev) <= params.eps:
            converged = True
            break
        q_prev = state["q"]

    power_c = float(pc) if np.ndim(pc) == 0 else float(np.sum(np.abs(pc) ** 2))
    beam = None if np.ndim(pc) == 0 else np.asarray(pc)
    eval_pc = pc if mode != Mode.SDMA else 0.0
    in_sample = evaluate_rates(samples, mode, eval_pc, P, state["c"], pair, params.sigma_n2)
    out = PrecoderSolution(mode=mode, p_c=power_c, P=P, c=state["c"], alpha_p=state["alpha"],
                           q=state["q"], trace=trace, pair=pair, common_beam=beam,
                           converged=converged, in_sample=in_sample, params=params,
                           seeds=dict(channels.seeds))
    if params.seed is not None:
        fresh = draw_saa_samples(channels, channels.n_samples, params.seed)
        out.held_out = evaluate_rates(fresh.samples, mode, eval_pc, P, state["c"], pair,
                                      params.sigma_n2)
        out.seeds["held_out"] = int(params.seed)
    return out


def frr_rate(channels: ChannelSet, p_t: float, sigma_n2: float = 1.0) -> RateReport:
    """Fractional resource reuse: each user gets 1/K of the resources.

    User ``k`` is served alone on its share by a full-power beam matched to
    its estimated channel; rates are averaged over the SAA samples (or taken
    on the true channel when no samples exist).
    """
    k = channels.k_users
    if k < 1:
        raise ValueError("need at least one user")
    h_hat = channels.h_est if channels.h_est is not None else channels.h_true
    h = channels.samples if channels.samples is not None else channels.h_true[:, None, :]
    beam = h_hat / np.linalg.norm(h_hat, axis=1, keepdims=True)
    gain = np.abs(np.einsum("ksn,kn->ks", np.conj(h), beam)) ** 2
    private = np.log2(1.0 + gain * p_t / sigma_n2) / k
    return RateReport(common=np.zeros_like(private), private=private, portions=np.zeros(k))


def frr_solution(channels: ChannelSet, params: WmmseParams) -> PrecoderSolution:
    report = frr_rate(channels, params.p_t, params.sigma_n2)
    h_hat = channels.h_est if channels.h_est is not None else channels.h_true
    P = (h_hat / np.linalg.norm(h_hat, axis=1, keepdims=True)).T * math.sqrt(params.p_t)
    out = PrecoderSolution(mode=Mode.FRR, p_c=0.0, P=P, c=np.zeros(channels.k_users),
                           alpha_p=report.private_mean, q=report.min_rate, trace=[],
                           converged=True, in_sample=report, params=params,
                           seeds=dict(channels.seeds))
    if params.seed is not None and channels.samples is not None:
        fresh = draw_saa_samples(channels, channels.n_samples, params.seed)
        out.held_out = frr_rate(fresh, params.p_t, params.sigma_n2)
    return out
