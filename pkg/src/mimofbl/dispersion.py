"""Capacity, dispersion and the normal approximation for MIMO block fading.

All internal quantities are in nats (``log e = 1``); conversion to bits
happens only in :meth:`DispersionReport.to_units`. Capacity ``C`` and
dispersion ``V`` are per channel use, so that a code spanning ``n`` coherence
blocks of ``T`` symbols satisfies ``log M ~ nT C - sqrt(nT V) Q^{-1}(eps)``.

Every Monte Carlo estimator draws its eigenvalues from the same chunked
substreams (common random numbers), so algebraic identities between the
estimators hold exactly, not just up to sampling noise.
"""

from __future__ import annotations

import enum
import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .fading import ChannelParams, FadingModel, PowerConvention, sample_eigs_batch, to_transmit
from .linalg import RngStream, qfunc_inv

__all__ = [
    "LOG2E",
    "MonteCarloConfig",
    "Estimate",
    "EtaMoments",
    "DispersionReport",
    "NormalApprox",
    "Blocklength",
    "Regime",
    "Limits",
    "c_sigma",
    "capacity_awgn",
    "dispersion_awgn",
    "eigen_samples",
    "capacity",
    "eta_moments",
    "v_iid",
    "v_rank1",
    "v1_of_x",
    "conditional_mean",
    "normal_approx_logM",
    "min_blocklength",
    "asymptotic_limits",
]

LOG2E = 1.0 / math.log(2.0)
THREADS_ENV = "MIMOFBL_THREADS"


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sample budget and seed of a Monte Carlo estimate.

    Samples are drawn in chunks of ``chunk``; chunk ``i`` uses
    ``RngStream(seed, i)``. The estimate depends only on
    ``(samples, seed, chunk)``, never on how many threads evaluate the chunks.
    """

    samples: int = 100_000
    seed: int = 0
    chunk: int = 10_000

    def __post_init__(self):
        if self.samples < 1 or self.chunk < 1:
            raise ValueError("samples and chunk must be positive")
        RngStream(self.seed)  # range check

    def chunks(self):
        """Yield ``(stream, size)`` for every chunk, in reduction order."""
        n_chunks = -(-self.samples // self.chunk)
        for i in range(n_chunks):
            yield RngStream(self.seed, i), min(self.chunk, self.samples - i * self.chunk)

    def as_dict(self) -> dict:
        return {"samples": self.samples, "seed": self.seed, "chunk": self.chunk}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def map_chunks(fn, mc: MonteCarloConfig, workers: int | None = None) -> list:
    """Apply ``fn(stream, size)`` to every chunk; results come back in chunk order."""
    jobs = list(mc.chunks())
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [fn(s, n) for s, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


class Estimate(NamedTuple):
    value: float
    stderr: float


# ---------------------------------------------------------------------------
# scalar closed forms
# ---------------------------------------------------------------------------


def capacity_awgn(p):
    """AWGN capacity ``1/2 log(1 + p)`` in nats."""
    return 0.5 * np.log1p(p)


def dispersion_awgn(p):
    """AWGN dispersion ``1/2 (1 - 1/(1+p)^2)`` in nats^2."""
    return 0.5 * (1.0 - 1.0 / (1.0 + np.asarray(p, dtype=float)) ** 2)[()]


def c_sigma(sig_sq, params: ChannelParams):
    """``sigma / (1 + P/n_t sigma)``, evaluated at an eigenvalue ``Lambda^2``."""
    s = params.snr_per_antenna
    sig = np.asarray(sig_sq, dtype=float)
    return (sig / (1.0 + s * sig))[()]


# ---------------------------------------------------------------------------
# eigenvalue statistics
# ---------------------------------------------------------------------------


def _check_mc_params(params: ChannelParams, model: FadingModel) -> ChannelParams:
    model.check(params)
    return to_transmit(params, model)


@functools.lru_cache(maxsize=16)
def _eigen_samples_cached(params: ChannelParams, model: FadingModel, mc: MonteCarloConfig) -> np.ndarray:
    if model.kind == "rademacher":
        # Lambda^2 = 1 surely; a single draw gives every moment exactly
        lam = np.ones((1, 1))
    else:
        parts = map_chunks(lambda s, n: sample_eigs_batch(model, params, s, n), mc)
        lam = np.concatenate(parts, axis=0)
    lam.setflags(write=False)
    return lam


def eigen_samples(params: ChannelParams, model: FadingModel, mc: MonteCarloConfig) -> np.ndarray:
    """The shared eigenvalue draws, shape ``(samples, n_min)``.

    Deterministic models return a single row. The array is read-only and
    cached, so estimators called with the same arguments see the same draws.
    """
    params = _check_mc_params(params, model)
    # the power does not affect the draws; key the cache on geometry only
    key = replace(params, power=1.0)
    return _eigen_samples_cached(key, model, mc)


def _var(a: np.ndarray) -> float:
    return float(a.var(ddof=1)) if a.shape[0] > 1 else 0.0


def _cov(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    if n < 2:
        return 0.0
    return float(np.dot(a - a.mean(), b - b.mean()) / (n - 1))


def _stderr(influence: np.ndarray) -> float:
    n = influence.shape[0]
    return float(influence.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


class _Stats:
    """Per-draw functionals of the eigenvalues at a given power."""

    def __init__(self, lam: np.ndarray, params: ChannelParams):
        s = params.snr_per_antenna
        d = 1.0 + s * lam
        self.n = lam.shape[0]
        self.s = s
        self.cr = 0.5 * np.log1p(s * lam).sum(axis=1)
        self.va = dispersion_awgn(s * lam).sum(axis=1)
        c = lam / d
        self.csum = c.sum(axis=1)
        self.csq = (c * c).sum(axis=1)
        self.lratio = (lam / (d * d)).sum(axis=1)


@dataclass(frozen=True)
class EtaMoments:
    """Fading functionals shared by the dispersion formulas (nats).

    ``eta1 .. eta5`` are the constants of the dispersion and
    conditional-variance expressions. ``capacity``, ``var_cr`` (variance of
    ``1/2 log det(I + P/n_t H H^T)``) and ``mean_vawgn`` are the
    input-independent pieces; ``mean_csum`` is ``E sum_k c(Lambda_k^2)``.
    ``stderr`` maps every field name to its Monte Carlo standard error.
    """

    eta1: float
    eta2: float
    eta3: float
    eta4: float
    eta5: float
    capacity: float
    var_cr: float
    mean_vawgn: float
    mean_csum: float
    n_t: int
    coherence_T: int
    power: float
    samples: int
    stderr: dict = field(default_factory=dict, compare=False)


def _moments_from_stats(st: _Stats, params: ChannelParams) -> EtaMoments:
    n_t, T = params.n_t, params.coherence_T
    m_cr, m_b = st.cr.mean(), st.csum.mean()
    cross = st.csum**2 - st.csq  # sum_{i != j} c_i c_j
    eta4_inf = st.csq - (cross / (n_t - 1) if n_t > 1 else 0.0)
    eta4_inf = eta4_inf / (2.0 * n_t * (n_t + 2))
    eta5_inf = (st.cr - m_cr) * (st.csum - m_b) + st.lratio / T
    influence = {
        "eta1": st.csq / 2,
        "eta2": m_b * st.csum,
        "eta3": (st.csum - m_b) ** 2 / 4,
        "eta4": np.broadcast_to(eta4_inf, st.cr.shape),
        "eta5": eta5_inf,
        "capacity": st.cr,
        "var_cr": (st.cr - m_cr) ** 2,
        "mean_vawgn": st.va,
        "mean_csum": st.csum,
    }
    return EtaMoments(
        eta1=float(st.csq.mean() / 2),
        eta2=float(m_b**2 / 2),
        eta3=_var(st.csum) / 4,
        eta4=float(np.mean(eta4_inf)),
        eta5=_cov(st.cr, st.csum) + float(st.lratio.mean()) / T,
        capacity=float(m_cr),
        var_cr=_var(st.cr),
        mean_vawgn=float(st.va.mean()),
        mean_csum=float(m_b),
        n_t=n_t,
        coherence_T=T,
        power=params.power,
        samples=st.n,
        stderr={k: _stderr(v) for k, v in influence.items()},
    )


def capacity(params: ChannelParams, model: FadingModel, mc: MonteCarloConfig) -> Estimate:
    """Ergodic capacity per channel use, ``sum_i E C_AWGN(P/n_t Lambda_i^2)``."""
    params = _check_mc_params(params, model)
    st = _Stats(eigen_samples(params, model, mc), params)
    return Estimate(float(st.cr.mean()), _stderr(st.cr))


def eta_moments(params: ChannelParams, model: FadingModel, mc: MonteCarloConfig) -> EtaMoments:
    """All fading functionals from one shared eigenvalue sample."""
    params = _check_mc_params(params, model)
    st = _Stats(eigen_samples(params, model, mc), params)
    return _moments_from_stats(st, params)


# ---------------------------------------------------------------------------
# dispersion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersionReport:
    """Capacity and dispersion per channel use with a three-term breakdown.

    ``terms`` holds ``fading`` (``T Var C_r``), ``awgn``
    (``sum E V_AWGN``) and ``power`` (the ``(P/n_t)^2 (...)`` correction);
    they add up to ``v``.
    """

    capacity: float
    capacity_stderr: float
    v: float
    v_stderr: float
    terms: dict
    terms_stderr: dict
    units: str
    params: ChannelParams
    model: FadingModel
    mc: MonteCarloConfig
    samples_used: int
    vstar: float | None = None

    @property
    def v_over_c2(self) -> float:
        return self.v / self.capacity**2 if self.capacity > 0 else math.inf

    def to_units(self, units: str) -> "DispersionReport":
        if units not in ("nats", "bits"):
            raise ValueError(f"units must be 'nats' or 'bits', got {units!r}")
        if units == self.units:
            return self
        kc = LOG2E if units == "bits" else 1.0 / LOG2E
        kv = kc * kc
        return replace(
            self,
            capacity=self.capacity * kc,
            capacity_stderr=self.capacity_stderr * kc,
            v=self.v * kv,
            v_stderr=self.v_stderr * kv,
            terms={k: x * kv for k, x in self.terms.items()},
            terms_stderr={k: x * kv for k, x in self.terms_stderr.items()},
            units=units,
        )

    def as_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "capacity_stderr": self.capacity_stderr,
            "dispersion": self.v,
            "dispersion_stderr": self.v_stderr,
            "terms": dict(self.terms),
            "terms_stderr": dict(self.terms_stderr),
            "v_over_c2": self.v_over_c2 if self.capacity > 0 else None,
            "vstar": self.vstar,
            "units": self.units,
            "params": self.params.as_dict(),
            "model": self.model.as_dict(),
            "mc": self.mc.as_dict(),
            "samples_used": self.samples_used,
        }


def _dispersion(params, model, mc, power_coef: float, vstar=None) -> DispersionReport:
    """Shared body of :func:`v_iid` and :func:`v_rank1`.

    ``power_coef`` multiplies ``eta2`` in the third term: ``1/n_t`` for the
    i.i.d. input, ``v*/(n_t^2 T)`` for rank-1 fading.
    """
    params = _check_mc_params(params, model)
    st = _Stats(eigen_samples(params, model, mc), params)
    T, s2 = params.coherence_T, st.s**2
    m_cr, m_b = st.cr.mean(), st.csum.mean()
    fading = T * _var(st.cr)
    awgn = float(st.va.mean())
    power = s2 * (float(st.csq.mean()) / 2 - power_coef * float(m_b**2) / 2)
    infl_fading = T * (st.cr - m_cr) ** 2
    infl_power = s2 * (st.csq / 2 - power_coef * m_b * st.csum)
    return DispersionReport(
        capacity=float(m_cr),
        capacity_stderr=_stderr(st.cr),
        v=fading + awgn + power,
        v_stderr=_stderr(infl_fading + st.va + infl_power),
        terms={"fading": fading, "awgn": awgn, "power": power},
        terms_stderr={
            "fading": _stderr(infl_fading),
            "awgn": _stderr(st.va),
            "power": _stderr(infl_power),
        },
        units="nats",
        params=params,
        model=model,
        mc=mc,
        samples_used=st.n,
        vstar=vstar,
    )


def v_iid(params: ChannelParams, model: FadingModel, mc: MonteCarloConfig) -> DispersionReport:
    """Dispersion of the i.i.d. Gaussian (Telatar) input.

    ``V = T Var(C_r) + sum E V_AWGN(P/n_t Lambda_i^2) + (P/n_t)^2 (eta1 - eta2/n_t)``.
    This is the channel dispersion whenever ``P[rank H > 1] > 0``; it is
    still computed (as the Telatar-input value) otherwise.
    """
    return _dispersion(params, model, mc, 1.0 / params.n_t)


def v_rank1(params: ChannelParams, model: FadingModel, vstar: float, mc: MonteCarloConfig) -> DispersionReport:
    """Dispersion when ``H`` has rank at most one, for a caid with score ``vstar``.

    ``vstar = n_t T`` reproduces the Telatar value; larger scores (orthogonal
    designs reach ``n_t T min(n_t, T)``) lower the dispersion.
    """
    if not (params.n_t == 1 or params.n_r == 1 or model.max_rank_one):
        raise ValueError("rank-1 dispersion needs n_t = 1, n_r = 1 or a scalar model")
    if vstar < 0:
        raise ValueError("vstar must be non-negative")
    coef = vstar / (params.n_t**2 * params.coherence_T)
    return _dispersion(params, model, mc, coef, vstar=float(vstar))


def _x_stats(x: np.ndarray, params: ChannelParams):
    # works on a single block or a stack of blocks (..., n_t, T)
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (params.n_t, params.coherence_T):
        raise ValueError(f"x must be {params.n_t}x{params.coherence_T}, got {x.shape}")
    fro2 = np.sum(x * x, axis=(-2, -1))
    gram = x @ np.swapaxes(x, -1, -2)
    spread = np.sum(gram * gram, axis=(-2, -1)) - fro2**2 / params.n_t
    return fro2, spread


def v1_of_x(x: np.ndarray, params: ChannelParams, moments: EtaMoments) -> float:
    """Conditional dispersion ``Var(i(x; Y, H)) / T`` of a fixed block input.

    ``x`` may also be a stack of blocks, shape ``(..., n_t, T)``.

    ``T Var C_r + sum E V_AWGN + eta5 d + (eta3/T) d^2
    + (eta4/T)(||x x^T||_F^2 - ||x||_F^4/n_t)`` with
    ``d = ||x||_F^2/n_t - T P/n_t``.
    """
    if params.power_convention is not PowerConvention.TRANSMIT:
        raise ValueError("v1_of_x needs transmit-convention params")
    if moments.n_t != params.n_t or moments.coherence_T != params.coherence_T or moments.power != params.power:
        raise ValueError("moments were computed for different channel parameters")
    T, n_t = params.coherence_T, params.n_t
    fro2, spread = _x_stats(x, params)
    dev = fro2 / n_t - T * params.power / n_t
    v1 = (
        T * moments.var_cr
        + moments.mean_vawgn
        + moments.eta5 * dev
        + moments.eta3 / T * dev**2
        + moments.eta4 / T * spread
    )
    return v1[()]


def conditional_mean(x: np.ndarray, params: ChannelParams, moments: EtaMoments) -> float:
    """``E[i(x; Y, H)] / T``: capacity plus a term linear in ``||x||_F^2 - TP``."""
    T = params.coherence_T
    fro2, _ = _x_stats(x, params)
    return (moments.capacity + moments.mean_csum / (2 * params.n_t * T) * (fro2 - T * params.power))[()]


# ---------------------------------------------------------------------------
# normal approximation
# ---------------------------------------------------------------------------


class NormalApprox(NamedTuple):
    log_m: float
    rate: float


def normal_approx_logM(n_blocks, eps: float, c: float, v: float, params: ChannelParams) -> NormalApprox:
    """``log M ~ nT c - sqrt(nT v) Q^{-1}(eps)`` and the rate ``log M / (nT)``."""
    n_cu = np.asarray(n_blocks, dtype=float) * params.coherence_T
    if np.any(n_cu <= 0):
        raise ValueError("n_blocks must be positive")
    if v < 0:
        raise ValueError("dispersion must be non-negative")
    q = qfunc_inv(eps)
    log_m = n_cu * c - np.sqrt(n_cu * v) * q
    # rate formed directly so that eps = 1/2 returns c exactly
    rate = c - np.sqrt(v / n_cu) * q
    return NormalApprox(log_m[()], rate[()])


class Blocklength(NamedTuple):
    channel_uses: float
    blocks: int
    rounded_channel_uses: int


def min_blocklength(target_fraction: float, eps: float, c: float, v: float, coherence_T: int = 1) -> Blocklength:
    """Channel uses needed to reach ``target_fraction`` of capacity.

    ``n = (Q^{-1}(eps) / (1 - target_fraction))^2 V / C^2``, also rounded up
    to a whole number of coherence blocks.
    """
    if not 0 < target_fraction < 1:
        raise ValueError("target_fraction must lie in (0, 1)")
    if not c > 0:
        raise ValueError("capacity must be positive")
    if v < 0:
        raise ValueError("dispersion must be non-negative")
    n = (qfunc_inv(eps) / (1.0 - target_fraction)) ** 2 * v / c**2
    blocks = math.ceil(n / coherence_T - 1e-12) if n > 0 else 0
    return Blocklength(float(n), blocks, blocks * coherence_T)


class Limits(NamedTuple):
    capacity: float
    dispersion: float


class Regime(str, enum.Enum):
    FIX_NR_GROW_NT = "fix_nr_grow_nt"
    FIX_NT_GROW_NR = "fix_nt_grow_nr"


def asymptotic_limits(
    regime: Regime | str,
    convention: PowerConvention | str,
    fixed_n: int,
    power: float,
    growing_n: int | None = None,
) -> Limits:
    """Large-array limits of ``(C, V)`` per channel use, in nats.

    ``fixed_n`` is the antenna count held fixed; ``power`` is ``P_r`` or ``P``
    depending on ``convention``. Under a fixed transmit power with ``n_t``
    fixed the capacity keeps growing with ``n_r``, so that case needs
    ``growing_n``.
    """
    regime, convention = Regime(regime), PowerConvention(convention)
    n, p = float(fixed_n), float(power)
    if fixed_n < 1 or p < 0:
        raise ValueError("fixed_n must be positive and power non-negative")
    if convention is PowerConvention.RECEIVED:
        q = p / n
        cap = n / 2 * math.log1p(q)
        if regime is Regime.FIX_NR_GROW_NT:
            v = p / (1 + q)
        else:
            v = p * (2 + q) / (2 * (1 + q) ** 2)
        return Limits(cap, v)
    if regime is Regime.FIX_NR_GROW_NT:
        return Limits(n / 2 * math.log1p(p), n * p / (1 + p))
    if growing_n is None:
        raise ValueError("fixed transmit power with growing n_r needs growing_n")
    return Limits(n / 2 * math.log1p(growing_n * p / n), n / 2)
