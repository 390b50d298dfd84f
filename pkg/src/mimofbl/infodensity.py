"""Channel simulator and information density.

The information density of one coherence block is taken with respect to
the capacity-achieving output distribution ``N(0, I + P/n_t h h^T)`` per
column. It is evaluated two ways: through the SVD of ``h``
(:func:`info_density`) and through the output covariance directly
(:func:`info_density_alt`). The two must agree to rounding error, which is
what the test suite leans on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dispersion import MonteCarloConfig, map_chunks
from .fading import ChannelParams, FadingModel, sample_H, to_transmit
from .linalg import NumericalFailure, RngLike, as_generator, svd

__all__ = [
    "CondMomentEstimate",
    "InputMomentEstimate",
    "simulate_output",
    "info_density",
    "info_density_alt",
    "info_density_batch",
    "telatar_input",
    "empirical_conditional_moments",
    "empirical_input_moments",
    "berry_esseen_ratio",
]

InputSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class CondMomentEstimate:
    """Monte Carlo moments of ``W = i(x; Y, H)`` for one block.

    ``mean`` and ``variance`` are divided by ``T`` (per channel use);
    ``abs_third_central`` is ``E|W - EW|^3`` of the block itself.
    """

    mean: float
    variance: float
    abs_third_central: float
    samples: int
    stderr: dict = field(default_factory=dict, compare=False)


def _check_x(x, params: ChannelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (params.n_t, params.coherence_T):
        raise ValueError(f"x must be {params.n_t}x{params.coherence_T}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x has non-finite entries")
    return x


def simulate_output(x, model: FadingModel, params: ChannelParams, rng: RngLike):
    """One channel use block: returns ``(y, h)`` with ``y = h x + z``."""
    x = _check_x(x, params)
    gen = as_generator(rng)
    h = sample_H(model, params, gen)
    z = gen.standard_normal((params.n_r, params.coherence_T))
    return h @ x + z, h


def _snr(params: ChannelParams) -> float:
    return params.snr_per_antenna


def info_density(x, y, h, params: ChannelParams) -> float:
    """``i(x; y, h)`` in nats via the singular value decomposition of ``h``."""
    x = _check_x(x, params)
    y, h = np.asarray(y, dtype=float), np.asarray(h, dtype=float)
    if h.shape != (params.n_r, params.n_t) or y.shape != (params.n_r, params.coherence_T):
        raise ValueError("y or h has the wrong shape for these channel parameters")
    s = _snr(params)
    u, lam, v = svd(h)
    m = params.n_min
    lam = lam[:m]
    d = 1.0 + s * lam**2
    w = v[:, :m].T @ x  # row j is v_j^T x
    zt = (u.T @ (y - h @ x))[:m]
    num = (
        lam**2 * np.sum(w * w, axis=1)
        + 2 * lam * np.sum(w * zt, axis=1)
        - s * lam**2 * np.sum(zt * zt, axis=1)
    )
    T = params.coherence_T
    return float(T / 2 * np.sum(np.log1p(s * lam**2)) + 0.5 * np.sum(num / d))


def info_density_alt(x, y, h, params: ChannelParams) -> float:
    """``i(x; y, h)`` from the output covariance ``Sigma = I + P/n_t h h^T``:
    ``T/2 log det Sigma - 1/2 ||y - h x||_F^2 + 1/2 tr(y^T Sigma^{-1} y)``."""
    x = _check_x(x, params)
    y, h = np.asarray(y, dtype=float), np.asarray(h, dtype=float)
    if h.shape != (params.n_r, params.n_t) or y.shape != (params.n_r, params.coherence_T):
        raise ValueError("y or h has the wrong shape for these channel parameters")
    sigma = np.eye(params.n_r) + _snr(params) * h @ h.T
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise NumericalFailure("output covariance is not positive definite")
    r = y - h @ x
    quad = np.sum(y * np.linalg.solve(sigma, y))
    return float(params.coherence_T / 2 * logdet - 0.5 * np.sum(r * r) + 0.5 * quad)


def info_density_batch(x, h, z, params: ChannelParams) -> np.ndarray:
    """Vectorized :func:`info_density` for stacks ``x (N,n_t,T)``, ``h (N,n_r,n_t)``,
    ``z (N,n_r,T)``; ``x`` may also be a single block shared by all draws."""
    s = _snr(params)
    m = params.n_min
    try:
        u, lam, vh = np.linalg.svd(h, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    lam = lam[..., :m]
    d = 1.0 + s * lam**2
    w = vh[..., :m, :] @ x
    zt = (np.swapaxes(u, -1, -2) @ z)[..., :m, :]
    num = (
        lam**2 * np.sum(w * w, axis=-1)
        + 2 * lam * np.sum(w * zt, axis=-1)
        - s * lam**2 * np.sum(zt * zt, axis=-1)
    )
    T = params.coherence_T
    return T / 2 * np.sum(np.log1p(s * lam**2), axis=-1) + 0.5 * np.sum(num / d, axis=-1)


def telatar_input(params: ChannelParams) -> InputSampler:
    """Sampler of the i.i.d. ``N(0, P/n_t)`` input blocks."""
    sd = math.sqrt(params.snr_per_antenna)

    def sample(gen: np.random.Generator, size: int) -> np.ndarray:
        return sd * gen.standard_normal((size, params.n_t, params.coherence_T))

    return sample


@dataclass(frozen=True)
class InputMomentEstimate:
    """Moments of ``W = i(X; Y, H)`` with a random input ``X``, per channel use.

    ``variance`` is the unconditional ``Var W / T``. ``conditional_variance``
    is ``E[Var(W | X)] / T``, pooled over groups of draws that share one
    input; this is the quantity the dispersion describes.
    """

    mean: float
    variance: float
    conditional_variance: float
    samples: int
    per_input: int
    stderr: dict = field(default_factory=dict, compare=False)


def _draw_density(x_or_sampler, model, params, stream, size, per_input: int = 1) -> np.ndarray:
    gen = stream.generator()
    if callable(x_or_sampler):
        x = np.repeat(x_or_sampler(gen, size // per_input), per_input, axis=0)
    else:
        x = x_or_sampler
    h = sample_H(model, params, gen, size=size)
    z = gen.standard_normal((size, params.n_r, params.coherence_T))
    return info_density_batch(x, h, z, params)


def _moments(w: np.ndarray, T: int) -> CondMomentEstimate:
    n = w.shape[0]
    mu = w.mean()
    dev = w - mu
    sq = dev * dev
    cube = np.abs(dev) ** 3
    root = math.sqrt(n)
    return CondMomentEstimate(
        mean=float(mu / T),
        variance=float(sq.sum() / (n - 1) / T),
        abs_third_central=float(cube.mean()),
        samples=n,
        stderr={
            "mean": float(w.std(ddof=1) / root / T),
            "variance": float(sq.std(ddof=1) / root / T),
            "abs_third_central": float(cube.std(ddof=1) / root),
        },
    )


def _simulate(x_or_sampler, model, params, mc, per_input: int = 1) -> np.ndarray:
    parts = map_chunks(lambda s, n: _draw_density(x_or_sampler, model, params, s, n, per_input), mc)
    return np.concatenate(parts)


def empirical_conditional_moments(
    x, model: FadingModel, params: ChannelParams, mc: MonteCarloConfig
) -> CondMomentEstimate:
    """Simulate ``i(x; Y, H)`` for a fixed block ``x`` and report its moments."""
    model.check(params)
    params = to_transmit(params, model)
    x = _check_x(x, params)
    if mc.samples < 2:
        raise ValueError("need at least two samples")
    return _moments(_simulate(x, model, params, mc), params.coherence_T)


def empirical_input_moments(
    sample_x: InputSampler,
    model: FadingModel,
    params: ChannelParams,
    mc: MonteCarloConfig,
    per_input: int = 10,
) -> InputMomentEstimate:
    """Moments of ``i(X; Y, H)`` when the input ``X`` is random too.

    Each input draw is reused for ``per_input`` independent ``(H, Z)``
    draws, which gives the pooled within-input variance ``E[Var(W | X)]``
    alongside the unconditional variance. ``mc.samples`` and ``mc.chunk``
    must be multiples of ``per_input``.
    """
    model.check(params)
    params = to_transmit(params, model)
    if per_input < 2:
        raise ValueError("per_input must be at least 2")
    if mc.samples % per_input or mc.chunk % per_input:
        raise ValueError("samples and chunk must be multiples of per_input")
    if mc.samples < 2 * per_input:
        raise ValueError("need at least two input draws")
    T = params.coherence_T
    w = _simulate(sample_x, model, params, mc, per_input)
    n = w.shape[0]
    groups = w.reshape(-1, per_input)
    within = groups.var(axis=1, ddof=1)
    dev2 = (w - w.mean()) ** 2
    return InputMomentEstimate(
        mean=float(w.mean() / T),
        variance=float(dev2.sum() / (n - 1) / T),
        conditional_variance=float(within.mean() / T),
        samples=n,
        per_input=per_input,
        stderr={
            # draws sharing an input are correlated; use group means
            "mean": float(groups.mean(axis=1).std(ddof=1) / math.sqrt(groups.shape[0]) / T),
            "variance": float(dev2.reshape(-1, per_input).mean(axis=1).std(ddof=1) / math.sqrt(groups.shape[0]) / T),
            "conditional_variance": float(within.std(ddof=1) / math.sqrt(within.size) / T),
        },
    )


def berry_esseen_ratio(
    xs: Sequence[np.ndarray], model: FadingModel, params: ChannelParams, mc: MonteCarloConfig
) -> float:
    """Plug-in ``sqrt(n) sum_j E|W_j - EW_j|^3 / (sum_j Var W_j)^{3/2}``.

    Each block's moments come from :func:`empirical_conditional_moments`
    with the same ``mc``, so repeated blocks get identical estimates.
    """
    xs = list(xs)
    if not xs:
        raise ValueError("need at least one block")
    T = params.coherence_T
    third = var = 0.0
    for x in xs:
        est = empirical_conditional_moments(x, model, params, mc)
        third += est.abs_third_central
        var += est.variance * T
    if not var > 0:
        raise NumericalFailure("total conditional variance is zero")
    return math.sqrt(len(xs)) * third / var**1.5
