"""Channel parameters and isotropic fading models.

The fading matrix ``H`` is ``n_r x n_t``. Only the eigenvalues of ``H H^T``
enter capacity and dispersion, so besides drawing ``H`` itself this module
offers a batched eigenvalue sampler that Monte Carlo estimators consume.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .linalg import NumericalFailure, RngLike, as_generator, sym_eigenvalues

__all__ = [
    "PowerConvention",
    "ChannelParams",
    "FadingModel",
    "EigenSample",
    "sample_H",
    "sample_eigs",
    "sample_eigs_batch",
    "gram_eigenvalues",
    "expected_frob_sq",
    "received_to_transmit",
    "to_transmit",
]


class PowerConvention(str, enum.Enum):
    TRANSMIT = "transmit"
    RECEIVED = "received"


@dataclass(frozen=True)
class ChannelParams:
    """Static MIMO block-fading configuration.

    ``power`` is a linear SNR. Under the ``received`` convention it is the
    average received SNR ``P/n_t * E||H||_F^2`` rather than the transmit
    power; use :func:`to_transmit` before evaluating closed forms.
    """

    n_t: int
    n_r: int
    coherence_T: int = 1
    power: float = 1.0
    power_convention: PowerConvention = PowerConvention.TRANSMIT

    def __post_init__(self):
        for name in ("n_t", "n_r", "coherence_T"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val}")
        if not (self.power >= 0) or not np.isfinite(self.power):
            raise ValueError(f"power must be finite and non-negative, got {self.power}")
        object.__setattr__(self, "power_convention", PowerConvention(self.power_convention))

    @property
    def n_min(self) -> int:
        return min(self.n_t, self.n_r)

    @property
    def T(self) -> int:
        return self.coherence_T

    @property
    def snr_per_antenna(self) -> float:
        """``P / n_t`` (transmit convention only)."""
        if self.power_convention is not PowerConvention.TRANSMIT:
            raise ValueError("power is in the received convention; call to_transmit() first")
        return self.power / self.n_t

    def as_dict(self) -> dict:
        return {
            "n_t": self.n_t,
            "n_r": self.n_r,
            "coherence_T": self.coherence_T,
            "power": self.power,
            "power_convention": self.power_convention.value,
        }


@dataclass(frozen=True)
class FadingModel:
    """Distribution of the fading matrix.

    ``iid_gaussian``: entries i.i.d. N(0, variance).
    ``rademacher``: scalar channel ``H = +-1`` with equal probability
    (only for ``n_t = n_r = 1``); it turns the fading channel into AWGN.
    """

    kind: str = "iid_gaussian"
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("iid_gaussian", "rademacher"):
            raise ValueError(f"unknown fading model {self.kind!r}")
        if self.kind == "iid_gaussian" and not (self.variance > 0 and np.isfinite(self.variance)):
            raise ValueError("Gaussian fading variance must be positive")

    @classmethod
    def iid_gaussian(cls, variance: float = 1.0) -> "FadingModel":
        return cls("iid_gaussian", float(variance))

    @classmethod
    def rademacher(cls) -> "FadingModel":
        return cls("rademacher", 1.0)

    def check(self, params: ChannelParams) -> None:
        if self.kind == "rademacher" and params.n_t * params.n_r > 1:
            raise ValueError("the Rademacher model is scalar: it needs n_t = n_r = 1")

    @property
    def max_rank_one(self) -> bool:
        return self.kind == "rademacher"

    def as_dict(self) -> dict:
        if self.kind == "rademacher":
            return {"kind": self.kind}
        return {"kind": self.kind, "variance": self.variance}


class EigenSample(NamedTuple):
    lambdas_sq: np.ndarray


def sample_H(model: FadingModel, params: ChannelParams, rng: RngLike, size: int | None = None) -> np.ndarray:
    """Draw one ``n_r x n_t`` fading matrix (or a stack of ``size``)."""
    model.check(params)
    gen = as_generator(rng)
    shape = (params.n_r, params.n_t) if size is None else (size, params.n_r, params.n_t)
    if model.kind == "rademacher":
        return gen.choice(np.array([-1.0, 1.0]), size=shape)
    return np.sqrt(model.variance) * gen.standard_normal(shape)


def gram_eigenvalues(h: np.ndarray, side: str = "small") -> np.ndarray:
    """Nonzero-spectrum eigenvalues of ``h h^T``, descending, length ``n_min``.

    ``side`` picks the Gram matrix: ``"rows"`` uses ``h h^T``, ``"cols"``
    uses ``h^T h`` and ``"small"`` whichever of the two is smaller.
    """
    h = np.asarray(h, dtype=float)
    n_r, n_t = h.shape
    if side == "small":
        side = "rows" if n_r <= n_t else "cols"
    if side == "rows":
        gram = h @ h.T
    elif side == "cols":
        gram = h.T @ h
    else:
        raise ValueError(f"side must be 'small', 'rows' or 'cols', got {side!r}")
    w = sym_eigenvalues(gram)[: min(n_r, n_t)]
    return np.maximum(w, 0.0)


def sample_eigs(model: FadingModel, params: ChannelParams, rng: RngLike) -> EigenSample:
    """Eigenvalues ``Lambda_i^2`` of ``H H^T`` for one fading draw."""
    h = sample_H(model, params, rng)
    return EigenSample(gram_eigenvalues(h))


def _bartlett_factor(gen: np.random.Generator, m: int, dof: int, size: int) -> np.ndarray:
    # W = L L^T ~ Wishart_m(dof, I): chi on the diagonal, N(0,1) below it
    L = np.zeros((size, m, m))
    rows, cols = np.tril_indices(m, -1)
    L[:, rows, cols] = gen.standard_normal((size, rows.size))
    diag = np.sqrt(gen.chisquare(dof - np.arange(m), size=(size, m)))
    L[:, np.arange(m), np.arange(m)] = diag
    return L


def sample_eigs_batch(
    model: FadingModel,
    params: ChannelParams,
    rng: RngLike,
    size: int,
    method: str = "auto",
) -> np.ndarray:
    """Draw ``size`` eigenvalue vectors, shape ``(size, n_min)``, descending.

    For Gaussian fading the default (``method="bartlett"``) samples the
    ``n_min x n_min`` Wishart matrix ``H H^T`` (or ``H^T H``) directly via its
    Bartlett factor, which has the same law as forming it from ``H`` but
    costs ``O(n_min^2)`` draws instead of ``O(n_t n_r)``. ``method="direct"``
    draws ``H`` and uses the smaller Gram matrix.
    """
    model.check(params)
    gen = as_generator(rng)
    if model.kind == "rademacher":
        return np.ones((size, 1))
    if method == "auto":
        method = "bartlett"
    m, dof = params.n_min, max(params.n_t, params.n_r)
    if method == "bartlett":
        L = _bartlett_factor(gen, m, dof, size)
        gram = L @ np.swapaxes(L, -1, -2)
    elif method == "direct":
        h = gen.standard_normal((size, params.n_r, params.n_t))
        ht = np.swapaxes(h, -1, -2)
        gram = h @ ht if params.n_r <= params.n_t else ht @ h
    else:
        raise ValueError(f"unknown eigenvalue sampling method {method!r}")
    try:
        w = np.linalg.eigvalsh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return model.variance * np.maximum(w[:, ::-1], 0.0)


def expected_frob_sq(model: FadingModel, params: ChannelParams) -> float:
    """``E ||H||_F^2`` in closed form."""
    model.check(params)
    if model.kind == "rademacher":
        return 1.0
    return params.n_t * params.n_r * model.variance


def received_to_transmit(params: ChannelParams, model: FadingModel) -> float:
    """Transmit power ``P`` giving received SNR ``P_r = P/n_t * E||H||_F^2``."""
    if params.power_convention is not PowerConvention.RECEIVED:
        raise ValueError("params are not in the received-power convention")
    efro = expected_frob_sq(model, params)
    if efro <= 0:
        raise ValueError("fading model has E||H||_F^2 = 0")
    return params.power * params.n_t / efro


def to_transmit(params: ChannelParams, model: FadingModel) -> ChannelParams:
    """Return ``params`` with the power expressed in the transmit convention."""
    if params.power_convention is PowerConvention.TRANSMIT:
        return params
    return replace(
        params,
        power=received_to_transmit(params, model),
        power_convention=PowerConvention.TRANSMIT,
    )
