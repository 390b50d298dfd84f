"""Small dense linear algebra, Gaussian tail functions and seeded RNG plumbing.

Everything here is deterministic given its inputs. Random draws take an
explicit :class:`RngStream` (or an already constructed numpy ``Generator``)
so that Monte Carlo estimators built on top can be replayed bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import special

__all__ = [
    "NumericalFailure",
    "RngStream",
    "RNG_ID",
    "as_generator",
    "SvdResult",
    "sym_eig",
    "sym_eigenvalues",
    "svd",
    "sample_haar_orthogonal",
    "HaarMoment",
    "haar_moments",
    "qfunc",
    "qfunc_inv",
]

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-14

RNG_ID = f"numpy-{np.__version__}:PCG64:SeedSequence(seed,spawn_key=(stream_id,))"


class NumericalFailure(RuntimeError):
    """Raised when an iterative numerical routine fails to converge."""


@dataclass(frozen=True)
class RngStream:
    """Address of one independent random substream.

    The stream for ``(seed, stream_id)`` is the same one numpy hands out as
    ``SeedSequence(seed).spawn(stream_id + 1)[stream_id]``, so substreams are
    statistically independent and reproducible across runs and thread counts.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            val = getattr(self, name)
            if not (0 <= int(val) < 2**64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {val}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Normalize ``rng`` into a numpy Generator.

    An :class:`RngStream` always yields a freshly seeded generator, so two
    calls with the same stream produce the same draws.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(0 if rng is None else int(rng)).generator()


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.linalg.norm(a), 1.0)
    if np.linalg.norm(a - a.T) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Returns ``(w, q)`` with ``w`` sorted descending and ``a = q @ diag(w) @ q.T``.
    Sweeps stop once the off-diagonal Frobenius mass drops below
    ``1e-14 * ||a||_F``; more than 100 sweeps raises :class:`NumericalFailure`.
    """
    a = _check_symmetric(a).copy()
    n = a.shape[0]
    q = np.eye(n)
    norm = np.linalg.norm(a)
    tol = JACOBI_TOL * norm
    for _ in range(JACOBI_MAX_SWEEPS + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if abs(apr) <= 1e-3 * tol / n:
                    # negligible against the stopping threshold
                    a[p, r] = a[r, p] = 0.0
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                colp = a[:, p].copy()
                colr = a[:, r].copy()
                a[:, p] = c * colp - s * colr
                a[:, r] = s * colp + c * colr
                rowp = a[p, :].copy()
                rowr = a[r, :].copy()
                a[p, :] = c * rowp - s * rowr
                a[r, :] = s * rowp + c * rowr
                a[p, r] = a[r, p] = 0.0
                qp = q[:, p].copy()
                qr = q[:, r].copy()
                q[:, p] = c * qp - s * qr
                q[:, r] = s * qp + c * qr
    else:
        raise NumericalFailure(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")[::-1]
    return w[order], q[:, order]


def sym_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted descending."""
    return sym_eig(a)[0]


def svd(a: np.ndarray) -> SvdResult:
    """Full SVD ``a = u @ S @ v.T`` with ``sigma`` sorted descending.

    Backed by LAPACK (``gesdd``); ``u`` and ``v`` are square orthogonal.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        u, sigma, vh = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return SvdResult(u, sigma, vh.T)


def sample_haar_orthogonal(n: int, rng: RngLike, size: int | None = None) -> np.ndarray:
    """Haar-distributed orthogonal matrix (or a stack of ``size`` of them).

    QR of an i.i.d. standard Gaussian matrix, with each column of Q multiplied
    by the sign of the matching diagonal entry of R. Without the sign fix the
    result is not Haar.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = as_generator(rng)
    shape = (n, n) if size is None else (size, n, n)
    g = gen.standard_normal(shape)
    qm, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    return qm * d[..., None, :]


class HaarMoment(NamedTuple):
    name: str
    estimate: float
    stderr: float
    expected: float

    def z(self) -> float:
        """Deviation from ``expected`` in standard errors."""
        diff = self.estimate - self.expected
        if self.stderr == 0:
            return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))
        return diff / self.stderr


def haar_moments(n: int, samples: int, rng: RngLike, batch: int = 20_000) -> list[HaarMoment]:
    """Monte Carlo estimates of six low-order moments of a Haar matrix ``V``.

    Entries are read at fixed positions (distinct indices where required):
    ``E V_11^2 = 1/n``, ``E V_11 V_12 = 0``, ``E V_11^2 V_12^2 = 1/(n(n+2))``,
    ``E V_11^2 V_22^2 = (n+1)/(n(n-1)(n+2))``, ``E V_11^4 = 3/(n(n+2))`` and
    ``E V_11 V_12 V_21 V_22 = -1/(n(n-1)(n+2))``.
    """
    if n < 2:
        raise ValueError("the mixed moments need n >= 2")
    if samples < 2:
        raise ValueError("need at least two samples")
    gen = as_generator(rng)
    parts = []
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        v = sample_haar_orthogonal(n, gen, size=m)
        a, b, c, d = v[:, 0, 0], v[:, 0, 1], v[:, 1, 0], v[:, 1, 1]
        parts.append(np.stack([a * a, a * b, a * a * b * b, a * a * d * d, a**4, a * b * c * d], axis=1))
        done += m
    vals = np.concatenate(parts)
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(samples)
    expected = [
        1 / n,
        0.0,
        1 / (n * (n + 2)),
        (n + 1) / (n * (n - 1) * (n + 2)),
        3 / (n * (n + 2)),
        -1 / (n * (n - 1) * (n + 2)),
    ]
    names = ["E[V_ij^2]", "E[V_ij V_ik]", "E[V_ij^2 V_ik^2]", "E[V_ij^2 V_kl^2]", "E[V_ij^4]", "E[V_ij V_ik V_lj V_lk]"]
    return [HaarMoment(nm, float(e), float(s), float(x)) for nm, e, s, x in zip(names, est, se, expected)]


def qfunc(x):
    """Gaussian tail probability Q(x) = P[N(0,1) > x]."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))[()]


def qfunc_inv(eps):
    """Inverse of :func:`qfunc` for ``eps`` in (0, 1).

    Starts from scipy's ``ndtri`` and polishes with Newton steps on ``qfunc``
    until the residual is below 1e-12 relative to ``min(eps, 1-eps)``.
    """
    e = np.asarray(eps, dtype=float)
    if np.any(~(e > 0) | ~(e < 1)):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    # ndtri(eps) is accurate in the lower tail; use symmetry for eps > 1/2
    x = np.where(e <= 0.5, -special.ndtri(e), special.ndtri(1.0 - e))
    x = np.where(e == 0.5, 0.0, x)
    for _ in range(5):
        resid = qfunc(x) - e
        if np.all(np.abs(resid) <= 1e-12 * np.minimum(e, 1 - e)):
            break
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
        x = x + resid / pdf
    return x[()]
