"""Hurwitz-Radon families, full-rate orthogonal designs and v*(n_t, T).

A Hurwitz-Radon family of size ``k`` in dimension ``n`` is a list of signed
permutation matrices ``V_1 = I, V_2, ..., V_k`` with ``V_i^T V_j + V_j^T V_i = 0``
for ``i != j``. Stacking ``xi V_i`` for a row vector of indeterminates ``xi``
gives an ``n_t x n`` full-rate orthogonal design, and drawing the
indeterminates i.i.d. Gaussian gives a capacity-achieving input for rank-1
fading that maximizes ``Var ||X||_F^2``.

All Hurwitz-Radon arithmetic is done on small integer arrays, so checks are
exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import NamedTuple

import numpy as np

from .fading import ChannelParams
from .linalg import RngLike, as_generator

__all__ = [
    "rho",
    "HurwitzRadonFamily",
    "build_hr_family",
    "check_hr",
    "OccupancyDesign",
    "assemble_design",
    "full_rate_design",
    "GaussianCaidCov",
    "CaidReport",
    "design_cov",
    "check_caid",
    "var_frobsq",
    "score_from_cov",
    "VstarBound",
    "vstar_upper",
    "truncation_search",
    "VstarEntry",
    "vstar_table",
    "gaussian_caid_2x2",
]

CAID_TOL = 1e-10
PSD_TOL = 1e-10
SEARCH_LIMIT = 2_000_000


def _split_pow2(n: int) -> tuple[int, int]:
    a = 0
    while n % 2 == 0:
        n //= 2
        a += 1
    return a, n


def rho(n: int) -> int:
    """Radon-Hurwitz number: ``rho(2^a b) = 8 floor(a/4) + 2^(a mod 4)`` for odd ``b``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    a, _ = _split_pow2(int(n))
    return 8 * (a // 4) + 2 ** (a % 4)


# -- Hurwitz-Radon construction ---------------------------------------------

_I2 = np.eye(2, dtype=np.int64)
_P2 = np.array([[0, 1], [1, 0]], dtype=np.int64)
_Q2 = np.array([[1, 0], [0, -1]], dtype=np.int64)
_A2 = np.array([[0, 1], [-1, 0]], dtype=np.int64)


def _kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats, np.ones((1, 1), dtype=np.int64))


def _anticommute(a: np.ndarray, b: np.ndarray) -> bool:
    return not np.any(a @ b + b @ a)


@lru_cache(maxsize=None)
def _small_generators(a: int) -> tuple[np.ndarray, ...]:
    """``2^a - 1`` skew, pairwise anticommuting signed permutations of size
    ``2^a`` for ``a <= 3``, found by backtracking over Kronecker words in
    ``{I, P, Q, A}``."""
    if a == 0:
        return ()
    words = [_kron_all(w) for w in itertools.product((_I2, _P2, _Q2, _A2), repeat=a)]
    skew = [w for w in words if not np.any(w + w.T)]
    need = 2**a - 1

    def extend(chosen: list[np.ndarray], start: int):
        if len(chosen) == need:
            return chosen
        for idx in range(start, len(skew)):
            cand = skew[idx]
            if all(_anticommute(cand, c) for c in chosen):
                got = extend(chosen + [cand], idx + 1)
                if got is not None:
                    return got
        return None

    found = extend([], 0)
    if found is None:  # pragma: no cover - the search space always contains a solution
        raise RuntimeError(f"no Hurwitz-Radon generators found in dimension {2**a}")
    return tuple(found)


@lru_cache(maxsize=None)
def _sixteen_generators() -> tuple[np.ndarray, ...]:
    # 8 skew anticommuting generators in dimension 16
    eight = _small_generators(3)
    i8 = np.eye(8, dtype=np.int64)
    return (np.kron(_A2, i8),) + tuple(np.kron(_P2, e) for e in eight)


@lru_cache(maxsize=None)
def _pow2_generators(a: int) -> tuple[np.ndarray, ...]:
    """``rho(2^a) - 1`` skew, pairwise anticommuting generators of size ``2^a``."""
    if a <= 3:
        return _small_generators(a)
    f = _sixteen_generators()
    inner = _pow2_generators(a - 4)
    m = 2 ** (a - 4)
    omega = reduce(np.matmul, f)  # symmetric, squares to I, anticommutes with every f_i
    eye_m = np.eye(m, dtype=np.int64)
    return tuple(np.kron(g, eye_m) for g in f) + tuple(np.kron(omega, e) for e in inner)


@dataclass(frozen=True)
class HurwitzRadonFamily:
    """``k`` signed permutation matrices of size ``n``; ``mats[0]`` is the identity."""

    n: int
    mats: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.mats)


def build_hr_family(n: int, k: int | None = None) -> HurwitzRadonFamily:
    """Hurwitz-Radon family of ``k`` (default ``rho(n)``) matrices in dimension ``n``.

    Power-of-two sizes up to 8 come from a search over Kronecker products
    of 2x2 signed permutations; size 16 doubles the size-8 family, and
    every further factor of 16 uses the Clifford periodicity
    ``{f_i (x) I_m} + {omega (x) e_j}``. An odd factor ``b`` is absorbed as
    ``(x) I_b``. The result is verified with :func:`check_hr` before it is
    returned.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    r = rho(n)
    k = r if k is None else int(k)
    if not 1 <= k <= r:
        raise ValueError(f"k must lie in [1, rho({n})] = [1, {r}], got {k}")
    a, b = _split_pow2(int(n))
    eye_b = np.eye(b, dtype=np.int64)
    gens = [np.kron(g, eye_b) for g in _pow2_generators(a)]
    mats = (np.eye(n, dtype=np.int64),) + tuple(gens[: k - 1])
    fam = HurwitzRadonFamily(int(n), mats)
    ok, why = check_hr(fam)
    if not ok:  # pragma: no cover - guarded by the test suite
        raise RuntimeError(f"constructed family fails verification: {why}")
    return fam


def check_hr(fam: HurwitzRadonFamily) -> tuple[bool, str | None]:
    """Exact check of ``V_i^T V_i = I`` and ``V_i^T V_j + V_j^T V_i = 0``.

    Returns ``(True, None)`` or ``(False, description)`` of the first
    violation found.
    """
    n = fam.n
    eye = np.eye(n, dtype=np.int64)
    mats = []
    for i, v in enumerate(fam.mats):
        v = np.asarray(v)
        if v.shape != (n, n):
            return False, f"V_{i + 1} has shape {v.shape}, expected {(n, n)}"
        if not np.array_equal(v, np.round(v)):
            return False, f"V_{i + 1} has non-integer entries"
        mats.append(v.astype(np.int64))
    if len(mats) > rho(n):
        return False, f"family size {len(mats)} exceeds rho({n}) = {rho(n)}"
    for i, v in enumerate(mats):
        if not np.array_equal(v.T @ v, eye):
            return False, f"V_{i + 1}^T V_{i + 1} != I"
    for i, j in itertools.combinations(range(len(mats)), 2):
        if np.any(mats[i].T @ mats[j] + mats[j].T @ mats[i]):
            return False, f"V_{i + 1}^T V_{j + 1} + V_{j + 1}^T V_{i + 1} != 0"
    return True, None


# -- designs ----------------------------------------------------------------


@dataclass(frozen=True)
class OccupancyDesign:
    """Matrix of entries ``sign * xi_index`` (``index`` 1-based, 0 for an empty cell)."""

    signs: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    d: int

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int64)
        index = np.asarray(self.index, dtype=np.int64)
        if signs.ndim != 2 or signs.shape != index.shape:
            raise ValueError("signs and index must be matrices of the same shape")
        if not np.all(np.isin(signs, (-1, 0, 1))):
            raise ValueError("signs must be -1, 0 or +1")
        if np.any((signs == 0) != (index == 0)) or np.any(index < 0) or np.any(index > self.d):
            raise ValueError("index must be in 1..d exactly on the nonzero cells")
        signs.flags.writeable = False
        index.flags.writeable = False
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "index", index)

    @property
    def rows(self) -> int:
        return self.signs.shape[0]

    @property
    def cols(self) -> int:
        return self.signs.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.signs.shape

    def counts(self) -> np.ndarray:
        """``l_t``: occurrences of each indeterminate, length ``d``."""
        return np.bincount(self.index.ravel(), minlength=self.d + 1)[1:]

    def score(self) -> int:
        return int(np.sum(self.counts() ** 2))

    def tokens(self) -> list[list[str]]:
        out = []
        for srow, irow in zip(self.signs, self.index):
            out.append(["0" if s == 0 else f"{'+' if s > 0 else '-'}x{i}" for s, i in zip(srow, irow)])
        return out

    def to_text(self) -> str:
        toks = self.tokens()
        width = max(len(t) for row in toks for t in row)
        return "\n".join(" ".join(t.rjust(width) for t in row) for row in toks)

    def submatrix(self, rows, cols) -> "OccupancyDesign":
        ix = np.ix_(list(rows), list(cols))
        return OccupancyDesign(self.signs[ix], self.index[ix], self.d)

    def transpose(self) -> "OccupancyDesign":
        return OccupancyDesign(self.signs.T, self.index.T, self.d)

    def sample(self, rng: RngLike, power: float = 1.0, size: int | None = None) -> np.ndarray:
        """Realize the design with ``xi_k`` i.i.d. ``N(0, P/n_t)``."""
        gen = as_generator(rng)
        n = 1 if size is None else size
        xi = np.sqrt(power / self.rows) * gen.standard_normal((n, self.d + 1))
        x = self.signs * np.take(xi, self.index, axis=1)
        return x[0] if size is None else x

    def as_dict(self) -> dict:
        return {"n_t": self.rows, "T": self.cols, "d": self.d, "grid": self.tokens(), "score": self.score()}


def assemble_design(fam: HurwitzRadonFamily, n_t: int) -> OccupancyDesign:
    """``n_t x n`` design whose ``i``-th row is ``xi V_i``."""
    ok, why = check_hr(fam)
    if not ok:
        raise ValueError(f"family is not Hurwitz-Radon: {why}")
    if not 1 <= n_t <= fam.k:
        raise ValueError(f"n_t must lie in [1, {fam.k}], got {n_t}")
    n = fam.n
    signs = np.zeros((n_t, n), dtype=np.int64)
    index = np.zeros((n_t, n), dtype=np.int64)
    for i in range(n_t):
        v = fam.mats[i]
        # (xi V)_t = sum_s xi_s V[s, t]; exactly one s per column
        src = np.argmax(v != 0, axis=0)
        signs[i] = v[src, np.arange(n)]
        index[i] = src + 1
    return OccupancyDesign(signs, index, n)


def full_rate_design(n_t: int, T: int) -> OccupancyDesign:
    """Full-rate orthogonal ``n_t x T`` design; needs ``n_t <= rho(T)`` or ``T <= rho(n_t)``."""
    if n_t <= rho(T):
        return assemble_design(build_hr_family(T), n_t)
    if T <= rho(n_t):
        return assemble_design(build_hr_family(n_t), T).transpose()
    raise ValueError(f"no full-rate orthogonal design for n_t={n_t}, T={T}")


# -- Gaussian caid covariances ----------------------------------------------


@dataclass(frozen=True)
class GaussianCaidCov:
    """Covariance of ``vec(X)`` with ``X`` flattened row-major (index ``i*T + k``)."""

    cov: np.ndarray = field(repr=False)
    n_t: int
    T: int
    power: float

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        m = self.n_t * self.T
        if cov.shape != (m, m):
            raise ValueError(f"cov must be {m}x{m}, got {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise ValueError("cov has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("cov is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -PSD_TOL * scale:
            raise ValueError("cov is not positive semidefinite")
        object.__setattr__(self, "cov", cov)

    def block(self, i: int, j: int) -> np.ndarray:
        """``E[R_i^T R_j]``: entry ``(k, l)`` is ``E[X_ik X_jl]``."""
        T = self.T
        return self.cov[i * T : (i + 1) * T, j * T : (j + 1) * T]

    def col_block(self, k: int, l: int) -> np.ndarray:
        """``E[C_k C_l^T]``: entry ``(i, j)`` is ``E[X_ik X_jl]``."""
        c = self.cov.reshape(self.n_t, self.T, self.n_t, self.T)
        return c[:, k, :, l]

    def submatrix(self, rows, cols) -> "GaussianCaidCov":
        rows, cols = list(rows), list(cols)
        flat = [i * self.T + k for i in rows for k in cols]
        return GaussianCaidCov(self.cov[np.ix_(flat, flat)], len(rows), len(cols), self.power)


class CaidReport(NamedTuple):
    rows_ok: bool
    cols_ok: bool
    violations: list

    @property
    def ok(self) -> bool:
        return self.rows_ok and self.cols_ok


def check_caid(cov: GaussianCaidCov, tol: float = CAID_TOL) -> CaidReport:
    """Check the row and column second-moment conditions of a caid.

    Rows: ``E[R_i^T R_i] = P/n_t I_T`` and ``E[R_i^T R_j] = -E[R_j^T R_i]``.
    Columns: ``E[C_k C_k^T] = P/n_t I_{n_t}`` and ``E[C_k C_l^T] = -E[C_l C_k^T]``.
    For jointly Gaussian inputs and rank-1 fading either set is sufficient.
    """
    s = cov.power / cov.n_t
    bad = []
    rows_ok = cols_ok = True
    for i in range(cov.n_t):
        if np.max(np.abs(cov.block(i, i) - s * np.eye(cov.T))) > tol:
            rows_ok = False
            bad.append(f"row1: E[R_{i + 1}^T R_{i + 1}] != P/n_t I")
    for i, j in itertools.combinations(range(cov.n_t), 2):
        if np.max(np.abs(cov.block(i, j) + cov.block(j, i))) > tol:
            rows_ok = False
            bad.append(f"row2: E[R_{i + 1}^T R_{j + 1}] != -E[R_{j + 1}^T R_{i + 1}]")
    for k in range(cov.T):
        if np.max(np.abs(cov.col_block(k, k) - s * np.eye(cov.n_t))) > tol:
            cols_ok = False
            bad.append(f"col1: E[C_{k + 1} C_{k + 1}^T] != P/n_t I")
    for k, l in itertools.combinations(range(cov.T), 2):
        if np.max(np.abs(cov.col_block(k, l) + cov.col_block(l, k))) > tol:
            cols_ok = False
            bad.append(f"col2: E[C_{k + 1} C_{l + 1}^T] != -E[C_{l + 1} C_{k + 1}^T]")
    return CaidReport(rows_ok, cols_ok, bad)


def _design_power(design: OccupancyDesign, params: ChannelParams) -> float:
    if (params.n_t, params.coherence_T) != design.shape:
        raise ValueError(f"design is {design.shape}, params are {(params.n_t, params.coherence_T)}")
    return float(params.power)


def design_cov(design: OccupancyDesign, params: ChannelParams) -> GaussianCaidCov:
    """Covariance of ``vec(X)`` when the indeterminates are i.i.d. ``N(0, P/n_t)``."""
    power = _design_power(design, params)
    s = design.signs.ravel().astype(float)
    idx = design.index.ravel()
    same = (idx[:, None] == idx[None, :]) & (idx[:, None] > 0)
    cov = (power / design.rows) * np.outer(s, s) * same
    return GaussianCaidCov(cov, design.rows, design.cols, power)


def score_from_cov(cov: GaussianCaidCov) -> float:
    """``sum rho_ikjl^2`` with ``rho = n_t/P Cov``; equals ``n_t^2/(2P^2) Var||X||_F^2``."""
    if not cov.power > 0:
        raise ValueError("the normalized score needs P > 0")
    return float(np.sum((cov.n_t / cov.power * cov.cov) ** 2))


def var_frobsq(design: OccupancyDesign, params: ChannelParams) -> tuple[float, int]:
    """``(Var ||X||_F^2, score)`` with ``score = n_t^2/(2P^2) Var ||X||_F^2 = sum l_t^2``."""
    power = _design_power(design, params)
    score = design.score()
    return 2.0 * (power / design.rows) ** 2 * score, score


def gaussian_caid_2x2(rho: float, power: float = 1.0) -> GaussianCaidCov:
    """Covariance of ``sqrt(P/2) [[xi1, -r xi2 + s xi3], [xi2, r xi1 + s xi4]]``, ``s = sqrt(1-r^2)``."""
    r = float(rho)
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    s = math.sqrt(1.0 - r * r)
    # rows: X11, X12, X21, X22 as combinations of xi1..xi4
    b = np.array([[1, 0, 0, 0], [0, -r, s, 0], [0, 1, 0, 0], [r, 0, 0, s]], dtype=float)
    return GaussianCaidCov(power / 2 * b @ b.T, 2, 2, power)


# -- v* bounds and table ----------------------------------------------------------


class VstarBound(NamedTuple):
    value: int
    exact: bool


def vstar_upper(n_t: int, T: int) -> VstarBound:
    """``v*(n_t, T) <= n_t T min(n_t, T)``, tight when ``n_t <= rho(T)`` or ``T <= rho(n_t)``."""
    for name, v in (("n_t", n_t), ("T", T)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    return VstarBound(n_t * T * min(n_t, T), n_t <= rho(T) or T <= rho(n_t))


def truncation_search(n_t: int, T: int, base: OccupancyDesign) -> tuple[OccupancyDesign, int]:
    """Best ``n_t x T`` submatrix of ``base`` by ``sum l_t^2``.

    Exhaustive over row and column subsets in lexicographic order; the
    first maximizer wins.
    """
    R, C = base.shape
    if not (1 <= n_t <= R and 1 <= T <= C):
        raise ValueError(f"cannot cut {n_t}x{T} out of a {R}x{C} design")
    n_sub = math.comb(R, n_t) * math.comb(C, T)
    if n_sub > SEARCH_LIMIT:
        raise ValueError(f"{n_sub} submatrices exceed the search limit {SEARCH_LIMIT}")
    col_sets = np.array(list(itertools.combinations(range(C), T)), dtype=np.int64)
    best, best_rows, best_cols = -1, None, None
    for rows in itertools.combinations(range(R), n_t):
        sub = base.index[list(rows)][:, col_sets]  # (n_t, n_cols, T)
        sub = np.moveaxis(sub, 1, 0).reshape(len(col_sets), -1)
        onehot = np.zeros((len(col_sets), base.d + 1), dtype=np.int64)
        np.add.at(onehot, (np.repeat(np.arange(len(col_sets)), sub.shape[1]), sub.ravel()), 1)
        scores = np.sum(onehot[:, 1:] ** 2, axis=1)
        j = int(np.argmax(scores))
        if scores[j] > best:
            best, best_rows, best_cols = int(scores[j]), rows, tuple(col_sets[j])
    return base.submatrix(best_rows, best_cols), best


class VstarEntry(NamedTuple):
    lower: int
    upper: int
    exact: bool

    def text(self) -> str:
        return str(self.lower) if self.exact else f"[{self.lower},{self.upper}]"


def _truncation_base(n_t: int, T: int, max_dim: int) -> OccupancyDesign:
    # smallest power-of-two order covering the table; 8x8 for max_dim <= 8
    if max_dim <= 8:
        return full_rate_design(8, 8)
    Tp = T
    while rho(Tp) < n_t:
        Tp += 1
    return full_rate_design(rho(Tp), Tp)


def vstar_table(max_dim: int = 8) -> dict[tuple[int, int], VstarEntry]:
    """Known values of ``v*(n_t, T)`` for ``1 <= n_t, T <= max_dim``.

    Exact entries come from assembled full-rate designs. The rest are
    intervals ``[truncation lower bound, n_t T min(n_t, T)]``; truncation
    uses the 8x8 full-rate design when ``max_dim <= 8``. Entries whose
    truncation search would be too large fall back to the Telatar value
    ``n_t T`` as the lower end.
    """
    if int(max_dim) != max_dim or max_dim < 1:
        raise ValueError(f"max_dim must be a positive integer, got {max_dim}")
    table: dict[tuple[int, int], VstarEntry] = {}
    for n_t in range(1, max_dim + 1):
        for T in range(n_t, max_dim + 1):
            up = vstar_upper(n_t, T)
            if up.exact:
                score = full_rate_design(n_t, T).score()
                entry = VstarEntry(score, up.value, True)
            else:
                try:
                    _, low = truncation_search(n_t, T, _truncation_base(n_t, T, max_dim))
                except ValueError:
                    low = n_t * T
                entry = VstarEntry(low, up.value, False)
            table[(n_t, T)] = table[(T, n_t)] = entry
    return table
