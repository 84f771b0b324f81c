"""Second-moment inputs for the sensor network.

A :class:`CovariancePack` holds ``E_xx``, ``E_xz`` and ``E_zz`` where ``z``
stacks the per-sensor lifted observations.  Three liftings are supported:

``"full"``     ``z_j = [1; y_j; y_j**2]``  (block width ``2 n_j + 1``)
``"reduced"``  ``z_j = [y_j; y_j**2]``     (block width ``2 n_j``)
``"linear"``   ``z_j = y_j``               (block width ``n_j``)

Moments are raw (``E[a b^T]``, no mean subtraction).  With the full lifting
the constant coordinate absorbs any means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .matalg import InvalidInputError, as_matrix, pinv, sqrt_psd

LIFTINGS = ("full", "reduced", "linear")


def even_split(m: int, p: int) -> tuple[int, ...]:
    """Split ``m`` into ``p`` nearly equal positive parts, larger parts first."""
    q, rem = divmod(m, p)
    return tuple(q + 1 if j < rem else q for j in range(p))


@dataclass(frozen=True)
class BlockPartition:
    """Sensor layout: observation sizes ``n``, ranks ``r``, signal size ``m``."""

    n: tuple[int, ...]
    r: tuple[int, ...]
    m: int
    m_split: tuple[int, ...] = ()
    lifting: str = "full"

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        r = tuple(int(v) for v in self.r)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "r", r)
        if not n or len(n) != len(r):
            raise InvalidInputError("n and r must be nonempty and equally long")
        if self.lifting not in LIFTINGS:
            raise InvalidInputError(f"unknown lifting {self.lifting!r}")
        if self.m < 1 or min(n) < 1:
            raise InvalidInputError("dimensions must be positive")
        for j, (nj, rj) in enumerate(zip(n, r)):
            if not 0 <= rj <= min(self.m, nj):
                raise InvalidInputError(
                    f"r[{j}]={rj} violates 0 <= r_j <= min(m={self.m}, n_j={nj})"
                )
        split = tuple(int(v) for v in self.m_split) or even_split(self.m, len(n))
        if len(split) != len(n) or sum(split) != self.m or min(split) < 0:
            raise InvalidInputError(f"m_split {split} must have p entries summing to m")
        object.__setattr__(self, "m_split", split)

    @property
    def p(self) -> int:
        return len(self.n)

    @property
    def widths(self) -> tuple[int, ...]:
        extra = {"full": lambda k: 2 * k + 1, "reduced": lambda k: 2 * k,
                 "linear": lambda k: k}[self.lifting]
        return tuple(extra(k) for k in self.n)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.widths)]).astype(int))

    @property
    def dim(self) -> int:
        return int(sum(self.widths))

    def z_slice(self, j: int) -> slice:
        off = self.offsets
        return slice(off[j], off[j + 1])

    def x_slice(self, j: int) -> slice:
        start = sum(self.m_split[:j])
        return slice(start, start + self.m_split[j])

    def linear_local(self, j: int) -> np.ndarray:
        """Positions of the ``y_j`` coordinates inside block ``j``."""
        start = 1 if self.lifting == "full" else 0
        return np.arange(start, start + self.n[j])

    def nonlinear_local(self, j: int) -> np.ndarray:
        """Positions of the constant and squared coordinates inside block ``j``."""
        lin = set(self.linear_local(j).tolist())
        return np.array([k for k in range(self.widths[j]) if k not in lin], dtype=int)

    def linear_index(self) -> np.ndarray:
        off = self.offsets
        return np.concatenate([off[j] + self.linear_local(j) for j in range(self.p)])

    def with_lifting(self, lifting: str) -> "BlockPartition":
        return replace(self, lifting=lifting)

    def with_ranks(self, r: Sequence[int]) -> "BlockPartition":
        return replace(self, r=tuple(r))


@dataclass(frozen=True)
class CovariancePack:
    E_xx: np.ndarray
    E_xz: np.ndarray
    E_zz: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        part = self.partition
        E_xx = as_matrix(self.E_xx, "E_xx")
        E_xz = as_matrix(self.E_xz, "E_xz")
        E_zz = as_matrix(self.E_zz, "E_zz")
        N = part.dim
        if E_xx.shape != (part.m, part.m):
            raise InvalidInputError(f"E_xx must be {part.m}x{part.m}, got {E_xx.shape}")
        if E_xz.shape != (part.m, N):
            raise InvalidInputError(f"E_xz must be {part.m}x{N}, got {E_xz.shape}")
        if E_zz.shape != (N, N):
            raise InvalidInputError(f"E_zz must be {N}x{N}, got {E_zz.shape}")
        for name, A in (("E_xx", E_xx), ("E_zz", E_zz)):
            scale = max(1.0, float(np.abs(A).max()))
            if np.abs(A - A.T).max() > 1e-10 * scale:
                raise InvalidInputError(f"{name} is not symmetric")
        object.__setattr__(self, "E_xx", 0.5 * (E_xx + E_xx.T))
        object.__setattr__(self, "E_xz", E_xz)
        object.__setattr__(self, "E_zz", 0.5 * (E_zz + E_zz.T))

    @property
    def p(self) -> int:
        return self.partition.p

    def zz(self, i: int, j: int) -> np.ndarray:
        part = self.partition
        return self.E_zz[part.z_slice(i), part.z_slice(j)]

    def xz(self, j: int) -> np.ndarray:
        return self.E_xz[:, self.partition.z_slice(j)]

    def restrict_linear(self) -> "CovariancePack":
        """Moments of the unlifted observations ``y`` (drops constant and squares)."""
        idx = self.partition.linear_index()
        return CovariancePack(
            E_xx=self.E_xx,
            E_xz=self.E_xz[:, idx],
            E_zz=self.E_zz[np.ix_(idx, idx)],
            partition=self.partition.with_lifting("linear"),
        )

    def with_ranks(self, r: Sequence[int]) -> "CovariancePack":
        return replace(self, partition=self.partition.with_ranks(r))


@dataclass(frozen=True)
class ReducedForm:
    """``H = E_xz (E_zz^{1/2})^+`` and the row blocks ``G_j`` of ``E_zz^{1/2}``."""

    H: np.ndarray
    G: list = field(default_factory=list)
    sqrtEzz: np.ndarray | None = None


def lift_sample(Y, lifting: str = "full") -> np.ndarray:
    """Stack ``[1; y; y**2]`` (or the reduced / linear variant) column-wise."""
    Y = as_matrix(Y, "Y")
    s = Y.shape[1]
    if lifting == "full":
        return np.vstack([np.ones((1, s)), Y, Y * Y])
    if lifting == "reduced":
        return np.vstack([Y, Y * Y])
    if lifting == "linear":
        return Y
    raise InvalidInputError(f"unknown lifting {lifting!r}")


def lift_all(Ylist: Sequence, lifting: str = "full") -> np.ndarray:
    return np.vstack([lift_sample(Y, lifting) for Y in Ylist])


def sample_covariances(
    X,
    Ylist: Sequence,
    r: Sequence[int],
    lifting: str = "full",
    m_split: Sequence[int] = (),
) -> CovariancePack:
    """Raw second moments ``(1/s) X Z^T`` etc. from paired training samples."""
    X = as_matrix(X, "X")
    Ys = [as_matrix(Y, f"Y[{j}]") for j, Y in enumerate(Ylist)]
    s = X.shape[1]
    if s < 1 or any(Y.shape[1] != s for Y in Ys):
        raise InvalidInputError("X and every Y_j need the same positive sample count")
    part = BlockPartition(
        n=tuple(Y.shape[0] for Y in Ys), r=tuple(r), m=X.shape[0],
        m_split=tuple(m_split), lifting=lifting,
    )
    Z = lift_all(Ys, lifting)
    return CovariancePack(
        E_xx=X @ X.T / s, E_xz=X @ Z.T / s, E_zz=Z @ Z.T / s, partition=part
    )


def gaussian_analytic_covariances(
    E_xx,
    noise_sd: Sequence[float],
    r: Sequence[int],
    lifting: str = "reduced",
    m_split: Sequence[int] = (),
    drop_cross_term: bool = False,
) -> CovariancePack:
    """Moments for ``y_j = x + sigma_j xi_j`` with zero-mean Gaussian ``x`` and noise.

    Uses the Gaussian rules ``E[a^2 b] = 0`` and
    ``Cov(a^2, b^2) = 2 Cov(a, b)^2``.  With ``lifting="reduced"`` the squared
    coordinates are taken centred, giving the familiar block pattern
    ``[[E_yy, 0], [0, E_{y^2 y^2}]]``; with ``lifting="full"`` raw moments of
    ``[1; y; y^2]`` are returned so they match :func:`sample_covariances` on
    simulated draws.

    ``drop_cross_term=True`` replaces the same-sensor squared block by
    ``2 E_xx**2 + 2 sigma_j**4 I``, i.e. drops the ``4 sigma_j^2 E_xx`` cross
    term between signal and noise.  Only valid for the reduced lifting.
    """
    E_xx = as_matrix(E_xx, "E_xx")
    m = E_xx.shape[0]
    if E_xx.shape != (m, m):
        raise InvalidInputError("E_xx must be square")
    if np.abs(E_xx - E_xx.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(E_xx).max()):
        raise InvalidInputError("E_xx must be symmetric")
    sig = np.asarray(noise_sd, dtype=float)
    p = sig.size
    if lifting == "linear":
        raise InvalidInputError("use lifting='reduced' and restrict_linear()")
    if drop_cross_term and lifting != "reduced":
        raise InvalidInputError("drop_cross_term requires lifting='reduced'")
    part = BlockPartition(n=(m,) * p, r=tuple(r), m=m, m_split=tuple(m_split),
                          lifting=lifting)

    # covariance of the stacked observations y = [y_1; ...; y_p]
    Syy = np.kron(np.ones((p, p)), E_xx) + np.kron(np.diag(sig**2), np.eye(m))
    sq = 2.0 * Syy**2
    if drop_cross_term:
        sq = np.kron(np.ones((p, p)), 2.0 * E_xx**2) + np.kron(
            np.diag(2.0 * sig**4), np.eye(m)
        )
    var = np.diag(Syy)
    if lifting == "full":
        sq = sq + np.outer(var, var)

    N = part.dim
    E_zz = np.zeros((N, N))
    E_xz = np.zeros((m, N))
    lin = [part.z_slice(j).start + part.linear_local(j) for j in range(p)]
    quad = [part.z_slice(j).start + part.linear_local(j) + m for j in range(p)]
    for i in range(p):
        E_xz[:, lin[i]] = E_xx
        for j in range(p):
            bi, bj = slice(i * m, (i + 1) * m), slice(j * m, (j + 1) * m)
            E_zz[np.ix_(lin[i], lin[j])] = Syy[bi, bj]
            E_zz[np.ix_(quad[i], quad[j])] = sq[bi, bj]
    if lifting == "full":
        const = [part.z_slice(j).start for j in range(p)]
        for i in range(p):
            for j in range(p):
                E_zz[const[i], const[j]] = 1.0
            for j in range(p):
                E_zz[const[i], quad[j]] = var[j * m:(j + 1) * m]
                E_zz[quad[j], const[i]] = var[j * m:(j + 1) * m]
    return CovariancePack(E_xx=E_xx, E_xz=E_xz, E_zz=E_zz, partition=part)


def reduce(pack: CovariancePack) -> ReducedForm:
    root = sqrt_psd(pack.E_zz)
    H = pack.E_xz @ pinv(root)
    part = pack.partition
    G = [root[part.z_slice(j), :] for j in range(part.p)]
    return ReducedForm(H=H, G=G, sqrtEzz=root)


def read_matrix(path) -> np.ndarray:
    """Read a comma-separated matrix, one row per line."""
    A = np.loadtxt(Path(path), delimiter=",", ndmin=2, dtype=np.float64)
    return as_matrix(A, str(path))


def write_matrix(path, A) -> None:
    """Write ``A`` comma-separated with 17 significant digits (round-trip exact)."""
    A = as_matrix(A)
    np.savetxt(Path(path), A, delimiter=",", fmt="%.17g")
