"""Single-block second-degree transforms, model factorization and error formulas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .covmodel import BlockPartition, CovariancePack, reduce
from .matalg import InvalidInputError, as_matrix, pinv, sqrt_psd, truncated_svd

VARIANTS = ("orthonormal", "weighted")


@dataclass(frozen=True)
class SecondDegreeSensor:
    """Sensor map ``u = S0 + S1 y + S2 y**2``.

    ``S0`` is ``None`` for the reduced lifting; ``S0`` and ``S2`` are ``None``
    for a purely linear sensor.
    """

    S1: np.ndarray
    S0: np.ndarray | None = None
    S2: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.S1.shape[0]

    @property
    def S(self) -> np.ndarray:
        """Full coefficient block acting on the lifted observation."""
        parts = [M for M in (self.S0, self.S1, self.S2) if M is not None]
        return np.hstack(parts)

    @classmethod
    def from_block(cls, S: np.ndarray, n: int, lifting: str) -> "SecondDegreeSensor":
        S = np.asarray(S, dtype=float)
        if lifting == "full":
            return cls(S0=S[:, :1], S1=S[:, 1:1 + n], S2=S[:, 1 + n:])
        if lifting == "reduced":
            return cls(S1=S[:, :n], S2=S[:, n:])
        return cls(S1=S)

    def encode(self, Y) -> np.ndarray:
        """Compress observation columns ``Y`` (n_j, s) to ``(r_j, s)``."""
        Y = as_matrix(Y, "Y")
        U = self.S1 @ Y
        if self.S2 is not None:
            U = U + self.S2 @ (Y * Y)
        if self.S0 is not None:
            U = U + self.S0
        return U


@dataclass(frozen=True)
class FusionCenter:
    blocks: tuple

    @property
    def T(self) -> np.ndarray:
        return np.hstack(self.blocks)


@dataclass(frozen=True)
class NetworkModel:
    sensors: tuple
    fusion: FusionCenter
    partition: BlockPartition

    def composite_blocks(self) -> list[np.ndarray]:
        return [T @ s.S for T, s in zip(self.fusion.blocks, self.sensors)]


def join_blocks(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.hstack(list(blocks))


def split_blocks(P: np.ndarray, partition: BlockPartition) -> list[np.ndarray]:
    return [P[:, partition.z_slice(j)].copy() for j in range(partition.p)]


def sdt_factors(E_xjzj, E_zjzj, r_j: int):
    """Truncated-SVD factors of the single-sensor transform.

    Returns ``(U, s, V, W)`` with ``P = U diag(s) V^T W`` and
    ``W = (E_zjzj^{1/2})^+``, plus the tie flag.
    """
    E_xz = as_matrix(E_xjzj, "E_xjzj")
    W = pinv(sqrt_psd(E_zjzj))
    if E_xz.shape[1] != W.shape[0]:
        raise InvalidInputError("E_xjzj and E_zjzj dimensions disagree")
    U, s, V, tied = truncated_svd(E_xz @ W, r_j)
    return U, s, V, W, tied


def sdt_single(E_xjzj, E_zjzj, r_j: int) -> np.ndarray:
    """Rank-``r_j`` optimal second-degree transform for one sensor.

    ``[E_xz (E_zz^{1/2})^+]_r (E_zz^{1/2})^+``, well defined for singular
    ``E_zz``.
    """
    U, s, V, W, _ = sdt_factors(E_xjzj, E_zjzj, r_j)
    return (U * s) @ (V.T @ W)


def factor_model(U, s, V, G, variant: str = "orthonormal"):
    """Split ``P = U diag(s) V^T G^+`` into fusion block ``T`` and sensor ``S``.

    ``orthonormal``: ``T = U``, ``S = diag(s) V^T G^+``.
    ``weighted``:    ``T = U diag(s)``, ``S = V^T G^+``.
    """
    if variant not in VARIANTS:
        raise InvalidInputError(f"unknown variant {variant!r}")
    U = np.asarray(U, dtype=float)
    s = np.asarray(s, dtype=float)
    right = np.asarray(V, dtype=float).T @ pinv(G)
    if variant == "orthonormal":
        return U.copy(), s[:, None] * right
    return U * s, right


def mse_moment(P, pack: CovariancePack) -> float:
    """``E||x - P z||^2`` expanded directly in the moments (no square roots)."""
    P = as_matrix(P, "P")
    return float(
        np.trace(pack.E_xx) - 2.0 * np.sum(P * pack.E_xz) + np.sum((P @ pack.E_zz) * P)
    )


def error_exact(P, pack: CovariancePack, red=None) -> float:
    """Mean squared error of the composite model ``x_hat = P z``.

    Evaluated as ``||E_xx^{1/2}||^2 - ||H||^2 + ||H - P E_zz^{1/2}||^2``;
    rounding negatives are clamped to zero.
    """
    P = as_matrix(P, "P")
    part = pack.partition
    if P.shape != (part.m, part.dim):
        raise InvalidInputError(f"P must be {part.m}x{part.dim}, got {P.shape}")
    red = reduce(pack) if red is None else red
    val = (
        np.trace(pack.E_xx)
        - np.sum(red.H**2)
        + np.sum((red.H - P @ red.sqrtEzz) ** 2)
    )
    return max(float(val), 0.0)


def _sq_singular_values(A, B) -> np.ndarray:
    # spectrum of A B^+ A^T for PSD B, via the singular values of A (B^{1/2})^+
    K = A @ pinv(sqrt_psd(B))
    if K.size == 0:
        return np.zeros(0)
    return np.linalg.svd(K, compute_uv=False) ** 2


@dataclass(frozen=True)
class BlockErrorTerms:
    """Pieces of the block-optimum error ``tr E_xx - sum(delta) - sum(mu) - beta``.

    ``delta``      leading ``r_j`` eigenvalues from the linear coordinates of
                   block ``j``, i.e. of ``E_{x y_j} E_{y_j y_j}^+ E_{y_j x}``
                   with ``x`` replaced by the residual target.
    ``mu``         gain of the nonlinear coordinates: for ``i <= r_j`` the
                   increase of the ``i``-th eigenvalue when the full lifted
                   block replaces ``y_j`` (nonnegative by Weyl's inequality).
    ``innovation`` all eigenvalues of ``C_j H_j^+ C_j^T``; their sum equals
                   ``sum(mu)`` whenever ``r_j`` covers the full rank.
    ``beta``       ``tr(2 E_{w x} - E_{w w})`` for the fixed contribution ``w``
                   of the other blocks.
    """

    trace_xx: float
    delta: np.ndarray
    mu: np.ndarray
    innovation: np.ndarray
    beta: float

    @property
    def error(self) -> float:
        return max(
            float(self.trace_xx - self.delta.sum() - self.mu.sum() - self.beta), 0.0
        )


def block_error_terms(j: int, P_all: Sequence[np.ndarray], pack: CovariancePack):
    part = pack.partition
    if not 0 <= j < part.p:
        raise InvalidInputError(f"block index {j} out of range")
    W = [np.zeros_like(P) if i == j else np.asarray(P, float) for i, P in enumerate(P_all)]
    Wfull = join_blocks(W)
    E_wx = Wfull @ pack.E_xz.T
    E_ww = Wfull @ pack.E_zz @ Wfull.T
    beta = float(np.trace(2.0 * E_wx - E_ww))

    sl = part.z_slice(j)
    E_bz = pack.E_xz[:, sl] - Wfull @ pack.E_zz[:, sl]
    E_jj = pack.E_zz[sl, sl]
    lin = part.linear_local(j)
    quad = part.nonlinear_local(j)
    r = part.r[j]

    full = _sq_singular_values(E_bz, E_jj)
    linear = _sq_singular_values(E_bz[:, lin], E_jj[np.ix_(lin, lin)])
    full = np.pad(full, (0, max(0, r - full.size)))[:r]
    delta = np.pad(linear, (0, max(0, r - linear.size)))[:r]
    mu = np.clip(full - delta, 0.0, None)

    if quad.size:
        Eyy_p = pinv(E_jj[np.ix_(lin, lin)])
        E_yq = E_jj[np.ix_(lin, quad)]
        C = E_bz[:, quad] - E_bz[:, lin] @ Eyy_p @ E_yq
        Hq = E_jj[np.ix_(quad, quad)] - E_yq.T @ Eyy_p @ E_yq
        M = C @ pinv(0.5 * (Hq + Hq.T)) @ C.T
        innovation = np.clip(np.linalg.eigvalsh(0.5 * (M + M.T))[::-1], 0.0, None)
    else:
        innovation = np.zeros(0)
    return BlockErrorTerms(
        trace_xx=float(np.trace(pack.E_xx)), delta=delta, mu=mu,
        innovation=innovation, beta=beta,
    )


def error_block_formula(j: int, P_all: Sequence[np.ndarray], pack: CovariancePack) -> float:
    """Error after block ``j`` is replaced by its rank-``r_j`` optimum.

    The other entries of ``P_all`` stay fixed; the value of ``P_all[j]``
    is ignored.
    """
    return block_error_terms(j, P_all, pack).error
