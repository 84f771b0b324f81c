"""Dense linear-algebra kernel.

Every routine takes and returns plain ``float64`` numpy arrays and never
mutates its arguments.  Singular inputs are handled through pseudo-inverses
throughout, so none of the solvers here require full-rank matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(np.float64).eps

# singular values closer than this (relative to sigma_1) count as tied
TIE_RTOL = 1e-10


class InvalidInputError(ValueError):
    """Raised for malformed, non-finite or inconsistent matrix arguments."""


class NotPSDError(InvalidInputError):
    """Raised when a matrix that must be PSD has a clearly negative eigenvalue."""


class NumericalFailure(ArithmeticError):
    """Raised when an underlying LAPACK decomposition fails to converge."""


def as_matrix(C, name: str = "matrix") -> np.ndarray:
    """Validate ``C`` as a finite 2-D float array and return a float64 copy."""
    A = np.array(C, dtype=np.float64, copy=True)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return A


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD ``C = U @ diag(S) @ V.T`` with ``U`` (m, m) and ``V`` (s, s)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        m, s = self.U.shape[0], self.V.shape[0]
        k = len(self.S)
        return (self.U[:, :k] * self.S) @ self.V[:, :k].T if k else np.zeros((m, s))


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> None:
    # first nonzero entry of every u_i made nonnegative; v_i flipped alongside
    k = min(U.shape[1], Vt.shape[0])
    for i in range(k):
        col = U[:, i]
        nz = np.flatnonzero(np.abs(col) > EPS)
        if nz.size and col[nz[0]] < 0:
            U[:, i] = -col
            Vt[i, :] = -Vt[i, :]
    for i in range(k, U.shape[1]):
        col = U[:, i]
        nz = np.flatnonzero(np.abs(col) > EPS)
        if nz.size and col[nz[0]] < 0:
            U[:, i] = -col


def _svd(A: np.ndarray, full_matrices: bool):
    m, s = A.shape
    if m == 0 or s == 0:
        km = m if full_matrices else 0
        ks = s if full_matrices else 0
        return np.eye(m)[:, :km], np.zeros(0), np.eye(s)[:ks, :]
    try:
        U, S, Vt = np.linalg.svd(A, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    _fix_signs(U, Vt)
    return U, S, Vt


def svd(C) -> SvdFactors:
    """Full singular value decomposition with a reproducible sign convention.

    Singular values are returned in descending order.  Column signs are fixed
    so that the first nonzero entry of each left singular vector is
    nonnegative (the matching right vector is flipped with it).
    """
    A = as_matrix(C)
    U, S, Vt = _svd(A, full_matrices=True)
    return SvdFactors(U=U, S=S, V=Vt.T)


def default_tol(shape, smax: float) -> float:
    return max(shape) * EPS * smax


def numerical_rank(S: np.ndarray, shape, tol: float = 0.0) -> int:
    if S.size == 0 or S[0] == 0.0:
        return 0
    cut = tol * S[0] if tol > 0 else default_tol(shape, S[0])
    return int(np.count_nonzero(S > cut))


def pinv(C, tol: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudo-inverse.

    Parameters
    ----------
    C : array_like
        Any finite real matrix.
    tol : float
        Relative cutoff: singular values below ``tol * sigma_max`` are treated
        as zero.  ``0`` selects ``max(m, n) * eps`` as the relative cutoff.
    """
    if tol < 0:
        raise InvalidInputError("tol must be nonnegative")
    A = as_matrix(C)
    U, S, Vt = _svd(A, full_matrices=False)
    k = numerical_rank(S, A.shape, tol)
    if k == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    return (Vt[:k].T / S[:k]) @ U[:, :k].T


def _check_symmetric(A: np.ndarray, name: str) -> np.ndarray:
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"{name} must be square, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def eigh_psd(M, clamp: float | None = None, name: str = "matrix"):
    """Eigendecomposition of a symmetric PSD matrix with roundoff-level eigenvalues zeroed.

    Eigenvalues with ``|lambda| <= clamp * |lambda|_max`` are set to zero so
    the result has the numerical rank of ``M``; anything more negative raises
    :class:`NotPSDError`.  ``clamp=None`` uses ``n * eps``.
    """
    A = _check_symmetric(as_matrix(M, name), name)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    try:
        w, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigh did not converge: {exc}") from exc
    lmax = float(np.max(np.abs(w)))
    thresh = (n * EPS if clamp is None else clamp) * lmax
    if w.min() < -thresh:
        raise NotPSDError(
            f"{name} has eigenvalue {w.min():.3e} below -{thresh:.3e}"
        )
    return np.where(w > thresh, w, 0.0), Q


def sqrt_psd(M, clamp: float | None = None) -> np.ndarray:
    """Symmetric PSD square root ``R`` with ``R @ R == M`` (after clamping)."""
    w, Q = eigh_psd(M, clamp)
    if w.size == 0:
        return np.zeros((0, 0))
    R = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (R + R.T)


def truncate(C, r: int) -> np.ndarray:
    """Best rank-``r`` approximation ``[C]_r``; returns ``C`` when ``r >= rank C``."""
    if r < 0:
        raise InvalidInputError("rank must be nonnegative")
    A = as_matrix(C)
    U, S, Vt = _svd(A, full_matrices=False)
    if r >= numerical_rank(S, A.shape):
        return A
    return (U[:, :r] * S[:r]) @ Vt[:r]


def truncated_svd(C, r: int):
    """First ``r`` singular triplets ``(U_r, s_r, V_r)`` plus a tie flag.

    The flag is true when ``1 <= r < rank C`` and ``sigma_r == sigma_{r+1}``
    within :data:`TIE_RTOL`, i.e. when ``[C]_r`` is not unique.
    """
    A = as_matrix(C)
    U, S, Vt = _svd(A, full_matrices=False)
    r = min(r, S.size)
    rank = numerical_rank(S, A.shape)
    tied = bool(
        1 <= r < rank and S[r - 1] - S[r] <= TIE_RTOL * max(S[0], 1e-300)
    )
    return U[:, :r], S[:r].copy(), Vt[:r].T, tied


def left_proj(C) -> np.ndarray:
    """Orthogonal projector ``L_C`` onto the column space of ``C``."""
    A = as_matrix(C)
    U, S, _ = _svd(A, full_matrices=False)
    k = numerical_rank(S, A.shape)
    return U[:, :k] @ U[:, :k].T


def right_proj(C) -> np.ndarray:
    """Orthogonal projector ``R_C`` onto the row space of ``C``."""
    A = as_matrix(C)
    _, S, Vt = _svd(A, full_matrices=False)
    k = numerical_rank(S, A.shape)
    return Vt[:k].T @ Vt[:k]


@dataclass(frozen=True)
class RankConstrainedSolution:
    """Minimum-norm minimizer of ``||Q - P G||`` over rank-``r`` matrices ``P``.

    ``P == U @ diag(s) @ V.T @ G_pinv`` where ``U, s, V`` are the leading
    singular triplets of ``Q @ R_G``.
    """

    P: np.ndarray
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    G_pinv: np.ndarray
    nonunique: bool


def rank_constrained_solution(
    Q, G, r: int, G_pinv: np.ndarray | None = None
) -> RankConstrainedSolution:
    Q = as_matrix(Q, "Q")
    G = as_matrix(G, "G")
    if Q.shape[1] != G.shape[1]:
        raise InvalidInputError(
            f"Q and G need equal column counts, got {Q.shape} and {G.shape}"
        )
    m, n = Q.shape[0], G.shape[0]
    if r < 0 or r > min(m, n):
        raise InvalidInputError(f"rank {r} outside [0, min({m}, {n})]")
    Gp = pinv(G) if G_pinv is None else G_pinv
    if r == 0:
        return RankConstrainedSolution(
            P=np.zeros((m, n)),
            U=np.zeros((m, 0)),
            s=np.zeros(0),
            V=np.zeros((G.shape[1], 0)),
            G_pinv=Gp,
            nonunique=False,
        )
    QR = Q @ (Gp @ G)
    U, s, V, tied = truncated_svd(QR, r)
    P = (U * s) @ (V.T @ Gp)
    return RankConstrainedSolution(P=P, U=U, s=s, V=V, G_pinv=Gp, nonunique=tied)


def rank_constrained_solve(Q, G, r: int) -> np.ndarray:
    """Return ``[Q R_G]_r G^+``, a minimizer of ``||Q - P G||_F`` with rank P <= r."""
    return rank_constrained_solution(Q, G, r).P
