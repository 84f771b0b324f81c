"""Alternating fit of sensors and fusion center over nonideal channels.

Sensor ``j`` transmits ``w_j = D_j S_j z_j + eta_j`` where ``D_j`` is a
known fading matrix (possibly singular) and ``eta_j`` zero-mean noise,
uncorrelated with the signal and across channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .covmodel import CovariancePack
from .matalg import InvalidInputError, as_matrix, pinv, sqrt_psd
from .mbi import SELECT_RTOL, FitConfig, FitTrace
from .sdt import NetworkModel


@dataclass(frozen=True)
class ChannelSpec:
    D: tuple
    E_eta: tuple

    def __post_init__(self):
        D = tuple(as_matrix(d, "D_j") for d in self.D)
        E = tuple(as_matrix(e, "E_eta_j") for e in self.E_eta)
        if len(D) != len(E):
            raise InvalidInputError("need one noise covariance per channel matrix")
        for d, e in zip(D, E):
            if d.shape[0] != d.shape[1] or e.shape != d.shape:
                raise InvalidInputError("D_j and E_eta_j must be square r_j x r_j")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "E_eta", E)

    @classmethod
    def ideal(cls, ranks: Sequence[int]) -> "ChannelSpec":
        return cls(D=tuple(np.eye(r) for r in ranks),
                   E_eta=tuple(np.zeros((r, r)) for r in ranks))

    @classmethod
    def white(cls, D: Sequence, gamma: Sequence[float]) -> "ChannelSpec":
        D = [np.asarray(d, dtype=float) for d in D]
        return cls(D=tuple(D), E_eta=tuple(g**2 * np.eye(d.shape[0]) for d, g in zip(D, gamma)))

    def check(self, ranks: Sequence[int]) -> None:
        if [d.shape[0] for d in self.D] != list(ranks):
            raise InvalidInputError(
                f"channel sizes {[d.shape[0] for d in self.D]} do not match ranks {list(ranks)}"
            )


@dataclass
class ChannelFitState:
    T: np.ndarray
    S: list
    trace: FitTrace = field(default_factory=FitTrace)

    def T_blocks(self, ranks: Sequence[int]) -> list[np.ndarray]:
        edges = np.concatenate([[0], np.cumsum(ranks)]).astype(int)
        return [self.T[:, edges[j]:edges[j + 1]] for j in range(len(ranks))]


def state_from_model(model: NetworkModel) -> ChannelFitState:
    """Starting point taken from an ideal-channel fit."""
    return ChannelFitState(T=model.fusion.T.copy(), S=[s.S.copy() for s in model.sensors])


def propagate_channel_cov(S: Sequence[np.ndarray], ch: ChannelSpec, pack: CovariancePack):
    """``E_{x w}`` and ``E_{w w}`` for ``w_j = D_j S_j z_j + eta_j``."""
    p = pack.p
    DS = [ch.D[j] @ S[j] for j in range(p)]
    E_xw = np.hstack([pack.xz(j) @ DS[j].T for j in range(p)])
    rows = []
    for i in range(p):
        row = []
        for j in range(p):
            blk = DS[i] @ pack.zz(i, j) @ DS[j].T
            if i == j:
                blk = blk + ch.E_eta[j]
            row.append(blk)
        rows.append(row)
    E_ww = np.block(rows)
    return E_xw, 0.5 * (E_ww + E_ww.T)


def fusion_update(E_xw, E_ww, E_xx):
    """Optimal fusion matrix ``T = E_xw E_ww^+`` and the resulting error."""
    E_xw = as_matrix(E_xw, "E_xw")
    T = E_xw @ pinv(E_ww)
    K = E_xw @ pinv(sqrt_psd(E_ww))
    return T, max(float(np.trace(E_xx) - np.sum(K * K)), 0.0)


def psi(T, S: Sequence[np.ndarray], ch: ChannelSpec, pack: CovariancePack) -> float:
    """Error ``E||x - T w||^2`` in the square-root form."""
    E_xw, E_ww = propagate_channel_cov(S, ch, pack)
    root = sqrt_psd(E_ww)
    K = E_xw @ pinv(root)
    val = np.trace(pack.E_xx) - np.sum(K * K) + np.sum((K - T @ root) ** 2)
    return max(float(val), 0.0)


def psi_direct(T, S: Sequence[np.ndarray], ch: ChannelSpec, pack: CovariancePack) -> float:
    """Same error as :func:`psi`, expanded as ``tr E_xx - 2 tr(T E_wx) + tr(T E_ww T^T)``."""
    E_xw, E_ww = propagate_channel_cov(S, ch, pack)
    return float(np.trace(pack.E_xx) - 2.0 * np.sum(T * E_xw) + np.sum((T @ E_ww) * T))


def residual_cross(j: int, T_blocks, S, ch: ChannelSpec, pack: CovariancePack) -> np.ndarray:
    """``E_{x_(j) z_j} = E_{x z_j} - sum_{i != j} T_i D_i S_i E_{z_i z_j}``."""
    out = pack.xz(j).copy()
    for i in range(pack.p):
        if i != j:
            out -= T_blocks[i] @ ch.D[i] @ S[i] @ pack.zz(i, j)
    return out


def sensor_update(j: int, T, S: Sequence[np.ndarray], ch: ChannelSpec,
                  pack: CovariancePack) -> np.ndarray:
    """Optimal ``S_j = (T_j D_j)^+ E_{x_(j) z_j} E_{z_j z_j}^+`` for fixed ``T`` and other sensors."""
    Tb = _split_T(T, pack)
    R = residual_cross(j, Tb, S, ch, pack)
    return pinv(Tb[j] @ ch.D[j]) @ R @ pinv(pack.zz(j, j))


def sensor_error(j: int, Sj, T, S, ch: ChannelSpec, pack: CovariancePack) -> float:
    """``E||x_(j) - T_j D_j S_j z_j||^2`` for a trial ``S_j``, by direct moments."""
    Tb = _split_T(T, pack)
    R = residual_cross(j, Tb, S, ch, pack)
    A = Tb[j] @ ch.D[j] @ as_matrix(Sj)
    E_xx_res = _residual_auto(j, Tb, S, ch, pack)
    return float(np.trace(E_xx_res) - 2.0 * np.sum(A * R) + np.sum((A @ pack.zz(j, j)) * A))


def _residual_auto(j, Tb, S, ch, pack):
    # E[x_(j) x_(j)^T] with x_(j) = x - sum_{i != j} T_i (D_i S_i z_i + eta_i)
    others = [i for i in range(pack.p) if i != j]
    E = pack.E_xx.copy()
    for i in others:
        Ai = Tb[i] @ ch.D[i] @ S[i]
        cross = Ai @ pack.xz(i).T
        E -= cross + cross.T
        for k in others:
            Ak = Tb[k] @ ch.D[k] @ S[k]
            E += Ai @ pack.zz(i, k) @ Ak.T
        E += Tb[i] @ ch.E_eta[i] @ Tb[i].T
    return E


def _split_T(T, pack: CovariancePack):
    ranks = pack.partition.r
    edges = np.concatenate([[0], np.cumsum(ranks)]).astype(int)
    return [T[:, edges[j]:edges[j + 1]] for j in range(len(ranks))]


def ai_fit(pack: CovariancePack, ch: ChannelSpec, cfg: FitConfig | None,
           init: ChannelFitState) -> ChannelFitState:
    """Alternating fit with maximum-block-improvement acceptance.

    Each sweep first solves for the fusion matrix given the current sensors
    (candidate 0), then, with that new fusion matrix, re-solves each sensor
    separately (candidates ``1..p``).  Only the candidate with the smallest
    error is kept; ties go to the lowest candidate index.
    """
    cfg = FitConfig() if cfg is None else cfg
    part = pack.partition
    ch.check(part.r)
    T = as_matrix(init.T, "T")
    S = [as_matrix(Sj, "S_j") for Sj in init.S]
    if T.shape != (part.m, sum(part.r)):
        raise InvalidInputError(f"T must be {part.m}x{sum(part.r)}, got {T.shape}")
    for j, Sj in enumerate(S):
        if Sj.shape != (part.r[j], part.widths[j]):
            raise InvalidInputError(f"S[{j}] must be {part.r[j]}x{part.widths[j]}")

    trace = FitTrace()
    cur = psi(T, S, ch, pack)
    trace.record(cur, -1)
    for _ in range(cfg.max_iterations):
        E_xw, E_ww = propagate_channel_cov(S, ch, pack)
        T_new, _ = fusion_update(E_xw, E_ww, pack.E_xx)
        candidates = [(psi(T_new, S, ch, pack), 0, S)]
        for j in range(part.p):
            Sj = sensor_update(j, T_new, S, ch, pack)
            trial = list(S)
            trial[j] = Sj
            candidates.append((psi(T_new, trial, ch, pack), j + 1, trial))
        val, k, S_best = candidates[0]
        for cand in candidates[1:]:
            if cand[0] < val - SELECT_RTOL * max(1.0, abs(val)):
                val, k, S_best = cand
        T, S = T_new, [s.copy() for s in S_best]
        trace.record(val, k)
        if abs(val - cur) <= cfg.epsilon:
            trace.converged = True
            break
        cur = val
    return ChannelFitState(T=T, S=S, trace=trace)
