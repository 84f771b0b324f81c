"""Maximum-block-improvement fit of the second-degree network (ideal channels)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .covmodel import CovariancePack, ReducedForm, lift_sample, reduce
from .matalg import InvalidInputError, as_matrix, pinv, rank_constrained_solution, svd
from .sdt import (
    FusionCenter,
    NetworkModel,
    SecondDegreeSensor,
    factor_model,
    join_blocks,
    sdt_factors,
)


# candidates within this relative margin of the best count as tied
SELECT_RTOL = 1e-12


@dataclass
class FitConfig:
    """Stopping rule and initialization for the iterative fits.

    ``init`` is ``"sdt"`` (decoupled per-block transforms), ``"zero"``, or a
    sequence of user-supplied blocks.
    """

    epsilon: float = 1e-9
    max_iterations: int = 100
    init: object = "sdt"

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidInputError("epsilon must be nonnegative")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be at least 1")


@dataclass
class FitTrace:
    """Objective after each accepted update.

    Entry 0 is the starting point, so ``chosen_block[0]`` is ``-1``.  For the
    channel fit a chosen block of ``0`` denotes the fusion-only candidate and
    ``j + 1`` the candidate that changed sensor ``j``.
    """

    objectives: list = field(default_factory=list)
    chosen_block: list = field(default_factory=list)
    nonunique_flags: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.objectives) - 1, 0)

    def record(self, value: float, block: int, nonunique: bool = False) -> None:
        self.objectives.append(float(value))
        self.chosen_block.append(int(block))
        self.nonunique_flags.append(bool(nonunique))

    def is_monotone(self, slack: float = 1e-10) -> bool:
        obj = np.asarray(self.objectives)
        return bool(np.all(np.diff(obj) <= slack))

    def to_csv(self, path, objective_name: str = "objective",
               block_name: str = "chosen_block") -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", objective_name, block_name])
            for q, (v, k) in enumerate(zip(self.objectives, self.chosen_block)):
                w.writerow([q, repr(float(v)), k])


@dataclass
class _Block:
    """Accepted block with the truncated-SVD factors it came from."""

    P: np.ndarray
    U: np.ndarray | None = None
    s: np.ndarray | None = None
    V: np.ndarray | None = None
    G: np.ndarray | None = None


@dataclass
class MBIResult:
    blocks: list
    trace: FitTrace
    factors: list = field(default_factory=list, repr=False)

    @property
    def P(self) -> np.ndarray:
        return join_blocks(self.blocks)


def _initial_blocks(pack: CovariancePack) -> list[_Block]:
    part = pack.partition
    out = []
    for j in range(part.p):
        zs, xs = part.z_slice(j), part.x_slice(j)
        r = min(part.r[j], part.m_split[j])
        U, s, V, W, _ = sdt_factors(pack.E_xz[xs, zs], pack.E_zz[zs, zs], r)
        Ufull = np.zeros((part.m, part.r[j]))
        Ufull[xs, : U.shape[1]] = U
        spad = np.zeros(part.r[j])
        spad[: s.size] = s
        Vpad = np.zeros((W.shape[0], part.r[j]))
        Vpad[:, : V.shape[1]] = V
        P = (Ufull * spad) @ (Vpad.T @ W)
        # G = (W)^+ = E_zjzj^{1/2} so that factor_model recovers S = s V^T W
        out.append(_Block(P=P, U=Ufull, s=spad, V=Vpad, G=pinv(W)))
    return out


def initial_iterations(pack: CovariancePack) -> list[np.ndarray]:
    """Decoupled start: block ``j`` estimates only the signal slice ``x_j``.

    Each block is the single-sensor transform of ``z_j`` for ``x_j``, padded
    with zero rows outside ``x_j``.  Ranks are capped by the slice size.
    """
    return [b.P for b in _initial_blocks(pack)]


def objective(H: np.ndarray, G: Sequence[np.ndarray], blocks: Sequence[np.ndarray]) -> float:
    R = H - sum(P @ Gj for P, Gj in zip(blocks, G))
    return float(np.sum(R * R))


def mbi_fit(pack: CovariancePack, cfg: FitConfig | None = None,
            red: ReducedForm | None = None) -> MBIResult:
    """Greedy fit: every sweep solves each block, then keeps only the best one.

    For every block ``j`` the rank-constrained optimum against
    ``Q_j = H - sum_{i != j} P_i G_i`` is computed; the single candidate
    with the smallest objective is accepted (ties go to the lowest index).
    Stops when an accepted update changes the objective by at most
    ``cfg.epsilon`` or after ``cfg.max_iterations`` sweeps.
    """
    cfg = FitConfig() if cfg is None else cfg
    red = reduce(pack) if red is None else red
    part = pack.partition
    H, G = red.H, red.G

    if isinstance(cfg.init, str):
        if cfg.init == "sdt":
            state = _initial_blocks(pack)
        elif cfg.init == "zero":
            state = [_Block(P=np.zeros((part.m, w))) for w in part.widths]
        else:
            raise InvalidInputError(f"unknown init {cfg.init!r}")
    else:
        blocks = [as_matrix(P, "init block") for P in cfg.init]
        if [b.shape for b in blocks] != [(part.m, w) for w in part.widths]:
            raise InvalidInputError("user-supplied blocks have wrong shapes")
        for j, b in enumerate(blocks):
            if np.linalg.matrix_rank(b) > part.r[j]:
                raise InvalidInputError(f"user-supplied block {j} exceeds rank {part.r[j]}")
        state = [_Block(P=b) for b in blocks]

    G_pinv = [pinv(Gj) for Gj in G]
    contrib = [b.P @ Gj for b, Gj in zip(state, G)]
    total = sum(contrib)
    phi = float(np.sum((H - total) ** 2))
    trace = FitTrace()
    trace.record(phi, -1)

    for _ in range(cfg.max_iterations):
        best = None
        for j in range(part.p):
            Q = H - total + contrib[j]
            sol = rank_constrained_solution(Q, G[j], part.r[j], G_pinv=G_pinv[j])
            new_c = sol.P @ G[j]
            val = float(np.sum((Q - new_c) ** 2))
            if best is None or val < best[0] - SELECT_RTOL * max(1.0, abs(best[0])):
                best = (val, j, sol, new_c)
        val, k, sol, new_c = best
        state[k] = _Block(P=sol.P, U=sol.U, s=sol.s, V=sol.V, G=G[k])
        total = total - contrib[k] + new_c
        contrib[k] = new_c
        trace.record(val, k, sol.nonunique)
        if abs(val - phi) <= cfg.epsilon:
            trace.converged = True
            break
        phi = val

    return MBIResult(blocks=[b.P for b in state], trace=trace, factors=state)


def extract_models(result: MBIResult, pack: CovariancePack,
                   variant: str = "orthonormal") -> NetworkModel:
    """Factor each fitted block ``P_j`` into fusion block ``T_j`` and sensor ``S_j``."""
    part = pack.partition
    sensors, fusion = [], []
    for j, b in enumerate(result.factors):
        r = part.r[j]
        if r == 0:
            T = np.zeros((part.m, 0))
            S = np.zeros((0, part.widths[j]))
        elif b.U is not None:
            T, S = factor_model(b.U, b.s, b.V, b.G, variant)
        else:
            f = svd(b.P)
            k = min(r, f.S.size)
            T, S = factor_model(f.U[:, :k], f.S[:k], f.V[:, :k],
                                np.eye(part.widths[j]), variant)
        sensors.append(SecondDegreeSensor.from_block(S, part.n[j], part.lifting))
        fusion.append(T)
    return NetworkModel(sensors=tuple(sensors), fusion=FusionCenter(tuple(fusion)),
                        partition=part)


def apply_network(model: NetworkModel, Ylist: Sequence) -> np.ndarray:
    """Reconstruct ``x_hat = sum_j T_j (S0 + S1 y_j + S2 y_j**2)`` column-wise."""
    part = model.partition
    if len(Ylist) != part.p:
        raise InvalidInputError(f"expected {part.p} observation blocks, got {len(Ylist)}")
    Ys = [as_matrix(Y, f"Y[{j}]") for j, Y in enumerate(Ylist)]
    s = Ys[0].shape[1]
    for j, Y in enumerate(Ys):
        if Y.shape != (part.n[j], s):
            raise InvalidInputError(
                f"Y[{j}] must be {part.n[j]}x{s}, got {Y.shape}"
            )
    out = np.zeros((part.m, s))
    for T, sensor, Y in zip(model.fusion.blocks, model.sensors, Ys):
        out += T @ sensor.encode(Y)
    return out


def apply_composite(blocks: Sequence[np.ndarray], Ylist: Sequence, lifting: str) -> np.ndarray:
    """Evaluate ``sum_j P_j z_j`` directly on observation columns."""
    return sum(P @ lift_sample(Y, lifting) for P, Y in zip(blocks, Ylist))
