"""Linear sensor network baseline and its comparison with the second-degree model.

The linear network is the second-degree one with constant and squared terms
switched off, so it is fitted with exactly the same greedy machinery on the
moments of the raw observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .covmodel import CovariancePack
from .mbi import FitConfig, FitTrace, MBIResult, extract_models, mbi_fit
from .sdt import NetworkModel, block_error_terms


@dataclass(frozen=True)
class LinearNetworkModel:
    blocks: tuple
    model: NetworkModel

    @property
    def F(self) -> np.ndarray:
        return np.hstack(self.blocks)


def linear_pack(pack: CovariancePack) -> CovariancePack:
    return pack if pack.partition.lifting == "linear" else pack.restrict_linear()


def linear_fit(pack: CovariancePack, cfg: FitConfig | None = None,
               variant: str = "orthonormal") -> tuple[LinearNetworkModel, FitTrace]:
    lp = linear_pack(pack)
    res: MBIResult = mbi_fit(lp, cfg)
    model = extract_models(res, lp, variant)
    return LinearNetworkModel(blocks=tuple(res.blocks), model=model), res.trace


def embed_linear(F_blocks: Sequence[np.ndarray], pack: CovariancePack) -> list[np.ndarray]:
    """Write linear blocks ``F_j`` into the lifted layout with zero ``S0``/``S2`` columns."""
    part = pack.partition
    out = []
    for j, F in enumerate(F_blocks):
        P = np.zeros((part.m, part.widths[j]))
        P[:, part.linear_local(j)] = F
        out.append(P)
    return out


def error_linear_formula(j: int, F_all: Sequence[np.ndarray], pack: CovariancePack) -> float:
    """Error after the linear block ``j`` is replaced by its optimal rank-``r_j`` map."""
    return block_error_terms(j, F_all, linear_pack(pack)).error


COMPARE_RTOL = 1e-12


@dataclass(frozen=True)
class ComparisonTerms:
    alpha: float
    beta: float
    delta: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray
    error_sd: float
    error_linear: float

    @property
    def holds(self) -> bool:
        lhs = self.alpha - self.beta
        rhs = float(np.sum(self.delta - self.sigma) + np.sum(self.mu))
        # strict inequality decided outside roundoff of the summed terms
        scale = max(1.0, abs(self.alpha), abs(self.beta), float(np.sum(np.abs(self.delta))),
                    float(np.sum(np.abs(self.sigma))))
        return bool(lhs < rhs - COMPARE_RTOL * scale)


def comparison_terms(j: int, P_all, F_all, pack: CovariancePack) -> ComparisonTerms:
    sd = block_error_terms(j, P_all, pack)
    lin = block_error_terms(j, F_all, linear_pack(pack))
    return ComparisonTerms(
        alpha=lin.beta, beta=sd.beta, delta=sd.delta, sigma=lin.delta, mu=sd.mu,
        error_sd=sd.error, error_linear=lin.error,
    )


def compare_condition(j: int, P_all, F_all, pack: CovariancePack) -> bool:
    """Sufficient condition for the second-degree block optimum to beat the linear one.

    True iff ``alpha_j - beta_j < sum(delta_i - sigma_i) + sum(mu_j)``; then
    the second-degree error at block ``j`` is strictly below the linear one.
    """
    return comparison_terms(j, P_all, F_all, pack).holds
