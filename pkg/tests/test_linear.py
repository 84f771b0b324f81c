import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import block_optimum, gaussian_setup, sample_setup
from sdwsn.covmodel import (
    BlockPartition,
    CovariancePack,
    gaussian_analytic_covariances,
    sample_covariances,
)
from sdwsn.linear import (
    comparison_terms,
    compare_condition,
    embed_linear,
    error_linear_formula,
    linear_fit,
    linear_pack,
)
from sdwsn.matalg import pinv, sqrt_psd, truncate
from sdwsn.mbi import FitConfig, mbi_fit
from sdwsn.sdt import error_exact, join_blocks

EXX1 = [[1, 0.64, 0.08], [0.64, 1, 0.08], [0.08, 0.08, 1]]


def test_linear_pack_drops_lifted_coordinates(rng):
    pack = sample_setup(rng)
    lp = linear_pack(pack)
    assert lp.partition.lifting == "linear" and lp.E_zz.shape == (6, 6)
    assert linear_pack(lp) is lp


def test_single_sensor_closed_form(rng):
    pack = sample_setup(rng, n=(4,), r=[2])
    model, trace = linear_fit(pack)
    lp = linear_pack(pack)
    W = pinv(sqrt_psd(lp.E_zz))
    expected = truncate(lp.E_xz @ W, 2) @ W
    np.testing.assert_allclose(model.F, expected, atol=1e-10)
    assert np.linalg.matrix_rank(model.F) <= 2
    assert trace.is_monotone(1e-10)


def test_noiseless_full_rank_exact(rng):
    X = rng.standard_normal((3, 200))
    pack = sample_covariances(X, [X[:2], X[2:]], [2, 1])
    model, _ = linear_fit(pack)
    assert error_exact(model.F, linear_pack(pack)) == pytest.approx(0.0, abs=1e-10)


def test_factorization_reassembles(rng):
    pack = sample_setup(rng)
    model, _ = linear_fit(pack)
    for F, T, s in zip(model.blocks, model.model.fusion.blocks, model.model.sensors):
        np.testing.assert_allclose(T @ s.S, F, atol=1e-10)


def test_formula_single_sensor(rng):
    pack = sample_setup(rng, n=(3,), r=[1])
    lp = linear_pack(pack)
    W = pinv(sqrt_psd(lp.E_zz))
    sig = np.linalg.svd(lp.E_xz @ W, compute_uv=False)[:1] ** 2
    assert error_linear_formula(0, [np.zeros((3, 3))], pack) == pytest.approx(
        np.trace(pack.E_xx) - sig.sum(), abs=1e-10)


def test_formula_uninformative():
    part = BlockPartition(n=(2,), r=(1,), m=2, lifting="linear")
    pack = CovariancePack(E_xx=np.eye(2), E_xz=np.zeros((2, 2)), E_zz=np.eye(2), partition=part)
    assert error_linear_formula(0, [np.zeros((2, 2))], pack) == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_formula_matches_exact_at_block_optimum(seed):
    rng = np.random.default_rng(seed)
    pack = gaussian_setup(rng) if seed % 2 else sample_setup(rng, s=60)
    lp = linear_pack(pack)
    F = [0.3 * rng.standard_normal((lp.partition.m, w)) for w in lp.partition.widths]
    j = int(rng.integers(lp.p))
    exact = error_exact(join_blocks(block_optimum(j, F, lp)), lp)
    assert error_linear_formula(j, F, pack) == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_embedding_preserves_error(rng):
    pack = sample_setup(rng)
    model, _ = linear_fit(pack)
    P = join_blocks(embed_linear(model.blocks, pack))
    assert error_exact(P, pack) == pytest.approx(error_exact(model.F, linear_pack(pack)),
                                                 abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_second_degree_from_linear_start_never_worse(seed):
    rng = np.random.default_rng(seed)
    pack = sample_setup(rng, s=200)
    model, _ = linear_fit(pack, FitConfig(max_iterations=500))
    lin = error_exact(model.F, linear_pack(pack))
    res = mbi_fit(pack, FitConfig(init=embed_linear(model.blocks, pack), max_iterations=500))
    assert error_exact(res.P, pack) <= lin + 1e-10


def test_example1_paired_ordering():
    pack = gaussian_analytic_covariances(EXX1, [0.9, 0.65], [1, 1], lifting="reduced",
                                         m_split=(2, 1))
    sd = mbi_fit(pack, FitConfig(max_iterations=5000))
    model, _ = linear_fit(pack, FitConfig(max_iterations=5000))
    lin = error_exact(model.F, linear_pack(pack))
    assert error_exact(sd.P, pack) <= lin + 1e-9 * max(1.0, lin)


def test_compare_equality_boundary(rng):
    # Gaussian moments: squared coordinates carry nothing about x, so the
    # embedded linear model is its own second-degree counterpart
    pack = gaussian_setup(rng, lifting="reduced")
    lp = linear_pack(pack)
    F = [0.3 * rng.standard_normal((lp.partition.m, w)) for w in lp.partition.widths]
    P = embed_linear(F, pack)
    t = comparison_terms(0, P, F, pack)
    assert t.alpha == pytest.approx(t.beta, abs=1e-12)
    np.testing.assert_allclose(t.mu, 0.0, atol=1e-10)
    assert not compare_condition(0, P, F, pack)


def test_compare_exact_zero_gain():
    part = BlockPartition(n=(1,), r=(1,), m=1, lifting="full")
    E_zz = np.diag([1.0, 1.0, 2.0])
    pack = CovariancePack(E_xx=[[1.0]], E_xz=[[0.0, 0.5, 0.0]], E_zz=E_zz, partition=part)
    assert not compare_condition(0, [np.zeros((1, 3))], [np.zeros((1, 1))], pack)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compare_implication(seed):
    rng = np.random.default_rng(seed)
    pack = gaussian_setup(rng) if seed % 3 else sample_setup(rng, s=80)
    lp = linear_pack(pack)
    F = [0.3 * rng.standard_normal((lp.partition.m, w)) for w in lp.partition.widths]
    P = embed_linear(F, pack) if seed % 2 else [
        0.3 * rng.standard_normal((pack.partition.m, w)) for w in pack.partition.widths]
    for j in range(pack.p):
        t = comparison_terms(j, P, F, pack)
        if compare_condition(j, P, F, pack):
            assert t.error_sd < t.error_linear
        sd = error_exact(join_blocks(block_optimum(j, P, pack)), pack)
        lin = error_exact(join_blocks(block_optimum(j, F, lp)), lp)
        assert t.error_sd == pytest.approx(sd, rel=1e-6, abs=1e-9)
        assert t.error_linear == pytest.approx(lin, rel=1e-6, abs=1e-9)


def test_example1_predicate_agrees():
    pack = gaussian_analytic_covariances(EXX1, [0.9, 0.65], [1, 1], lifting="reduced",
                                         m_split=(2, 1))
    sd = mbi_fit(pack, FitConfig(max_iterations=5000))
    model, _ = linear_fit(pack, FitConfig(max_iterations=5000))
    # Gaussian moments: the two errors tie, so the strict predicate is false
    t = comparison_terms(1, sd.blocks, list(model.blocks), pack)
    assert t.error_sd == pytest.approx(t.error_linear, abs=1e-12)
    assert not compare_condition(1, sd.blocks, list(model.blocks), pack)
