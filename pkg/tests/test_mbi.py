import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import block_optimum, gaussian_setup, random_blocks, sample_setup
from sdwsn.covmodel import (
    BlockPartition,
    CovariancePack,
    gaussian_analytic_covariances,
    lift_all,
    reduce,
)
from sdwsn.matalg import InvalidInputError
from sdwsn.mbi import (
    FitConfig,
    FitTrace,
    apply_composite,
    apply_network,
    extract_models,
    initial_iterations,
    mbi_fit,
    objective,
)
from sdwsn.sdt import (
    FusionCenter,
    NetworkModel,
    SecondDegreeSensor,
    error_exact,
    join_blocks,
    sdt_single,
)

EXX1 = [[1, 0.64, 0.08], [0.64, 1, 0.08], [0.08, 0.08, 1]]


@pytest.fixture(scope="module")
def example1():
    return gaussian_analytic_covariances(EXX1, [0.9, 0.65], [1, 1], lifting="reduced",
                                         m_split=(2, 1))


def cyclic_fit(pack, sweeps=3000, eps=1e-12):
    """Round-robin block updates: an independent descent oracle."""
    blocks = initial_iterations(pack)
    prev = error_exact(join_blocks(blocks), pack)
    for _ in range(sweeps):
        for j in range(pack.p):
            blocks = block_optimum(j, blocks, pack)
        cur = error_exact(join_blocks(blocks), pack)
        if abs(prev - cur) <= eps:
            break
        prev = cur
    return cur


def test_fit_config_validation():
    with pytest.raises(InvalidInputError):
        FitConfig(epsilon=-1.0)
    with pytest.raises(InvalidInputError):
        FitConfig(max_iterations=0)


def test_single_sensor_converges_to_sdt(rng):
    pack = sample_setup(rng, n=(3,), r=[2])
    res = mbi_fit(pack, FitConfig(init="zero"))
    assert res.trace.converged and res.trace.iterations <= 2
    np.testing.assert_allclose(res.P, sdt_single(pack.E_xz, pack.E_zz, 2), atol=1e-10)
    drop = res.trace.objectives[0] - res.trace.objectives[1]
    exact_drop = error_exact(np.zeros_like(res.P), pack) - error_exact(res.P, pack)
    assert drop == pytest.approx(exact_drop, rel=1e-8)


def test_single_sensor_initial_is_sdt(rng):
    pack = sample_setup(rng, n=(3,), r=[2])
    P0 = initial_iterations(pack)[0]
    np.testing.assert_allclose(P0, sdt_single(pack.E_xz, pack.E_zz, 2), atol=1e-12)


def test_initial_zero_when_uncorrelated():
    part = BlockPartition(n=(2, 2), r=(1, 1), m=2)
    pack = CovariancePack(E_xx=np.eye(2), E_xz=np.zeros((2, 10)), E_zz=np.eye(10),
                          partition=part)
    assert not any(P.any() for P in initial_iterations(pack))


def test_initial_block_structure(example1):
    P0 = initial_iterations(example1)
    # block j estimates only its signal slice
    assert not P0[0][2:].any() and not P0[1][:2].any()
    res = mbi_fit(example1, FitConfig(max_iterations=5000))
    assert res.trace.objectives[0] >= res.trace.objectives[-1]
    assert np.isfinite(res.trace.objectives[0])


def test_large_epsilon_single_update(example1):
    res = mbi_fit(example1, FitConfig(epsilon=1e6))
    assert res.trace.iterations == 1 and res.trace.converged


def test_example1_monotone_and_stationary(example1):
    res = mbi_fit(example1, FitConfig(max_iterations=5000))
    assert res.trace.converged
    assert res.trace.is_monotone(1e-10)
    assert len(res.trace.objectives) > 50
    phi = error_exact(res.P, example1)
    for j in range(2):
        moved = error_exact(join_blocks(block_optimum(j, res.blocks, example1)), example1)
        assert abs(moved - phi) <= 1e-8


def test_objective_tracks_error(example1):
    red = reduce(example1)
    res = mbi_fit(example1, FitConfig(max_iterations=30), red)
    const = np.trace(example1.E_xx) - np.sum(red.H**2)
    assert objective(red.H, red.G, res.blocks) + const == pytest.approx(
        error_exact(res.P, example1), abs=1e-10)
    assert res.trace.objectives[-1] == pytest.approx(objective(red.H, red.G, res.blocks))


def test_ties_pick_lowest_block():
    # two identical sensors: both candidates give the same objective
    pack = gaussian_analytic_covariances(np.eye(2), [0.5, 0.5], [1, 1], lifting="reduced")
    res = mbi_fit(pack, FitConfig(init="zero", max_iterations=1))
    assert res.trace.chosen_block[1] == 0


def test_user_init(rng, example1):
    blocks = low_rank_blocks(rng, example1)
    res = mbi_fit(example1, FitConfig(init=blocks, max_iterations=10))
    assert res.trace.objectives[0] == pytest.approx(
        error_exact(join_blocks(blocks), example1) - error_exact(np.zeros((3, 12)), example1)
        + np.sum(reduce(example1).H ** 2), rel=1e-9)
    with pytest.raises(InvalidInputError):
        mbi_fit(example1, FitConfig(init=[np.zeros((3, 2))]))
    with pytest.raises(InvalidInputError):
        mbi_fit(example1, FitConfig(init="random"))
    with pytest.raises(InvalidInputError):
        mbi_fit(example1, FitConfig(init=random_blocks(rng, example1)))


def test_zero_rank_block(rng):
    pack = sample_setup(rng, r=[0, 2])
    res = mbi_fit(pack)
    assert not res.blocks[0].any()
    model = extract_models(res, pack)
    assert model.fusion.blocks[0].shape == (3, 0)
    assert model.sensors[0].S.shape == (0, 7)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_setups_monotone_bounded(seed):
    rng = np.random.default_rng(seed)
    pack = gaussian_setup(rng) if seed % 2 else sample_setup(rng, s=30)
    res = mbi_fit(pack, FitConfig(max_iterations=300))
    assert res.trace.is_monotone(1e-10)
    assert all(np.isfinite(P).all() for P in res.blocks)
    if res.trace.converged:
        o = res.trace.objectives
        assert abs(o[-1] - o[-2]) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_mbi_not_worse_than_cyclic(seed):
    rng = np.random.default_rng(100 + seed)
    pack = gaussian_setup(rng) if seed % 2 else sample_setup(rng, s=80)
    res = mbi_fit(pack, FitConfig(epsilon=1e-12, max_iterations=20000))
    assert error_exact(res.P, pack) <= cyclic_fit(pack) + 1e-8


def test_extract_models_reassembly(rng):
    pack = sample_setup(rng)
    res = mbi_fit(pack)
    for variant in ("orthonormal", "weighted"):
        model = extract_models(res, pack, variant)
        for P, T, sensor in zip(res.blocks, model.fusion.blocks, model.sensors):
            np.testing.assert_allclose(T @ sensor.S, P, atol=1e-10)
    model = extract_models(res, pack)
    for T in model.fusion.blocks:
        np.testing.assert_allclose(T.T @ T, np.eye(T.shape[1]), atol=1e-10)


def low_rank_blocks(rng, pack):
    part = pack.partition
    return [rng.standard_normal((part.m, r)) @ rng.standard_normal((r, w))
            for r, w in zip(part.r, part.widths)]


def test_extract_models_without_factors(rng):
    pack = sample_setup(rng)
    res = mbi_fit(pack, FitConfig(init=low_rank_blocks(rng, pack), max_iterations=1))
    model = extract_models(res, pack)
    for P, T, sensor in zip(res.blocks, model.fusion.blocks, model.sensors):
        np.testing.assert_allclose(T @ sensor.S, P, atol=1e-10)


def test_apply_network_matches_composite(rng):
    pack = sample_setup(rng)
    res = mbi_fit(pack)
    model = extract_models(res, pack)
    Ys = [rng.standard_normal((3, 9)) for _ in range(2)]
    np.testing.assert_allclose(apply_network(model, Ys), apply_composite(res.blocks, Ys, "full"),
                               atol=1e-12)
    np.testing.assert_allclose(apply_network(model, Ys), res.P @ lift_all(Ys, "full"),
                               atol=1e-12)


def test_apply_network_constant_and_passthrough():
    part = BlockPartition(n=(2,), r=(2,), m=2)
    S0 = np.array([[1.0], [2.0]])
    zero = NetworkModel(
        sensors=(SecondDegreeSensor(S1=np.zeros((2, 2)), S0=S0, S2=np.zeros((2, 2))),),
        fusion=FusionCenter((np.eye(2),)), partition=part)
    out = apply_network(zero, [np.ones((2, 3))])
    np.testing.assert_allclose(out, np.tile(S0, 3))
    ident = NetworkModel(
        sensors=(SecondDegreeSensor(S1=np.eye(2), S0=np.zeros((2, 1)), S2=np.zeros((2, 2))),),
        fusion=FusionCenter((np.eye(2),)), partition=part)
    Y = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(apply_network(ident, [Y]), Y)


def test_apply_network_dimension_errors(rng):
    pack = sample_setup(rng)
    model = extract_models(mbi_fit(pack), pack)
    with pytest.raises(InvalidInputError):
        apply_network(model, [np.zeros((3, 2))])
    with pytest.raises(InvalidInputError):
        apply_network(model, [np.zeros((3, 2)), np.zeros((2, 2))])


def test_trace_csv(tmp_path):
    t = FitTrace()
    t.record(2.0, -1)
    t.record(1.5, 0)
    t.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == (
        "iteration,objective,chosen_block\n0,2.0,-1\n1,1.5,0\n")
    assert t.iterations == 1 and t.is_monotone()
