import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphon_ldp.dynamics import (
    INTERACTIONS,
    CouplingSpec,
    Trajectory,
    a_priori_bound_check,
    quotient_trajectory_distance,
    simulate,
    solve_continuum,
    stable_dt,
    trajectory_distance,
)
from graphon_ldp.experiments import closed_form_pair, default_dt, rk4_oracle
from graphon_ldp.graphon import StepGraphon
from graphon_ldp.io import read_trajectory, write_trajectory
from graphon_ldp.random_graphs import FiniteLaw, GridFunction, embed, make_parameters, sample_w_random

KURAMOTO = CouplingSpec("zero", "kuramoto")
LINEAR = CouplingSpec("zero", "linear")


def random_kernel(seed, n):
    return StepGraphon(np.random.default_rng(seed).random((n, n)))


def constant_traj(values, times=(0.0, 0.5, 1.0)):
    return Trajectory(times, np.tile(values, (len(times), 1)), 0.5, 1)


# ----------------------------------------------------------------- registry


def test_registry_constants():
    assert INTERACTIONS["kuramoto"].lipschitz == 2 * math.pi
    assert INTERACTIONS["kuramoto"].bound == 1.0
    assert INTERACTIONS["linear"].bound == math.inf
    assert LINEAR.bound_exempt and not KURAMOTO.bound_exempt
    assert stable_dt(KURAMOTO, 1.0) == pytest.approx(0.1 / (4 * math.pi))
    with pytest.raises(ValueError):
        CouplingSpec("zero", "cosine")


# ------------------------------------------------------------------ simulate


def test_zero_kernel_gives_constant_trajectory():
    g = GridFunction(np.linspace(0, 1, 6))
    traj = simulate(StepGraphon.constant(0.0, 6), g, KURAMOTO, 1.0, 0.0078125)
    assert np.all(traj.states == g.values)


def test_synchronous_state_is_fixed():
    g = GridFunction(np.full(7, 0.37))
    traj = simulate(random_kernel(1, 7), g, KURAMOTO, 1.0, 0.0078125, save_every=16)
    assert np.all(traj.states == 0.37)


def test_linear_closed_form():
    rows = rk4_oracle((1e-3,), T=1.0)
    assert rows[0]["error"] <= 1e-9
    u1, u2 = closed_form_pair(1.0)
    assert u1 == pytest.approx(0.5 + 0.5 * math.exp(-1), abs=1e-16)
    assert rows[0]["u1"] == pytest.approx(u1, abs=1e-9)
    assert rows[0]["u2"] == pytest.approx(u2, abs=1e-9)


@pytest.mark.parametrize("dts", [(0.05, 0.025), (0.01, 0.005)])
def test_rk4_is_fourth_order(dts):
    # at dt = 1e-3 the error is already at round-off level, so larger steps are used
    coarse, fine = rk4_oracle(dts, T=1.0)
    assert coarse["error"] / fine["error"] >= 2**3 * 0.9


def test_save_schedule_and_metadata():
    traj = simulate(random_kernel(2, 4), GridFunction([0.1, 0.2, 0.3, 0.4]), KURAMOTO, 0.125, 0.0078125 / 2, 3)
    # 32 steps saved every 3 steps plus the final time
    np.testing.assert_allclose(traj.times / 0.00390625, [0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30, 32])
    np.testing.assert_array_equal(traj.states[0], [0.1, 0.2, 0.3, 0.4])
    assert traj.meta["coupling"] == "zero+kuramoto"


def test_simulate_guards():
    K, g = random_kernel(3, 3), GridFunction([0.0, 0.5, 1.0])
    with pytest.raises(ValueError, match="stability"):
        simulate(K, g, KURAMOTO, 1.0, 0.01)
    with pytest.raises(ValueError):
        simulate(K, GridFunction([0.0, 1.0]), KURAMOTO, 1.0, 0.0078125)
    with pytest.raises(ValueError):
        simulate(K, g, KURAMOTO, 1.0, 0.003)
    with pytest.raises(ValueError):
        simulate(K, g, CouplingSpec("frequency", "kuramoto"), 1.0, 0.0078125)


def test_linear_blow_up_is_reported():
    # a negative-definite effective coupling cannot occur with graphon kernels,
    # so blow-up is provoked through a huge constant drift instead
    drift = CouplingSpec("constant_drift", "linear", drift=1e308)
    with pytest.raises(FloatingPointError):
        simulate(StepGraphon.constant(1.0, 2), GridFunction([1e308, 1e308]), drift, 0.04, 0.01)


def test_frequency_dynamics_uses_parameters():
    xi = GridFunction([1.0, -1.0, 0.5])
    traj = simulate(StepGraphon.constant(0.0, 3), GridFunction([0.0, 0.0, 0.0]),
                    CouplingSpec("frequency", "kuramoto"), 1.0, 0.0078125, 128, params=xi)
    np.testing.assert_allclose(traj.states[-1], xi.values, atol=1e-13)


@given(st.integers(0, 10**6))
def test_permutation_equivariance_is_bitwise(seed):
    rng = np.random.default_rng(seed)
    n = 12
    K = StepGraphon(rng.random((n, n)))
    g = GridFunction(rng.random(n))
    sigma = rng.permutation(n)
    base = simulate(K, g, KURAMOTO, 0.25, 0.0078125)
    perm = simulate(K.permuted(sigma), g.permuted(sigma), KURAMOTO, 0.25, 0.0078125)
    np.testing.assert_array_equal(perm.states, base.states[:, sigma])


def test_sparse_normalization_through_rescaled_embedding():
    alpha = 0.25
    g = sample_w_random(StepGraphon.constant(0.5, 8), 3)
    sparse = type(g)(g.bits, alpha=alpha)
    H = embed(sparse, rescale=True)
    dt = stable_dt(KURAMOTO, H.upper_bound)
    dt = 1.0 / math.ceil(1.0 / dt)
    x0 = GridFunction(np.linspace(0, 0.3, 8))
    a = simulate(H, x0, KURAMOTO, 1.0, dt, save_every=10**6)
    b = simulate(embed(g), x0, CouplingSpec("zero", "kuramoto"), 1.0, dt, save_every=10**6)
    # rescaling by 1/alpha quickens the same dynamics, so the phases contract further
    assert np.ptp(a.states[-1]) < np.ptp(b.states[-1])


# ----------------------------------------------------------------- continuum


def test_continuum_with_zero_kernel_is_constant():
    traj = solve_continuum("constant:0", lambda x: x, KURAMOTO, 16, 0.5, 0.0078125)
    assert np.all(traj.states == traj.states[0])


def test_continuum_full_synchrony():
    traj = solve_continuum("constant:1", lambda x: np.full_like(x, 0.2), KURAMOTO, 32, 0.5, 0.0078125)
    # quadrature reproduces the constant up to one rounding
    np.testing.assert_allclose(traj.states, 0.2, rtol=0, atol=1e-15)


def test_continuum_self_convergence():
    T = 1.0
    dt = default_dt(KURAMOTO, T)
    ref = solve_continuum("product", lambda x: x, KURAMOTO, 1024, T, dt, save_every=16)
    dists = [trajectory_distance(solve_continuum("product", lambda x: x, KURAMOTO, m, T, dt, 16), ref)
             for m in (32, 64, 128)]
    assert dists[0] > dists[1] > dists[2]


# ---------------------------------------------------------------- distances


def test_trajectory_distance_examples():
    u = constant_traj(np.array([0.2, 0.4]))
    v = constant_traj(np.array([0.5, 0.7]))
    assert trajectory_distance(u, u) == 0.0
    assert trajectory_distance(u, v) == pytest.approx(0.3, abs=1e-15)
    w = constant_traj(np.array([0.2, 0.4]), times=(0.0, 1.0))
    with pytest.raises(ValueError):
        trajectory_distance(u, w)


@given(st.integers(0, 10**6))
def test_trajectory_distance_symmetric(seed):
    rng = np.random.default_rng(seed)
    u = Trajectory([0, 1, 2], rng.random((3, 4)), 1.0, 1)
    v = Trajectory([0, 1, 2], rng.random((3, 8)), 1.0, 1)
    assert trajectory_distance(u, v) == trajectory_distance(v, u)


def test_quotient_trajectory_distance_recovers_relabelling():
    rng = np.random.default_rng(4)
    u = simulate(random_kernel(4, 6), GridFunction(rng.random(6)), KURAMOTO, 0.25, 0.0078125)
    sigma = rng.permutation(6)
    res = quotient_trajectory_distance(u.permuted(sigma), u)
    assert res.distance == 0.0 and res.exact
    assert quotient_trajectory_distance(u, u).distance == 0.0


def test_quotient_trajectory_distance_of_spatial_constants():
    u = constant_traj(np.full(10, 0.3))
    v = constant_traj(np.full(10, 0.1))
    assert quotient_trajectory_distance(u, v).distance == trajectory_distance(u, v)


def test_quotient_trajectory_heuristic_is_upper_bound():
    rng = np.random.default_rng(8)
    u = Trajectory([0, 1], rng.random((2, 12)), 1.0, 1)
    v = Trajectory([0, 1], rng.random((2, 12)), 1.0, 1)
    res = quotient_trajectory_distance(u, v)
    assert not res.exact
    assert res.distance <= trajectory_distance(u, v)
    assert trajectory_distance(u.permuted(res.permutation), v) == pytest.approx(res.distance, abs=1e-15)


def test_trajectory_file_round_trip(tmp_path):
    traj = simulate(random_kernel(5, 5), GridFunction(np.arange(5) / 5), KURAMOTO, 0.25, 0.0078125, 4)
    write_trajectory(tmp_path / "t.csv", traj)
    assert (tmp_path / "t.csv").read_text().startswith("trajectory,n,5,dt,0.0078125,save_every,4\n")
    back = read_trajectory(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)


# ---------------------------------------------------------- a priori bounds


def test_bound_with_zero_dynamics_has_slack():
    g = GridFunction([0.5, -0.25])
    traj = simulate(StepGraphon.constant(0.0, 2), g, KURAMOTO, 1.0, 0.0078125)
    assert a_priori_bound_check(traj, KURAMOTO, g)


@pytest.mark.parametrize("seed", range(6))
def test_kuramoto_bound_holds(seed):
    rng = np.random.default_rng(seed)
    g = GridFunction(rng.uniform(-1, 1, 16))
    traj = simulate(StepGraphon(rng.random((16, 16))), g, KURAMOTO, 2.0, 0.0078125, 8)
    assert a_priori_bound_check(traj, KURAMOTO, g)


def test_bound_with_frequencies():
    xi = make_parameters(FiniteLaw.uniform([-1.0, 1.0]), 8, seed=2)
    g = GridFunction(np.linspace(0, 1, 8))
    c = CouplingSpec("frequency", "tanh_diff")
    traj = simulate(StepGraphon.constant(1.0, 8), g, c, 1.0, 0.01, params=xi)
    assert a_priori_bound_check(traj, c, g, params=xi)


def test_linear_coupling_is_exempt():
    traj = simulate(StepGraphon.constant(1.0, 2), GridFunction([1.0, 0.0]), LINEAR, 1.0, 0.01)
    with pytest.raises(ValueError, match="exempt"):
        a_priori_bound_check(traj, LINEAR, GridFunction([1.0, 0.0]))
