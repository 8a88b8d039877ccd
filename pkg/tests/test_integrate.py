"""Integrator contracts: determinism, alignment, convergence, events, errors."""

import numpy as np
import pytest

from swstab import (
    BlowUpError,
    ChatteringError,
    Covering,
    IntegratorConfig,
    PolicyError,
    SwitchedSystem,
    gen_arbitrary,
    signal_to_control,
    simulate,
    simulate_relaxed,
    simulate_with_covering,
)
from swstab.signals import validate_covering_invariance

from conftest import const_signal


def test_conservation_mode1(motivating, cfg_fine):
    # mode 1 is a pure rotation: |x| is a first integral
    sig = const_signal(1, 0.0, 10.0)
    traj = simulate(motivating.system, sig, 0.0, np.array([1.0, 0.0]), 10.0, cfg_fine)
    assert abs(np.linalg.norm(traj.states[-1]) - 1.0) <= 1e-6
    assert np.max(np.abs(traj.norms() - 1.0)) <= 1e-6


def test_zero_state_stays_zero(all_entries, cfg_fast):
    for entry in all_entries:
        sig = gen_arbitrary(entry.system.N, (0.0, 5.0), 0.4, 3)
        traj = simulate(entry.system, sig, 0.0, np.zeros(entry.system.n), 5.0, cfg_fast)
        assert np.max(np.abs(traj.states)) == 0.0


def test_mode2_against_reference_step(motivating):
    # single-mode integration agrees with a 64x-finer reference; the odd cube
    # root caps the observable order near x1 = 0, measured error 4.6e-7 at
    # step 1e-3, asserted with a 20x margin
    sig = const_signal(2, 0.0, 5.0)
    x0 = np.array([1.0, 0.0])
    coarse = simulate(motivating.system, sig, 0.0, x0, 5.0, IntegratorConfig(step=1e-3))
    ref = simulate(motivating.system, sig, 0.0, x0, 5.0,
                   IntegratorConfig(step=1e-3 / 64))
    assert np.linalg.norm(coarse.states[-1] - ref.states[-1]) < 1e-5
    # V non-increasing and x1 initially decreasing (dx1/dt(0) = -1)
    V = 0.5 * np.sum(coarse.states**2, axis=1)
    assert np.all(np.diff(V) <= 1e-12)
    assert coarse.states[1, 0] < x0[0]
    h = coarse.times[1] - coarse.times[0]
    assert abs((coarse.states[1, 0] - x0[0]) / h - (-1.0)) < 1e-2


def test_rhs_value_mode2(motivating_a2):
    f = motivating_a2.system.f
    np.testing.assert_allclose(f(0.0, np.array([1.0, 1.0]), 2), [1.0, -2.0])


def test_outputs_right_continuous_at_switch(motivating, cfg_fine):
    sig = const_signal(1, 0.0, 1.0)
    sig2 = type(sig)(breakpoints=np.array([0.0, 0.5]), modes=np.array([1, 2]),
                     domain_start=0.0, domain_end=1.0)
    traj = simulate(motivating.system, sig2, 0.0, np.array([1.0, 0.0]), 1.0, cfg_fine)
    k = int(np.argmin(np.abs(traj.times - 0.5)))
    assert traj.times[k] == 0.5
    assert traj.modes[k] == 2
    assert traj.outputs[k, 0] == abs(traj.states[k, 0])


def test_grid_contains_switch_times(motivating, cfg_fast):
    sig = gen_arbitrary(2, (0.0, 8.0), 0.3, 9)
    traj = simulate(motivating.system, sig, 0.0, np.array([0.7, -0.2]), 8.0, cfg_fast)
    for b in sig.breakpoints:
        if 0.0 < b < 8.0:
            assert np.min(np.abs(traj.times - b)) == 0.0
    # no step straddles a breakpoint: every step lies inside one constancy interval
    mid_modes = sig.modes_at(0.5 * (traj.times[:-1] + traj.times[1:]))
    left_modes = sig.modes_at(traj.times[:-1])
    assert np.array_equal(mid_modes, left_modes)


def test_determinism_bit_identical(motivating, cfg_fast):
    sig = gen_arbitrary(2, (0.0, 5.0), 0.3, 21)
    a = simulate(motivating.system, sig, 0.0, np.array([0.3, 0.4]), 5.0, cfg_fast)
    b = simulate(motivating.system, sig, 0.0, np.array([0.3, 0.4]), 5.0, cfg_fast)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


def test_self_convergence_order(inverter):
    # smooth single-mode interval: halving the step shrinks the error against
    # a 64x-finer reference by >= 8x (order >= 3 away from events)
    sig = const_signal(1, 0.0, 2.0)
    x0 = np.array([1.0, 0.5, -0.3, 0.8])
    ref = simulate(inverter.system, sig, 0.0, x0, 2.0,
                   IntegratorConfig(step=4e-2 / 64)).states[-1]
    e1 = np.linalg.norm(simulate(inverter.system, sig, 0.0, x0, 2.0,
                                 IntegratorConfig(step=4e-2)).states[-1] - ref)
    e2 = np.linalg.norm(simulate(inverter.system, sig, 0.0, x0, 2.0,
                                 IntegratorConfig(step=2e-2)).states[-1] - ref)
    assert e2 <= e1 / 8.0


# --- relaxed -----------------------------------------------------------------


def test_vertex_control_reproduces_switched(motivating, cfg_fine):
    sig = const_signal(1, 0.0, 3.0)
    x0 = np.array([1.0, 0.0])
    a = simulate(motivating.system, sig, 0.0, x0, 3.0, cfg_fine)
    u = signal_to_control(sig, 1e-3, n_modes=2)
    b = simulate_relaxed(motivating.system, u, 0.0, x0, 3.0, cfg_fine)
    assert len(a.times) == len(b.times)
    assert np.max(np.abs(a.states - b.states)) <= 1e-10


def test_relaxed_mixture_derivative(motivating, cfg_fine):
    # reduced dynamics under u = (.5, .5) from (0, 1): dx1/dt(0) = u1 + a*u2 = 1
    from swstab import RelaxedControl
    from swstab.limiting import simulate_reduced
    u = RelaxedControl(t0=0.0, step=0.5, values=np.tile([0.5, 0.5], (4, 1)))
    traj = simulate_reduced(motivating.reduced, u, 0.0, np.array([0.0, 1.0]), 2.0, cfg_fine)
    h = traj.times[1] - traj.times[0]
    slope = (traj.states[1, 0] - traj.states[0, 0]) / h
    assert abs(slope - 1.0) < 1e-6


def test_relaxed_outputs_are_mixed_abs(motivating, cfg_fast):
    from swstab import RelaxedControl
    u = RelaxedControl(t0=0.0, step=0.5, values=np.tile([0.25, 0.75], (2, 1)))
    traj = simulate_relaxed(motivating.system, u, 0.0, np.array([-1.0, 0.0]), 1.0, cfg_fast)
    x1 = traj.states[:, 0]
    np.testing.assert_allclose(traj.outputs[:, 0], 0.75 * np.abs(x1), atol=1e-12)


def test_control_grid_refinement_first_order(motivating):
    # control discretization error contracts (at worst stays within 4x) per halving
    sig = gen_arbitrary(2, (0.0, 5.0), 0.7, 5, granularity=1e-4)
    x0 = np.array([1.0, 0.3])
    cfg = IntegratorConfig(step=2e-3)
    finals = []
    for du in (0.5, 0.25, 0.125, 0.0625):
        u = signal_to_control(sig, du, span=(0.0, 5.0), n_modes=2)
        finals.append(simulate_relaxed(motivating.system, u, 0.0, x0, 5.0, cfg).states[-1])
    d1 = np.linalg.norm(finals[1] - finals[0])
    d2 = np.linalg.norm(finals[2] - finals[1])
    d3 = np.linalg.norm(finals[3] - finals[2])
    assert d2 <= 4.0 * d1 + 1e-12
    assert d3 <= 4.0 * d2 + 1e-12


# --- errors ------------------------------------------------------------------


def test_blow_up_reported_with_partial():
    unstable = SwitchedSystem(n=1, N=1, f=lambda t, x, i: 3.0 * x,
                              h=lambda t, x, i: np.array([0.0]))
    sig = const_signal(1, 0.0, 20.0)
    with pytest.raises(BlowUpError) as exc:
        simulate(unstable, sig, 0.0, np.array([1.0]), 20.0, IntegratorConfig(step=1e-2))
    assert exc.value.time <= 20.0
    assert exc.value.trajectory is not None
    assert len(exc.value.trajectory.times) > 1


def test_nan_rhs_raises():
    from swstab import DynamicsError
    bad = SwitchedSystem(n=1, N=1, f=lambda t, x, i: np.array([np.nan]),
                         h=lambda t, x, i: np.array([0.0]))
    sig = const_signal(1, 0.0, 1.0)
    with pytest.raises(DynamicsError):
        simulate(bad, sig, 0.0, np.array([1.0]), 1.0, IntegratorConfig(step=1e-2))


# --- closed-loop covering runs ------------------------------------------------


def test_covering_run_invariance(example4, cfg_fast):
    traj, sigma = simulate_with_covering(example4.system, example4.covering,
                                         example4.policy, 0.0,
                                         np.array([1.0, 0.5]), 50.0, cfg_fast)
    rep = validate_covering_invariance(traj, sigma, example4.covering)
    assert rep.ok, rep.first_violation


def test_covering_run_invariance_simple_policy(example4, cfg_fast):
    # the plain "mode 3 iff x1 < 0, else mode 1" policy also stays invariant
    # on [0, 50], including through forced-sliding stretches
    def policy(t, x, active):
        if x[0] < 0.0 and 3 in active:
            return 3
        return 1 if 1 in active else active[0]

    for x0 in (np.array([1.0, 0.5]), np.array([-0.8, 1.2]), np.array([0.01, 1.0])):
        traj, sigma = simulate_with_covering(example4.system, example4.covering,
                                             policy, 0.0, x0, 50.0, cfg_fast)
        rep = validate_covering_invariance(traj, sigma, example4.covering)
        assert rep.ok, (x0, rep.first_violation)


def test_covering_interior_no_events(example4, cfg_fast):
    # while the state stays interior the mode is never re-decided; the first
    # switch happens only at the boundary arrival
    traj, sigma = simulate_with_covering(example4.system, example4.covering,
                                         example4.policy, 0.0,
                                         np.array([2.0, 0.0]), 0.5, cfg_fast)
    assert sigma.n_switches == 0
    assert np.all(traj.states[:, 0] > 0)
    traj2, sigma2 = simulate_with_covering(example4.system, example4.covering,
                                           example4.policy, 0.0,
                                           np.array([2.0, 0.0]), 1.0, cfg_fast)
    first_switch = sigma2.breakpoints[1]
    before = traj2.states[traj2.times < first_switch]
    assert np.all(before[:, 0] > 0)
    at = traj2.states[np.argmin(np.abs(traj2.times - first_switch))]
    assert abs(at[0]) <= 1e-8  # the event lands on the boundary


def test_covering_boundary_start_accepts_any_piece(example4, cfg_fast):
    traj, sigma = simulate_with_covering(example4.system, example4.covering,
                                         example4.policy, 0.0,
                                         np.array([0.0, 1.0]), 0.5, cfg_fast)
    assert sigma.modes[0] in (1, 2, 3)
    rep = validate_covering_invariance(traj, sigma, example4.covering)
    assert rep.ok


def test_policy_error_surfaces(example4, cfg_fast):
    with pytest.raises(PolicyError):
        simulate_with_covering(example4.system, example4.covering,
                               lambda t, x, active: 3, 0.0,
                               np.array([2.0, 0.0]), 1.0, cfg_fast)


def test_chattering_guard():
    # two coverings that exclude each other's mode force a switch per step
    sys = SwitchedSystem(n=1, N=2,
                         f=lambda t, x, i: np.array([1.0 if i == 1 else -1.0]),
                         h=lambda t, x, i: np.array([0.0]))
    chi = Covering(margin=lambda x, i: -x[0] if i == 1 else x[0], N=2)
    cfg = IntegratorConfig(step=1e-2, max_switches=10)
    with pytest.raises(ChatteringError):
        simulate_with_covering(sys, chi, lambda t, x, active: active[0],
                               0.0, np.array([0.0]), 10.0, cfg)
