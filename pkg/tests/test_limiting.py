"""Reduced limiting systems, inherited constraints, and the WZSD falsifier."""

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from swstab import (
    ControlClassConstraint,
    IntegratorConfig,
    ParameterError,
    RelaxedControl,
    build_reduced,
    check_control_constraint,
    gen_measure_constrained,
    output_residual,
    scan_zeroing_sequences,
    signal_to_control,
    simulate,
    simulate_reduced,
    trivial_covering,
    windowed_weak_average,
    wzsd_falsify,
)
from swstab.limiting import UnsupportedLimitError
from swstab.signals import MeasureConstraint

from conftest import const_signal


# --- construction ------------------------------------------------------------


def test_reduced_motivating_matches_hand_equations(motivating):
    # columns: (x2, -x1) and (a*x2, 0); output row (0, |x1|)
    rls = motivating.reduced
    x = np.array([0.7, -1.3])
    F = rls.Fhat(0.0, x)
    np.testing.assert_allclose(F[:, 0], [x[1], -x[0]])
    np.testing.assert_allclose(F[:, 1], [1.0 * x[1], 0.0])
    np.testing.assert_allclose(rls.Hhat(0.0, x), [0.0, abs(x[0])])


def test_reduced_inverter_drops_load_and_coupling(inverter):
    rls = inverter.reduced
    x = np.array([0.0, 1.0, 1.0, 1.0])
    F = rls.Fhat(0.0, x)
    # Ahat1 @ x with P = I: rows (0, x3, -x2, -x2): the (2,4) entry and the
    # load are gone
    np.testing.assert_allclose(F[:, 0], [0.0, 1.0, -1.0, -1.0])
    np.testing.assert_allclose(F[:, 1], [-1.0, 0.0, 0.0, -1.0])
    np.testing.assert_allclose(rls.Hhat(0.0, x), [1.0, 1.0])  # C2 * x4^2


def test_reduced_example1_surrogate_columns(example1):
    rls = example1.reduced
    x = np.array([0.5, -0.8])
    t = 1.3
    F = rls.Fhat(t, x)
    g = np.sin(t)
    np.testing.assert_allclose(F[:, 0], [0.0, g * x[0]])
    np.testing.assert_allclose(F[:, 1], [g * x[1], 0.0])
    np.testing.assert_allclose(F[:, 2], [2.0 * g * x[1], 0.0])
    np.testing.assert_allclose(rls.Hhat(t, x), [x[1] ** 2, x[0] ** 2, x[0] ** 2])


def test_time_dependent_without_limits_unsupported(example1):
    with pytest.raises(UnsupportedLimitError):
        build_reduced(example1.system, trivial_covering(3), [], "time_invariant")


# --- output residual ---------------------------------------------------------


def test_residual_vertex1_zero(motivating, cfg_fast):
    u = RelaxedControl(t0=0.0, step=0.5, values=np.tile([1.0, 0.0], (10, 1)))
    traj = simulate_reduced(motivating.reduced, u, 0.0, np.array([1.0, 0.0]), 5.0, cfg_fast)
    assert output_residual(motivating.reduced, traj) == 0.0


def test_residual_vertex2_positive(motivating, cfg_fast):
    u = RelaxedControl(t0=0.0, step=0.5, values=np.tile([0.0, 1.0], (4, 1)))
    traj = simulate_reduced(motivating.reduced, u, 0.0, np.array([1.0, 0.0]), 2.0, cfg_fast)
    assert output_residual(motivating.reduced, traj) >= 1.0 - 1e-9


def test_residual_zero_state(motivating, cfg_fast):
    u = RelaxedControl(t0=0.0, step=0.5, values=np.tile([0.3, 0.7], (4, 1)))
    traj = simulate_reduced(motivating.reduced, u, 0.0, np.zeros(2), 2.0, cfg_fast)
    assert output_residual(motivating.reduced, traj) == 0.0


# --- inherited constraints ---------------------------------------------------


def test_integral_constraint_constant_mix():
    c = ControlClassConstraint(kind="integral_lower_bound", mode=2, T0=1.0, delta0=0.2)
    u = RelaxedControl(t0=0.0, step=0.25, values=np.tile([0.8, 0.2], (20, 1)))
    ok, margin = check_control_constraint(u, c)
    assert ok
    assert abs(margin) < 1e-12


def test_integral_constraint_vertex1_fails():
    c = ControlClassConstraint(kind="integral_lower_bound", mode=2, T0=1.0, delta0=0.2)
    u = RelaxedControl(t0=0.0, step=0.25, values=np.tile([1.0, 0.0], (20, 1)))
    ok, margin = check_control_constraint(u, c)
    assert not ok and margin == pytest.approx(-0.2)


def test_weak_limit_inherits_integral_constraint():
    # windowed averages of class members satisfy the inherited bound
    c = MeasureConstraint(T0=1.0, delta0=0.2, mode=2)
    controls = []
    for seed in range(6):
        sig = gen_measure_constrained(c, 2, (0.0, 12.0), 700 + seed, granularity=1e-2)
        controls.append(signal_to_control(sig, 1e-2, span=(0.0, 12.0), n_modes=2))
    avg = windowed_weak_average(controls, window=0.5)
    cc = ControlClassConstraint(kind="integral_lower_bound", mode=2, T0=1.0, delta0=0.2)
    # interior trim: edge cells of the moving average lose the shift identity
    interior = RelaxedControl(t0=avg.t0 + 1.0, step=avg.step,
                              values=avg.values[100:-100])
    ok, margin = check_control_constraint(interior, cc)
    assert ok, margin


def test_pattern_constraint_on_controls(inverter):
    c = inverter.reduced.constraints[0]
    assert c.kind == "pattern"
    # compliant vertex schedule: 1(1s) 2(1s) 1(1s) repeated, du = 0.25
    cells = []
    for _ in range(5):
        cells += [[1.0, 0.0]] * 4 + [[0.0, 1.0]] * 4 + [[1.0, 0.0]] * 4
    u = RelaxedControl(t0=0.0, step=0.25, values=np.array(cells))
    ok, _ = check_control_constraint(u, c)
    assert ok
    # constant e1 has no 2-run at all
    u2 = RelaxedControl(t0=0.0, step=0.25, values=np.tile([1.0, 0.0], (60, 1)))
    ok2, margin2 = check_control_constraint(u2, c)
    assert not ok2 and margin2 < 0


# --- weak averaging ----------------------------------------------------------


def test_average_constant_idempotent():
    u = RelaxedControl(t0=0.0, step=0.1, values=np.tile([0.25, 0.75], (50, 1)))
    avg = windowed_weak_average([u, u, u], window=1.0)
    np.testing.assert_allclose(avg.values, u.values, atol=1e-12)


def test_average_fast_alternation_near_half():
    vals = np.zeros((200, 2))
    vals[::2, 0] = 1.0
    vals[1::2, 1] = 1.0
    u = RelaxedControl(t0=0.0, step=0.01, values=vals)
    avg = windowed_weak_average([u], window=1.0)
    mid = avg.values[80:120]
    assert np.max(np.abs(mid - 0.5)) < 0.02


@given(st.integers(min_value=0, max_value=5000))
@settings(max_examples=25, deadline=None)
def test_average_preserves_simplex(seed):
    rng = np.random.default_rng(seed)
    us = [RelaxedControl(t0=0.0, step=0.05,
                         values=rng.dirichlet(np.ones(3), size=40))
          for _ in range(3)]
    avg = windowed_weak_average(us, window=0.3)
    assert np.all(avg.values >= 0)
    np.testing.assert_allclose(avg.values.sum(axis=1), 1.0, atol=1e-9)


def test_average_grid_mismatch_rejected():
    a = RelaxedControl(t0=0.0, step=0.1, values=np.tile([1.0, 0.0], (10, 1)))
    b = RelaxedControl(t0=0.0, step=0.2, values=np.tile([1.0, 0.0], (10, 1)))
    with pytest.raises(ParameterError):
        windowed_weak_average([a, b], window=0.5)


# --- zeroing-sequence scan ---------------------------------------------------


def test_scan_flags_conserved_zero_output(motivating, cfg_fast):
    sig = const_signal(1, 0.0, 10.0)
    traj = simulate(motivating.system, sig, 0.0, np.array([1.0, 0.0]), 10.0, cfg_fast)
    found = scan_zeroing_sequences([(traj, sig)], eps=0.5, output_decay_tol=1e-9,
                                   min_duration=5.0)
    assert len(found) == 1
    assert found[0].output_sup <= 1e-9
    assert found[0].eps >= 0.5


def test_scan_clean_under_class_signals(motivating, cfg_fast):
    batch = []
    for seed in range(4):
        sig = motivating.signal_class.generator((0.0, 30.0), 800 + seed)
        traj = simulate(motivating.system, sig, 0.0, np.array([1.0, 0.3]), 30.0, cfg_fast)
        batch.append((traj, sig))
    found = scan_zeroing_sequences(batch, eps=0.4, output_decay_tol=1e-6,
                                   min_duration=2.0)
    assert found == []


def test_scan_ignores_zero_trajectory(motivating, cfg_fast):
    sig = const_signal(1, 0.0, 5.0)
    traj = simulate(motivating.system, sig, 0.0, np.zeros(2), 5.0, cfg_fast)
    assert scan_zeroing_sequences([(traj, sig)], eps=0.1, output_decay_tol=1.0,
                                  min_duration=1.0) == []


# --- falsifier ---------------------------------------------------------------


def test_falsifier_finds_rotation_counterexample(motivating):
    rls = replace(motivating.reduced, constraints=())
    v = wzsd_falsify(rls, eps=0.5, horizon=5.0, budget=100, seed=0)
    assert v.verdict == "counterexample"
    assert v.budget_used <= 100
    cx = v.counterexample
    assert cx.eps >= 0.5
    assert cx.output_sup <= 1e-8
    # the counterexample is the constant-e1 rotation
    assert np.array_equal(cx.control.values[0], [1.0, 0.0])


def test_falsifier_counterexample_revalidates(motivating, cfg_fast):
    # independent re-simulation of the returned pair reproduces the claim
    rls = replace(motivating.reduced, constraints=())
    v = wzsd_falsify(rls, eps=0.5, horizon=5.0, budget=50, seed=1)
    cx = v.counterexample
    traj = simulate_reduced(rls, cx.control, 0.0, cx.trajectory.states[0], 5.0,
                            IntegratorConfig(step=0.01))
    assert float(traj.norms().min()) >= 0.5
    assert output_residual(rls, traj) <= 1e-8


def test_falsifier_face_feasibility(motivating):
    # wherever the kept candidate puts weight, the output component vanishes
    rls = replace(motivating.reduced, constraints=())
    v = wzsd_falsify(rls, eps=0.5, horizon=5.0, budget=50, seed=2)
    cx = v.counterexample
    for t, x, w in zip(cx.trajectory.times, cx.trajectory.states, cx.trajectory.controls):
        H = rls.Hhat(t, x)
        assert np.all(w[H > 1e-8] <= 1e-12)


def test_falsifier_respects_integral_constraint(motivating):
    v = wzsd_falsify(motivating.reduced, eps=0.5, horizon=5.0, budget=200, seed=0)
    assert v.verdict == "no_counterexample_found"
    assert v.budget_used == 200


def test_falsifier_deterministic(motivating):
    a = wzsd_falsify(motivating.reduced, eps=0.5, horizon=5.0, budget=60, seed=5)
    b = wzsd_falsify(motivating.reduced, eps=0.5, horizon=5.0, budget=60, seed=5)
    assert a.verdict == b.verdict and a.budget_used == b.budget_used


def test_falsifier_verdict_json(motivating):
    v = wzsd_falsify(motivating.reduced, eps=0.5, horizon=2.0, budget=20, seed=0)
    doc = v.to_dict()
    for key in ("verdict", "budget_used", "seed", "eps", "residual_tol"):
        assert key in doc
