"""Deterministic fixed-step RK4 integration of switched and relaxed dynamics.

Steps never straddle a switching breakpoint or a control grid cell: each
constancy interval is tiled with equal sub-steps no longer than the base step.
Fixed stepping (rather than adaptive) keeps runs bit-reproducible, which the
Monte Carlo layers rely on.  Covering-boundary crossings in closed-loop runs
are located by bisection on the active piece's margin function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    BOUNDARY_TOL,
    BlowUpError,
    ChatteringError,
    Covering,
    DomainError,
    DynamicsError,
    ParameterError,
    PolicyError,
    RelaxedControl,
    SwitchedSystem,
    SwitchingSignal,
    Trajectory,
    active_index_set,
)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    event_bisection_tol is a *time* tolerance: boundary crossings are located
    to within this many seconds, so the landing state overshoots the boundary
    by at most ~|dx/dt| * event_bisection_tol.
    """

    step: float = 1e-3
    event_bisection_tol: float = 1e-11
    divergence_bound: float = 1e9
    max_switches: int = 1_000_000

    def __post_init__(self):
        if self.step <= 0:
            raise ParameterError("step must be positive")
        if not (0 < self.event_bisection_tol < self.step):
            raise ParameterError("event_bisection_tol must lie in (0, step)")


def _rk4_step(f, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, x + (0.5 * h) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _check_state(x: np.ndarray, t: float, bound: float, partial=None) -> None:
    s = float(x @ x)
    if s != s:  # NaN
        raise DynamicsError(f"NaN state at t={t}")
    if s > bound * bound:
        raise BlowUpError(f"state norm exceeded {bound:.3g} at t={t}", time=t, trajectory=partial)


def _integrate_interval(f, t0: float, x0: np.ndarray, t1: float, base_step: float,
                        bound: float, out_t: list, out_x: list,
                        n_steps: int = 0) -> np.ndarray:
    """March from (t0, x0) to t1 with equal sub-steps <= base_step, appending nodes."""
    span = t1 - t0
    if span <= 0:
        return x0
    n = n_steps if n_steps > 0 else max(1, int(math.ceil((span / base_step) * (1.0 - 1e-9))))
    h = span / n
    x = x0
    for k in range(1, n + 1):
        t = t0 + (k - 1) * h
        x = _rk4_step(f, t, x, h)
        tk = t1 if k == n else t0 + k * h
        _check_state(x, tk, bound)
        out_t.append(tk)
        out_x.append(x)
    return x


def _mode_rhs(sys: SwitchedSystem, i: int):
    if i < 1 or i > sys.N:
        raise ParameterError(f"mode {i} outside 1..{sys.N}")
    f = sys.f
    return lambda t, x: f(t, x, i)


def _fill_outputs_switched(sys: SwitchedSystem, times, states, sigma) -> np.ndarray:
    out = np.empty((len(times), sys.p))
    modes = sigma.modes_at(np.asarray(times))
    for k, (t, x, i) in enumerate(zip(times, states, modes)):
        out[k] = np.atleast_1d(sys.h(t, x, int(i)))
    return out


def simulate(sys: SwitchedSystem, sigma: SwitchingSignal, t0: float, x0: np.ndarray,
             tf: float, cfg: IntegratorConfig) -> Trajectory:
    """Integrate dx/dt = f(t, x, sigma(t)) on [t0, tf].

    The output grid contains every switch time of sigma exactly.  tf == t0
    yields the degenerate single-row trajectory.
    """
    if tf < t0:
        raise DomainError("tf must be >= t0")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ParameterError(f"x0 must have shape ({sys.n},)")
    _check_state(x0, t0, cfg.divergence_bound)
    ts: list = [t0]
    xs: list = [x0]
    if tf > t0:
        try:
            for a, b, i in sigma.segments(t0, tf):
                x_last = _integrate_interval(_mode_rhs(sys, i), a, xs[-1], b,
                                             cfg.step, cfg.divergence_bound, ts, xs)
        except BlowUpError as err:
            partial = Trajectory(times=np.array(ts), states=np.array(xs[: len(ts)]),
                                 modes=sigma.modes_at(np.array(ts)))
            raise BlowUpError(str(err), time=err.time, trajectory=partial) from None
    times = np.array(ts)
    states = np.array(xs)
    return Trajectory(times=times, states=states,
                      modes=sigma.modes_at(times).astype(np.int64),
                      outputs=_fill_outputs_switched(sys, times, states, sigma))


def _mix_rhs(sys: SwitchedSystem, weights: np.ndarray):
    """RHS for sum_i u_i f_i; one-hot weights collapse to the bare mode field."""
    nz = [(i + 1, float(w)) for i, w in enumerate(weights) if w > 0.0]
    if len(nz) == 1 and nz[0][1] == 1.0:
        return _mode_rhs(sys, nz[0][0])
    f = sys.f

    def rhs(t, x):
        acc = nz[0][1] * f(t, x, nz[0][0])
        for i, w in nz[1:]:
            acc = acc + w * f(t, x, i)
        return acc

    return rhs


def _mixed_output(sys: SwitchedSystem, t: float, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    acc = np.zeros(sys.p)
    for i, w in enumerate(weights):
        if w > 0.0:
            acc = acc + w * np.abs(np.atleast_1d(sys.h(t, x, i + 1)))
    return acc


def simulate_relaxed(sys: SwitchedSystem, u: RelaxedControl, t0: float, x0: np.ndarray,
                     tf: float, cfg: IntegratorConfig) -> Trajectory:
    """Integrate dx/dt = sum_i u_i(t) f_i(t, x); outputs are sum_i u_i |h_i|.

    Steps are aligned to the control's grid cells.  Node labels are
    right-continuous: a node on a cell edge carries the incoming cell's value.
    """
    if tf < t0:
        raise DomainError("tf must be >= t0")
    if t0 < u.t0 - 1e-12 or tf > u.tf + 1e-9 * max(1.0, abs(u.tf)):
        raise DomainError(f"[{t0}, {tf}] outside control grid [{u.t0}, {u.tf}]")
    if u.n_modes != sys.N:
        raise ParameterError(f"control has {u.n_modes} modes, system has {sys.N}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ParameterError(f"x0 must have shape ({sys.n},)")
    _check_state(x0, t0, cfg.divergence_bound)
    k0 = u.cell_of(t0)
    ts: list = [t0]
    xs: list = [x0]
    ctrl: list = [u.values[k0]]
    k = k0
    while tf > t0 and u.t0 + k * u.step < tf - 1e-12 and k < u.n_cells:
        # merge the run of identical cells starting at k; cell edges stay
        # grid nodes because sub-step counts are chosen per cell
        k_end = k + 1
        while (k_end < u.n_cells and u.t0 + k_end * u.step < tf - 1e-12
               and np.array_equal(u.values[k_end], u.values[k])):
            k_end += 1
        a = max(t0, u.t0 + k * u.step)
        b = min(tf, u.t0 + k_end * u.step)
        w = u.values[k]
        ctrl[-1] = w  # node on the incoming cell's left edge takes its value
        n_before = len(ts)
        per_cell = max(1, int(math.ceil((u.step / cfg.step) * (1.0 - 1e-9))))
        n_steps = per_cell * (k_end - k)
        try:
            _integrate_interval(_mix_rhs(sys, w), a, xs[-1], b,
                                cfg.step, cfg.divergence_bound, ts, xs,
                                n_steps=n_steps)
        except BlowUpError as err:
            partial = Trajectory(times=np.array(ts), states=np.array(xs))
            raise BlowUpError(str(err), time=err.time, trajectory=partial) from None
        ctrl.extend([w] * (len(ts) - n_before))
        k = k_end
    times = np.array(ts)
    states = np.array(xs)
    controls = np.array(ctrl)
    outputs = np.array([_mixed_output(sys, t, x, w)
                        for t, x, w in zip(times, states, controls)])
    return Trajectory(times=times, states=states, controls=controls, outputs=outputs)


def simulate_with_covering(sys: SwitchedSystem, covering: Covering,
                           policy: Callable[[float, np.ndarray, tuple[int, ...]], int],
                           t0: float, x0: np.ndarray, tf: float,
                           cfg: IntegratorConfig) -> tuple[Trajectory, SwitchingSignal]:
    """Closed-loop run keeping sigma(t) in the active index set of x(t).

    The policy is queried at t0 and whenever the state leaves the active
    piece; crossings are bisected to cfg.event_bisection_tol.  Right after a
    switch the new mode is granted one full base step before bisection
    re-arms, so grazing/sliding configurations make progress: the state may
    overshoot the boundary inside such a step, but every recorded grid node
    is labeled with a mode whose piece contains it (within tolerance).
    """
    if tf <= t0:
        raise DomainError("tf must exceed t0")
    x0 = np.asarray(x0, dtype=float)
    if covering.N != sys.N:
        raise ParameterError("covering and system mode counts differ")
    _check_state(x0, t0, cfg.divergence_bound)

    def query(t, x):
        active = active_index_set(x, covering, tol=BOUNDARY_TOL)
        m = int(policy(t, x, active))
        if m not in active:
            raise PolicyError(f"policy returned mode {m} outside active set {active} at t={t}")
        return m

    mode = query(t0, x0)
    ts = [t0]
    xs = [x0]
    bp = [t0]
    bp_modes = [mode]
    node_modes = [mode]
    suppress_until = -np.inf
    n_switches = 0
    t, x = t0, x0
    rhs = _mode_rhs(sys, mode)

    def switch_to(new_mode, at_t):
        nonlocal mode, rhs, n_switches, suppress_until
        if new_mode != mode:
            mode = new_mode
            rhs = _mode_rhs(sys, mode)
            if at_t <= bp[-1]:
                bp_modes[-1] = mode  # re-decision at the same instant: overwrite
            else:
                bp.append(at_t)
                bp_modes.append(mode)
            n_switches += 1
            if n_switches > cfg.max_switches:
                raise ChatteringError(f"more than {cfg.max_switches} switches by t={at_t}")
        suppress_until = at_t + cfg.step

    bound2 = cfg.divergence_bound * cfg.divergence_bound
    while t < tf - 1e-12 * max(1.0, abs(tf)):
        h = min(cfg.step, tf - t)
        x_new = _rk4_step(rhs, t, x, h)
        s = float(x_new @ x_new)
        if s != s:
            raise DynamicsError(f"NaN state at t={t + h}")
        if s > bound2:
            raise BlowUpError(f"state norm exceeded {cfg.divergence_bound:.3g} at t={t + h}",
                              time=t + h,
                              trajectory=Trajectory(times=np.array(ts), states=np.array(xs)))
        if covering.margin(x_new, mode) >= -BOUNDARY_TOL:
            t, x = t + h, x_new
            ts.append(t)
            xs.append(x)
            node_modes.append(mode)
            continue
        if t < suppress_until:
            # grace step after a switch: accept and re-decide at the endpoint
            t, x = t + h, x_new
            ts.append(t)
            xs.append(x)
            switch_to(query(t, x), t)
            node_modes.append(mode)
            continue
        # locate the crossing: margin(mode, .) changes sign inside (0, h]
        lo, hi = 0.0, h
        x_hi = x_new
        while hi - lo > cfg.event_bisection_tol:
            mid = 0.5 * (lo + hi)
            x_mid = _rk4_step(rhs, t, x, mid)
            if covering.margin(x_mid, mode) >= 0.0:
                lo = mid
            else:
                hi, x_hi = mid, x_mid
        if hi <= cfg.event_bisection_tol:
            # crossing at the very start: switch in place and take a grace step
            switch_to(query(t, x), t)
            node_modes[-1] = mode
            continue
        t, x = t + hi, x_hi
        ts.append(t)
        xs.append(x)
        switch_to(query(t, x), t)
        node_modes.append(mode)

    times = np.array(ts)
    states = np.array(xs)
    sigma = SwitchingSignal(breakpoints=np.array(bp), modes=np.array(bp_modes, dtype=np.int64),
                            domain_start=t0, domain_end=tf)
    outputs = np.array([np.atleast_1d(sys.h(tk, xk, int(mk)))
                        for tk, xk, mk in zip(times, states, node_modes)])
    traj = Trajectory(times=times, states=states,
                      modes=np.array(node_modes, dtype=np.int64), outputs=outputs)
    return traj, sigma
