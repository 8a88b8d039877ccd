"""Reduced limiting control systems and the weak zero-state detectability falsifier.

The reduced system is the auxiliary control system built from the precompact
parts of the dynamics, with output constrained to zero, controls confined to
the covering-induced face at the current state, and the switching-class
constraints inherited in integral or pattern form.  Detectability of the
reduced system is *falsified*, never proved: the search hunts for a bounded
trajectory that keeps its norm above a floor while zeroing the output and
honoring all constraints.  "No counterexample found" is evidence at the
recorded budget and grid, nothing more.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    BOUNDARY_TOL,
    Covering,
    DomainError,
    ParameterError,
    RelaxedControl,
    SwstabError,
    SwitchedSystem,
    Trajectory,
    active_index_set,
)
from .integrate import IntegratorConfig, _check_state, _integrate_interval
from .signals import TIE_TOL, PatternConstraint, PatternReport, pattern_cover_check

VERTEX_TOL = 1e-6  # a control cell counts as a vertex if within this of e_i (sup norm)


class UnsupportedLimitError(SwstabError):
    """Limiting functions of a time-dependent precompact part were not supplied."""


@dataclass(frozen=True)
class ControlClassConstraint:
    """Constraint inherited by weak limits of a switching class.

    kinds:
      - "integral_lower_bound": int_t^{t+T0} u_mode >= delta0 for every window
      - "pattern": every window [t, t+T] contains a near-vertex 1-2-1 pattern
        with sub-interval lengths in [dm, dM]
      - "none": unconstrained
    """

    kind: str
    mode: int = 0
    T0: float = 0.0
    delta0: float = 0.0
    T: float = 0.0
    dm: float = 0.0
    dM: float = 0.0

    def __post_init__(self):
        if self.kind == "integral_lower_bound":
            if not (0 < self.delta0 <= self.T0) or self.mode < 1:
                raise ParameterError("integral constraint needs 0 < delta0 <= T0 and a mode")
        elif self.kind == "pattern":
            PatternConstraint(T=self.T, dm=self.dm, dM=self.dM)
        elif self.kind != "none":
            raise ParameterError(f"unknown constraint kind {self.kind!r}")

    @property
    def window(self) -> float:
        if self.kind == "integral_lower_bound":
            return self.T0
        if self.kind == "pattern":
            return self.T
        return 0.0


@dataclass(frozen=True)
class ReducedLimitingSystem:
    """dx/dt = Fhat(t, x) u with output Hhat(t, x) . u pinned to zero.

    Fhat stacks the limiting precompact fields columnwise; Hhat holds the
    componentwise output magnitudes, so Hhat >= 0 and zero output is exactly
    a face condition on u.
    """

    n: int
    N: int
    Fhat: Callable[[float, np.ndarray], np.ndarray]   # (n, N)
    Hhat: Callable[[float, np.ndarray], np.ndarray]   # (N,)
    covering: Covering
    constraints: tuple[ControlClassConstraint, ...] = ()
    name: str = ""


def build_reduced(sys: SwitchedSystem, covering: Covering,
                  constraints: Sequence[ControlClassConstraint] = (),
                  limit_spec="time_invariant", name: str = "") -> ReducedLimitingSystem:
    """Assemble the reduced limiting control system.

    ``limit_spec`` is either "time_invariant" (use fhat/h directly; valid when
    the system's precompact parts do not depend on t, in which case the
    reduced system is unique) or a pair (fhat_gamma, h_gamma) of per-mode
    callable lists supplying the limiting functions along some sequence.
    """
    if covering.N != sys.N:
        raise ParameterError("covering and system mode counts differ")
    if limit_spec == "time_invariant":
        if not sys.time_invariant_limits:
            raise UnsupportedLimitError(
                "time-dependent precompact part: supply limiting functions explicitly")
        fhat = sys.fhat if sys.fhat is not None else sys.f
        fg = [lambda t, x, i=i: fhat(t, x, i) for i in range(1, sys.N + 1)]
        hg = [lambda t, x, i=i: sys.h(t, x, i) for i in range(1, sys.N + 1)]
    else:
        fg, hg = limit_spec
        if len(fg) != sys.N or len(hg) != sys.N:
            raise ParameterError("need one limiting function per mode")

    def Fhat(t, x):
        return np.column_stack([f(t, x) for f in fg])

    def Hhat(t, x):
        return np.array([float(np.linalg.norm(np.atleast_1d(h(t, x)))) for h in hg])

    return ReducedLimitingSystem(n=sys.n, N=sys.N, Fhat=Fhat, Hhat=Hhat,
                                 covering=covering, constraints=tuple(constraints),
                                 name=name or sys.name)


def simulate_reduced(rls: ReducedLimitingSystem, u: RelaxedControl, t0: float,
                     x0: np.ndarray, tf: float, cfg: IntegratorConfig) -> Trajectory:
    """Integrate the reduced dynamics under a relaxed control, cells aligned."""
    if tf < t0:
        raise DomainError("tf must be >= t0")
    if t0 < u.t0 - 1e-12 or tf > u.tf + 1e-9 * max(1.0, abs(u.tf)):
        raise DomainError("span outside control grid")
    x0 = np.asarray(x0, dtype=float)
    _check_state(x0, t0, cfg.divergence_bound)
    Fhat = rls.Fhat
    ts: list = [t0]
    xs: list = [x0]
    ctrl: list = [u.values[u.cell_of(t0)]]
    k = u.cell_of(t0)
    while tf > t0 and u.t0 + k * u.step < tf - 1e-12 and k < u.n_cells:
        k_end = k + 1
        while (k_end < u.n_cells and u.t0 + k_end * u.step < tf - 1e-12
               and np.array_equal(u.values[k_end], u.values[k])):
            k_end += 1
        a = max(t0, u.t0 + k * u.step)
        b = min(tf, u.t0 + k_end * u.step)
        w = u.values[k]
        ctrl[-1] = w
        n_before = len(ts)
        per_cell = max(1, int(math.ceil((u.step / cfg.step) * (1.0 - 1e-9))))
        _integrate_interval(lambda t, x: Fhat(t, x) @ w, a, xs[-1], b,
                            cfg.step, cfg.divergence_bound, ts, xs,
                            n_steps=per_cell * (k_end - k))
        ctrl.extend([w] * (len(ts) - n_before))
        k = k_end
    times = np.array(ts)
    states = np.array(xs)
    controls = np.array(ctrl)
    outputs = np.array([[float(rls.Hhat(t, x) @ w)]
                        for t, x, w in zip(times, states, controls)])
    return Trajectory(times=times, states=states, controls=controls, outputs=outputs)


def output_residual(rls: ReducedLimitingSystem, traj: Trajectory,
                    u: Optional[RelaxedControl] = None) -> float:
    """Max over grid nodes of Hhat(t, x(t)) . u(t); zero means output-zero holds."""
    if traj.controls is not None:
        weights = traj.controls
    elif u is not None:
        weights = np.array([u.value_at(min(t, u.tf - 0.5 * u.step)) for t in traj.times])
    else:
        raise ParameterError("trajectory carries no control and none was given")
    worst = 0.0
    for t, x, w in zip(traj.times, traj.states, weights):
        worst = max(worst, float(rls.Hhat(t, x) @ w))
    return worst


# ---------------------------------------------------------------------------
# inherited-constraint checks on relaxed controls
# ---------------------------------------------------------------------------


def _sliding_integral_min(u: RelaxedControl, mode: int, window: float) -> tuple[float, float]:
    """Exact min over anchors of int_t^{t+window} u_mode; returns (min, argmin)."""
    span = u.tf - u.t0
    if span < window - TIE_TOL:
        raise DomainError("control must span at least one window")
    w = u.values[:, mode - 1]
    kinks = u.t0 + u.step * np.arange(u.n_cells + 1)
    cum = np.concatenate(([0.0], np.cumsum(w * u.step)))

    def cum_at(t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(kinks, t, side="right") - 1, 0, len(kinks) - 2)
        return cum[j] + (cum[j + 1] - cum[j]) / u.step * (t - kinks[j])

    lo, hi = u.t0, u.tf - window
    anchors = np.unique(np.clip(np.concatenate((kinks, kinks - window, [lo, hi])), lo, hi))
    vals = cum_at(anchors + window) - cum_at(anchors)
    k = int(np.argmin(vals))
    return float(vals[k]), float(anchors[k])


def _vertex_cell_runs(u: RelaxedControl) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classify cells as vertex-1 (1), vertex-2 (2), or neither (3); merged runs."""
    n = u.n_modes
    cls = np.full(u.n_cells, 3, dtype=np.int64)
    for i in (1, 2):
        if i <= n:
            target = np.zeros(n)
            target[i - 1] = 1.0
            near = np.max(np.abs(u.values - target), axis=1) <= VERTEX_TOL
            cls[near] = i
    keep = np.concatenate(([True], np.diff(cls) != 0))
    starts = u.t0 + u.step * np.nonzero(keep)[0]
    modes = cls[keep]
    ends = np.concatenate((starts[1:], [u.tf]))
    return starts, ends, modes


def check_control_constraint(u: RelaxedControl, c: ControlClassConstraint) -> tuple[bool, float]:
    """Exact check of an inherited class constraint on a relaxed control.

    Integral kind: exact quadrature of the piecewise-constant control over all
    sliding windows; margin is (worst window integral) - delta0.  Pattern
    kind: cells within 1e-6 of a vertex form runs searched for the 1-2-1
    quadruple exactly as for switching signals; margin is 0 when satisfied,
    minus the worst anchor-coverage gap otherwise.
    """
    if c.kind == "none":
        return True, float("inf")
    if c.kind == "integral_lower_bound":
        if u.n_modes < c.mode:
            raise ParameterError("constraint mode exceeds the control's mode count")
        m, _ = _sliding_integral_min(u, c.mode, c.T0)
        return m >= c.delta0 - TIE_TOL, m - c.delta0
    starts, ends, modes = _vertex_cell_runs(u)
    pc = PatternConstraint(T=c.T, dm=c.dm, dM=c.dM)
    lo, hi = u.t0, u.tf - c.T
    if hi < lo - TIE_TOL:
        raise DomainError("control must span at least one window")
    rep: PatternReport = pattern_cover_check(starts, ends, modes, pc, lo, max(hi, lo))
    return rep.ok, rep.margin


# ---------------------------------------------------------------------------
# zeroing-output diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroingCandidate:
    """A trajectory that keeps |x| >= eps while its output stays below tolerance."""

    trajectory: Trajectory
    control: Optional[RelaxedControl]
    eps: float
    output_sup: float
    span: tuple[float, float]

    def __post_init__(self):
        if self.eps <= 0:
            raise ParameterError("eps must be positive")
        if float(self.trajectory.norms().min()) < self.eps - 1e-12:
            raise ParameterError("trajectory dips below the claimed norm floor")


def scan_zeroing_sequences(batch: Sequence[tuple[Trajectory, object]], eps: float,
                           output_decay_tol: float, r_max: float = np.inf,
                           min_duration: Optional[float] = None) -> list[ZeroingCandidate]:
    """Flag trajectory segments stuck in the shell {eps <= |x| <= r_max} with tiny output.

    This is the finite-horizon shadow of a zeroing-output sequence and a
    diagnostic that uniform attractivity is failing; it proves nothing.
    """
    if not batch:
        raise ParameterError("empty batch")
    if min_duration is None:
        min_duration = 0.5 * min(tr.tf - tr.t0 for tr, _ in batch)
    found = []
    for traj, _sig in batch:
        norms = traj.norms()
        outs = (np.linalg.norm(traj.outputs, axis=1) if traj.outputs is not None
                else np.zeros(len(norms)))
        in_shell = (norms >= eps) & (norms <= r_max)
        k = 0
        m = len(norms)
        while k < m:
            if not in_shell[k]:
                k += 1
                continue
            j = k
            while j + 1 < m and in_shell[j + 1]:
                j += 1
            t_a, t_b = traj.times[k], traj.times[j]
            if t_b - t_a >= min_duration and float(outs[k:j + 1].max()) <= output_decay_tol:
                seg = Trajectory(times=traj.times[k:j + 1], states=traj.states[k:j + 1],
                                 modes=None if traj.modes is None else traj.modes[k:j + 1],
                                 controls=None if traj.controls is None else traj.controls[k:j + 1],
                                 outputs=None if traj.outputs is None else traj.outputs[k:j + 1])
                found.append(ZeroingCandidate(trajectory=seg, control=None,
                                              eps=float(norms[k:j + 1].min()),
                                              output_sup=float(outs[k:j + 1].max()),
                                              span=(float(t_a), float(t_b))))
            k = j + 1
    return found


def windowed_weak_average(controls: Sequence[RelaxedControl], window: float) -> RelaxedControl:
    """Pointwise average over the sequence, then a moving average over the window.

    Approximates a weak limit of the sequence; convexity of the simplex makes
    the result a valid relaxed control.  All inputs must share the grid.
    """
    if not controls:
        raise ParameterError("empty control sequence")
    u0 = controls[0]
    for u in controls[1:]:
        if (abs(u.t0 - u0.t0) > 1e-12 or abs(u.step - u0.step) > 1e-15
                or u.n_cells != u0.n_cells or u.n_modes != u0.n_modes):
            raise ParameterError("controls must share a common grid")
    mean = np.mean([u.values for u in controls], axis=0)
    w = max(1, int(round(window / u0.step)))
    if w > 1:
        kernel = np.ones(w)
        counts = np.convolve(np.ones(mean.shape[0]), kernel, mode="same")
        mean = np.stack([np.convolve(mean[:, j], kernel, mode="same") / counts
                         for j in range(mean.shape[1])], axis=1)
    return RelaxedControl(t0=u0.t0, step=u0.step, values=mean)


# ---------------------------------------------------------------------------
# WZSD falsifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FalsifierVerdict:
    verdict: str                 # "no_counterexample_found" | "counterexample"
    budget_used: int
    seed: int
    eps: float
    residual_tol: float
    horizon: float
    du: float
    counterexample: Optional[ZeroingCandidate] = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "budget_used": self.budget_used, "seed": self.seed,
             "eps": self.eps, "residual_tol": self.residual_tol,
             "horizon": self.horizon, "du": self.du, **self.notes}
        if self.counterexample is not None:
            d["counterexample_min_norm"] = self.counterexample.eps
            d["counterexample_output_sup"] = self.counterexample.output_sup
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _candidate_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))


def _seed_states(rls: ReducedLimitingSystem, eps: float) -> list[np.ndarray]:
    """Deterministic start battery: +/- axis points on a shell above the floor."""
    out = []
    r = 2.0 * eps
    for j in range(rls.n):
        for s in (1.0, -1.0):
            x = np.zeros(rls.n)
            x[j] = s * r
            out.append(x)
    return out


def _shell_state(rng: np.random.Generator, n: int, eps: float, sparse: bool) -> np.ndarray:
    x = rng.standard_normal(n)
    if sparse and n > 1:
        mask = rng.integers(0, 2, size=n).astype(bool)
        if not mask.any():
            mask[rng.integers(0, n)] = True
        x = x * mask
        if not np.any(x):
            x[0] = 1.0
    r = float(rng.uniform(eps, 3.0 * eps))
    return x * (r / np.linalg.norm(x))


def _integral_steering(c, t, accrued, w, allowed):
    """Blend toward the constrained mode's vertex to chase the window quota."""
    tile_end = (math.floor(t / c.T0 + 1e-12) + 1) * c.T0
    deficit = c.delta0 - accrued
    if deficit <= 0 or c.mode not in allowed:
        return w
    lam = min(1.0, deficit / max(tile_end - t, 1e-12))
    v = np.zeros(len(w))
    v[c.mode - 1] = 1.0
    return (1.0 - lam) * w + lam * v


class _Abort(Exception):
    pass


def _rollout(rls: ReducedLimitingSystem, u_cells, x0, horizon, du, step, eps,
             residual_tol, divergence_bound):
    """Integrate cell by cell with early aborts; u_cells is an array or a callable.

    A callable u_cells(k, t, x) returns the cell weights or raises _Abort;
    used by the face-random closed loop.
    """
    n_cells = int(round(horizon / du))
    x = np.asarray(x0, dtype=float)
    if float(np.linalg.norm(x)) < eps:
        raise _Abort("start below floor")
    ts = [0.0]
    xs = [x]
    ws = []
    for k in range(n_cells):
        t = k * du
        w = u_cells(k, t, x) if callable(u_cells) else u_cells[k]
        ws.append(w)
        if float(rls.Hhat(t, x) @ w) > residual_tol:
            raise _Abort("residual")
        sub = max(1, int(math.ceil(du / step - 1e-12)))
        h = du / sub
        Fhat = rls.Fhat
        for s in range(sub):
            ta = t + s * h
            x = x + _rk4_increment(Fhat, w, ta, x, h)
            nrm2 = float(x @ x)
            if nrm2 != nrm2 or nrm2 > divergence_bound * divergence_bound:
                raise _Abort("diverged")
            if nrm2 < eps * eps:
                raise _Abort("norm floor")
            ts.append(ta + h if s < sub - 1 else t + du)
            xs.append(x)
        if float(rls.Hhat(t + du, x) @ w) > residual_tol:
            raise _Abort("residual")
    return np.array(ts), np.array(xs), np.array(ws)


def _rk4_increment(Fhat, w, t, x, h):
    k1 = Fhat(t, x) @ w
    k2 = Fhat(t + 0.5 * h, x + (0.5 * h) * k1) @ w
    k3 = Fhat(t + 0.5 * h, x + (0.5 * h) * k2) @ w
    k4 = Fhat(t + h, x + h * k3) @ w
    return (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _validate_candidate(rls: ReducedLimitingSystem, u: RelaxedControl, x0: np.ndarray,
                        horizon: float, eps: float, residual_tol: float,
                        cfg: IntegratorConfig) -> Optional[ZeroingCandidate]:
    """Independent re-simulation plus exact constraint checks; None if anything fails."""
    try:
        traj = simulate_reduced(rls, u, 0.0, x0, horizon, cfg)
    except SwstabError:
        return None
    if float(traj.norms().min()) < eps:
        return None
    res = output_residual(rls, traj)
    if res > residual_tol:
        return None
    for t, x, w in zip(traj.times, traj.states, traj.controls):
        allowed = active_index_set(x, rls.covering, tol=BOUNDARY_TOL)
        for i in range(1, rls.N + 1):
            if i not in allowed and w[i - 1] > 1e-12:
                return None
    for c in rls.constraints:
        ok, _ = check_control_constraint(u, c)
        if not ok:
            return None
    return ZeroingCandidate(trajectory=traj, control=u, eps=float(traj.norms().min()),
                            output_sup=res, span=(0.0, horizon))


def wzsd_falsify(rls: ReducedLimitingSystem, eps: float, horizon: float,
                 residual_tol: float = 1e-8, budget: int = 10_000, seed: int = 0,
                 du: float = 0.05, step: Optional[float] = None,
                 divergence_bound: float = 1e9) -> FalsifierVerdict:
    """Bounded search for a constraint-respecting zero-output trajectory with |x| >= eps.

    Candidate sources: a deterministic battery of constant-vertex controls
    from axis starts, face-random closed-loop controls (weights drawn on the
    face of U_x where the output can vanish, steered toward integral quotas),
    and vertex-pattern schedules when a pattern constraint is present.  Every
    returned counterexample has been re-simulated through the public
    integrator and re-checked against all constraints.
    """
    if eps <= 0 or horizon <= 0 or budget < 1:
        raise ParameterError("eps, horizon, budget must be positive")
    if step is None:
        step = du / 5.0
    for c in rls.constraints:
        if c.window > horizon + TIE_TOL:
            raise ParameterError("horizon shorter than a constraint window")
    cfg = IntegratorConfig(step=step, event_bisection_tol=step * 1e-6,
                           divergence_bound=divergence_bound)
    n_cells = int(round(horizon / du))
    if n_cells < 1 or abs(n_cells * du - horizon) > 1e-9:
        raise ParameterError("du must tile the horizon")
    integral_cs = [c for c in rls.constraints if c.kind == "integral_lower_bound"]
    pattern_cs = [c for c in rls.constraints if c.kind == "pattern"]
    used = 0

    def finish(candidate):
        return FalsifierVerdict(
            verdict="counterexample" if candidate else "no_counterexample_found",
            budget_used=used, seed=seed, eps=eps, residual_tol=residual_tol,
            horizon=horizon, du=du, counterexample=candidate,
            notes={"step": step, "n_cells": n_cells})

    def try_open_loop(u_vals, x0):
        nonlocal used
        used += 1
        try:
            _rollout(rls, u_vals, x0, horizon, du, step, eps, residual_tol,
                     divergence_bound)
        except _Abort:
            return None
        u = RelaxedControl(t0=0.0, step=du, values=u_vals)
        for c in rls.constraints:
            ok, _ = check_control_constraint(u, c)
            if not ok:
                return None
        return _validate_candidate(rls, u, x0, horizon, eps, residual_tol, cfg)

    # stage 0: constant-vertex controls from the deterministic battery
    battery = _seed_states(rls, eps)
    for i in range(1, rls.N + 1):
        vals = np.zeros((n_cells, rls.N))
        vals[:, i - 1] = 1.0
        for x0 in battery:
            if used >= budget:
                return finish(None)
            cand = try_open_loop(vals, x0)
            if cand is not None:
                return finish(cand)

    # alternating stages: face-random closed loop / vertex-pattern schedules
    k_cand = 0
    while used < budget:
        rng = _candidate_rng(seed, k_cand)
        k_cand += 1
        if pattern_cs and k_cand % 2 == 0:
            cand = _pattern_candidate(rls, pattern_cs[0], rng, n_cells, du, horizon,
                                      eps, residual_tol, step, divergence_bound, cfg)
        else:
            cand = _face_random_candidate(rls, integral_cs, rng, n_cells, du, horizon,
                                          eps, residual_tol, step, divergence_bound, cfg)
        used += 1
        if isinstance(cand, ZeroingCandidate):
            return finish(cand)
    return finish(None)


def _face_random_candidate(rls, integral_cs, rng, n_cells, du, horizon, eps,
                           residual_tol, step, divergence_bound, cfg):
    """Closed-loop candidate: at each cell draw weights on the zero-output face."""
    x0 = _shell_state(rng, rls.n, eps, sparse=bool(rng.integers(0, 2)))
    accrued = {id(c): 0.0 for c in integral_cs}
    tile_of = {id(c): 0 for c in integral_cs}

    def choose(k, t, x):
        Hv = rls.Hhat(t, x)
        active = active_index_set(x, rls.covering, tol=BOUNDARY_TOL)
        allowed = [i for i in active if Hv[i - 1] <= residual_tol]
        if not allowed:
            raise _Abort("empty face")
        w = np.zeros(rls.N)
        w[np.array(allowed) - 1] = rng.dirichlet(np.ones(len(allowed)))
        for c in integral_cs:
            tile = int(math.floor(t / c.T0 + 1e-12))
            if tile != tile_of[id(c)]:
                if accrued[id(c)] < c.delta0 - TIE_TOL:
                    raise _Abort("window quota missed")
                tile_of[id(c)] = tile
                accrued[id(c)] = 0.0
            w = _integral_steering(c, t, accrued[id(c)], w, allowed)
            tile_end = (tile + 1) * c.T0
            if accrued[id(c)] + (tile_end - t) < c.delta0 - TIE_TOL:
                raise _Abort("window quota unreachable")
            accrued[id(c)] += w[c.mode - 1] * du
        return w

    try:
        _, _, ws = _rollout(rls, choose, x0, horizon, du, step, eps, residual_tol,
                            divergence_bound)
    except _Abort:
        return None
    u = RelaxedControl(t0=0.0, step=du, values=ws)
    for c in rls.constraints:
        ok, _ = check_control_constraint(u, c)
        if not ok:
            return None
    return _validate_candidate(rls, u, x0, horizon, eps, residual_tol, cfg)


def _pattern_candidate(rls, c, rng, n_cells, du, horizon, eps, residual_tol,
                       step, divergence_bound, cfg):
    """Open-loop candidate following a compliant 1-2-1 vertex schedule."""
    gmax = min(c.dM, (c.T - 2.0 * c.dm) / 4.0)
    k_lo = math.ceil(c.dm / du - TIE_TOL)
    k_hi = max(math.floor(gmax / du + TIE_TOL), k_lo)
    if k_lo * du > c.dM + TIE_TOL:
        return None  # du too coarse to honor the gap bounds
    vals = np.zeros((n_cells, rls.N))
    k = 0
    while k < n_cells:
        for mode in (1, 2, 1):
            g = int(rng.integers(k_lo, k_hi + 1))
            vals[k:k + g, mode - 1] = 1.0
            k += g
            if k >= n_cells:
                break
    battery = _seed_states(rls, eps)
    x0 = battery[int(rng.integers(0, len(battery)))] if rng.integers(0, 2) else \
        _shell_state(rng, rls.n, eps, sparse=True)
    try:
        _rollout(rls, vals, x0, horizon, du, step, eps, residual_tol, divergence_bound)
    except _Abort:
        return None
    u = RelaxedControl(t0=0.0, step=du, values=vals)
    for cc in rls.constraints:
        ok, _ = check_control_constraint(u, cc)
        if not ok:
            return None
    return _validate_candidate(rls, u, x0, horizon, eps, residual_tol, cfg)
