"""Numerical certification of weak multiple-Lyapunov conditions along trajectories.

Three checks: the class-K sandwich bound on V, the per-step decrease of V
against its gauge eta (plus the non-increase of V_i across same-mode
revisits), and the sliding-pair integral bound on a gauge of the output.
Decrease is certified by finite differences along simulated trajectories,
not symbolically: outputs and dynamics need only be measurable in t.  Every
verdict carries the slack that separated it from discretization noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Covering, ParameterError, SwitchedSystem, SwitchingSignal, Trajectory

SANDWICH_TOL = 1e-9
REVISIT_TOL = 1e-7
SLACK_FLOOR = 1e-9
SLACK_CURVATURE_FACTOR = 10.0  # slack = factor * observed |second difference of V|


@dataclass(frozen=True)
class LyapunovCertificate:
    """Candidate weak Lyapunov data: V, its class-K sandwich, and the decrease gauge.

    V(t, xi, i) >= 0; phi1(|xi|) <= V <= phi2(|xi|) on the piece of mode i;
    eta(t, xi, i) >= 0 bounds -dV/dt along mode i.  ``dV`` optionally supplies
    the analytic state gradient for consistency testing.  phi1/phi2 are
    sample-checked at construction: zero at zero and strictly increasing.
    """

    V: Callable[[float, np.ndarray, int], float]
    phi1: Callable[[float], float]
    phi2: Callable[[float], float]
    eta: Callable[[float, np.ndarray, int], float]
    dV: Optional[Callable[[float, np.ndarray, int], np.ndarray]] = None

    def __post_init__(self):
        for name, phi in (("phi1", self.phi1), ("phi2", self.phi2)):
            if phi(0.0) != 0.0:
                raise ParameterError(f"{name}(0) must be 0")
            samples = [phi(s) for s in (1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0)]
            if any(b <= a for a, b in zip(samples, samples[1:])) or samples[0] <= 0:
                raise ParameterError(f"{name} must be strictly increasing from 0")


@dataclass(frozen=True)
class IntegralBoundParams:
    """Bound parameters: integral of alpha(|h|) over [s, t] <= M + mu*(t-s)."""

    alpha: Callable[[float], float]
    M: float
    mu: float

    def __post_init__(self):
        if self.M < 0 or self.mu < 0:
            raise ParameterError("M and mu must be nonnegative")
        if self.alpha(0.0) != 0.0 or any(self.alpha(s) <= 0
                                         for s in (1e-3, 0.1, 1.0, 10.0)):
            raise ParameterError("alpha must be positive definite")


@dataclass(frozen=True)
class CheckReport:
    """Uniform verdict record: worst margin <= 0 means the check passed."""

    check: str
    passed: bool
    worst_margin: float
    worst_location: tuple
    slack: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "pass": self.passed,
                "worst_margin": self.worst_margin,
                "worst_location": list(self.worst_location),
                "slack": self.slack, **self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_sandwich(cert: LyapunovCertificate, box_lo, box_hi, covering: Covering,
                   density: int = 9, t_grid=(0.0,), tol: float = SANDWICH_TOL) -> CheckReport:
    """Sample phi1(|xi|) <= V(t, xi, i) <= phi2(|xi|) over a box, per covering piece."""
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    if np.any(box_lo > 0) or np.any(box_hi < 0):
        raise ParameterError("sample box must contain the origin")
    axes = [np.linspace(lo, hi, density) for lo, hi in zip(box_lo, box_hi)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    pts = np.vstack([pts, np.zeros(len(box_lo))])
    worst = -np.inf
    where = (0.0, 0, 0.0)
    n_checked = 0
    for t in t_grid:
        for xi in pts:
            r = float(np.linalg.norm(xi))
            for i in range(1, covering.N + 1):
                if not covering.membership(xi, i):
                    continue
                v = float(cert.V(t, xi, i))
                m = max(cert.phi1(r) - v, v - cert.phi2(r))
                n_checked += 1
                if m > worst:
                    worst, where = m, (float(t), i, r)
    return CheckReport(check="sandwich", passed=worst <= tol, worst_margin=worst,
                       worst_location=where, slack=tol, extra={"points": n_checked})


@dataclass(frozen=True)
class DecreaseReport:
    slope: CheckReport
    revisit: CheckReport

    @property
    def passed(self) -> bool:
        return self.slope.passed and self.revisit.passed

    def to_dict(self) -> dict:
        return {"check": "decrease_along", "pass": self.passed,
                "slope": self.slope.to_dict(), "revisit": self.revisit.to_dict()}


def _segment_bounds(traj: Trajectory, sigma: SwitchingSignal) -> list[tuple[int, int, int]]:
    """(first node, last node, mode) per sigma-constancy stretch of the grid."""
    modes = traj.modes if traj.modes is not None else sigma.modes_at(traj.times)
    segs = []
    start = 0
    for k in range(1, len(traj.times)):
        if modes[k] != modes[start]:
            segs.append((start, k, int(modes[start])))
            start = k
    if start < len(traj.times) - 1:
        segs.append((start, len(traj.times) - 1, int(modes[start])))
    return segs


def check_decrease_along(cert: LyapunovCertificate, traj: Trajectory,
                         sigma: SwitchingSignal,
                         revisit_tol: float = REVISIT_TOL) -> DecreaseReport:
    """Finite-difference decrease check along a trajectory.

    Slope part: within each constancy stretch of mode i, the per-step slope of
    V(t, x(t), i) must not exceed -eta evaluated at the step midpoint
    (linearly interpolated state) plus a slack calibrated from the observed
    second differences of V, which captures the discretization error scale.

    Revisit part: for each mode i, V_i sampled at the grid times where i is
    active must never rise above its running minimum by more than revisit_tol.
    """
    if traj.t0 < sigma.domain_start - 1e-9 or traj.tf > sigma.domain_end + 1e-9:
        raise ParameterError("trajectory span not covered by the signal")
    segs = _segment_bounds(traj, sigma)
    t = traj.times
    x = traj.states

    # first pass: calibrate one slack for the whole trajectory from the
    # observed second differences of V and of the gauge (the discretization
    # error scale of the slope and of the step-mean gauge estimate)
    per_seg = []
    d2v_max = 0.0
    d2e_max = 0.0
    for a, b, mode in segs:
        if b - a < 1:
            continue
        V = np.array([cert.V(t[k], x[k], mode) for k in range(a, b + 1)])
        etas = np.array([cert.eta(t[k], x[k], mode) for k in range(a, b + 1)])
        per_seg.append((a, b, mode, V, etas))
        if len(V) >= 3:
            d2v_max = max(d2v_max, float(np.max(np.abs(np.diff(V, n=2)))))
            d2e_max = max(d2e_max, float(np.max(np.abs(np.diff(etas, n=2)))))
    slack = max(SLACK_FLOOR, SLACK_CURVATURE_FACTOR * d2v_max, 0.5 * d2e_max)

    worst_slope = -np.inf
    slope_where = (0.0, 0)
    for a, b, mode, V, etas in per_seg:
        h = np.diff(t[a:b + 1])
        slopes = np.diff(V) / h
        for k in range(len(slopes)):
            tm = 0.5 * (t[a + k] + t[a + k + 1])
            xm = 0.5 * (x[a + k] + x[a + k + 1])
            eta_step = min(float(cert.eta(tm, xm, mode)),
                           0.5 * float(etas[k] + etas[k + 1]))
            margin = float(slopes[k]) + eta_step - slack
            if margin > worst_slope:
                worst_slope, slope_where = margin, (float(t[a + k]), mode)
    slope_report = CheckReport(check="decrease_slope", passed=worst_slope <= 0.0,
                               worst_margin=worst_slope, worst_location=slope_where,
                               slack=slack)

    modes = traj.modes if traj.modes is not None else sigma.modes_at(traj.times)
    worst_rev = -np.inf
    rev_where = (0.0, 0)
    for i in np.unique(modes):
        idx = np.nonzero(modes == i)[0]
        running = np.inf
        for k in idx:
            v = float(cert.V(t[k], x[k], int(i)))
            margin = v - running - revisit_tol
            if margin > worst_rev:
                worst_rev, rev_where = margin, (float(t[k]), int(i))
            running = min(running, v)
    revisit_report = CheckReport(check="mode_revisit", passed=worst_rev <= 0.0,
                                 worst_margin=worst_rev, worst_location=rev_where,
                                 slack=revisit_tol)
    return DecreaseReport(slope=slope_report, revisit=revisit_report)


def check_integral_bound(traj: Trajectory, sigma: SwitchingSignal, sys: SwitchedSystem,
                         params: IntegralBoundParams,
                         quad_coeff: float = 10.0) -> CheckReport:
    """Trapezoidal check of int_s^t alpha(|h|) <= M + mu*(t-s) over all grid pairs.

    The integrand on each step uses the step's active mode at both endpoints
    (outputs are right-continuous at switches, the integrand is not).  The
    quadrature slack quad_coeff * h^2 * (t - s) is folded into the running
    comparison; the all-pairs sweep reduces to a running minimum.
    """
    t = traj.times
    x = traj.states
    if len(t) < 2:
        return CheckReport(check="integral_bound", passed=True, worst_margin=-params.M,
                           worst_location=(traj.t0, traj.t0), slack=0.0)
    modes = traj.modes if traj.modes is not None else sigma.modes_at(t)
    h_steps = np.diff(t)
    h_max = float(h_steps.max())
    cum = np.empty(len(t))
    cum[0] = 0.0
    for k in range(len(t) - 1):
        i = int(modes[k])
        ga = params.alpha(float(np.linalg.norm(np.atleast_1d(sys.h(t[k], x[k], i)))))
        gb = params.alpha(float(np.linalg.norm(np.atleast_1d(sys.h(t[k + 1], x[k + 1], i)))))
        cum[k + 1] = cum[k] + 0.5 * (ga + gb) * h_steps[k]
    rate = params.mu + quad_coeff * h_max * h_max
    g = cum - rate * (t - t[0])
    run_min = np.minimum.accumulate(g)
    margins = g - run_min - params.M
    k = int(np.argmax(margins))
    j = int(np.argmin(g[: k + 1]))
    return CheckReport(check="integral_bound", passed=float(margins[k]) <= 0.0,
                       worst_margin=float(margins[k]),
                       worst_location=(float(t[j]), float(t[k])),
                       slack=quad_coeff * h_max * h_max * float(t[k] - t[j]),
                       extra={"M": params.M, "mu": params.mu})
