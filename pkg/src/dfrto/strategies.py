"""Closed-loop operating strategies against a simulated true plant.

All strategies commit a switching time t1 and a singular-arc control u_s; the
second switch (start of dilution) is state feedback on the exactly measured
concentration ratio, so terminal feasibility holds under any mismatch.

 - optimal:  clairvoyant plan at the true parameters.
 - nominal:  plan at the midpoint of the prior box.
 - robust:   min-max commitment over a scenario sample of the prior box.
 - adaptive: concentrate while estimating; one re-optimization scheduled just
   before the guaranteed lower edge of the t1 window, then a certainty-
   equivalence switch; the singular control is refreshed as the box shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import expi

from .errors import ConfigError, SimulationTimeout
from .policy import plan_vectorized, singular_control
from .process import (PlantParams, PlantState, ProcessSpec, StopCondition,
                      Trajectory, dilute, flux, integrate)
from .reach import SwitchWindows, project_switch_windows
from .setmem import OnlineBoxEstimator, ParamBox

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(64)
_Q_FLOOR = 1e-12


# --- closed-form evaluation of a committed decision -----------------------------

def _expi_inverse(target: np.ndarray, w_hi: np.ndarray) -> np.ndarray:
    """Solve expi(w) = target for w in (0, w_hi], elementwise (safeguarded Newton)."""
    lo = np.full_like(w_hi, 1e-300)
    hi = w_hi.astype(float).copy()
    w = hi.copy()
    for _ in range(90):
        f = expi(w) - target
        hi = np.where(f > 0.0, w, hi)
        lo = np.where(f < 0.0, w, lo)
        w_new = w - f * w * np.exp(-w)
        bad = ~np.isfinite(w_new) | (w_new <= lo) | (w_new >= hi)
        w_new = np.where(bad, 0.5 * (lo + hi), w_new)
        if np.all(np.abs(w_new - w) <= 1e-15 * (1.0 + np.abs(w))):
            w = w_new
            break
        w = w_new
    return w


def realized_batch_times(P, t1_commit: float, u_commit: float,
                         spec: ProcessSpec) -> np.ndarray:
    """Final batch time when (t1_commit, u_commit) runs on each plant row of P.

    The ratio-feedback second switch and the instantaneous dilution are
    implicit.  Rows whose flux stalls before the ratio target are returned as
    +inf; callers cap at spec.t_max.  Vectorized over parameter rows.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not 0.0 < u_commit <= 1.0:
        raise ConfigError(f"committed singular control must be in (0, 1]: {u_commit}")
    p1, p2, p3 = P[:, 0], P[:, 1], P[:, 2]
    m = spec.mass
    ln_c10, ln_c20 = math.log(spec.c1_0), math.log(spec.c2_0)
    rf = spec.ratio_f

    # concentrate to the committed time
    alpha = p1 - p3 * ln_c20
    w0 = alpha / p2 - ln_c10
    target = expi(w0) - t1_commit * p2 * np.exp(alpha / p2) / m
    w_a = _expi_inverse(target, w0)
    x_a = alpha / p2 - w_a              # ln c1 at the switch
    c1_a = np.exp(x_a)
    q_a = p2 * w_a

    tf = np.full(P.shape[0], np.inf)
    if u_commit >= 1.0 - 1e-12:
        # constant-volume diafiltration: c1 frozen, c2 washes out
        v_a = ln_c20
        v_end = x_a - math.log(rf)
        a3 = p1 - p2 * x_a
        q_end = a3 - p3 * v_end
        ok = (q_a > _Q_FLOOR) & (q_end > _Q_FLOOR)
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(
                p3 > 0.0,
                m / (c1_a * np.where(p3 > 0, p3, 1.0)) * np.log(q_end / q_a),
                m * (v_a - v_end) / (c1_a * q_a),
            )
        tf[ok] = t1_commit + dt[ok]
        return tf

    k_c = u_commit / (1.0 - u_commit)
    x_end = (math.log(rf * spec.c2_0) + k_c * x_a) / (1.0 + k_c)
    a2 = p1 - p3 * ln_c20 - p3 * k_c * x_a
    b2 = p2 - p3 * k_c                   # q = a2 - b2*x along the arc
    q_end = a2 - b2 * x_end
    ok = (q_a > _Q_FLOOR) & (q_end > _Q_FLOOR)
    # Gauss-Legendre in x = ln c1 (q is linear in x, integrand smooth)
    half = 0.5 * (x_end - x_a)
    mid_x = 0.5 * (x_end + x_a)
    xs = mid_x[:, None] + half[:, None] * _GAUSS_X[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        qx = a2[:, None] - b2[:, None] * xs
        integrand = np.exp(-xs) / qx
        integral = (integrand @ _GAUSS_W) * half
        dt = m * integral / (1.0 - u_commit)
    tf[ok] = t1_commit + dt[ok]
    return tf


# --- batch execution --------------------------------------------------------------

@dataclass
class BatchResult:
    """Outcome of one closed-loop batch."""

    strategy: str
    p_true: PlantParams
    t1: float
    t2: float
    tf: float
    feasible: bool
    regret: float
    reopt_count: int = 0
    timed_out: bool = False
    trajectory: Trajectory | None = None
    box_history: list | None = None


@dataclass(frozen=True)
class StrategyDecision:
    """Committed degrees of freedom; the rest is state feedback."""

    t1_commit: float
    u_s_commit: float

    def __post_init__(self):
        if self.t1_commit < 0.0:
            raise ConfigError("t1_commit must be nonnegative")
        if not 0.0 < self.u_s_commit <= 1.0:
            raise ConfigError("u_s_commit must be in (0, 1]")


def _plan_tf(p: PlantParams, spec: ProcessSpec) -> float:
    return float(plan_vectorized(p.as_array()[None, :], spec)["tf"][0])


def _finish_batch(strategy: str, p_true: PlantParams, spec: ProcessSpec,
                  decision: StrategyDecision, *, record: bool,
                  reopt_count: int = 0, box_history=None) -> BatchResult:
    """Run the committed decision on the plant with ratio feedback."""
    tf_opt = _plan_tf(p_true, spec)
    try:
        arc1 = integrate(spec.initial_state(), 0.0, p_true,
                         StopCondition.at_time(decision.t1_commit), spec, record=record)
        arc2 = integrate(arc1.final_state(), decision.u_s_commit, p_true,
                         StopCondition.ratio_reached(spec.ratio_f), spec, record=record)
    except SimulationTimeout:
        return BatchResult(strategy, p_true, decision.t1_commit, math.nan, math.nan,
                           feasible=False, regret=math.nan, reopt_count=reopt_count,
                           timed_out=True, box_history=box_history)
    end = arc2.final_state()
    post = dilute(end, min(spec.c1_f, end.c1))
    feasible = bool(abs(post.c1 - spec.c1_f) <= 1e-6 * spec.c1_f
                    and abs(post.c2 - spec.c2_f) <= 1e-6 * spec.c2_f)
    traj = None
    if record:
        tail = Trajectory(np.array([post.t]), np.array([post.c1]), np.array([post.c2]),
                          np.array([math.inf]), np.array([flux(post.c1, post.c2, p_true)]))
        traj = Trajectory.concat([arc1, arc2, tail])
    tf = end.t
    return BatchResult(strategy, p_true, decision.t1_commit, tf, tf, feasible,
                       regret=tf - tf_opt, reopt_count=reopt_count,
                       trajectory=traj, box_history=box_history)


def optimal_strategy(p_true: PlantParams, spec: ProcessSpec, *,
                     record: bool = False) -> BatchResult:
    """Clairvoyant baseline: plan and run at the true parameters."""
    plan = plan_vectorized(p_true.as_array()[None, :], spec)
    decision = StrategyDecision(float(plan["t1"][0]), float(plan["us"][0]))
    return _finish_batch("optimal", p_true, spec, decision, record=record)


def nominal_decision(P0: ParamBox, spec: ProcessSpec) -> StrategyDecision:
    mid = P0.mid()
    plan = plan_vectorized(mid.as_array()[None, :], spec)
    return StrategyDecision(float(plan["t1"][0]), float(plan["us"][0]))


def nominal_strategy(P0: ParamBox, p_true: PlantParams, spec: ProcessSpec, *,
                     decision: StrategyDecision | None = None,
                     record: bool = False) -> BatchResult:
    """Certainty-equivalence at the box midpoint."""
    if decision is None:
        decision = nominal_decision(P0, spec)
    return _finish_batch("nominal", p_true, spec, decision, record=record)


# --- robust strategy ---------------------------------------------------------------

@dataclass(frozen=True)
class RobustConfig:
    objective: str = "best"        # "best": deviation from each scenario's optimum;
                                   # "nominal": deviation from the mid-box outcome
    n_lhs: int = 16
    lhs_seed: int = 2718
    coarse_grid: int = 33
    u_resolution: float = 1e-4
    max_sweeps: int = 4

    def __post_init__(self):
        if self.objective not in ("nominal", "best"):
            raise ConfigError(f"unknown robust objective {self.objective!r}")


def box_scenarios(P0: ParamBox, cfg: RobustConfig) -> np.ndarray:
    """Vertices + midpoint + Latin-hypercube interior points of the box."""
    parts = [P0.vertices(), P0.mid().as_array()[None, :]]
    if cfg.n_lhs > 0:
        parts.append(P0.sample_lhs(cfg.n_lhs, seed=cfg.lhs_seed))
    return np.vstack(parts)


def _golden_min(fun, lo: float, hi: float, res: float, n_coarse: int) -> tuple[float, float]:
    """Deterministic 1-D minimization: coarse grid bracket + golden section."""
    if hi - lo <= res:
        x = 0.5 * (lo + hi)
        return x, fun(x)
    grid = np.linspace(lo, hi, max(n_coarse, 5))
    vals = [fun(float(x)) for x in grid]
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > res:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def robust_decision(P0: ParamBox, spec: ProcessSpec,
                    cfg: RobustConfig = RobustConfig(),
                    scenarios: np.ndarray | None = None,
                    windows: SwitchWindows | None = None) -> StrategyDecision:
    """Min-max commitment of (t1, u_s) over a scenario set inside the box.

    Objective "best" minimizes the worst squared excess of the realized batch
    time over each scenario plant's own optimum; "nominal" measures deviation
    from the mid-box plant's time under the same decision instead.  Scenario
    times are capped at t_max, so stalled corner plants stay in the worst case
    instead of being dropped.  `scenarios` defaults to vertices + midpoint +
    Latin-hypercube points of the box itself.
    """
    if windows is None:
        windows = project_switch_windows(P0, spec)
    scen = box_scenarios(P0, cfg) if scenarios is None else np.atleast_2d(scenarios)
    nom = nominal_decision(P0, spec)
    if cfg.objective == "best":
        ref = np.minimum(plan_vectorized(scen, spec)["tf"], spec.t_max)

        def objective(t1_c: float, u_c: float) -> float:
            tf = np.minimum(realized_batch_times(scen, t1_c, u_c, spec), spec.t_max)
            dev = tf - ref
            return float(np.max(dev * dev))
    else:
        mid_arr = P0.mid().as_array()

        def objective(t1_c: float, u_c: float) -> float:
            rows = np.vstack([scen, mid_arr[None, :]])
            tf = np.minimum(realized_batch_times(rows, t1_c, u_c, spec), spec.t_max)
            dev = tf[:-1] - tf[-1]
            return float(np.max(dev * dev))

    t1_lo, t1_hi = windows.t1
    u_lo, u_hi = windows.u_band
    t1_c = min(max(nom.t1_commit, t1_lo), t1_hi)
    u_c = min(max(nom.u_s_commit, u_lo), u_hi)
    best = objective(t1_c, u_c)
    t_res = spec.dt_h
    for _ in range(cfg.max_sweeps):
        improved = False
        t1_new, val_t = _golden_min(lambda x: objective(x, u_c), t1_lo, t1_hi,
                                    t_res, cfg.coarse_grid)
        if val_t < best - 1e-15:
            t1_c, best, improved = t1_new, val_t, True
        if u_hi - u_lo > cfg.u_resolution:
            u_new, val_u = _golden_min(lambda x: objective(t1_c, x), u_lo, u_hi,
                                       cfg.u_resolution, cfg.coarse_grid)
            if val_u < best - 1e-15:
                u_c, best, improved = u_new, val_u, True
        if not improved:
            break
    return StrategyDecision(t1_c, u_c)


def robust_strategy(P0: ParamBox, p_true: PlantParams, spec: ProcessSpec, *,
                    cfg: RobustConfig = RobustConfig(),
                    scenarios: np.ndarray | None = None,
                    decision: StrategyDecision | None = None,
                    record: bool = False) -> BatchResult:
    if decision is None:
        decision = robust_decision(P0, spec, cfg, scenarios=scenarios)
    return _finish_batch("robust", p_true, spec, decision, record=record)


# --- adaptive strategy ----------------------------------------------------------------

class NoiseStream:
    """Measurement noise indexed by absolute sample number (replay-safe)."""

    def __init__(self, rng: np.random.Generator, sigma: float, block: int = 40000):
        self._rng = rng
        self._sigma = sigma
        self._block = block
        self._values = np.empty(0)

    def eta(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=int)
        if self._sigma == 0.0:
            return np.zeros(k.shape)
        need = int(k.max()) + 1 if k.size else 0
        while self._values.size < need:
            self._values = np.concatenate([
                self._values,
                self._rng.uniform(-self._sigma, self._sigma, self._block)])
        return self._values[k]


@dataclass(frozen=True)
class AdaptiveConfig:
    shrink_ratio: float = 0.5      # window must at least halve to count as informative
    max_reopts: int = 10
    refresh_singular: str = "each_sample"   # or "hold"
    record_boxes: bool = False

    def __post_init__(self):
        if self.refresh_singular not in ("each_sample", "hold"):
            raise ConfigError(f"unknown refresh mode {self.refresh_singular!r}")


def _cost_variation(box: ParamBox, spec: ProcessSpec) -> float:
    """Worst squared batch-time deviation of box vertices from the mid plant."""
    mid = box.mid()
    plan = plan_vectorized(mid.as_array()[None, :], spec)
    t1_c, u_c = float(plan["t1"][0]), float(plan["us"][0])
    scen = np.vstack([box.vertices(), mid.as_array()[None, :]])
    tf = np.minimum(realized_batch_times(scen, t1_c, u_c, spec), spec.t_max)
    dev = tf - tf[-1]
    return float(np.max(dev * dev))


def _rhs_factory(p: PlantParams, u: float, m: float):
    p1, p2, p3 = p.p1, p.p2, p.p3

    def f(t, y):
        q = p1 - p2 * math.log(y[0]) - p3 * math.log(y[1])
        return (y[0] * y[0] * q * (1.0 - u) / m, -y[0] * y[1] * q * u / m)
    return f


def adaptive_strategy(P0: ParamBox, p_true: PlantParams, spec: ProcessSpec,
                      noise: NoiseStream | np.random.Generator, *,
                      eps: float = (1.0 / 3600.0) ** 2,
                      cfg: AdaptiveConfig = AdaptiveConfig(),
                      record: bool = False) -> BatchResult:
    """Set-membership adaptive operation.

    Concentrate (u=0) while streaming flux measurements; at the sampling
    instant one period before the guaranteed lower edge of the t1 window,
    re-estimate the box and re-project the windows.  Commit the mid-box switch
    as soon as a re-optimization either pins the window (width at least halved)
    or the worst-case cost variation over the box vertices drops below eps;
    an uninformative re-optimization waits for the updated edge and repeats.
    On the singular arc the control is the mid-box singular control, refreshed
    whenever a new measurement actually shrinks the box; dilution triggers on
    the measured concentration ratio.
    """
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    if isinstance(noise, np.random.Generator):
        noise = NoiseStream(noise, spec.sigma)
    est = OnlineBoxEstimator(P0, spec.sigma)
    tf_opt = _plan_tf(p_true, spec)
    dt = spec.dt_h
    m = spec.mass
    rf = spec.ratio_f
    boxes: list | None = [] if cfg.record_boxes else None

    windows = project_switch_windows(P0, spec)
    state = spec.initial_state()
    reopts = 0
    rec: list[tuple[np.ndarray, np.ndarray, np.ndarray, float]] | None = \
        [] if record else None
    if rec is not None:
        rec.append((np.array([0.0]), np.array([state.c1]), np.array([state.c2]), 0.0))

    def log_box(t):
        if boxes is not None:
            boxes.append((t, est.box))

    log_box(0.0)

    def run_concentrate(t_from: float, t_to: float, y0) -> np.ndarray:
        """Integrate u=0 over [t_from, t_to], ingesting all samples in between."""
        sol = solve_ivp(_rhs_factory(p_true, 0.0, m), (t_from, t_to), y0,
                        method="RK45", rtol=1e-8, atol=(1e-10, 1e-12),
                        dense_output=True)
        if not sol.success:
            raise SimulationTimeout(sol.message)
        k0 = int(math.floor(t_from / dt + 1e-9)) + 1
        k1 = int(math.floor(t_to / dt + 1e-9))
        if k1 >= k0:
            ks = np.arange(k0, k1 + 1)
            ts = ks * dt
            ys = sol.sol(ts)
            q_true = p_true.p1 - p_true.p2 * np.log(ys[0]) - p_true.p3 * np.log(ys[1])
            rows = np.column_stack([np.ones(ks.size), -np.log(ys[0]), -np.log(ys[1])])
            est.add_rows(rows, q_true + noise.eta(ks))
            log_box(t_to)
            if rec is not None:
                rec.append((ts, ys[0].copy(), ys[1].copy(), 0.0))
        return sol.y[:, -1]

    # phase 1: concentrate with scheduled re-optimization
    y = np.array([state.c1, state.c2])
    t_now = 0.0
    while True:
        t_edge = dt * (math.ceil(windows.t1[0] / dt - 1e-9) - 1)
        if t_edge <= t_now + 0.5 * dt:
            break
        if t_edge > spec.t_max:
            raise SimulationTimeout("t1 window edge beyond t_max")
        y = run_concentrate(t_now, t_edge, y)
        t_now = t_edge
        old_width = windows.t1[1] - windows.t1[0]
        windows = project_switch_windows(est.box, spec)
        reopts += 1
        new_width = windows.t1[1] - windows.t1[0]
        if new_width <= cfg.shrink_ratio * old_width:
            break
        if _cost_variation(est.box, spec) < eps:
            break
        if reopts >= cfg.max_reopts:
            break

    mid_plan = plan_vectorized(est.box.mid().as_array()[None, :], spec)
    t1_commit = max(float(mid_plan["t1"][0]), t_now)
    if t1_commit > t_now:
        y = run_concentrate(t_now, t1_commit, y)
        t_now = t1_commit

    # phase 2: singular arc, per-sample plant stepping so that control refreshes
    # and box updates take effect at exact sampling instants
    u_now = singular_control(est.box.mid())
    refresh = cfg.refresh_singular == "each_sample"
    band_degenerate = est.box.widths()[1] + est.box.widths()[2] < 1e-12
    p1t, p2t, p3t = p_true.p1, p_true.p2, p_true.p3
    minv = 1.0 / m

    log = math.log

    def rk4_step(c1, c2, h, u):
        om = (1.0 - u) * minv
        un = u * minv
        q = p1t - p2t * log(c1) - p3t * log(c2)
        k1a = c1 * c1 * q * om
        k1b = -c1 * c2 * q * un
        a = c1 + 0.5 * h * k1a
        b = c2 + 0.5 * h * k1b
        q = p1t - p2t * log(a) - p3t * log(b)
        k2a = a * a * q * om
        k2b = -a * b * q * un
        a = c1 + 0.5 * h * k2a
        b = c2 + 0.5 * h * k2b
        q = p1t - p2t * log(a) - p3t * log(b)
        k3a = a * a * q * om
        k3b = -a * b * q * un
        a = c1 + h * k3a
        b = c2 + h * k3b
        q = p1t - p2t * log(a) - p3t * log(b)
        k4a = a * a * q * om
        k4b = -a * b * q * un
        return (c1 + h * (k1a + 2.0 * (k2a + k3a) + k4a) / 6.0,
                c2 + h * (k1b + 2.0 * (k2b + k3b) + k4b) / 6.0)

    def locate_ratio(c1, c2, t0_h, h_max, u):
        """Bisect the time step until the ratio crossing is within TOL_EVENT."""
        lo_h, hi_h = 0.0, h_max
        for _ in range(60):
            if hi_h - lo_h <= 1e-6:
                break
            h_try = 0.5 * (lo_h + hi_h)
            a, b = rk4_step(c1, c2, h_try, u)
            if a / b >= rf:
                hi_h = h_try
            else:
                lo_h = h_try
        a, b = rk4_step(c1, c2, hi_h, u)
        return t0_h + hi_h, a, b

    k_next = int(math.floor(t_now / dt + 1e-9)) + 1
    c1v, c2v = float(y[0]), float(y[1])
    t_event = None
    block = 256
    buf_t = np.empty(4096 + 1)
    buf_c1 = np.empty(4096 + 1)
    buf_c2 = np.empty(4096 + 1)
    while t_event is None:
        if t_now >= spec.t_max:
            return BatchResult("adaptive", p_true, t1_commit, math.nan, math.nan,
                               feasible=False, regret=math.nan, reopt_count=reopts,
                               timed_out=True, box_history=boxes)
        n = min(block, 4096)
        buf_t[0], buf_c1[0], buf_c2[0] = t_now, c1v, c2v
        filled = 0
        for i in range(n):
            ts_i = (k_next + i) * dt
            h = ts_i - (buf_t[filled])
            a, b = rk4_step(buf_c1[filled], buf_c2[filled], h, u_now)
            if a / b >= rf:
                t_event, a, b = locate_ratio(buf_c1[filled], buf_c2[filled],
                                             buf_t[filled], h, u_now)
                c1v, c2v = a, b
                break
            filled += 1
            buf_t[filled], buf_c1[filled], buf_c2[filled] = ts_i, a, b
        if filled > 0:
            ts = buf_t[1:filled + 1]
            lc1 = np.log(buf_c1[1:filled + 1])
            lc2 = np.log(buf_c2[1:filled + 1])
            q_true = p1t - p2t * lc1 - p3t * lc2
            rows = np.column_stack([np.ones(filled), -lc1, -lc2])
            q_noisy = q_true + noise.eta(np.arange(k_next, k_next + filled))
            start = 0
            rewound = False
            while start < filled:
                n_used, changed = est.add_rows_stop_on_change(rows[start:], q_noisy[start:])
                start += n_used
                if not changed:
                    break
                log_box(float(ts[start - 1]))
                if refresh and not band_degenerate:
                    u_new = singular_control(est.box.mid())
                    pending = start < filled or t_event is not None
                    if pending and abs(u_new - u_now) > 1e-13:
                        # the box changed at sample `start`; later steps (and
                        # any event) were taken under the superseded control
                        if rec is not None:
                            rec.append((ts[:start].copy(), buf_c1[1:start + 1].copy(),
                                        buf_c2[1:start + 1].copy(), u_now))
                        u_now = u_new
                        t_now = float(ts[start - 1])
                        c1v = float(buf_c1[start])
                        c2v = float(buf_c2[start])
                        k_next += start
                        block = 64
                        t_event = None
                        rewound = True
                        break
                    u_now = u_new
            if rewound:
                continue
            if rec is not None:
                rec.append((ts.copy(), buf_c1[1:filled + 1].copy(),
                            buf_c2[1:filled + 1].copy(), u_now))
            if t_event is None:
                t_now = float(ts[-1])
                c1v, c2v = float(buf_c1[filled]), float(buf_c2[filled])
                k_next += filled
                block = min(block * 2, 4096)

    end = PlantState(t_event, c1v, c2v)
    post = dilute(end, min(spec.c1_f, end.c1))
    feasible = bool(abs(post.c1 - spec.c1_f) <= 1e-6 * spec.c1_f
                    and abs(post.c2 - spec.c2_f) <= 1e-6 * spec.c2_f)
    traj = None
    if rec is not None:
        rec.append((np.array([t_event]), np.array([end.c1]), np.array([end.c2]), u_now))
        rec.append((np.array([post.t]), np.array([post.c1]), np.array([post.c2]), math.inf))
        parts = []
        for seg_t, seg_c1, seg_c2, seg_u in rec:
            if seg_t.size == 0:
                continue
            q_seg = p1t - p2t * np.log(seg_c1) - p3t * np.log(seg_c2)
            parts.append(Trajectory(seg_t, seg_c1, seg_c2,
                                    np.full_like(seg_t, seg_u), q_seg))
        traj = Trajectory.concat(parts)
        traj.event_time = t_event
    return BatchResult("adaptive", p_true, t1_commit, t_event, t_event, feasible,
                       regret=t_event - tf_opt, reopt_count=reopts,
                       trajectory=traj, box_history=boxes)
