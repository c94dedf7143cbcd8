"""Batch diafiltration plant: flux law, dynamics, dilution jumps, noisy flux sensor.

States are the macro-solute concentration c1 and micro-solute concentration c2
(both g/L); the tank volume is not a state because macro-solute mass is
conserved, V(t) = c1_0*V0/c1(t).  All times are hours internally; the sampling
period is configured in seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError, SimulationTimeout, StallError

# Flux prefactor calibration: the reported mass-transfer coefficient with A in
# m^2 yields A*gamma1 = 0.03 L/h, which puts batch times at hundreds of hours.
# The working interpretation is A*gamma1 = 3 L/h (gamma1 in dm/h with A in
# dm^2); the scale stays configurable so the literal unit reading remains
# selectable.
GAMMA1_UNIT_SCALE = 100.0

# Default tolerances for the adaptive integrator and its event localization.
RTOL_DEFAULT = 1e-8
TOL_EVENT = 1e-6  # hours


@dataclass(frozen=True)
class PlantParams:
    """Flux-model parameters in the linear-in-parameters form.

    p1: flux offset [L/h], p2: macro-solute log coefficient [L/h],
    p3: micro-solute log coefficient [L/h].
    """

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        if not self.p2 > 0.0:
            raise DomainError(f"p2 must be positive, got {self.p2}")
        if self.p3 < 0.0:
            raise DomainError(f"p3 must be nonnegative, got {self.p3}")

    @classmethod
    def from_gamma(cls, gamma1: float, gamma2: float, gamma3: float,
                   area: float = 1.0,
                   unit_scale: float = GAMMA1_UNIT_SCALE) -> "PlantParams":
        """Map phenomenological parameters (gamma1, gamma2, gamma3) to p-space."""
        if gamma2 <= 1.0:
            raise DomainError("gamma2 must exceed 1 g/L for a positive p1")
        if gamma3 < 0.0:
            raise DomainError("gamma3 must be nonnegative")
        k = area * gamma1 * unit_scale
        return cls(p1=k * math.log(gamma2), p2=k, p3=k * gamma3)

    def to_gamma(self, area: float = 1.0,
                 unit_scale: float = GAMMA1_UNIT_SCALE) -> tuple[float, float, float]:
        """Inverse of :meth:`from_gamma`; exact round-trip."""
        k = self.p2
        return k / (area * unit_scale), math.exp(self.p1 / self.p2), self.p3 / self.p2

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3], dtype=float)

    def scaled(self, alpha: float) -> "PlantParams":
        """Multiply the whole flux law by alpha > 0 (times scale by 1/alpha)."""
        return PlantParams(alpha * self.p1, alpha * self.p2, alpha * self.p3)


@dataclass(frozen=True)
class PlantState:
    """Plant state at time t [h]: concentrations c1, c2 [g/L]."""

    t: float
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0.0 and self.c2 > 0.0):
            raise DomainError(f"concentrations must be positive: c1={self.c1}, c2={self.c2}")

    def ratio(self) -> float:
        return self.c1 / self.c2


@dataclass(frozen=True)
class ProcessSpec:
    """Batch task definition and measurement setup."""

    c1_0: float = 50.0
    c2_0: float = 50.0
    c1_f: float = 150.0
    c2_f: float = 0.05
    V0: float = 20.0
    A: float = 1.0
    sigma: float = 0.1          # flux noise bound [L/h]
    dt_sample: float = 1.0      # sampling period [s]
    t_max: float = 100.0        # simulation cap [h]

    def __post_init__(self):
        if not (self.c1_f > self.c1_0 > 0.0):
            raise ConfigError("require c1_f > c1_0 > 0")
        if not (0.0 < self.c2_f < self.c2_0):
            raise ConfigError("require 0 < c2_f < c2_0")
        if self.V0 <= 0.0 or self.A <= 0.0:
            raise ConfigError("V0 and A must be positive")
        if self.sigma < 0.0:
            raise ConfigError("sigma must be nonnegative")
        if self.dt_sample <= 0.0:
            raise ConfigError("dt_sample must be positive")
        if self.t_max <= 0.0:
            raise ConfigError("t_max must be positive")

    @property
    def mass(self) -> float:
        """Conserved macro-solute mass c1_0*V0 [g]."""
        return self.c1_0 * self.V0

    @property
    def ratio_f(self) -> float:
        """Terminal concentration ratio c1_f/c2_f."""
        return self.c1_f / self.c2_f

    @property
    def dt_h(self) -> float:
        """Sampling period in hours."""
        return self.dt_sample / 3600.0

    def initial_state(self) -> PlantState:
        return PlantState(0.0, self.c1_0, self.c2_0)

    def volume(self, c1) -> float | np.ndarray:
        return self.mass / np.asarray(c1, dtype=float) if np.ndim(c1) else self.mass / c1

    @classmethod
    def from_json(cls, path: str) -> "ProcessSpec":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read process spec {path!r}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        bad = set(raw) - known
        if bad:
            raise ConfigError(f"unknown process spec keys: {sorted(bad)}")
        return cls(**raw)

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump({f.name: getattr(self, f.name) for f in fields(self)}, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class Measurement:
    """One flux sample: noisy q, exactly measured concentrations."""

    t: float
    q_m: float
    c1: float
    c2: float


def flux(c1, c2, p: PlantParams):
    """Permeate flux q = p1 - p2*ln(c1) - p3*ln(c2) [L/h]; may be <= 0."""
    c1a, c2a = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    if np.any(c1a <= 0.0) or np.any(c2a <= 0.0):
        raise DomainError("flux requires positive concentrations")
    q = p.p1 - p.p2 * np.log(c1a) - p.p3 * np.log(c2a)
    return float(q) if np.ndim(q) == 0 else q


def rhs(state: PlantState, u: float, p: PlantParams, spec: ProcessSpec) -> tuple[float, float]:
    """Concentration derivatives (dc1/dt, dc2/dt) [g/L/h] for water-addition ratio u."""
    if u < 0.0:
        raise DomainError("control ratio u must be nonnegative")
    q = flux(state.c1, state.c2, p)
    m = spec.mass
    dc1 = state.c1 ** 2 * q * (1.0 - u) / m
    dc2 = -state.c1 * state.c2 * q * u / m
    return dc1, dc2


def dilute(state: PlantState, c1_target: float) -> PlantState:
    """Instantaneous water addition to reach c1_target; c1/c2 is preserved."""
    if not 0.0 < c1_target <= state.c1:
        raise DomainError(
            f"dilution cannot concentrate: target {c1_target} vs c1 {state.c1}")
    factor = c1_target / state.c1
    return PlantState(state.t, c1_target, state.c2 * factor)


def measure(state: PlantState, p_true: PlantParams, sigma: float,
            rng: np.random.Generator) -> Measurement:
    """Noisy flux sample with uniform noise in [-sigma, sigma]; exact c1, c2."""
    if sigma < 0.0:
        raise DomainError("sigma must be nonnegative")
    eta = rng.uniform(-sigma, sigma) if sigma > 0.0 else 0.0
    return Measurement(state.t, flux(state.c1, state.c2, p_true) + eta, state.c1, state.c2)


# --- stop conditions & integration ------------------------------------------

_STOP_KINDS = ("time", "switch", "ratio", "c1_target")


@dataclass(frozen=True)
class StopCondition:
    """Arc termination criterion for :func:`integrate`."""

    kind: str
    value: float = math.nan
    switch_params: PlantParams | None = None  # S uses these params (default: plant's)

    def __post_init__(self):
        if self.kind not in _STOP_KINDS:
            raise ConfigError(f"unknown stop kind {self.kind!r}")

    @classmethod
    def at_time(cls, t: float) -> "StopCondition":
        return cls("time", t)

    @classmethod
    def switch_crossing(cls, params: PlantParams | None = None) -> "StopCondition":
        return cls("switch", switch_params=params)

    @classmethod
    def ratio_reached(cls, ratio: float) -> "StopCondition":
        return cls("ratio", ratio)

    @classmethod
    def c1_reached(cls, c1_target: float) -> "StopCondition":
        return cls("c1_target", c1_target)


@dataclass
class Trajectory:
    """Sampled trajectory of one constant-u arc chain."""

    t: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    u: np.ndarray
    q: np.ndarray
    event_time: float | None = None

    def final_state(self) -> PlantState:
        return PlantState(float(self.t[-1]), float(self.c1[-1]), float(self.c2[-1]))

    @staticmethod
    def concat(parts: Sequence["Trajectory"]) -> "Trajectory":
        parts = [p for p in parts if p.t.size]
        ev = next((p.event_time for p in reversed(parts) if p.event_time is not None), None)
        return Trajectory(
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.c1 for p in parts]),
            np.concatenate([p.c2 for p in parts]),
            np.concatenate([p.u for p in parts]),
            np.concatenate([p.q for p in parts]),
            event_time=ev,
        )

    def write_csv(self, path: str, spec: ProcessSpec) -> None:
        with open(path, "w") as fh:
            fh.write("t,c1,c2,V,u,q\n")
            V = spec.mass / self.c1
            for i in range(self.t.size):
                fh.write(f"{self.t[i]:.10g},{self.c1[i]:.10g},{self.c2[i]:.10g},"
                         f"{V[i]:.10g},{self.u[i]:.10g},{self.q[i]:.10g}\n")


def _event_fn(stop: StopCondition, p: PlantParams, spec: ProcessSpec) -> Callable | None:
    if stop.kind == "time":
        return None
    if stop.kind == "switch":
        ps = stop.switch_params if stop.switch_params is not None else p

        def ev(t, y):
            return (ps.p1 - ps.p2 * math.log(y[0]) - ps.p3 * math.log(y[1])
                    - ps.p2 - ps.p3)
        ev.direction = -1.0
    elif stop.kind == "ratio":
        def ev(t, y):
            return y[0] / y[1] - stop.value
        ev.direction = 1.0
    else:  # c1_target
        def ev(t, y):
            return y[0] - stop.value
        ev.direction = 1.0
    ev.terminal = True
    return ev


def integrate(state0: PlantState, u, p: PlantParams, stop: StopCondition,
              spec: ProcessSpec, *, rtol: float = RTOL_DEFAULT,
              record: bool = True) -> Trajectory:
    """Integrate the plant under a constant or piecewise control until `stop`.

    `u` is a float (constant arc) or a sequence of (t_until, u) segments; the
    stop condition applies on the final segment.  The returned trajectory is
    sampled on the dt_sample grid plus the exact event point (when `record`).

    Raises SimulationTimeout if t_max is hit first and StallError if the flux
    reaches zero while concentrating (u < 1).
    """
    if isinstance(u, (int, float)):
        segments = [(math.inf, float(u))]
    else:
        segments = [(float(te), float(uv)) for te, uv in u]
        if not segments:
            raise ConfigError("empty control profile")
    parts: list[Trajectory] = []
    state = state0
    for i, (t_until, u_val) in enumerate(segments):
        last = i == len(segments) - 1
        seg_stop = stop if last else StopCondition.at_time(min(t_until, spec.t_max))
        parts.append(_integrate_const(state, u_val, p, seg_stop, spec,
                                      rtol=rtol, record=record))
        state = parts[-1].final_state()
    return Trajectory.concat(parts) if len(parts) > 1 else parts[0]


def _integrate_const(state0: PlantState, u: float, p: PlantParams,
                     stop: StopCondition, spec: ProcessSpec, *,
                     rtol: float = RTOL_DEFAULT, record: bool = True) -> Trajectory:
    if u < 0.0:
        raise DomainError("control ratio u must be nonnegative")
    m = spec.mass
    t0 = state0.t
    if u < 1.0 and flux(state0.c1, state0.c2, p) <= 0.0:
        raise StallError(
            f"flux nonpositive at the start of a concentrating arc (t={t0:.4f} h)")

    def f(t, y):
        q = p.p1 - p.p2 * math.log(y[0]) - p.p3 * math.log(y[1])
        return (y[0] * y[0] * q * (1.0 - u) / m, -y[0] * y[1] * q * u / m)

    if stop.kind == "time":
        if stop.value < t0 - 1e-15:
            raise ConfigError(f"stop time {stop.value} precedes state time {t0}")
        t_end = min(stop.value, spec.t_max)
        if stop.value > spec.t_max:
            raise SimulationTimeout(
                f"stop time {stop.value} h exceeds t_max {spec.t_max} h")
    else:
        t_end = spec.t_max

    events = []
    ev = _event_fn(stop, p, spec)
    if ev is not None:
        events.append(ev)

    stall_ev = None
    if u < 1.0:
        def stall_fn(t, y):
            return p.p1 - p.p2 * math.log(y[0]) - p.p3 * math.log(y[1])
        stall_fn.terminal = True
        stall_fn.direction = -1.0
        stall_ev = stall_fn
        events.append(stall_fn)

    if t_end <= t0 + 1e-15 and stop.kind == "time":
        # zero-length horizon
        q0 = flux(state0.c1, state0.c2, p)
        one = np.array([t0]), np.array([state0.c1]), np.array([state0.c2])
        return Trajectory(one[0], one[1], one[2], np.array([u]), np.array([q0]))

    sol = solve_ivp(f, (t0, t_end), (state0.c1, state0.c2), method="RK45",
                    rtol=rtol, atol=(1e-10, 1e-12), dense_output=True,
                    events=events or None)
    if not sol.success:
        raise SimulationTimeout(f"integrator failed: {sol.message}")

    event_time = None
    if ev is not None and sol.t_events[0].size:
        event_time = float(sol.t_events[0][0])
    if stall_ev is not None:
        idx = len(events) - 1
        if sol.t_events[idx].size and event_time is None:
            raise StallError(
                f"flux reached zero at t={sol.t_events[idx][0]:.4f} h on a concentrating arc")
    if ev is not None and event_time is None:
        raise SimulationTimeout(
            f"stop condition {stop.kind!r} not reached by t_max={spec.t_max} h")

    t_stop = event_time if event_time is not None else t_end
    if record:
        dt = spec.dt_h
        n = int(math.floor((t_stop - t0) / dt + 1e-9))
        ts = t0 + dt * np.arange(n + 1)
        if t_stop - ts[-1] > 1e-12:
            ts = np.append(ts, t_stop)
    else:
        ts = np.array([t0, t_stop]) if t_stop > t0 else np.array([t0])
    ys = sol.sol(ts)
    c1s, c2s = ys[0], ys[1]
    qs = p.p1 - p.p2 * np.log(c1s) - p.p3 * np.log(c2s)
    return Trajectory(ts, c1s, c2s, np.full_like(ts, u), qs, event_time=event_time)
