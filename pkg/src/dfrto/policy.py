"""Optimal control structure for the diafiltration plant.

The time-optimal policy is concentrate (u=0) -> constant-flux diafiltration
(singular, u=u_s) -> instantaneous dilution.  The switching surface is where
the flux drops to p2+p3; along the singular arc the flux is pinned there and
the control is the constant u_s = p2/(p2+p3).

Switching times have closed forms in the exponential integral Ei, used as the
fast backend; an event-detecting ODE backend is kept for cross-validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expi

from .errors import ConfigError, DegenerateModelError, UnsupportedStructureError
from .process import (PlantParams, PlantState, ProcessSpec, StopCondition,
                      Trajectory, flux, integrate)

DILUTE = math.inf  # control value standing for the instantaneous-dilution mode


@dataclass(frozen=True)
class PolicyParams:
    """Parameter vector of the committed policy: model params plus switch times."""

    p: PlantParams
    t1: float
    t2: float
    tf: float

    def __post_init__(self):
        if not 0.0 <= self.t1 <= self.t2 <= self.tf:
            raise ConfigError(f"switch times must be ordered: {self.t1}, {self.t2}, {self.tf}")

    def to_json(self, path: str | None = None) -> str:
        payload = {"p1": self.p.p1, "p2": self.p.p2, "p3": self.p.p3,
                   "t1": self.t1, "t2": self.t2, "tf": self.tf}
        text = json.dumps(payload, indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, path: str) -> "PolicyParams":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(PlantParams(raw["p1"], raw["p2"], raw["p3"]),
                   raw["t1"], raw["t2"], raw["tf"])


@dataclass(frozen=True)
class ControlArc:
    """One arc of the policy; the dilute arc has zero duration."""

    kind: str  # "concentrate" | "singular" | "dilute"
    start: float
    end: float
    u_value: float


def switching_function(state: PlantState, p: PlantParams) -> float:
    """S = q(c1, c2) - (p2 + p3); zero on the singular surface."""
    return flux(state.c1, state.c2, p) - p.p2 - p.p3


def singular_control(p: PlantParams) -> float:
    """Constant singular control u_s = p2/(p2+p3)."""
    if p.p2 + p.p3 <= 0.0:
        raise DegenerateModelError("p2 + p3 must be positive")
    return p.p2 / (p.p2 + p.p3)


# --- closed-form plan ---------------------------------------------------------

def plan_vectorized(P: np.ndarray, spec: ProcessSpec) -> dict[str, np.ndarray]:
    """Switching times and singular controls for each parameter row of P (n,3).

    Returns arrays t1, t2, tf, us, c1_switch, c1_end.  Requires every row to
    start above the singular surface (checked by the caller).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    p1, p2, p3 = P[:, 0], P[:, 1], P[:, 2]
    m = spec.mass
    ln_c10, ln_c20 = math.log(spec.c1_0), math.log(spec.c2_0)

    alpha = p1 - p3 * ln_c20            # arc-1 flux intercept (c2 frozen)
    w0 = alpha / p2 - ln_c10            # q(x0)/p2
    ws = (p2 + p3) / p2                 # q/p2 on the singular surface
    if np.any(w0 <= ws):
        raise UnsupportedStructureError("initial state not above the singular surface")
    c1_sw = np.exp(alpha / p2 - ws)
    t1 = m * np.exp(-alpha / p2) / p2 * (expi(w0) - expi(ws))

    rf = spec.ratio_f
    dt2 = np.empty_like(t1)
    c1_end = np.empty_like(t1)
    pure = p3 <= 0.0
    if np.any(pure):
        c1p = c1_sw[pure]
        c1_end[pure] = c1p
        dt2[pure] = m * np.log(spec.c2_0 * rf / c1p) / (c1p * p2[pure])
    gen = ~pure
    if np.any(gen):
        # ln c1 grows by L*p3/(p2+p3) over the arc; expm1 keeps the duration
        # stable as p3 -> 0 (limit is the constant-c1 branch above)
        L = np.log(rf * spec.c2_0) - np.log(c1_sw[gen])
        delta = L * p3[gen] / (p2[gen] + p3[gen])
        c1_end[gen] = c1_sw[gen] * np.exp(delta)
        dt2[gen] = -m * np.expm1(-delta) / (p3[gen] * c1_sw[gen])

    tf = t1 + dt2
    us = p2 / (p2 + p3)
    return {"t1": t1, "t2": tf.copy(), "tf": tf, "us": us,
            "c1_switch": c1_sw, "c1_end": c1_end}


def compute_switch_times(p: PlantParams, spec: ProcessSpec,
                         backend: str = "analytic") -> PolicyParams:
    """Switching times for a known parameter vector.

    t1 is where the switching function crosses zero along u=0 from the initial
    state; t2 is where c1/c2 reaches the terminal ratio along u=u_s; dilution
    is instantaneous so tf = t2.  backend="integrate" recomputes both events
    with the adaptive ODE solver instead of the closed forms.
    """
    s0 = switching_function(spec.initial_state(), p)
    if s0 <= 0.0:
        raise UnsupportedStructureError(
            f"S(x0) = {s0:.6g} <= 0: concentrate-first structure unsupported")
    plan = plan_vectorized(p.as_array()[None, :], spec)
    if plan["c1_end"][0] < spec.c1_f * (1.0 - 1e-12):
        # dilution only lowers c1: the terminal point is unreachable when the
        # ratio target is met below c1_f
        raise UnsupportedStructureError(
            f"singular arc ends at c1 = {plan['c1_end'][0]:.4g} g/L below the "
            f"target {spec.c1_f} g/L: dilution cannot reach the final state")
    if backend == "analytic":
        t1, tf = float(plan["t1"][0]), float(plan["tf"][0])
        return PolicyParams(p, t1, tf, tf)
    if backend != "integrate":
        raise ConfigError(f"unknown backend {backend!r}")
    arc1 = integrate(spec.initial_state(), 0.0, p,
                     StopCondition.switch_crossing(), spec, record=False)
    t1 = float(arc1.event_time)
    us = singular_control(p)
    arc2 = integrate(arc1.final_state(), us, p,
                     StopCondition.ratio_reached(spec.ratio_f), spec, record=False)
    tf = float(arc2.event_time)
    return PolicyParams(p, t1, tf, tf)


def arcs_from_policy(pi: PolicyParams) -> list[ControlArc]:
    return [
        ControlArc("concentrate", 0.0, pi.t1, 0.0),
        ControlArc("singular", pi.t1, pi.t2, singular_control(pi.p)),
        ControlArc("dilute", pi.t2, pi.t2, DILUTE),
    ]


def evaluate_policy(t: float, state: PlantState, pi: PolicyParams) -> float:
    """Step-wise control law: 0 before t1, u_s on [t1, t2), DILUTE (inf) at t2."""
    if t > pi.tf + 1e-12:
        raise ConfigError(f"t={t} beyond final time {pi.tf}")
    if t < pi.t1:
        return 0.0
    if t < pi.t2:
        return singular_control(pi.p)
    return DILUTE


def simulate_policy(pi: PolicyParams, spec: ProcessSpec, *,
                    record: bool = True) -> Trajectory:
    """Open-loop replay of a committed policy on the plant with the same params."""
    from .process import dilute as _dilute  # local to avoid name clash

    arc1 = integrate(spec.initial_state(), 0.0, pi.p,
                     StopCondition.at_time(pi.t1), spec, record=record)
    us = singular_control(pi.p)
    arc2 = integrate(arc1.final_state(), us, pi.p,
                     StopCondition.at_time(pi.t2), spec, record=record)
    end = arc2.final_state()
    final = _dilute(end, min(spec.c1_f, end.c1))
    tail = Trajectory(np.array([final.t]), np.array([final.c1]), np.array([final.c2]),
                      np.array([DILUTE]), np.array([flux(final.c1, final.c2, pi.p)]))
    return Trajectory.concat([arc1, arc2, tail])
