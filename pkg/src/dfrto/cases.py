"""The two studied flux cases and their uncertainty setup.

limiting_flux: q = A*g1*ln(g2/c1), i.e. no micro-solute effect (g3 = 0).
generalized:   adds the c2 term with g3 = 0.1.

The prior parameter box is the tightest p-space enclosure of the +-pct
gamma-space box; gamma3 is certain (zero) in the limiting-flux case.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .process import GAMMA1_UNIT_SCALE, PlantParams, ProcessSpec
from .setmem import ParamBox

UNCERTAINTY_PCT_DEFAULT = 0.10


@dataclass(frozen=True)
class CaseStudy:
    name: str
    gamma1: float
    gamma2: float
    gamma3: float

    def nominal_params(self, spec: ProcessSpec,
                       unit_scale: float = GAMMA1_UNIT_SCALE) -> PlantParams:
        return PlantParams.from_gamma(self.gamma1, self.gamma2, self.gamma3,
                                      area=spec.A, unit_scale=unit_scale)

    def prior_box(self, spec: ProcessSpec, pct: float = UNCERTAINTY_PCT_DEFAULT,
                  unit_scale: float = GAMMA1_UNIT_SCALE) -> ParamBox:
        if not 0.0 < pct < 1.0:
            raise ConfigError(f"uncertainty fraction must be in (0,1): {pct}")
        lo = (self.gamma1 * (1 - pct), self.gamma2 * (1 - pct), self.gamma3 * (1 - pct))
        hi = (self.gamma1 * (1 + pct), self.gamma2 * (1 + pct), self.gamma3 * (1 + pct))
        return ParamBox.from_gamma_box(lo, hi, area=spec.A, unit_scale=unit_scale)

    def draw_truth_gamma(self, rng: np.random.Generator,
                         pct: float = UNCERTAINTY_PCT_DEFAULT,
                         spec: ProcessSpec | None = None,
                         unit_scale: float = GAMMA1_UNIT_SCALE) -> PlantParams:
        """Uniform componentwise draw of (gamma1, gamma2, gamma3) in the +-pct
        box, mapped to p-space; always inside the enclosing prior box."""
        area = spec.A if spec is not None else 1.0
        g = np.array([self.gamma1, self.gamma2, self.gamma3])
        draw = rng.uniform(g * (1 - pct), g * (1 + pct))
        return PlantParams.from_gamma(draw[0], draw[1], draw[2],
                                      area=area, unit_scale=unit_scale)

    def gamma_scenarios(self, spec: ProcessSpec,
                        pct: float = UNCERTAINTY_PCT_DEFAULT, n_lhs: int = 16,
                        seed: int = 2718,
                        unit_scale: float = GAMMA1_UNIT_SCALE) -> np.ndarray:
        """Worst-case scenario sample consistent with the +-pct uncertainty.

        Vertices and interior Latin-hypercube points of the gamma-space box,
        mapped to p-space, plus the nominal point.  All rows lie inside the
        enclosing prior box.
        """
        g = np.array([self.gamma1, self.gamma2, self.gamma3])
        lo, hi = g * (1 - pct), g * (1 + pct)
        pts = [g]
        for comb in itertools.product(*[(l, h) for l, h in zip(lo, hi)]):
            pts.append(np.array(comb))
        if n_lhs > 0:
            rng = np.random.default_rng(seed)
            u = (np.argsort(rng.random((3, n_lhs)), axis=1).T
                 + rng.random((n_lhs, 3))) / n_lhs
            pts.extend(list(lo + u * (hi - lo)))
        gam = np.unique(np.asarray(pts), axis=0)
        k = spec.A * unit_scale * gam[:, 0]
        return np.column_stack([k * np.log(gam[:, 1]), k, k * gam[:, 2]])


CASES: dict[str, CaseStudy] = {
    "limiting_flux": CaseStudy("limiting_flux", 3e-2, 1000.0, 0.0),
    "generalized": CaseStudy("generalized", 3e-2, 1000.0, 0.1),
}


def get_case(name: str) -> CaseStudy:
    try:
        return CASES[name]
    except KeyError:
        raise ConfigError(
            f"unknown case {name!r}; choose from {sorted(CASES)}") from None
