"""Periodic orbit records and the orbit distance used for deduplication."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class OrbitRecord:
    """A periodic orbit found (or known in closed form) on an energy level.

    ``period`` is in the flow's own time.  ``clock_period`` is the period
    measured in a reparametrised clock when one is attached to the search
    (for magnetic Katok systems: the time of the conjugate ``H_{s,alpha}``
    flow).  ``samples`` holds points along one period and ``dense`` maps a
    time in ``[0, period]`` to a phase-space point; both are used to compare
    orbits independently of the chosen representative.
    """

    representative: Any
    period: float
    energy: float
    closure_defect: float
    multiplicity_checked: float
    clock_period: Optional[float] = None
    section: str = ""
    returns: int = 1
    samples: Optional[Array] = field(default=None, repr=False, compare=False)
    dense: Optional[Callable[[float], Array]] = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        rep = self.representative
        if hasattr(rep, "q"):
            rep_out = {"q": [float(z) for z in rep.q], "v": [float(z) for z in rep.v]}
        elif hasattr(rep, "z1"):
            rep_out = {"z1": [rep.z1.real, rep.z1.imag], "z2": [rep.z2.real, rep.z2.imag]}
        else:
            rep_out = repr(rep)
        out = {
            "period": float(self.period),
            "energy": float(self.energy),
            "closure_defect": float(self.closure_defect),
            "period_cap": float(self.multiplicity_checked),
            "representative": rep_out,
        }
        if self.clock_period is not None:
            out["clock_period"] = float(self.clock_period)
        if self.section:
            out["section"] = self.section
            out["returns"] = int(self.returns)
        return out


def _closest(point: Array, rec: "OrbitRecord", cutoff: float = np.inf) -> float:
    """Distance from ``point`` to the orbit of ``rec``.

    The sampled minimum is refined on the dense output when available.
    """
    d = np.linalg.norm(rec.samples - point, axis=1)
    i = int(np.argmin(d))
    gap = np.max(np.linalg.norm(np.diff(rec.samples, axis=0), axis=1))
    # no point of the orbit is closer than d[i] - 2 gap, so refining is moot
    if rec.dense is None or d[i] - 2 * gap > cutoff:
        return float(d[i])
    from scipy.optimize import minimize_scalar

    dt = rec.period / len(rec.samples)
    t0 = i * dt
    res = minimize_scalar(lambda t: float(np.linalg.norm(rec.dense(t) - point)),
                          bounds=(t0 - dt, t0 + dt), method="bounded", options={"xatol": 1e-13})
    return float(min(res.fun, d[i]))


def orbit_distance(a: "OrbitRecord", b: "OrbitRecord", cutoff: float = np.inf) -> float:
    """Phase-space distance between two orbits, minimised over time shifts.

    Symmetrised so that it does not depend on which point of each orbit is
    the representative.  Distances known to exceed ``cutoff`` are returned
    from the samples without refinement.
    """
    return max(_closest(a.samples[0], b, cutoff), _closest(b.samples[0], a, cutoff))


def deduplicate(records: list, threshold: float = 1e-4) -> list:
    """Keep one record per orbit; records must carry ``samples``."""
    kept: list = []
    for rec in sorted(records, key=lambda r: (r.returns, r.closure_defect)):
        if all(orbit_distance(rec, k, threshold) >= threshold for k in kept):
            kept.append(rec)
    return sorted(kept, key=lambda r: r.period)
