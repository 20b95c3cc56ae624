"""Closed subsets of model manifolds as sublevel sets {rho <= 0}.

Reeb invariance is a verified flag, never an assumption: callers sample the
indicator along Reeb trajectories before setting it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .models import TWO_PI, ContactModel


@dataclass
class ClosedSetSpec:
    """A closed set {x : rho(x) <= 0} with a name for reports."""

    name: str
    rho: Callable[[np.ndarray], np.ndarray]
    reeb_invariant: bool = False

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        return np.asarray(self.rho(np.atleast_2d(X))) <= tol

    def inflate(self, margin: float) -> "ClosedSetSpec":
        """Closed neighborhood: pushes the boundary out by ``margin`` in
        indicator value."""
        rho = self.rho
        return replace(self, name=f"{self.name}+{margin:g}",
                       rho=lambda X: rho(X) - margin)


def empty_set(model: ContactModel) -> ClosedSetSpec:
    return ClosedSetSpec("empty", lambda X: np.ones(np.atleast_2d(X).shape[0]),
                         reeb_invariant=True)


def full_set(model: ContactModel) -> ClosedSetSpec:
    return ClosedSetSpec("full", lambda X: -np.ones(np.atleast_2d(X).shape[0]),
                         reeb_invariant=True)


def _circ_dist(a, center):
    return np.abs(np.mod(a - center + np.pi, TWO_PI) - np.pi)


def theta_band(model: ContactModel, lo: float, hi: float, name: str = "") -> ClosedSetSpec:
    """{theta in [lo, hi]} on a periodic model (axis theta is the last
    coordinate on the 3-torus, the only one on the circle)."""
    axis = model.dim - 1
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return ClosedSetSpec(
        name or f"band[{lo:g},{hi:g}]",
        lambda X: _circ_dist(np.atleast_2d(X)[:, axis], center) - half,
        reeb_invariant=True,
    )


def solid_cylinder(radius: float, name: str = "") -> ClosedSetSpec:
    """{x^2 + y^2 <= radius^2} on the boxed R3 model; Reeb-invariant since
    the Reeb flow translates z."""
    return ClosedSetSpec(
        name or f"cylinder(r={radius:g})",
        lambda X: np.atleast_2d(X)[:, 0] ** 2 + np.atleast_2d(X)[:, 1] ** 2 - radius ** 2,
        reeb_invariant=True,
    )


def union_sets(specs, name: str = "") -> ClosedSetSpec:
    """Union via the pointwise minimum of indicators (exact for sublevel
    representations)."""
    specs = list(specs)
    return ClosedSetSpec(
        name or "|".join(s.name for s in specs),
        lambda X: np.min(np.stack([s.rho(np.atleast_2d(X)) for s in specs]), axis=0),
        reeb_invariant=all(s.reeb_invariant for s in specs),
    )


def verify_reeb_invariance(model: ContactModel, spec: ClosedSetSpec,
                           n_samples: int = 400, n_shifts: int = 8,
                           shift_range=(0.0, TWO_PI), seed: int = 0,
                           tol: float = 1e-9) -> tuple[bool, float]:
    """Sampled check that the Reeb flow preserves the set; returns the flag
    and the worst indicator excursion over flowed member points."""
    X = model.sample_coords(n_samples, seed)
    if model.box_halfwidth is not None:
        X = 0.5 * X
    inside = spec.contains(X)
    if not inside.any():
        return True, 0.0
    Xin = X[inside]
    worst = 0.0
    for s in np.linspace(*shift_range, n_shifts):
        vals = spec.rho(model.reeb_flow_coords(Xin, s))
        worst = max(worst, float(np.max(vals)))
    ok = worst <= tol
    if ok and not spec.reeb_invariant:
        spec.reeb_invariant = True
    return ok, worst
