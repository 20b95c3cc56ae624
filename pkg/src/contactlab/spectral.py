"""Spectral-invariant contract: model functionals, the checkable contract
suite, the oscillation-corrected variant, and homogenization.

The genuinely Floer-theoretic invariant is out of reach here; the module
supplies pluggable model invariants that satisfy the checkable contract
(normalization, stability, triangle inequalities) plus deliberate violators
for checker self-tests, and the limit construction that turns an invariant
into a quasi-state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import OscGrid, concat_product, osc_alpha
from .errors import NotConverged
from .fields import ConstantField, ScaledField, TimeHamiltonian, random_trig_field, spike_field
from .models import ContactModel

CONTRACT_PROPERTIES = ("normalization", "spectrality", "stability",
                       "triangle_strict", "descent", "triangle_general")


@dataclass
class SpectralInvariant:
    """A functional on time-Hamiltonians with a declared contract.

    ``declared_contract`` flags which contract properties the model claims;
    undeclared ones are reported NOT CHECKED rather than asserted.
    """

    name: str
    fn: Callable[[TimeHamiltonian], float]
    declared_contract: dict
    lattice_spacing: float = 0.0

    def evaluate(self, h: TimeHamiltonian) -> float:
        return float(self.fn(h))


def _simpson_weights(n: int) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _time_integral(h: TimeHamiltonian, reducer, n_nodes: int) -> float:
    """Composite Simpson over [0,1] of ``reducer(field, t)``, split at
    breakpoints with the branch pinned per segment (junction nodes evaluate
    their own side of a piecewise Hamiltonian)."""
    edges = [0.0] + [b for b in sorted(h.breakpoints) if 0.0 < b < 1.0] + [1.0]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        fld = h.segment_field(a, b)
        ts = np.linspace(a, b, n_nodes)
        dt = (b - a) / (n_nodes - 1)
        total += dt * float(np.dot(_simpson_weights(n_nodes),
                                   [reducer(fld, t) for t in ts]))
    return total


def model_max_integral(model: ContactModel, n_space: int = 24, n_time: int = 33,
                       box_halfwidth: float | None = None) -> SpectralInvariant:
    """The time integral of the spatial lattice maximum.

    Satisfies normalization, stability and both triangle inequalities (the
    strict-pair triangle with zero slack); spectrality and descent are not
    claimed. The lattice maximum carries a Lipschitz-based error bar via
    ``lattice_spacing``.
    """
    lattice = model.grid_coords(n_space if model.dim > 1 else max(n_space ** 2, 512),
                                box_halfwidth)
    if model.periodic_mask.any():
        spacing = 2.0 * np.pi / (n_space if model.dim > 1 else max(n_space ** 2, 512))
    else:
        hw = box_halfwidth if box_halfwidth is not None else model.box_halfwidth
        spacing = 2.0 * hw / (n_space - 1)

    def fn(h: TimeHamiltonian) -> float:
        if h.autonomous:
            return float(h.value_batch(0.0, lattice).max())
        return _time_integral(h, lambda fld, t: float(fld.value_batch(t, lattice).max()),
                              n_time)

    return SpectralInvariant(
        "max_integral", fn,
        {"normalization": True, "spectrality": False, "stability": True,
         "triangle_strict": True, "descent": False, "triangle_general": True},
        lattice_spacing=spacing,
    )


def model_time_sup(model: ContactModel, n_space: int = 24) -> SpectralInvariant:
    """Injected violator: the sup over time instead of the time integral.

    Normalized and stable, but super-additive under concatenation (the
    double-speed halves double the sup), so the strict triangle inequality
    fails."""
    lattice = model.grid_coords(n_space if model.dim > 1 else max(n_space ** 2, 512))

    def fn(h):
        times = (0.0,) if h.autonomous else np.linspace(0.0, 1.0, 41)
        return float(max(h.value_batch(t, lattice).max() for t in np.atleast_1d(times)))

    return SpectralInvariant(
        "time_sup_violator", fn,
        {"normalization": True, "spectrality": False, "stability": True,
         "triangle_strict": True, "descent": False, "triangle_general": True})


def scaled_violator(base: SpectralInvariant, factor: float = 2.0) -> SpectralInvariant:
    return SpectralInvariant(f"scaled_violator(x{factor:g})",
                             lambda h: factor * base.evaluate(h),
                             dict(base.declared_contract))


def osc_penalty_violator(base: SpectralInvariant, model: ContactModel,
                         weight: float = 0.5) -> SpectralInvariant:
    """Injected violator: adds an oscillation penalty, breaking stability on
    strict pairs with unequal oscillation (normalization survives since
    constants have zero oscillation)."""
    grid = OscGrid(n_shift=1, shift_range=(0.0, 0.0))

    def fn(h):
        return base.evaluate(h) + weight * osc_alpha(model, h, grid)

    return SpectralInvariant(f"osc_penalty_violator(+{weight:g})", fn,
                             dict(base.declared_contract))


def c_tilde(c: SpectralInvariant, model: ContactModel, h: TimeHamiltonian,
            grid: OscGrid | None = None) -> float:
    """Oscillation-corrected invariant: c(h) + 4 osc(h)."""
    return c.evaluate(h) + 4.0 * osc_alpha(model, h, grid)


# -- contract checking --------------------------------------------------------


@dataclass
class PropertyReport:
    property_id: str
    checked: bool
    n_trials: int
    n_failures: int
    worst_margin: float  # positive means violated by that amount
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.checked and self.n_failures == 0

    def as_dict(self) -> dict:
        return {"property_id": self.property_id, "checked": self.checked,
                "n_trials": self.n_trials, "n_failures": self.n_failures,
                "worst_margin": self.worst_margin}


@dataclass
class ContractSuite:
    """Seeded Hamiltonian families for the contract checker.

    The invariant under test must share the suite's space lattice and time
    nodes (use :meth:`make_max_integral`); the contract inequalities are then
    exact lattice statements and the tolerance only absorbs roundoff. Strict
    pairs are autonomous, so their extrema need no time sampling at all.
    """

    model: ContactModel
    seed: int = 0
    n_trials: int = 100
    degree: int = 2
    amplitude: float = 0.4
    tol: float = 1e-6
    n_space: int = 12
    n_time: int = 9
    include_time_dependent: bool = True

    def make_max_integral(self) -> SpectralInvariant:
        return model_max_integral(self.model, self.n_space, self.n_time)

    def osc_grid(self) -> OscGrid:
        return OscGrid(n_space=self.n_space, n_time=self.n_time, n_shift=5)

    def constants(self):
        rng = np.random.default_rng(self.seed)
        vals = [0.0, 1.0, -1.3, 2.5] + list(rng.uniform(-3, 3, max(self.n_trials - 4, 0)))
        return [float(v) for v in vals[: self.n_trials]]

    def strict_pairs(self):
        rng = np.random.default_rng(self.seed + 1)
        pairs = []
        if self.model.name != "R3_STANDARD":
            pairs.append((spike_field(self.model), ConstantField(0.0)))
        pairs.append((random_trig_field(self.model, rng, self.degree, self.amplitude,
                                        strict=True), ConstantField(float(rng.uniform(-1, 1)))))
        while len(pairs) < self.n_trials:
            pairs.append((random_trig_field(self.model, rng, self.degree, self.amplitude, strict=True),
                          random_trig_field(self.model, rng, self.degree, self.amplitude, strict=True)))
        return pairs[: self.n_trials]

    def general_pairs(self):
        rng = np.random.default_rng(self.seed + 2)
        td = self.include_time_dependent
        return [(random_trig_field(self.model, rng, self.degree, self.amplitude,
                                   time_dependent=td and i % 2 == 0),
                 random_trig_field(self.model, rng, self.degree, self.amplitude,
                                   time_dependent=td and i % 3 == 0))
                for i in range(self.n_trials)]

    def space_lattice(self):
        return self.model.grid_coords(self.n_space if self.model.dim > 1
                                      else max(self.n_space ** 2, 512))


def _minmax_difference(h, g, lattice, n_time=9):
    """min and max of h - g over [0,1] x lattice."""
    times = (0.0,) if (h.autonomous and g.autonomous) else np.linspace(0.0, 1.0, n_time)
    lo, hi = np.inf, -np.inf
    for t in np.atleast_1d(times):
        d = h.value_batch(t, lattice) - g.value_batch(t, lattice)
        lo = min(lo, float(d.min()))
        hi = max(hi, float(d.max()))
    return lo, hi


def check_contract(c: SpectralInvariant, suite: ContractSuite) -> list[PropertyReport]:
    """Per-property pass/fail report for the checkable contract.

    Undeclared properties (spectrality, descent) are reported NOT CHECKED.
    Margins are signed violations; failures list the offending inputs.
    """
    tol = suite.tol
    lattice = suite.space_lattice()
    reports = []

    # normalization: constants map to themselves
    rep = PropertyReport("normalization", True, 0, 0, -np.inf)
    for a in suite.constants():
        rep.n_trials += 1
        margin = abs(c.evaluate(ConstantField(a)) - a) - tol
        rep.worst_margin = max(rep.worst_margin, margin)
        if margin > 0:
            rep.n_failures += 1
            rep.failures.append((f"constant {a:g}", margin))
    reports.append(rep)

    reports.append(PropertyReport("spectrality", False, 0, 0, 0.0))

    rep = PropertyReport("stability", True, 0, 0, -np.inf)
    for i, (h, g) in enumerate(suite.strict_pairs()):
        rep.n_trials += 1
        lo, hi = _minmax_difference(h, g, lattice)
        diff = c.evaluate(h) - c.evaluate(g)
        margin = max(lo - diff, diff - hi) - tol
        rep.worst_margin = max(rep.worst_margin, margin)
        if margin > 0:
            rep.n_failures += 1
            rep.failures.append((f"strict pair {i}", margin))
    reports.append(rep)

    rep = PropertyReport("triangle_strict", True, 0, 0, -np.inf)
    for i, (h, g) in enumerate(suite.strict_pairs()):
        rep.n_trials += 1
        margin = c.evaluate(concat_product(h, g)) - c.evaluate(h) - c.evaluate(g) - tol
        rep.worst_margin = max(rep.worst_margin, margin)
        if margin > 0:
            rep.n_failures += 1
            rep.failures.append((f"strict pair {i}", margin))
    reports.append(rep)

    reports.append(PropertyReport("descent", False, 0, 0, 0.0))

    grid = suite.osc_grid()
    rep = PropertyReport("triangle_general", True, 0, 0, -np.inf)
    for i, (h, g) in enumerate(suite.general_pairs()):
        rep.n_trials += 1
        slack = 4.0 * max(osc_alpha(suite.model, h, grid), osc_alpha(suite.model, g, grid))
        margin = c.evaluate(concat_product(h, g)) - c.evaluate(h) - c.evaluate(g) - slack - tol
        rep.worst_margin = max(rep.worst_margin, margin)
        if margin > 0:
            rep.n_failures += 1
            rep.failures.append((f"general pair {i}", margin))
    reports.append(rep)

    return reports


# -- homogenization -----------------------------------------------------------


@dataclass
class HomogenizationResult:
    zeta_value: float
    k_sequence: list
    c_over_k: list
    fekete_bound: float
    converged: bool
    tolerance: float
    fekete_curve: list = field(default_factory=list)


def homogenize(c: SpectralInvariant, model: ContactModel, h: TimeHamiltonian,
               k_max: int = 16, tol: float = 1e-6,
               grid: OscGrid | None = None, strict_mode: bool = True) -> HomogenizationResult:
    """Limit of c(k h)/k over k = 1..k_max.

    The oscillation-corrected sequence is subadditive, so its running
    minimum (the Fekete bound) brackets the limit from above; convergence is
    declared when the last-quartile tail of c(kh)/k settles within ``tol``.
    Non-convergence raises with the partial result attached unless
    ``strict_mode`` is off.
    """
    if k_max < 4:
        raise ValueError("k_max must be at least 4")
    osc = osc_alpha(model, h, grid)
    ks = list(range(1, k_max + 1))
    c_over_k = [c.evaluate(ScaledField(float(k), h)) / k for k in ks]
    tilde = [v + 4.0 * osc for v in c_over_k]  # osc(kh)/k = osc(h)
    fekete_curve = list(np.minimum.accumulate(tilde))
    tail = c_over_k[-max(k_max // 4, 2):]
    converged = (max(tail) - min(tail)) <= tol
    zeta = float(np.mean(tail))
    result = HomogenizationResult(zeta, ks, c_over_k, float(fekete_curve[-1]),
                                  converged, tol, fekete_curve)
    if not converged and strict_mode:
        raise NotConverged(
            f"tail variation {max(tail) - min(tail):.3e} exceeds {tol:.1e}", result)
    return result
