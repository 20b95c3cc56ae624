"""Contact Hamiltonian dynamics on the model manifolds.

Builds Hamiltonian vector fields from their defining equations
(alpha(X_h) = -h and i_{X_h} dalpha = dh - dh(R) alpha, solved as a stacked
least-squares system with a residual tripwire), integrates contact isotopies
together with the conformal factor, and implements the algebra of
Hamiltonians: the composition product, time concatenation, the bracket,
strictness and oscillation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainEscape, ResidualTooLarge
from .fields import ConstantField, TimeHamiltonian
from .integrators import IntegrationResult, StepStats, integrate
from .models import ChartPoint, ContactModel

RESIDUAL_TOL = 1e-8


# -- vector field -----------------------------------------------------------


def _solve_field_batch(model: ContactModel, values, diffs, X, residual_tol=RESIDUAL_TOL):
    """Solve the stacked defining system for X_h at a batch of points.

    Rows are [alpha; dalpha^T], right side [-h; dh - dh(R) alpha]. The
    contact condition makes the solution unique; the residual check is the
    correctness tripwire for broken models or differentials. Returns the
    field vectors and the Reeb derivative dh(R).
    """
    X = np.atleast_2d(X)
    n, dim = X.shape
    al = model.alpha(X)
    da = model.dalpha(X)
    rb = model.reeb(X)
    dhR = np.einsum("ni,ni->n", diffs, rb)
    S = np.empty((n, dim + 1, dim))
    S[:, 0, :] = al
    S[:, 1:, :] = np.swapaxes(da, -1, -2)
    rhs = np.empty((n, dim + 1))
    rhs[:, 0] = -values
    rhs[:, 1:] = diffs - dhR[:, None] * al
    G = np.einsum("nki,nkj->nij", S, S)
    b = np.einsum("nki,nk->ni", S, rhs)
    v = np.linalg.solve(G, b[..., None])[..., 0]
    res = np.linalg.norm(np.einsum("nkj,nj->nk", S, v) - rhs, axis=1)
    worst = float(res.max())
    if worst > residual_tol:
        raise ResidualTooLarge(worst, residual_tol)
    return v, dhR


def hamiltonian_vector_field_batch(model, h: TimeHamiltonian, t, X,
                                   residual_tol=RESIDUAL_TOL):
    values, diffs = h.value_and_differential_batch(t, np.atleast_2d(X))
    v, _ = _solve_field_batch(model, values, diffs, X, residual_tol)
    return v


def hamiltonian_vector_field(model, h: TimeHamiltonian, t, x,
                             residual_tol=RESIDUAL_TOL) -> np.ndarray:
    """The contact Hamiltonian vector field X_h at one point."""
    X = np.atleast_2d(np.asarray(getattr(x, "coords", x), dtype=float))
    return hamiltonian_vector_field_batch(model, h, t, X, residual_tol)[0]


def reeb_derivative_batch(model, h: TimeHamiltonian, t, X):
    diffs = h.differential_batch(t, np.atleast_2d(X))
    return np.einsum("ni,ni->n", diffs, model.reeb(np.atleast_2d(X)))


# -- flows ------------------------------------------------------------------


@dataclass
class IsotopySpec:
    """What to integrate: a Hamiltonian on a model at a given tolerance."""

    hamiltonian: TimeHamiltonian
    model: ContactModel
    tolerance: float = 1e-10
    direction: str = "forward"  # or "inverse"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.direction not in ("forward", "inverse"):
            raise ValueError("direction must be 'forward' or 'inverse'")


@dataclass
class FlowResult:
    """Trajectory of one point with its conformal factor path.

    ``kappa[i]`` is the conformal factor of the time-``times[i]`` map at the
    starting point; it begins at 1 and stays positive.
    """

    times: np.ndarray
    points: list
    kappa: np.ndarray
    accepted_step_stats: dict

    @property
    def endpoint(self) -> ChartPoint:
        return self.points[-1]

    @property
    def kappa_end(self) -> float:
        return float(self.kappa[-1])

    def at(self, t: float):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not recorded")
        return self.points[idx], float(self.kappa[idx])


@dataclass
class BatchFlowResult:
    times: np.ndarray
    coords: np.ndarray  # (n_nodes, n_points, dim), unwrapped chart coords
    log_kappa: np.ndarray  # (n_nodes, n_points)
    stats: StepStats

    def endpoint_coords(self, model: ContactModel) -> np.ndarray:
        return model.wrap(self.coords[-1])

    def at(self, t: float):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not recorded")
        return self.coords[idx], np.exp(self.log_kappa[idx])


def _box_validator(model: ContactModel, dim: int):
    if model.box_halfwidth is None:
        return None
    hw = model.box_halfwidth

    def check(t, y):
        pts = y.reshape(-1, dim + 1)[:, :dim]
        if np.any(np.abs(pts) > hw):
            raise DomainEscape(f"trajectory left the declared box (halfwidth {hw}) at t={t:.6g}")

    return check


def flow_batch(spec: IsotopySpec, X0, t1: float, captures=(), record: bool = False,
               max_steps: int = 200_000) -> BatchFlowResult:
    """Integrate a batch of initial points under one isotopy.

    The state couples chart coordinates with log kappa, so the conformal
    factor is positive by construction. Reverse/inverse integration runs the
    time-reversed system. Periodic coordinates are integrated in the
    universal cover and wrapped by consumers.
    """
    ham = spec.hamiltonian
    model = spec.model
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    n, dim = X0.shape

    reverse = spec.direction == "inverse"
    if t1 < 0:
        if not ham.autonomous:
            raise ValueError("negative flow time requires an autonomous Hamiltonian")
        reverse = not reverse
        t1 = -t1
    if not ham.autonomous and t1 > 1.0 + 1e-12:
        raise ValueError("time-dependent Hamiltonians are defined on [0, 1]")

    y0 = np.concatenate([X0, np.zeros((n, 1))], axis=1).ravel()
    if t1 == 0.0:
        return BatchFlowResult(np.array([0.0]), X0[None], np.zeros((1, n)),
                               StepStats())

    sigma = (lambda u: t1 - u) if reverse else (lambda u: u)
    sign = -1.0 if reverse else 1.0

    bps = [b for b in ham.breakpoints if 0.0 < b < t1]
    edges = sorted({t1 - b for b in bps} if reverse else set(bps))
    edges = [0.0] + edges + [t1]
    caps = sorted({float(c) for c in captures if 0.0 < c < t1})
    validator = _box_validator(model, dim)

    # integrate one smooth segment at a time: the branch of a piecewise
    # Hamiltonian is pinned per segment, so junction-time evaluations stay
    # one-sided and the stepper restarts cleanly across the discontinuity
    ts_all = [np.array([0.0])]
    ys_all = [y0[None, :]]
    stats = StepStats()
    y = y0
    for lo, hi in zip(edges[:-1], edges[1:]):
        a, b = (t1 - hi, t1 - lo) if reverse else (lo, hi)
        fld = ham.segment_field(a, b)

        def rhs(u, yy, fld=fld):
            st = yy.reshape(n, dim + 1)
            X = st[:, :dim]
            values, diffs = fld.value_and_differential_batch(sigma(u), X)
            v, dhR = _solve_field_batch(model, values, diffs, X)
            out = np.empty_like(st)
            out[:, :dim] = sign * v
            out[:, dim] = -sign * dhR
            return out.ravel()

        res = integrate(rhs, lo, hi, y, rtol=spec.tolerance,
                        atol=spec.tolerance * 1e-2,
                        nodes=[c for c in caps if lo < c < hi],
                        record=record, max_steps=max_steps, validator=validator)
        stats.merge(res.stats)
        y = res.ys[-1]
        ts_all.append(res.ts[1:])
        ys_all.append(res.ys[1:])

    ts = np.concatenate(ts_all)
    ys = np.concatenate(ys_all).reshape(-1, n, dim + 1)
    return BatchFlowResult(ts, ys[:, :, :dim], ys[:, :, dim], stats)


def flow(spec: IsotopySpec, x, t1: float, captures=(), record: bool = True,
         max_steps: int = 200_000) -> FlowResult:
    """Trajectory of one point under the isotopy, with conformal factor."""
    coords = np.asarray(getattr(x, "coords", x), dtype=float)
    batch = flow_batch(spec, coords[None, :], t1, captures=captures, record=record,
                       max_steps=max_steps)
    pts = [spec.model.point(c[0]) for c in batch.coords]
    kappa = np.exp(batch.log_kappa[:, 0])
    stats = {
        "n_accepted": batch.stats.n_accepted,
        "n_rejected": batch.stats.n_rejected,
        "n_evals": batch.stats.n_evals,
    }
    return FlowResult(batch.times, pts, kappa, stats)


# -- reusable point maps ----------------------------------------------------


class PointMap:
    """A map M -> M acting on (..., dim) chart coordinate arrays."""

    model: ContactModel

    def __call__(self, X):
        raise NotImplementedError


@dataclass
class IdentityMap(PointMap):
    model: ContactModel

    def __call__(self, X):
        return np.array(np.atleast_2d(X), dtype=float)


@dataclass
class ReebMap(PointMap):
    model: ContactModel
    s: float

    def __call__(self, X):
        return self.model.reeb_flow_coords(np.atleast_2d(X), self.s)

    def inverse(self):
        return ReebMap(self.model, -self.s)


class IsotopyMap(PointMap):
    """Time-t1 map of a contact isotopy, with a read-mostly endpoint cache."""

    def __init__(self, model, hamiltonian, t1=1.0, tolerance=1e-10, inverse=False,
                 name=""):
        self.model = model
        self.hamiltonian = hamiltonian
        self.t1 = float(t1)
        self.tolerance = float(tolerance)
        self.inverse_direction = bool(inverse)
        self.name = name or getattr(hamiltonian, "name", "")
        self._cache: dict[bytes, tuple[np.ndarray, float]] = {}
        self._lock = threading.Lock()

    def spec(self, tolerance=None) -> IsotopySpec:
        return IsotopySpec(self.hamiltonian, self.model,
                           tolerance or self.tolerance,
                           "inverse" if self.inverse_direction else "forward")

    def inverse(self) -> "IsotopyMap":
        return IsotopyMap(self.model, self.hamiltonian, self.t1, self.tolerance,
                          inverse=not self.inverse_direction, name=self.name)

    def __call__(self, X):
        return self.map_with_kappa(X)[0]

    def map_with_kappa(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty_like(X)
        kap = np.empty(X.shape[0])
        missing = []
        for i, row in enumerate(X):
            hit = self._cache.get(row.tobytes())
            if hit is None:
                missing.append(i)
            else:
                out[i], kap[i] = hit
        if missing:
            batch = flow_batch(self.spec(), X[missing], self.t1)
            ends = batch.coords[-1]
            kappas = np.exp(batch.log_kappa[-1])
            with self._lock:
                for j, i in enumerate(missing):
                    self._cache[X[i].tobytes()] = (ends[j].copy(), float(kappas[j]))
                    out[i], kap[i] = ends[j], kappas[j]
        return out, kap


@dataclass
class ComposedMap(PointMap):
    """Function composition: maps[0] applied last."""

    maps: tuple

    def __post_init__(self):
        self.model = self.maps[0].model

    def __call__(self, X):
        Y = np.atleast_2d(np.asarray(X, dtype=float))
        for m in reversed(self.maps):
            Y = m(Y)
        return Y


# -- Hamiltonian algebra ----------------------------------------------------


class SharpProductField(TimeHamiltonian):
    """The composition product of two Hamiltonians.

    (g # h)_t(x) = g_t(x) + kappa_g^t(y) h_t(y) at y = inverse time-t flow
    of g applied to x, with the inverse flow and its conformal factor
    obtained by integrating the time-reversed system. Values on a finite
    difference stencil share one batched reverse integration, so the spatial
    differential inherits the (strongly correlated) integration error of a
    common step sequence.
    """

    def __init__(self, g, h, model, inner_tolerance=1e-9, fd_step=1e-5, name=""):
        self.g = g
        self.h = h
        self.model = model
        self.inner_tolerance = float(inner_tolerance)
        self.fd_step = float(fd_step)
        self.autonomous = False
        self.breakpoints = tuple(sorted(set(g.breakpoints) | set(h.breakpoints)))
        self.name = name or f"({g.name}#{h.name})"
        self._cache: dict = {}
        self._lock = threading.Lock()

    def _reverse_g(self, t, pts):
        """Map stencil points through the inverse time-t flow of g.

        Returns preimages y and kappa_g^t(y); the reversed log-kappa
        integrates to the reciprocal of the forward factor at y.
        """
        spec = IsotopySpec(self.g, self.model, self.inner_tolerance, "inverse")
        batch = flow_batch(spec, pts, t)
        y = batch.coords[-1]
        kappa_fwd_at_y = np.exp(-batch.log_kappa[-1])
        return y, kappa_fwd_at_y

    def value_batch(self, t, X):
        X = np.atleast_2d(X)
        if t <= 1e-15:
            return self.g.value_batch(0.0, X) + self.h.value_batch(0.0, X)
        y, kap = self._reverse_g(t, X)
        return self.g.value_batch(t, X) + kap * self.h.value_batch(t, y)

    def value_and_differential_batch(self, t, X):
        X = np.atleast_2d(X)
        n, dim = X.shape
        if t <= 1e-15:
            vg, dg = self.g.value_and_differential_batch(0.0, X)
            vh, dh = self.h.value_and_differential_batch(0.0, X)
            return vg + vh, dg + dh
        key0 = round(float(t), 13)
        vals = np.empty(n)
        grads = np.empty((n, dim))
        missing = []
        for i, row in enumerate(X):
            hit = self._cache.get((key0, row.tobytes()))
            if hit is None:
                missing.append(i)
            else:
                vals[i], grads[i] = hit
        if missing:
            Xm = X[missing]
            m = len(missing)
            d = self.fd_step
            stencil = np.repeat(Xm[:, None, :], 2 * dim + 1, axis=1)
            for j in range(dim):
                stencil[:, 1 + j, j] += d
                stencil[:, 1 + dim + j, j] -= d
            flat = stencil.reshape(-1, dim)
            y, kap = self._reverse_g(t, flat)
            sval = self.g.value_batch(t, flat) + kap * self.h.value_batch(t, y)
            sval = sval.reshape(m, 2 * dim + 1)
            v = sval[:, 0]
            gr = (sval[:, 1:1 + dim] - sval[:, 1 + dim:]) / (2.0 * d)
            with self._lock:
                for j, i in enumerate(missing):
                    self._cache[(key0, X[i].tobytes())] = (float(v[j]), gr[j].copy())
                    vals[i], grads[i] = v[j], gr[j]
        return vals, grads

    def differential_batch(self, t, X):
        return self.value_and_differential_batch(t, X)[1]


def sharp_product(g: TimeHamiltonian, h: TimeHamiltonian, model: ContactModel,
                  inner_tolerance=1e-9) -> TimeHamiltonian:
    """The Hamiltonian generating the composition of the two isotopies."""
    if isinstance(g, ConstantField) and g.c == 0.0:
        return h
    return SharpProductField(g, h, model, inner_tolerance)


class ConcatField(TimeHamiltonian):
    """Time concatenation: runs g at double speed, then h.

    No smoothing is applied at the junction; the value is genuinely
    discontinuous in t there and integrators restart on the breakpoint,
    with the branch pinned per smooth segment.
    """

    def __init__(self, g, h, name=""):
        self.g = g
        self.h = h
        self.autonomous = False
        bps = {0.5}
        bps |= {0.5 * b for b in g.breakpoints}
        bps |= {0.5 + 0.5 * b for b in h.breakpoints}
        self.breakpoints = tuple(sorted(b for b in bps if 0.0 < b < 1.0))
        self.name = name or f"({g.name}*{h.name})"

    def value_batch(self, t, X):
        if t < 0.5:
            return 2.0 * self.g.value_batch(2.0 * t, X)
        return 2.0 * self.h.value_batch(2.0 * t - 1.0, X)

    def differential_batch(self, t, X):
        if t < 0.5:
            return 2.0 * self.g.differential_batch(2.0 * t, X)
        return 2.0 * self.h.differential_batch(2.0 * t - 1.0, X)

    def value_and_differential_batch(self, t, X):
        if t < 0.5:
            v, d = self.g.value_and_differential_batch(2.0 * t, X)
        else:
            v, d = self.h.value_and_differential_batch(2.0 * t - 1.0, X)
        return 2.0 * v, 2.0 * d

    def segment_field(self, lo, hi):
        mid = 0.5 * (lo + hi)
        if mid < 0.5:
            inner = self.g.segment_field(min(2 * lo, 1.0), min(2 * hi, 1.0))
            return _PinnedConcatBranch(inner, 0.0)
        inner = self.h.segment_field(max(2 * lo - 1.0, 0.0), max(2 * hi - 1.0, 0.0))
        return _PinnedConcatBranch(inner, 1.0)


class _PinnedConcatBranch(TimeHamiltonian):
    def __init__(self, inner, offset):
        self.inner = inner
        self.offset = offset
        self.autonomous = False

    def value_and_differential_batch(self, t, X):
        v, d = self.inner.value_and_differential_batch(2.0 * t - self.offset, X)
        return 2.0 * v, 2.0 * d

    def value_batch(self, t, X):
        return 2.0 * self.inner.value_batch(2.0 * t - self.offset, X)

    def differential_batch(self, t, X):
        return 2.0 * self.inner.differential_batch(2.0 * t - self.offset, X)


def concat_product(g: TimeHamiltonian, h: TimeHamiltonian) -> TimeHamiltonian:
    return ConcatField(g, h)


class ConjugateField(TimeHamiltonian):
    """(t, x) -> h_t(phi(x)) for a stored point map phi."""

    def __init__(self, h, phi: PointMap, name=""):
        self.h = h
        self.phi = phi
        self.autonomous = h.autonomous
        self.breakpoints = h.breakpoints
        self.name = name or f"{h.name}∘{getattr(phi, 'name', 'phi')}"

    def value_batch(self, t, X):
        return self.h.value_batch(t, self.phi(np.atleast_2d(X)))


def conjugate_hamiltonian(h: TimeHamiltonian, phi: PointMap) -> TimeHamiltonian:
    return ConjugateField(h, phi)


def poisson_bracket(model: ContactModel, g: TimeHamiltonian, h: TimeHamiltonian,
                    t: float, x) -> float:
    """The contact bracket -dg(X_h) - dh(R) h, evaluated verbatim.

    The second term uses h twice; the formula is not antisymmetric and no
    antisymmetry is assumed anywhere in the package.
    """
    X = np.atleast_2d(np.asarray(getattr(x, "coords", x), dtype=float))
    Xh = hamiltonian_vector_field_batch(model, h, t, X)
    dg = g.differential_batch(t, X)
    dhR = reeb_derivative_batch(model, h, t, X)
    hval = h.value_batch(t, X)
    return float(-(dg * Xh).sum(axis=1)[0] - dhR[0] * hval[0])


def poisson_bracket_batch(model, g, h, t, X):
    X = np.atleast_2d(X)
    Xh = hamiltonian_vector_field_batch(model, h, t, X)
    dg = g.differential_batch(t, X)
    dhR = reeb_derivative_batch(model, h, t, X)
    hval = h.value_batch(t, X)
    return -(dg * Xh).sum(axis=1) - dhR * hval


# -- strictness and oscillation ---------------------------------------------


@dataclass
class StrictnessReport:
    strict: bool
    max_violation: float
    tol: float

    def __bool__(self):
        return self.strict


def is_strict(model: ContactModel, h: TimeHamiltonian, probes: int = 256,
              seed: int = 0, tol: float = 1e-8) -> StrictnessReport:
    """Check dh(R) = 0 on sampled (t, x); reports the worst violation."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    X = model.sample_coords(probes, seed)
    times = (0.0,) if h.autonomous else np.linspace(0.0, 1.0, 7)
    worst = 0.0
    for t in np.atleast_1d(times):
        worst = max(worst, float(np.abs(reeb_derivative_batch(model, h, t, X)).max()))
    return StrictnessReport(worst <= tol, worst, tol)


@dataclass
class OscGrid:
    """Sample lattice for the shifted-oscillation functional."""

    n_space: int = 24
    n_time: int = 5
    n_shift: int = 9
    shift_range: tuple[float, float] = (0.0, 2.0 * np.pi)
    box_halfwidth: float | None = None

    def space_lattice(self, model: ContactModel) -> np.ndarray:
        n = self.n_space if model.dim > 1 else max(self.n_space ** 2, 256)
        return model.grid_coords(n, self.box_halfwidth)

    def times(self, h: TimeHamiltonian) -> np.ndarray:
        return np.array([0.0]) if h.autonomous else np.linspace(0.0, 1.0, self.n_time)

    def shifts(self) -> np.ndarray:
        return np.linspace(*self.shift_range, self.n_shift)


@dataclass
class OscResult:
    value: float  # max over (s, t) of (max h_t o Reeb^s - min h_t)
    simplified: float  # max over t of (max h_t - min h_t), same lattice
    n_space: int


def osc_alpha_detail(model: ContactModel, h: TimeHamiltonian,
                     grid: OscGrid | None = None) -> OscResult:
    grid = grid or OscGrid()
    X = grid.space_lattice(model)
    shifted = [model.reeb_flow_coords(X, s) for s in grid.shifts()]
    value = -np.inf
    simplified = -np.inf
    for t in grid.times(h):
        base = h.value_batch(t, X)
        lo, hi = float(base.min()), float(base.max())
        simplified = max(simplified, hi - lo)
        for Xs in shifted:
            value = max(value, float(h.value_batch(t, Xs).max()) - lo)
    return OscResult(value, simplified, X.shape[0])


def osc_alpha(model: ContactModel, h: TimeHamiltonian,
              grid: OscGrid | None = None) -> float:
    """Shifted oscillation over the (s, t, x) lattice.

    On a closed manifold the Reeb shift is a bijection, so the value agrees
    with the plain oscillation up to lattice error; both are computed and the
    displayed form is returned.
    """
    return osc_alpha_detail(model, h, grid).value


@dataclass
class CommuteReport:
    commutes: bool
    max_distance: float
    tol: float

    def __bool__(self):
        return self.commutes


def commutes_with_reeb(model: ContactModel, h: TimeHamiltonian, s_samples: int = 6,
                       n_points: int = 16, seed: int = 0, tol: float = 1e-6,
                       flow_tolerance: float = 1e-10,
                       shift_range: tuple[float, float] = (0.25, 1.5)) -> CommuteReport:
    """Cross-validation of strictness: does the time-1 map commute with the
    Reeb flow on sampled points and shift times?"""
    if not h.autonomous:
        raise ValueError("commutation check is defined for autonomous Hamiltonians")
    rng = np.random.default_rng(seed)
    X = model.sample_coords(n_points, seed)
    if model.box_halfwidth is not None:
        X = 0.4 * X  # keep room for the shifts inside the declared box
    shifts = rng.uniform(*shift_range, size=s_samples)
    spec = IsotopySpec(h, model, flow_tolerance)
    phi_first = flow_batch(spec, X, 1.0).coords[-1]
    worst = 0.0
    for s in shifts:
        lhs = model.reeb_flow_coords(phi_first, s)  # Reeb after the isotopy
        Xs = model.reeb_flow_coords(X, s)
        rhs = flow_batch(spec, Xs, 1.0).coords[-1]  # isotopy after Reeb
        worst = max(worst, float(model.distance(lhs, rhs).max()))
    return CommuteReport(worst <= tol, worst, tol)
