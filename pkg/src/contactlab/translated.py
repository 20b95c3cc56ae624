"""Translated points and shift sets of stored contactomorphisms.

A translated point of phi with shift eta is a fixed point of the Reeb
back-shift composed with phi; the optional discriminating condition pins the
conformal factor to 1. Shift sets are produced by an eta scan whose hits are
certified by a joint Gauss-Newton refinement in (point, shift).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ComposedMap, IdentityMap, IsotopyMap, PointMap, ReebMap, is_strict
from .errors import HypothesisViolated, SolverBudgetExceeded
from .models import ChartPoint, ContactModel
from .sets import ClosedSetSpec, verify_reeb_invariance


@dataclass
class TranslatedPoint:
    point: ChartPoint
    shift: float
    residual: float
    kappa_at_point: float
    discriminating_condition_used: bool = False


@dataclass
class ShiftSet:
    shifts: list
    eta_scan_range: tuple[float, float]
    scan_resolution: float
    witnesses: dict = field(default_factory=dict)  # shift -> TranslatedPoint


@dataclass
class NewtonConfig:
    grid_per_axis: int = 12
    max_iter: int = 30
    tol: float = 1e-8
    fd_step: float = 1e-6
    max_damping: int = 8
    cluster_tol: float = 1e-3
    eval_budget: int = 2_000_000
    seed_box_fraction: float = 0.35  # sub-box used for seeding on R3
    step_cap: float = 1.0


def kappa_of_map(phi: PointMap, X: np.ndarray) -> np.ndarray:
    """Conformal factor of a stored map at a batch of points (chain rule
    through compositions; Reeb maps and the identity are strict)."""
    X = np.atleast_2d(X)
    if isinstance(phi, (ReebMap, IdentityMap)):
        return np.ones(X.shape[0])
    if isinstance(phi, IsotopyMap):
        return phi.map_with_kappa(X)[1]
    if isinstance(phi, ComposedMap):
        out = np.ones(X.shape[0])
        Y = X
        for m in reversed(phi.maps):
            out = out * kappa_of_map(m, Y)
            Y = m(Y)
        return out
    return np.ones(X.shape[0])


def _seed_grid(model: ContactModel, cfg: NewtonConfig) -> np.ndarray:
    if model.box_halfwidth is not None:
        return model.grid_coords(cfg.grid_per_axis,
                                 cfg.seed_box_fraction * model.box_halfwidth)
    n = cfg.grid_per_axis if model.dim > 1 else max(cfg.grid_per_axis ** 2, 64)
    return model.grid_coords(n)


class _EvalCounter:
    def __init__(self, budget):
        self.budget = budget
        self.count = 0

    def spend(self, n):
        self.count += n
        if self.count > self.budget:
            raise SolverBudgetExceeded(
                f"fixed-point search spent {self.count} map evaluations (budget {self.budget})")


def _residual_batch(model, phi, eta, X, counter: _EvalCounter):
    counter.spend(X.shape[0])
    shifted = model.reeb_flow_coords(phi(X), -eta)
    return model.wrapped_diff(shifted, X)


def find_translated_points(model: ContactModel, phi: PointMap, eta: float,
                           config: NewtonConfig | None = None,
                           require_unit_kappa: bool = False,
                           kappa_tol: float = 1e-6,
                           seeds: np.ndarray | None = None) -> list[TranslatedPoint]:
    """Grid-seeded damped Newton search for fixed points of the eta
    back-shifted map. Returns clustered certified solutions."""
    cfg = config or NewtonConfig()
    counter = _EvalCounter(cfg.eval_budget)
    X = _seed_grid(model, cfg) if seeds is None else np.atleast_2d(seeds).copy()
    dim = model.dim

    W = _residual_batch(model, phi, eta, X, counter)
    rnorm = np.linalg.norm(W, axis=1)
    active = np.ones(X.shape[0], dtype=bool)

    for _ in range(cfg.max_iter):
        solve = active & (rnorm > cfg.tol)
        if not solve.any():
            break
        Xs = X[solve]
        n = Xs.shape[0]
        # FD Jacobian of the residual, batched over all active seeds
        stencil = np.repeat(Xs[:, None, :], 2 * dim, axis=1)
        for j in range(dim):
            stencil[:, j, j] += cfg.fd_step
            stencil[:, dim + j, j] -= cfg.fd_step
        Wst = _residual_batch(model, phi, eta, stencil.reshape(-1, dim), counter)
        Wst = Wst.reshape(n, 2 * dim, dim)
        J = np.transpose((Wst[:, :dim] - Wst[:, dim:]) / (2 * cfg.fd_step), (0, 2, 1))
        # damped Newton step on each seed, trust-region capped so degenerate
        # Jacobians (constant residual, no solutions) cannot fling seeds away
        try:
            step = -np.linalg.solve(J, W[solve][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("nij,nj->ni", np.linalg.pinv(J), W[solve])
        bad = ~np.all(np.isfinite(step), axis=1)
        if bad.any():
            step[bad] = 0.0
        lengths = np.linalg.norm(step, axis=1)
        cap = cfg.step_cap
        too_long = lengths > cap
        if too_long.any():
            step[too_long] *= (cap / lengths[too_long])[:, None]
        improved = np.zeros(n, dtype=bool)
        scale = np.ones(n)
        cur = rnorm[solve].copy()
        Xcur = Xs.copy()
        hw = model.box_halfwidth
        for _ in range(cfg.max_damping):
            trial = Xs + scale[:, None] * step
            if hw is not None:
                np.clip(trial, -0.9 * hw, 0.9 * hw, out=trial)
            Wt = _residual_batch(model, phi, eta, trial, counter)
            rt = np.linalg.norm(Wt, axis=1)
            better = (rt < cur * (1.0 - 1e-12)) & ~improved
            Xcur[better] = trial[better]
            cur[better] = rt[better]
            improved |= better
            if improved.all():
                break
            scale[~improved] *= 0.5
        idx = np.flatnonzero(solve)
        X[idx] = Xcur
        rnorm[idx] = cur
        newW = _residual_batch(model, phi, eta, Xcur, counter)
        W[idx] = newW
        stuck = idx[~improved]
        active[stuck] = False

    hits = rnorm <= cfg.tol
    if not hits.any():
        return []
    sols = X[hits]
    res = rnorm[hits]
    keep = _cluster_points(model, sols, res, cfg.cluster_tol)
    kappas = kappa_of_map(phi, sols[keep])
    out = []
    for i, k in zip(keep, kappas):
        if require_unit_kappa and abs(k - 1.0) > kappa_tol:
            continue
        out.append(TranslatedPoint(model.point(sols[i]), float(eta), float(res[i]),
                                   float(k), require_unit_kappa))
    return out


def _cluster_points(model, pts, residuals, tol):
    order = np.argsort(residuals)
    kept: list[int] = []
    for i in order:
        if all(model.distance(pts[i], pts[j]) > tol for j in kept):
            kept.append(int(i))
    return kept


@dataclass
class ShiftScanConfig:
    eta_range: tuple[float, float] = (-2 * np.pi, 2 * np.pi)
    n_eta: int = 129
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    certify_tol: float = 1e-8
    refine_iters: int = 12
    cluster_fraction: float = 1e-3

    @property
    def resolution(self) -> float:
        return (self.eta_range[1] - self.eta_range[0]) / (self.n_eta - 1)


def shift_set(model: ContactModel, phi: PointMap,
              scan: ShiftScanConfig | None = None,
              n_workers: int = 1) -> ShiftSet:
    """Scan eta over a lattice, certify hits by joint refinement in
    (point, shift), and cluster the certified shifts into a discrete set."""
    scan = scan or ShiftScanConfig()
    lo, hi = scan.eta_range
    etas = np.linspace(lo, hi, scan.n_eta)
    loose = scan.newton.__class__(**{**scan.newton.__dict__})
    loose.tol = max(0.75 * scan.resolution, scan.certify_tol)

    def scan_one(eta):
        found = []
        for tp in find_translated_points(model, phi, eta, loose):
            refined = _joint_refine(model, phi, tp.point.coords, eta,
                                    scan.newton.fd_step, scan.refine_iters,
                                    scan.certify_tol)
            if refined is not None:
                x, shift, r = refined
                kap = float(kappa_of_map(phi, x[None, :])[0])
                found.append(TranslatedPoint(model.point(x), float(shift), float(r), kap))
        return found

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            per_eta = list(ex.map(scan_one, etas))
    else:
        per_eta = [scan_one(e) for e in etas]

    certified = [tp for batch in per_eta for tp in batch]
    certified.sort(key=lambda tp: (tp.shift, tp.residual))
    cluster_tol = scan.cluster_fraction * (hi - lo)
    shifts: list[float] = []
    witnesses: dict[float, TranslatedPoint] = {}
    for tp in certified:
        if not (lo - cluster_tol <= tp.shift <= hi + cluster_tol):
            continue
        if shifts and abs(tp.shift - shifts[-1]) <= cluster_tol:
            continue
        shifts.append(tp.shift)
        witnesses[tp.shift] = tp
    return ShiftSet(shifts, (lo, hi), scan.resolution, witnesses)


def _joint_refine(model, phi, x0, eta0, fd_step, iters, tol):
    """Gauss-Newton on (x, eta) with the least-norm step; the system is one
    equation short of square, so hits certify a nearby exact shift."""
    dim = model.dim
    u = np.concatenate([np.asarray(x0, dtype=float), [eta0]])

    def res(u):
        shifted = model.reeb_flow_coords(phi(u[None, :dim])[0], -u[dim])
        return model.wrapped_diff(shifted, u[:dim])

    w = res(u)
    for _ in range(iters):
        if np.linalg.norm(w) <= tol:
            return u[:dim], float(u[dim]), float(np.linalg.norm(w))
        J = np.empty((dim, dim + 1))
        for j in range(dim + 1):
            up, um = u.copy(), u.copy()
            up[j] += fd_step
            um[j] -= fd_step
            J[:, j] = (res(up) - res(um)) / (2 * fd_step)
        step, *_ = np.linalg.lstsq(J, -w, rcond=None)
        scale = 1.0
        for _ in range(8):
            trial = u + scale * step
            wt = res(trial)
            if np.linalg.norm(wt) < np.linalg.norm(w):
                u, w = trial, wt
                break
            scale *= 0.5
        else:
            break
    if np.linalg.norm(w) <= tol:
        return u[:dim], float(u[dim]), float(np.linalg.norm(w))
    return None


# -- displacement and the equal-shift-set statement ---------------------------


@dataclass
class DisplacementReport:
    displaced: bool
    margin: float
    n_inside: int
    gap: float

    def __bool__(self):
        return self.displaced


def displacement_check(model: ContactModel, f_map: PointMap, U: ClosedSetSpec,
                       n_samples: int = 500, seed: int = 0,
                       gap: float = 0.05) -> DisplacementReport:
    """True iff every sampled point of U lands strictly outside U (indicator
    margin at least ``gap``) under the time-1 map. Empty U passes vacuously."""
    X = model.sample_coords(n_samples, seed)
    if model.box_halfwidth is not None:
        X = 0.5 * X
    inside = U.contains(X)
    if not inside.any():
        return DisplacementReport(True, np.inf, 0, gap)
    Xin = X[inside]
    vals = U.rho(f_map(Xin))
    margin = float(np.min(vals))
    return DisplacementReport(margin >= gap, margin, int(inside.sum()), gap)


@dataclass
class YaronReport:
    rows: list  # (eta, n_fixed_composed, n_fixed_plain, n_symmetric_difference)
    fp_tol: float
    passed: bool
    hypotheses: dict


def yaron_check(model: ContactModel, h, f, U: ClosedSetSpec,
                etas=None, n_lattice: int = 9, fp_tol: float = 1e-5,
                flow_tolerance: float = 1e-10, support_tol: float = 1e-9,
                seed: int = 0, displacement_gap: float = 0.05) -> YaronReport:
    """Verified-hypothesis comparison of fixed-point indicator sets.

    Checks, with every hypothesis sampled rather than assumed: h strict with
    support inside the Reeb-invariant U, and the time-1 map of f displacing
    U. Then for each eta on the grid the fixed-point indicator sets of the
    back-shifted composed map and of the back-shifted f-map alone must agree
    exactly on the sample lattice.
    """
    etas = np.linspace(-2.0, 2.0, 50) if etas is None else np.asarray(etas)

    strict = is_strict(model, h, probes=512, seed=seed)
    if not strict.strict:
        raise HypothesisViolated("h_strict", f"max |dh(R)| = {strict.max_violation:.3e}")

    probe = model.sample_coords(2000, seed + 1)
    if model.box_halfwidth is not None:
        probe = 0.5 * probe
    hvals = np.abs(h.value_batch(0.0, probe))
    if not h.autonomous:
        for t in (0.25, 0.5, 0.75, 1.0):
            hvals = np.maximum(hvals, np.abs(h.value_batch(t, probe)))
    outside = ~U.contains(probe)
    if np.any(hvals[outside] > support_tol):
        worst = float(hvals[outside].max())
        raise HypothesisViolated("supp_h_in_U", f"|h| = {worst:.3e} outside U")

    ok, excursion = verify_reeb_invariance(model, U, seed=seed + 2)
    if not ok:
        raise HypothesisViolated("U_reeb_invariant", f"indicator excursion {excursion:.3e}")

    f_map = IsotopyMap(model, f, tolerance=flow_tolerance, name="f")
    disp = displacement_check(model, f_map, U, seed=seed + 3, gap=displacement_gap)
    if not disp.displaced:
        raise HypothesisViolated("f_displaces_U", f"margin {disp.margin:.3e} < gap {disp.gap}")

    h_map = IsotopyMap(model, h, tolerance=flow_tolerance, name="h")
    lattice = _seed_grid(model, NewtonConfig(grid_per_axis=n_lattice))
    Phi_f = f_map(lattice)
    Phi_hf = h_map(Phi_f)

    rows = []
    passed = True
    for eta in etas:
        d_plain = model.distance(model.reeb_flow_coords(Phi_f, -eta), lattice)
        d_comp = model.distance(model.reeb_flow_coords(Phi_hf, -eta), lattice)
        fix_plain = d_plain <= fp_tol
        fix_comp = d_comp <= fp_tol
        sym = int(np.sum(fix_plain ^ fix_comp))
        passed &= sym == 0
        rows.append((float(eta), int(fix_comp.sum()), int(fix_plain.sum()), sym))

    return YaronReport(rows, fp_tol, passed, {
        "h_strict_max_violation": strict.max_violation,
        "support_outside_max": float(hvals[outside].max()) if outside.any() else 0.0,
        "reeb_invariance_excursion": excursion,
        "displacement_margin": disp.margin,
    })
