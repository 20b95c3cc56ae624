"""Batched verification drivers for the dynamics kernel.

The acceptance-scale suites (dozens of Hamiltonian pairs per model) integrate
all pairs simultaneously: same-family generator fields are stacked into
coefficient banks so one vectorized evaluation serves every pair, and the
composition-product flows batch their inverse-flow stencils into a single
reversed integration per right-hand-side call. Semantics match the per-pair
public path (see the consistency test in the suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (IsotopySpec, _solve_field_batch, commutes_with_reeb,
                       flow_batch, is_strict)
from .fields import (PlateauEnvelopeField, PointwiseProductField, TimeHamiltonian,
                     TrigPolyField, random_trig_field)
from .integrators import StepStats, integrate
from .models import ContactModel


# -- coefficient banks -------------------------------------------------------


class LoopBank:
    """Fallback: evaluate P heterogeneous fields one by one."""

    def __init__(self, fields):
        self.fields = list(fields)

    def value(self, t, X):
        return np.stack([f.value_batch(t, X[p]) for p, f in enumerate(self.fields)])

    def value_and_diff(self, t, X):
        vals, diffs = [], []
        for p, f in enumerate(self.fields):
            v, d = f.value_and_differential_batch(t, X[p])
            vals.append(v)
            diffs.append(d)
        return np.stack(vals), np.stack(diffs)


class TrigBank:
    """P trigonometric-polynomial fields over one shared wavevector matrix."""

    def __init__(self, K, A0, B0, A1, B1, const):
        self.K, self.A0, self.B0, self.A1, self.B1 = K, A0, B0, A1, B1
        self.const = const
        self.modulated = bool(A1.any() or B1.any())

    @classmethod
    def from_fields(cls, fields):
        if not all(isinstance(f, TrigPolyField) for f in fields):
            return None
        K = fields[0].K
        if not all(f.K.shape == K.shape and np.array_equal(f.K, K) for f in fields):
            return None
        return cls(K,
                   np.stack([f.a0 for f in fields]),
                   np.stack([f.b0 for f in fields]),
                   np.stack([f.a1 for f in fields]),
                   np.stack([f.b1 for f in fields]),
                   np.array([f.const for f in fields]))

    def _coeffs(self, t):
        if not self.modulated:
            return self.A0, self.B0
        e = np.sin(np.pi * t)
        return self.A0 + e * self.A1, self.B0 + e * self.B1

    def value(self, t, X):
        a, b = self._coeffs(t)
        ph = X @ self.K.T  # (P,S,m)
        return self.const[:, None] + np.einsum("psm,pm->ps", np.cos(ph), a) \
            + np.einsum("psm,pm->ps", np.sin(ph), b)

    def value_and_diff(self, t, X):
        a, b = self._coeffs(t)
        ph = X @ self.K.T
        cos, sin = np.cos(ph), np.sin(ph)
        val = self.const[:, None] + np.einsum("psm,pm->ps", cos, a) \
            + np.einsum("psm,pm->ps", sin, b)
        weights = -sin * a[:, None, :] + cos * b[:, None, :]
        return val, weights @ self.K


class ProductBank:
    """Shared envelope times per-pair trig factor (the boxed-R3 family)."""

    def __init__(self, envelope, trig):
        self.envelope = envelope
        self.trig = trig

    @classmethod
    def from_fields(cls, fields):
        if not all(isinstance(f, PointwiseProductField) for f in fields):
            return None
        envs = [f.left for f in fields]
        if not all(isinstance(e, PlateauEnvelopeField) and e.windows == envs[0].windows
                   for e in envs):
            return None
        trig = TrigBank.from_fields([f.right for f in fields])
        return None if trig is None else cls(envs[0], trig)

    def value(self, t, X):
        P, S, dim = X.shape
        u = self.envelope.value_batch(t, X.reshape(-1, dim)).reshape(P, S)
        return u * self.trig.value(t, X)

    def value_and_diff(self, t, X):
        P, S, dim = X.shape
        flat = X.reshape(-1, dim)
        u = self.envelope.value_batch(t, flat).reshape(P, S)
        du = self.envelope.differential_batch(t, flat).reshape(P, S, dim)
        v, dv = self.trig.value_and_diff(t, X)
        return u * v, u[..., None] * dv + v[..., None] * du


def make_bank(fields):
    for builder in (TrigBank.from_fields, ProductBank.from_fields):
        bank = builder(fields)
        if bank is not None:
            return bank
    return LoopBank(fields)


# -- batched flows ------------------------------------------------------------


def _bank_rhs(model, bank, sigma, sign, n_pairs, stencil, dim):
    def rhs(u, y):
        st = y.reshape(n_pairs, stencil, dim + 1)
        X = st[..., :dim]
        val, diff = bank.value_and_diff(sigma(u), X)
        v, dhR = _solve_field_batch(model, val.ravel(), diff.reshape(-1, dim),
                                    X.reshape(-1, dim))
        out = np.empty_like(st)
        out[..., :dim] = sign * v.reshape(n_pairs, stencil, dim)
        out[..., dim] = -sign * dhR.reshape(n_pairs, stencil)
        return out.ravel()
    return rhs


def bank_flow(model, bank, X0, t1, captures=(), rtol=1e-10):
    """Forward flow of P pairs, one trajectory per pair. Returns the
    recorded (capture and end) coordinates and log-conformal factors."""
    P, dim = X0.shape
    y0 = np.concatenate([X0, np.zeros((P, 1))], axis=1).ravel()
    rhs = _bank_rhs(model, _Expand(bank), lambda u: u, +1.0, P, 1, dim)
    res = integrate(rhs, 0.0, t1, y0, rtol=rtol, atol=rtol * 1e-2,
                    nodes=[c for c in captures if 0.0 < c < t1], record=False)
    ys = res.ys.reshape(len(res.ts), P, dim + 1)
    return res.ts, ys[..., :dim], ys[..., dim], res.stats


class _Expand:
    """Adapter: present (P, dim) points to a bank as (P, 1, dim)."""

    def __init__(self, bank):
        self.bank = bank

    def value_and_diff(self, t, X):
        v, d = self.bank.value_and_diff(t, X[:, 0, :][:, None, :])
        return v, d


def bank_sharp_flow(model, gbank, hbank, X0, t1, captures=(), outer_tol=1e-8,
                    inner_tol=1e-9, fd_step=1e-5, max_steps=20_000):
    """Flow of the composition products (g_p # h_p), all pairs at once.

    Each outer right-hand-side evaluation reverse-integrates the finite
    difference stencil of every pair through g in one batched system, giving
    the product's value and spatial differential simultaneously.
    """
    P, dim = X0.shape
    S = 2 * dim + 1
    stats = StepStats()

    def product_value_grad(t, Xc):
        stencil = np.repeat(Xc[:, None, :], S, axis=1)
        for j in range(dim):
            stencil[:, 1 + j, j] += fd_step
            stencil[:, 1 + dim + j, j] -= fd_step
        if t <= 1e-15:
            vg, dg = gbank.value_and_diff(t, Xc[:, None, :])
            vh, dh = hbank.value_and_diff(t, Xc[:, None, :])
            return (vg + vh)[:, 0], (dg + dh)[:, 0]
        z0 = np.concatenate([stencil, np.zeros((P, S, 1))], axis=2).ravel()
        inner_rhs = _bank_rhs(model, gbank, lambda u: t - u, -1.0, P, S, dim)
        inner = integrate(inner_rhs, 0.0, t, z0, rtol=inner_tol,
                          atol=inner_tol * 1e-2, record=False,
                          max_steps=max_steps)
        stats.merge(inner.stats)
        zt = inner.ys[-1].reshape(P, S, dim + 1)
        Y, ell = zt[..., :dim], zt[..., dim]
        vals = gbank.value(t, stencil) + np.exp(-ell) * hbank.value(t, Y)
        grad = (vals[:, 1:1 + dim] - vals[:, 1 + dim:]) / (2.0 * fd_step)
        return vals[:, 0], grad

    def outer_rhs(t, y):
        st = y.reshape(P, dim + 1)
        val, grad = product_value_grad(t, st[:, :dim].copy())
        v, dhR = _solve_field_batch(model, val, grad, st[:, :dim])
        out = np.empty_like(st)
        out[:, :dim] = v
        out[:, dim] = -dhR
        return out.ravel()

    y0 = np.concatenate([X0, np.zeros((P, 1))], axis=1).ravel()
    res = integrate(outer_rhs, 0.0, t1, y0, rtol=outer_tol, atol=outer_tol * 1e-2,
                    nodes=[c for c in captures if 0.0 < c < t1], record=False)
    stats.merge(res.stats)
    ys = res.ys.reshape(len(res.ts), P, dim + 1)
    return res.ts, ys[..., :dim], ys[..., dim], stats


# -- suites -------------------------------------------------------------------


@dataclass
class SuiteRow:
    label: str
    quantity: str
    value: float
    tol: float
    passed: bool


@dataclass
class SuiteReport:
    name: str
    model: str
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst(self) -> float:
        return max((r.value for r in self.rows), default=0.0)


def generate_pairs(model: ContactModel, n_pairs: int, seed: int, degree=2,
                   amplitude=0.4, time_dependent=True):
    rng = np.random.default_rng(seed)
    gs, hs = [], []
    for _ in range(n_pairs):
        gs.append(random_trig_field(model, rng, degree, amplitude,
                                    time_dependent=time_dependent))
        hs.append(random_trig_field(model, rng, degree, amplitude,
                                    time_dependent=time_dependent))
    return gs, hs


def _start_points(model, n, seed):
    X = model.sample_coords(n, seed + 99)
    if model.box_halfwidth is not None:
        X = 0.35 * X  # leave room: product flows must stay inside the box
    return X


def group_law_suite(model: ContactModel, n_pairs: int = 50, seed: int = 0,
                    times=(0.25, 0.5, 1.0), tol: float = 1e-5,
                    outer_tol=1e-8, inner_tol=1e-9, rhs_tol=1e-10,
                    degree=2, amplitude=0.4) -> SuiteReport:
    """Endpoint check of the composition law: the product flow against the
    composed flows, at the requested intermediate times."""
    gs, hs = generate_pairs(model, n_pairs, seed, degree, amplitude)
    gbank, hbank = make_bank(gs), make_bank(hs)
    X0 = _start_points(model, n_pairs, seed)
    times = tuple(sorted(times))
    t1 = times[-1]

    ts, coords, _, _ = bank_sharp_flow(model, gbank, hbank, X0, t1,
                                       captures=times[:-1], outer_tol=outer_tol,
                                       inner_tol=inner_tol)
    # composed side: through h first, then g for the same duration
    ts_h, coords_h, _, _ = bank_flow(model, hbank, X0, t1, captures=times[:-1],
                                     rtol=rhs_tol)
    report = SuiteReport("group_law", model.name)
    for t in times:
        i_lhs = int(np.argmin(np.abs(ts - t)))
        i_mid = int(np.argmin(np.abs(ts_h - t)))
        mids = coords_h[i_mid]
        _, gc, _, _ = bank_flow(model, gbank, mids, t, rtol=rhs_tol)
        dist = model.distance(coords[i_lhs], gc[-1])
        for p in range(n_pairs):
            report.rows.append(SuiteRow(f"pair{p:03d}", f"endpoint_dist_t={t}",
                                        float(dist[p]), tol, bool(dist[p] <= tol)))
    return report


def conformal_suite(model: ContactModel, n_fields: int = 10, probes_per_field: int = 100,
                    seed: int = 0, t1: float = 1.0, rel_tol: float = 1e-4,
                    strict_kappa_tol: float = 1e-8, flow_tol=1e-10,
                    fd_step=1e-4) -> SuiteReport:
    """Finite-difference pushforward check of the conformal identity.

    For each probe point the full pulled-back covector alpha(D phi .) is
    assembled column by column and compared against kappa alpha; strict
    fields additionally pin kappa to 1.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("conformal", model.name)
    dim = model.dim
    for k in range(n_fields):
        strict = k % 2 == 1
        h = random_trig_field(model, rng, 2, 0.4, strict=strict,
                              time_dependent=not strict)
        X = _start_points(model, probes_per_field, seed + 7 * k + 1)
        S = 2 * dim + 1
        stencil = np.repeat(X[:, None, :], S, axis=1)
        for j in range(dim):
            stencil[:, 1 + j, j] += fd_step
            stencil[:, 1 + dim + j, j] -= fd_step
        spec = IsotopySpec(h, model, flow_tol)
        batch = flow_batch(spec, stencil.reshape(-1, dim), t1)
        end = batch.coords[-1].reshape(probes_per_field, S, dim)
        kappa = np.exp(batch.log_kappa[-1].reshape(probes_per_field, S)[:, 0])
        jac = (end[:, 1:1 + dim] - end[:, 1 + dim:]) / (2.0 * fd_step)  # (N,dim,dim) rows=d/dx_j
        al_end = model.alpha(end[:, 0])
        pulled = np.einsum("ni,nji->nj", al_end, jac)
        target = kappa[:, None] * model.alpha(X)
        rel = np.linalg.norm(pulled - target, axis=1) / np.linalg.norm(model.alpha(X), axis=1)
        report.rows.append(SuiteRow(h.name or f"field{k:02d}", "pullback_rel_err",
                                    float(rel.max()), rel_tol,
                                    bool(rel.max() <= rel_tol)))
        if strict:
            dev = float(np.abs(kappa - 1.0).max())
            report.rows.append(SuiteRow(h.name or f"field{k:02d}", "strict_kappa_dev",
                                        dev, strict_kappa_tol, dev <= strict_kappa_tol))
    return report


def strictness_suite(model: ContactModel, n_fields: int = 50, seed: int = 0,
                     tol: float = 1e-6, flow_tol=1e-10) -> SuiteReport:
    """Agreement of the pointwise strictness test with Reeb-flow commutation."""
    rng = np.random.default_rng(seed)
    report = SuiteReport("strictness", model.name)
    for k in range(n_fields):
        strict = k % 2 == 0
        h = random_trig_field(model, rng, 2, 0.35, strict=strict)
        a = is_strict(model, h, probes=256, seed=seed + k)
        b = commutes_with_reeb(model, h, s_samples=4, n_points=12, seed=seed + k,
                               tol=tol, flow_tolerance=flow_tol)
        agree = a.strict == b.commutes
        report.rows.append(SuiteRow(h.name or f"field{k:02d}",
                                    f"strict={a.strict},commutes={b.commutes}",
                                    0.0 if agree else 1.0, 0.5, agree))
    return report
