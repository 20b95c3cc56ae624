"""Adaptive Dormand-Prince 5(4) integration on flat state vectors.

A single lean stepper backs every flow in the package: it supports forced
nodes (capture times and integrand breakpoints, hit exactly), FSAL reuse,
and an optional per-step validator for domain checks. State is a plain
ndarray so callers can batch many trajectories into one system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepFailure

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_ERR = _B5 - _B4


@dataclass
class StepStats:
    n_accepted: int = 0
    n_rejected: int = 0
    n_evals: int = 0

    def merge(self, other: "StepStats") -> None:
        self.n_accepted += other.n_accepted
        self.n_rejected += other.n_rejected
        self.n_evals += other.n_evals


@dataclass
class IntegrationResult:
    ts: np.ndarray
    ys: np.ndarray  # (n_nodes, n_state), rows aligned with ts
    stats: StepStats = field(default_factory=StepStats)

    def at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.ts - t)))
        if abs(self.ts[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not a recorded node")
        return self.ys[idx]


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, span, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    h1 = (0.01 / max(d1, d2)) ** 0.2 if max(d1, d2) > 1e-15 else max(1e-6, h0 * 1e-3)
    return min(100 * h0, h1, span)


def integrate(f, t0: float, t1: float, y0: np.ndarray, rtol: float = 1e-10,
              atol: float = 1e-12, nodes=(), record: bool = True,
              max_steps: int = 100_000, validator=None) -> IntegrationResult:
    """Integrate y' = f(t, y) from t0 to t1 (t1 >= t0).

    ``nodes`` are interior times hit exactly (captures and breakpoints); the
    FSAL stage is dropped at nodes so piecewise-smooth right sides restart
    cleanly. With ``record`` False only t0, the nodes and t1 are returned.
    ``validator(t, y)`` may raise to abort (e.g. a domain escape).
    """
    y = np.asarray(y0, dtype=float).copy()
    span = t1 - t0
    stats = StepStats()
    if span == 0.0:
        return IntegrationResult(np.array([t0]), y[None, :].copy(), stats)
    if span < 0.0:
        raise ValueError("integrate requires t1 >= t0; reverse time in the caller")

    forced = sorted({float(u) for u in nodes if t0 < u < t1} | {t1})
    ts = [t0]
    ys = [y.copy()]
    t = t0
    k1 = f(t, y)
    stats.n_evals += 1
    h = _initial_step(f, t0, y, k1, span, rtol, atol)
    stats.n_evals += 1
    next_forced = 0
    K = np.empty((7,) + y.shape)
    min_step = 1e-13 * span

    while t < t1 - 1e-14 * span:
        if stats.n_accepted + stats.n_rejected > max_steps:
            raise StepFailure(f"exceeded {max_steps} steps at t={t:.6g}")
        target = forced[next_forced]
        h = min(h, target - t)
        at_node = t + h >= target - 1e-14 * span
        if at_node:
            h = target - t

        K[0] = k1
        for i in range(1, 7):
            yi = y + h * np.tensordot(_A[i], K[:i], axes=(0, 0))
            K[i] = f(t + _C[i] * h, yi)
        stats.n_evals += 6
        y_new = y + h * np.tensordot(_B5, K, axes=(0, 0))
        err = h * np.tensordot(_ERR, K, axes=(0, 0))
        enorm = _error_norm(err, y, y_new, rtol, atol)

        if enorm <= 1.0:
            t = target if at_node else t + h
            y = y_new
            if validator is not None:
                validator(t, y)
            stats.n_accepted += 1
            hit_node = at_node and abs(t - target) <= 1e-14 * max(1.0, abs(target))
            if record or hit_node or t >= t1 - 1e-14 * span:
                ts.append(t)
                ys.append(y.copy())
            if hit_node:
                next_forced = min(next_forced + 1, len(forced) - 1)
                k1 = f(t, y)  # restart FSAL across the node
                stats.n_evals += 1
            else:
                k1 = K[6]
            factor = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
            h = h * factor
        else:
            stats.n_rejected += 1
            h = h * max(0.1, 0.9 * enorm ** -0.2)
            if h < min_step:
                raise StepFailure(f"step size underflow at t={t:.6g} (err norm {enorm:.3g})")

    return IntegrationResult(np.asarray(ts), np.asarray(ys), stats)
