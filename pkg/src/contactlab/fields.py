"""Time-dependent Hamiltonian fields on model manifolds.

A :class:`TimeHamiltonian` exposes ``value`` and ``differential`` at (t, x),
with batch variants over a leading point axis. Differentials are exact where
a closed form is available (trigonometric polynomials, bump envelopes,
algebraic combinations) and otherwise default to 4th-order central finite
differences with step 1e-4.

The module also provides the seeded generator families used by the
verification suites: trigonometric polynomials on the compact models and
compactly supported bump fields on the boxed R3 model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import ContactModel, R3_STANDARD, S1_CIRCLE, T3_UNIT_COTANGENT


class TimeHamiltonian:
    """Base class: a scalar field h_t(x) on [0,1] x M.

    Subclasses implement ``value_batch`` (vectorized over points) and may
    override ``differential_batch`` with a closed form. ``breakpoints`` lists
    interior times where t-smoothness fails; integrators restart there.
    """

    autonomous: bool = False
    time_domain: tuple[float, float] = (0.0, 1.0)
    breakpoints: tuple[float, ...] = ()
    fd_step: float = 1e-4
    name: str = ""

    def value_batch(self, t: float, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, t: float, x) -> float:
        X = np.atleast_2d(np.asarray(getattr(x, "coords", x), dtype=float))
        return float(self.value_batch(t, X)[0])

    def differential_batch(self, t: float, X: np.ndarray) -> np.ndarray:
        return _fd_differential(self.value_batch, t, np.asarray(X, dtype=float), self.fd_step)

    def differential(self, t: float, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(getattr(x, "coords", x), dtype=float))
        return self.differential_batch(t, X)[0]

    def value_and_differential_batch(self, t, X):
        return self.value_batch(t, X), self.differential_batch(t, X)

    def segment_field(self, lo: float, hi: float) -> "TimeHamiltonian":
        """View of this field on a smooth time segment [lo, hi].

        Piecewise-defined fields override this to pin the branch, so an
        integrator evaluating at a junction time stays on its segment's side.
        """
        return self

    def lipschitz_bound(self) -> float | None:
        """Spatial Lipschitz constant when declarable, else None."""
        return None

    # algebra ------------------------------------------------------------

    def __add__(self, other):
        other = as_field(other)
        return SumField((self, other))

    def __rmul__(self, s):
        return ScaledField(float(s), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return ScaledField(float(other), self)
        return PointwiseProductField(self, other)


def as_field(h) -> TimeHamiltonian:
    if isinstance(h, TimeHamiltonian):
        return h
    if np.isscalar(h):
        return ConstantField(float(h))
    raise TypeError(f"cannot interpret {h!r} as a Hamiltonian field")


# 4th-order central stencil: (-f2 + 8 f1 - 8 fm1 + fm2) / (12 d)
_FD4_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_FD4_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def _fd_differential(value_batch, t, X, step):
    X = np.atleast_2d(X)
    n, dim = X.shape
    pts = np.repeat(X[:, None, None, :], dim, axis=1)
    pts = np.repeat(pts, 4, axis=2)
    for j in range(dim):
        pts[:, j, :, j] += step * _FD4_OFFSETS
    vals = value_batch(t, pts.reshape(-1, dim)).reshape(n, dim, 4)
    return vals @ _FD4_WEIGHTS / step


@dataclass
class ConstantField(TimeHamiltonian):
    c: float = 0.0
    autonomous = True

    def value_batch(self, t, X):
        X = np.atleast_2d(X)
        return np.full(X.shape[0], self.c)

    def differential_batch(self, t, X):
        X = np.atleast_2d(X)
        return np.zeros_like(X)

    def lipschitz_bound(self):
        return 0.0


class CallableField(TimeHamiltonian):
    """Field from a vectorized callable fn(t, X) -> (N,).

    ``dfn(t, X) -> (N, dim)`` supplies an exact differential when available.
    """

    def __init__(self, fn, dfn=None, autonomous=False, name="", breakpoints=(),
                 lipschitz=None):
        self._fn = fn
        self._dfn = dfn
        self.autonomous = autonomous
        self.name = name
        self.breakpoints = tuple(breakpoints)
        self._lip = lipschitz

    def value_batch(self, t, X):
        return np.asarray(self._fn(t, np.atleast_2d(X)), dtype=float)

    def differential_batch(self, t, X):
        if self._dfn is None:
            return super().differential_batch(t, X)
        return np.asarray(self._dfn(t, np.atleast_2d(X)), dtype=float)

    def lipschitz_bound(self):
        return self._lip


class TrigPolyField(TimeHamiltonian):
    """Trigonometric polynomial with an optional smooth time envelope.

    value(t, x) = c0 + sum_j (a0_j + a1_j e(t)) cos(k_j . x)
                       + (b0_j + b1_j e(t)) sin(k_j . x)

    with e(t) = sin(pi t). Autonomous iff the modulated parts vanish.
    Wavevectors are integer rows so the field is periodic on the tori.
    """

    def __init__(self, wavevectors, a0, b0, a1=None, b1=None, const=0.0, name=""):
        self.K = np.atleast_2d(np.asarray(wavevectors, dtype=float))
        m = self.K.shape[0]
        self.a0 = np.zeros(m) + np.asarray(a0, dtype=float)
        self.b0 = np.zeros(m) + np.asarray(b0, dtype=float)
        self.a1 = np.zeros(m) if a1 is None else np.zeros(m) + np.asarray(a1, dtype=float)
        self.b1 = np.zeros(m) if b1 is None else np.zeros(m) + np.asarray(b1, dtype=float)
        self.const = float(const)
        self.autonomous = not (self.a1.any() or self.b1.any())
        self.name = name

    def _coeffs(self, t):
        if self.autonomous:
            return self.a0, self.b0
        e = np.sin(np.pi * t)
        return self.a0 + e * self.a1, self.b0 + e * self.b1

    def value_batch(self, t, X):
        X = np.atleast_2d(X)
        a, b = self._coeffs(t)
        ph = X @ self.K.T
        return self.const + np.cos(ph) @ a + np.sin(ph) @ b

    def differential_batch(self, t, X):
        X = np.atleast_2d(X)
        a, b = self._coeffs(t)
        ph = X @ self.K.T
        # d/dx_i = sum_j (-a_j sin + b_j cos)(ph_j) K_ji
        return (-np.sin(ph) * a + np.cos(ph) * b) @ self.K

    def lipschitz_bound(self):
        amp = np.abs(self.a0) + np.abs(self.a1) + np.abs(self.b0) + np.abs(self.b1)
        return float(np.sum(amp * np.linalg.norm(self.K, axis=1)))


@dataclass
class SumField(TimeHamiltonian):
    terms: tuple

    def __post_init__(self):
        self.autonomous = all(f.autonomous for f in self.terms)
        bp = sorted({b for f in self.terms for b in f.breakpoints})
        self.breakpoints = tuple(bp)

    def value_batch(self, t, X):
        return sum(f.value_batch(t, X) for f in self.terms)

    def differential_batch(self, t, X):
        return sum(f.differential_batch(t, X) for f in self.terms)

    def lipschitz_bound(self):
        bounds = [f.lipschitz_bound() for f in self.terms]
        if any(b is None for b in bounds):
            return None
        return float(sum(bounds))


@dataclass
class ScaledField(TimeHamiltonian):
    scale: float
    inner: TimeHamiltonian

    def __post_init__(self):
        self.autonomous = self.inner.autonomous
        self.breakpoints = self.inner.breakpoints

    def value_batch(self, t, X):
        return self.scale * self.inner.value_batch(t, X)

    def differential_batch(self, t, X):
        return self.scale * self.inner.differential_batch(t, X)

    def lipschitz_bound(self):
        b = self.inner.lipschitz_bound()
        return None if b is None else abs(self.scale) * b


@dataclass
class PointwiseProductField(TimeHamiltonian):
    left: TimeHamiltonian
    right: TimeHamiltonian

    def __post_init__(self):
        self.autonomous = self.left.autonomous and self.right.autonomous
        self.breakpoints = tuple(sorted(set(self.left.breakpoints) | set(self.right.breakpoints)))

    def value_batch(self, t, X):
        return self.left.value_batch(t, X) * self.right.value_batch(t, X)

    def differential_batch(self, t, X):
        u = self.left.value_batch(t, X)
        v = self.right.value_batch(t, X)
        du = self.left.differential_batch(t, X)
        dv = self.right.differential_batch(t, X)
        return u[:, None] * dv + v[:, None] * du


# -- smooth bump machinery (C-infinity, closed-form derivative) ------------


def _psi(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _psi_prime(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    p, q = _psi(u), _psi(1.0 - u)
    return p / (p + q + 1e-300)


def smooth_step_prime(u):
    u = np.asarray(u, dtype=float)
    p, q = _psi(u), _psi(1.0 - u)
    dp, dq = _psi_prime(u), -_psi_prime(1.0 - u)
    s = p + q + 1e-300
    return (dp * q - p * dq) / s**2


def plateau(u, a, b, c, d):
    """Smooth plateau: 0 outside [a,d], 1 on [b,c]."""
    u = np.asarray(u, dtype=float)
    up = smooth_step((u - a) / (b - a))
    down = smooth_step((d - u) / (d - c))
    return up * down


def plateau_prime(u, a, b, c, d):
    u = np.asarray(u, dtype=float)
    up = smooth_step((u - a) / (b - a))
    down = smooth_step((d - u) / (d - c))
    dup = smooth_step_prime((u - a) / (b - a)) / (b - a)
    ddown = -smooth_step_prime((d - u) / (d - c)) / (d - c)
    return dup * down + up * ddown


class PlateauEnvelopeField(TimeHamiltonian):
    """Product of per-coordinate plateau bumps; identically 1 on the core box.

    ``windows[i]`` is (a, b, c, d) for coordinate i, or None to leave that
    coordinate free (no dependence, preserving strictness in it).
    """

    autonomous = True

    def __init__(self, windows, name="envelope"):
        self.windows = tuple(windows)
        self.name = name

    def value_batch(self, t, X):
        X = np.atleast_2d(X)
        out = np.ones(X.shape[0])
        for i, w in enumerate(self.windows):
            if w is not None:
                out = out * plateau(X[:, i], *w)
        return out

    def differential_batch(self, t, X):
        X = np.atleast_2d(X)
        factors = []
        primes = []
        for i, w in enumerate(self.windows):
            if w is None:
                factors.append(np.ones(X.shape[0]))
                primes.append(np.zeros(X.shape[0]))
            else:
                factors.append(plateau(X[:, i], *w))
                primes.append(plateau_prime(X[:, i], *w))
        out = np.zeros_like(X)
        total = np.prod(np.stack(factors), axis=0)
        for i, w in enumerate(self.windows):
            if w is None:
                continue
            rest = np.where(factors[i] != 0.0, total / np.where(factors[i] == 0.0, 1.0, factors[i]), 0.0)
            # recompute cleanly where the factor vanishes
            mask = factors[i] == 0.0
            if mask.any():
                others = np.ones(mask.sum())
                for j, wj in enumerate(self.windows):
                    if j != i and wj is not None:
                        others = others * factors[j][mask]
                rest[mask] = others
            out[:, i] = primes[i] * rest
        return out


class RadialBumpField(TimeHamiltonian):
    """Bump of the planar radius r^2 = x^2 + y^2 on R3: amp * p(r^2).

    z-independent, hence strict for the standard form; support is the solid
    cylinder r^2 <= d.
    """

    autonomous = True

    def __init__(self, amplitude=1.0, a=-1.0, b=0.0, c=0.25, d=1.0, name="radial_bump"):
        # p rises before 0 (irrelevant for r^2 >= 0), is 1 on [b=0?, c], dies at d
        self.amplitude = float(amplitude)
        self.window = (a, b, c, d)
        self.name = name

    def value_batch(self, t, X):
        X = np.atleast_2d(X)
        r2 = X[:, 0] ** 2 + X[:, 1] ** 2
        return self.amplitude * plateau(r2, *self.window)

    def differential_batch(self, t, X):
        X = np.atleast_2d(X)
        r2 = X[:, 0] ** 2 + X[:, 1] ** 2
        dp = self.amplitude * plateau_prime(r2, *self.window)
        out = np.zeros_like(X)
        out[:, 0] = dp * 2.0 * X[:, 0]
        out[:, 1] = dp * 2.0 * X[:, 1]
        return out


# -- seeded generator families ---------------------------------------------


def _wavevector_basis(dim: int, degree: int, axes: tuple[int, ...] | None = None) -> np.ndarray:
    """All nonzero integer wavevectors with sup-norm <= degree supported on
    the given axes, one representative per {k, -k} pair."""
    if axes is None:
        axes = tuple(range(dim))
    ranges = [range(-degree, degree + 1) if i in axes else (0,) for i in range(dim)]
    vecs = []
    for k in np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, dim):
        if not k.any():
            continue
        first = next(v for v in k if v != 0)
        if first > 0:
            vecs.append(k)
    return np.asarray(vecs, dtype=float)


def random_trig_field(model: ContactModel, rng: np.random.Generator, degree: int = 2,
                      amplitude: float = 0.4, strict: bool = False,
                      time_dependent: bool = False, name: str = "") -> TimeHamiltonian:
    """Seeded random smooth field: trig polynomial on T3/S1, bump-enveloped
    trig polynomial on boxed R3. ``strict=True`` restricts to fields with
    vanishing Reeb derivative (theta-only on T3, constants on S1,
    z-independent bumps on R3)."""
    if model.name == S1_CIRCLE:
        if strict:
            return ConstantField(float(rng.uniform(-amplitude, amplitude)))
        K = _wavevector_basis(1, degree)
        return _random_trig(K, rng, amplitude, time_dependent, name)
    if model.name == T3_UNIT_COTANGENT:
        axes = (2,) if strict else None
        K = _wavevector_basis(3, degree, axes)
        return _random_trig(K, rng, amplitude, time_dependent, name)
    if model.name == R3_STANDARD:
        return _random_r3_bump(model, rng, degree, amplitude, strict, time_dependent, name)
    raise ValueError(f"no generator family for model {model.name}")


def _random_trig(K, rng, amplitude, time_dependent, name):
    m = K.shape[0]
    decay = 1.0 / (1.0 + np.linalg.norm(K, axis=1) ** 2)
    a0 = rng.uniform(-1, 1, m) * decay
    b0 = rng.uniform(-1, 1, m) * decay
    scale = amplitude / max(np.sum(np.abs(a0)) + np.sum(np.abs(b0)), 1e-12)
    a1 = b1 = None
    if time_dependent:
        a1 = rng.uniform(-0.5, 0.5, m) * decay * scale
        b1 = rng.uniform(-0.5, 0.5, m) * decay * scale
    return TrigPolyField(K, a0 * scale, b0 * scale, a1, b1,
                         const=float(rng.uniform(-amplitude, amplitude)), name=name)


def _random_r3_bump(model, rng, degree, amplitude, strict, time_dependent, name):
    hw = model.box_halfwidth
    core = 0.3 * hw
    edge = 0.55 * hw
    win = (-edge, -core, core, edge)
    if strict:
        envelope = PlateauEnvelopeField((win, win, None))
        axes = (0, 1)
    else:
        envelope = PlateauEnvelopeField((win, win, win))
        axes = (0, 1, 2)
    # waves scaled to the box so the trig factor is O(1)-periodic across it
    K = _wavevector_basis(3, degree, axes) * (np.pi / hw)
    trig = _random_trig(K, rng, amplitude, time_dependent, "")
    out = PointwiseProductField(envelope, trig)
    out.name = name
    return out


def displacing_translation_field(model: ContactModel, distance: float = 3.0,
                                 core: float = 8.0, support: float = 10.0) -> TimeHamiltonian:
    """Compactly supported generator whose time-1 map translates the core
    region of the R3 box by ``distance`` along x.

    The field is ``distance * y`` times a plateau in each coordinate; on the
    plateau the flow is the exact translation, and the support stays inside
    the declared box.
    """
    if model.name != R3_STANDARD:
        raise ValueError("the translation displacer lives on the boxed R3 model")
    if support >= model.box_halfwidth:
        raise ValueError("support must sit inside the declared box")
    win = (-support, -core, core, support)

    def fn(t, X):
        X = np.atleast_2d(X)
        p = plateau(X[:, 0], *win) * plateau(X[:, 1], *win) * plateau(X[:, 2], *win)
        return distance * X[:, 1] * p

    def dfn(t, X):
        X = np.atleast_2d(X)
        px, py, pz = (plateau(X[:, i], *win) for i in range(3))
        dpx, dpy, dpz = (plateau_prime(X[:, i], *win) for i in range(3))
        y = X[:, 1]
        out = np.empty_like(X)
        out[:, 0] = distance * y * dpx * py * pz
        out[:, 1] = distance * (py + y * dpy) * px * pz
        out[:, 2] = distance * y * px * py * dpz
        return out

    return CallableField(fn, dfn, autonomous=True, name=f"translate_x({distance:g})")


def spike_field(model: ContactModel) -> TimeHamiltonian:
    """Strict field concentrated near theta = 0: ((1 + cos(theta))/2)^4.

    Range [0, 1], spatial mean 0.2734375; useful for exposing functionals
    that under-weight localized mass.
    """
    if model.name not in (S1_CIRCLE, T3_UNIT_COTANGENT):
        raise ValueError("spike generator is defined on the periodic models")
    axis = 0 if model.name == S1_CIRCLE else 2
    K = np.zeros((4, model.dim))
    K[:, axis] = [1, 2, 3, 4]
    # ((1+cos)/2)^4 = 35/128 + (7/16)cos + (7/32)cos2 + (1/16)cos3 + (1/128)cos4
    a0 = np.array([7 / 16, 7 / 32, 1 / 16, 1 / 128])
    return TrigPolyField(K, a0, np.zeros(4), const=35 / 128, name="spike")
