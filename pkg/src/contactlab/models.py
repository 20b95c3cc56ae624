"""Chart-based model contact manifolds.

Three explicit models are provided, each covered by a single global chart
with optional periodic identifications:

* ``R3_STANDARD``     coords (x, y, z), form dz - y dx, non-compact (boxed)
* ``T3_UNIT_COTANGENT`` coords (q1, q2, theta) mod 2*pi,
                      form cos(theta) dq1 + sin(theta) dq2
* ``S1_CIRCLE``       coord theta mod 2*pi, form dtheta

All geometric evaluations are closed-form, vectorized over a leading batch
axis, and pure, so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownModelError

TWO_PI = 2.0 * np.pi

R3_STANDARD = "R3_STANDARD"
T3_UNIT_COTANGENT = "T3_UNIT_COTANGENT"
S1_CIRCLE = "S1_CIRCLE"

MODEL_NAMES = (R3_STANDARD, T3_UNIT_COTANGENT, S1_CIRCLE)


@dataclass(frozen=True)
class ChartPoint:
    """A point of a model manifold in chart coordinates.

    Periodic coordinates are stored in their canonical fundamental domain
    [0, 2*pi); construction goes through :meth:`ContactModel.point` which
    canonicalizes.
    """

    coords: np.ndarray
    model_id: str

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)


def _as_coords(x) -> np.ndarray:
    if isinstance(x, ChartPoint):
        return x.coords
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ContactModel:
    """A model contact manifold with closed-form structure tensors.

    The callable fields accept arrays of shape (..., dim) and return arrays
    with matching batch axes. ``periodic_mask`` marks chart coordinates that
    wrap mod 2*pi. ``box_halfwidth`` is the declared compact box for the
    non-compact model (None on compact models); flows and extremal
    functionals on R3 are restricted to it.
    """

    name: str
    dim: int
    alpha: Callable[[np.ndarray], np.ndarray]
    dalpha: Callable[[np.ndarray], np.ndarray]
    reeb: Callable[[np.ndarray], np.ndarray]
    periodic_mask: np.ndarray
    box_halfwidth: float | None = None
    _reeb_flow: Callable[[np.ndarray, float], np.ndarray] = field(repr=False, default=None)

    # -- point arithmetic ------------------------------------------------

    def wrap(self, coords) -> np.ndarray:
        """Canonicalize periodic coordinates into [0, 2*pi)."""
        c = np.array(_as_coords(coords), dtype=float)
        if self.periodic_mask.any():
            c[..., self.periodic_mask] = np.mod(c[..., self.periodic_mask], TWO_PI)
        return c

    def point(self, coords) -> ChartPoint:
        c = self.wrap(coords)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got shape {c.shape}")
        return ChartPoint(c, self.name)

    def wrapped_diff(self, a, b) -> np.ndarray:
        """Shortest chart representative of a - b (per coordinate)."""
        d = _as_coords(a) - _as_coords(b)
        d = np.array(d, dtype=float)
        if self.periodic_mask.any():
            p = self.periodic_mask
            d[..., p] = np.mod(d[..., p] + np.pi, TWO_PI) - np.pi
        return d

    def distance(self, a, b) -> float | np.ndarray:
        """Flat (quotient) metric distance between chart points."""
        d = self.wrapped_diff(a, b)
        return np.linalg.norm(d, axis=-1)

    def sample(self, n: int, seed: int) -> list[ChartPoint]:
        """n seeded uniform random points (inside the box on R3)."""
        return [self.point(c) for c in self.sample_coords(n, seed)]

    def sample_coords(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.box_halfwidth is not None:
            hw = self.box_halfwidth
            return rng.uniform(-hw, hw, size=(n, self.dim))
        return rng.uniform(0.0, TWO_PI, size=(n, self.dim))

    def grid_coords(self, n_per_axis: int, halfwidth: float | None = None) -> np.ndarray:
        """Uniform lattice, (n_per_axis**dim, dim). On periodic axes the
        lattice is endpoint-free; on R3 it spans the given (or declared) box."""
        axes = []
        for k in range(self.dim):
            if self.periodic_mask[k]:
                axes.append(np.linspace(0.0, TWO_PI, n_per_axis, endpoint=False))
            else:
                hw = self.box_halfwidth if halfwidth is None else halfwidth
                axes.append(np.linspace(-hw, hw, n_per_axis))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def in_box(self, coords) -> np.ndarray:
        c = _as_coords(coords)
        if self.box_halfwidth is None:
            return np.ones(c.shape[:-1], dtype=bool)
        return np.all(np.abs(c) <= self.box_halfwidth, axis=-1)

    def reeb_flow_coords(self, coords, s: float) -> np.ndarray:
        return self.wrap(self._reeb_flow(_as_coords(coords), s))


# -- structure tensors, one set per model ---------------------------------


def _r3_alpha(c):
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(c)
    out[..., 0] = -c[..., 1]
    out[..., 2] = 1.0
    return out


def _r3_dalpha(c):
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[:-1] + (3, 3))
    out[..., 0, 1] = 1.0
    out[..., 1, 0] = -1.0
    return out


def _r3_reeb(c):
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(c)
    out[..., 2] = 1.0
    return out


def _r3_reeb_flow(c, s):
    out = np.array(c, dtype=float)
    out[..., 2] += s
    return out


def _t3_alpha(c):
    c = np.asarray(c, dtype=float)
    th = c[..., 2]
    out = np.zeros_like(c)
    out[..., 0] = np.cos(th)
    out[..., 1] = np.sin(th)
    return out


def _t3_dalpha(c):
    c = np.asarray(c, dtype=float)
    th = c[..., 2]
    out = np.zeros(c.shape[:-1] + (3, 3))
    sin, cos = np.sin(th), np.cos(th)
    out[..., 0, 2] = sin
    out[..., 2, 0] = -sin
    out[..., 1, 2] = -cos
    out[..., 2, 1] = cos
    return out


def _t3_reeb(c):
    c = np.asarray(c, dtype=float)
    th = c[..., 2]
    out = np.zeros_like(c)
    out[..., 0] = np.cos(th)
    out[..., 1] = np.sin(th)
    return out


def _t3_reeb_flow(c, s):
    out = np.array(c, dtype=float)
    th = out[..., 2]
    out[..., 0] += s * np.cos(th)
    out[..., 1] += s * np.sin(th)
    return out


def _s1_alpha(c):
    return np.ones_like(np.asarray(c, dtype=float))


def _s1_dalpha(c):
    c = np.asarray(c, dtype=float)
    return np.zeros(c.shape[:-1] + (1, 1))


def _s1_reeb(c):
    return np.ones_like(np.asarray(c, dtype=float))


def _s1_reeb_flow(c, s):
    return np.asarray(c, dtype=float) + s


def build_model(name: str, box_halfwidth: float = 12.0) -> ContactModel:
    """Construct one of the built-in models by name.

    ``box_halfwidth`` only applies to the non-compact R3 model and declares
    the compact box over which flows are confined and extrema are taken.
    """
    if name == R3_STANDARD:
        return ContactModel(
            name=name, dim=3,
            alpha=_r3_alpha, dalpha=_r3_dalpha, reeb=_r3_reeb,
            periodic_mask=np.array([False, False, False]),
            box_halfwidth=float(box_halfwidth),
            _reeb_flow=_r3_reeb_flow,
        )
    if name == T3_UNIT_COTANGENT:
        return ContactModel(
            name=name, dim=3,
            alpha=_t3_alpha, dalpha=_t3_dalpha, reeb=_t3_reeb,
            periodic_mask=np.array([True, True, True]),
            _reeb_flow=_t3_reeb_flow,
        )
    if name == S1_CIRCLE:
        return ContactModel(
            name=name, dim=1,
            alpha=_s1_alpha, dalpha=_s1_dalpha, reeb=_s1_reeb,
            periodic_mask=np.array([True]),
            _reeb_flow=_s1_reeb_flow,
        )
    raise UnknownModelError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


def reeb_flow(model: ContactModel, x: ChartPoint, s: float) -> ChartPoint:
    """Time-s Reeb flow of a chart point (closed form for all models)."""
    return model.point(model.reeb_flow_coords(_as_coords(x), s))
