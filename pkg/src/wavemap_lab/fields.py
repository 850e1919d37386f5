"""Grids, map states and differential forms on a periodic box.

Array conventions used throughout the package:

* scalar and vector fields carry the grid axes last, ``f.shape == (*values, *grid.shape)``;
* one-forms carry the form index first, ``q.shape == (D, *values, *grid.shape)``
  where ``D == d`` for spatial forms and ``D == d + 1`` for spacetime forms
  (index 0 is time);
* a map into S^3 is stored by its ambient R^4 components, ``u.shape == (4, *grid.shape)``;
* matrix-valued quantities such as connection coefficients use ``[b, a]``
  ordering for the frame indices, so ``A[alpha, b, a] = <d_alpha e_a, e_b>``.
"""

from dataclasses import dataclass, field

import numpy as np


class CFLError(ValueError):
    """Raised when a time step violates the CFL bound of a grid."""


class FrameDeviationError(ValueError):
    """Raised when a frame is not orthonormal and tangent within tolerance."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L_1) x ... x [0, L_d)``.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 to 4.
    n : int or tuple of int
        Points per axis.
    length : float or tuple of float
        Box side lengths.
    dt : float, optional
        Time step. Defaults to ``min(h) / 4``.
    cfl : float
        CFL number, at most 0.5. ``dt > cfl * min(h)`` is rejected.
    """

    d: int = 4
    n: object = 16
    length: object = 2 * np.pi
    dt: float = None
    cfl: float = 0.5

    def __post_init__(self):
        if not 1 <= int(self.d) <= 4:
            raise ValueError(f"dimension must be between 1 and 4, got {self.d}")
        n = (int(self.n),) * self.d if np.isscalar(self.n) else tuple(int(k) for k in self.n)
        length = ((float(self.length),) * self.d if np.isscalar(self.length)
                  else tuple(float(x) for x in self.length))
        if len(n) != self.d or len(length) != self.d:
            raise ValueError("n and length must have one entry per axis")
        if min(n) < 4:
            raise ValueError("need at least 4 points per axis")
        if min(length) <= 0:
            raise ValueError("box lengths must be positive")
        if not 0 < self.cfl <= 0.5:
            raise ValueError(f"CFL number must lie in (0, 0.5], got {self.cfl}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)
        hmin = min(length[i] / n[i] for i in range(self.d))
        dt = hmin / 4 if self.dt is None else float(self.dt)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > self.cfl * hmin * (1 + 1e-12):
            raise CFLError(f"dt={dt:.6g} exceeds cfl*h={self.cfl * hmin:.6g}")
        object.__setattr__(self, "dt", dt)

    @property
    def shape(self):
        return self.n

    @property
    def h(self):
        return tuple(self.length[i] / self.n[i] for i in range(self.d))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.length))

    def axes(self):
        """1-D coordinate arrays, one per axis."""
        return [np.arange(self.n[i]) * self.h[i] for i in range(self.d)]

    def coords(self):
        """Dense coordinate arrays, shape ``(d, *shape)``."""
        return np.array(np.meshgrid(*self.axes(), indexing="ij"))

    @property
    def center(self):
        return np.array([0.5 * L for L in self.length])

    def with_dt(self, dt):
        return GridSpec(self.d, self.n, self.length, dt, self.cfl)

    def refined(self, factor=2):
        """Grid with ``factor`` times more points per axis and dt scaled alike."""
        return GridSpec(self.d, tuple(k * factor for k in self.n), self.length,
                        self.dt / factor, self.cfl)


# ---------------------------------------------------------------------------
# finite differences (second order, periodic)

def _axis(f, i, grid):
    return f.ndim - grid.d + i


def d1(f, i, grid):
    """Centered first difference along spatial axis ``i``."""
    ax = _axis(f, i, grid)
    return (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / (2 * grid.h[i])


def d2(f, i, grid):
    """Three-point second difference along spatial axis ``i``."""
    ax = _axis(f, i, grid)
    return (np.roll(f, -1, ax) - 2 * f + np.roll(f, 1, ax)) / grid.h[i] ** 2


def d11(f, i, j, grid):
    """Second derivative ``d_i d_j f``; narrow stencil on the diagonal."""
    if i == j:
        return d2(f, i, grid)
    return d1(d1(f, i, grid), j, grid)


def gradient(f, grid):
    """Stack of first differences, shape ``(d, *f.shape)``."""
    return np.stack([d1(f, i, grid) for i in range(grid.d)])


def hessian(f, grid):
    """All second differences, shape ``(d, d, *f.shape)``."""
    out = np.empty((grid.d, grid.d) + f.shape)
    for i in range(grid.d):
        out[i, i] = d2(f, i, grid)
        for j in range(i + 1, grid.d):
            out[i, j] = out[j, i] = d11(f, i, j, grid)
    return out


def hessian_magnitude(f, grid):
    """Pointwise ``sqrt(sum_ij |d_i d_j f|^2)`` summed over leading axes, without storing the Hessian."""
    lead = tuple(range(f.ndim - grid.d))
    acc = np.zeros(grid.shape)
    for i in range(grid.d):
        acc += np.sum(d2(f, i, grid) ** 2, axis=lead)
        for j in range(i + 1, grid.d):
            acc += 2 * np.sum(d11(f, i, j, grid) ** 2, axis=lead)
    return np.sqrt(acc)


def time_derivative(prev, nxt, dt):
    """Centered time difference from the neighbouring slices."""
    return (nxt - prev) / (2 * dt)


def second_time_derivative(prev, cur, nxt, dt):
    return (nxt - 2 * cur + prev) / dt ** 2


# ---------------------------------------------------------------------------
# map states

@dataclass
class MapState:
    """Position ``u`` on S^3 and velocity ``udot`` tangent at ``u``."""

    u: np.ndarray
    udot: np.ndarray
    t: float = 0.0
    grid: GridSpec = field(default=None, repr=False)

    def copy(self):
        return MapState(self.u.copy(), self.udot.copy(), self.t, self.grid)

    def constraint_errors(self):
        """Max deviation of ``|u|`` from 1 and of ``<u, udot>`` from 0."""
        norm = np.sqrt(np.sum(self.u ** 2, axis=0))
        return (float(np.max(np.abs(norm - 1))),
                float(np.max(np.abs(np.sum(self.u * self.udot, axis=0)))))

    def validate(self, tol=1e-8):
        e_norm, e_tan = self.constraint_errors()
        if e_norm > tol or e_tan > tol:
            raise ValueError(f"map state off the constraint set: |u|-1 {e_norm:.3g}, "
                             f"<u,udot> {e_tan:.3g}")
        return self

    @classmethod
    def from_arrays(cls, u, udot, t=0.0, grid=None):
        """Project raw arrays onto the constraint set."""
        u = np.asarray(u, dtype=float)
        u = u / np.sqrt(np.sum(u ** 2, axis=0))
        udot = np.asarray(udot, dtype=float)
        udot = udot - np.sum(u * udot, axis=0) * u
        return cls(u, udot, float(t), grid)


def differential(state, grid):
    """Spacetime differential ``du``, shape ``(d + 1, 4, *grid)``.

    Index 0 holds ``udot``; spatial entries are centered differences.
    """
    return np.concatenate([state.udot[None], gradient(state.u, grid)])


def frame_deviation(u, frame):
    """Max violation of orthonormality and tangency of a frame at ``u``.

    ``frame`` has shape ``(3, 4, *grid)``.
    """
    gram = np.einsum("ak...,bk...->ab...", frame, frame)
    eye = np.eye(3).reshape((3, 3) + (1,) * (gram.ndim - 2))
    tang = np.einsum("ak...,k...->a...", frame, u)
    return float(max(np.max(np.abs(gram - eye)), np.max(np.abs(tang))))


def express_in_frame(du, u, frame, tol=1e-6):
    """Frame components ``q[alpha, a] = <d_alpha u, e_a>``.

    Raises
    ------
    FrameDeviationError
        If the frame deviates from an orthonormal tangent frame by more than ``tol``.
    """
    dev = frame_deviation(u, frame)
    if dev > tol:
        raise FrameDeviationError(f"frame deviation {dev:.3g} exceeds {tol:.1g}")
    return np.einsum("ak...,ck...->ca...", frame, du)


def wedge(A, q):
    """``(A ^ q)_{ab} = A_a q_b - A_b q_a`` for matrix ``A`` and vector ``q``.

    Shapes: ``A`` is ``(D, 3, 3, *grid)``, ``q`` is ``(D, 3, *grid)``; the result
    has shape ``(D, D, 3, *grid)``.
    """
    Aq = np.einsum("acb...,db...->adc...", A, q)
    return Aq - np.swapaxes(Aq, 0, 1)


def commutator_form(A):
    """``[A, A]_{ab} = A_a A_b - A_b A_a``, shape ``(D, D, 3, 3, *grid)``."""
    AA = np.einsum("acx...,dxb...->adcb...", A, A)
    return AA - np.swapaxes(AA, 0, 1)


def exterior_d(q, grid, q_dot=None):
    """Exterior derivative of a (possibly vector- or matrix-valued) one-form.

    ``q`` has shape ``(D, *values, *grid)``. For spacetime forms (``D == d + 1``)
    ``q_dot`` must hold the centered time derivative of ``q`` built from three
    consecutive slices. Returns ``dq[a, b] = d_a q_b - d_b q_a``.
    """
    D = q.shape[0]
    spacetime = D == grid.d + 1
    if spacetime and q_dot is None:
        raise ValueError("spacetime one-form needs its time derivative")
    if not spacetime and D != grid.d:
        raise ValueError("form index does not match the grid dimension")
    off = 1 if spacetime else 0
    deriv = np.empty((D,) + q.shape)
    if spacetime:
        deriv[0] = q_dot
    for i in range(grid.d):
        deriv[i + off] = d1(q, i, grid)
    return deriv - np.swapaxes(deriv, 0, 1)


# ---------------------------------------------------------------------------
# field dumps

def write_field_dump(path, data, grid, **meta):
    """Row-major float64 binary plus a JSON header at ``path + '.json'``."""
    import json
    import os

    data = np.ascontiguousarray(data, dtype="<f8")
    base = os.fspath(path)
    if base.endswith(".bin"):
        base = base[:-4]
    data.tofile(base + ".bin")
    header = {"schema_version": 1, "shape": list(data.shape), "dtype": "<f8",
              "order": "C", "d": grid.d, "n": list(grid.n),
              "length": list(grid.length), "spacing": list(grid.h)}
    header.update(meta)
    with open(base + ".json", "w") as fh:
        json.dump(header, fh, indent=2)
    return base + ".bin", base + ".json"


def read_field_dump(path):
    """Inverse of :func:`write_field_dump`; returns ``(array, header, grid)``."""
    import json
    import os

    base = os.fspath(path)
    for ext in (".bin", ".json"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    with open(base + ".json") as fh:
        header = json.load(fh)
    data = np.fromfile(base + ".bin", dtype=header.get("dtype", "<f8"))
    data = data.reshape(header["shape"])
    grid = GridSpec(header["d"], tuple(header["n"]), tuple(header["length"]))
    return data, header, grid
